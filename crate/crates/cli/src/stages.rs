//! Pipeline stages. Each stage reads its predecessor's artifacts by path,
//! writes its own plus a stamp carrying the effective config, and refuses to
//! run against artifacts produced under a different configuration.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use mddx_core::cohort::{self, ParticipantRecord};
use mddx_core::features::Label;
use mddx_core::grpo::{self, greedy_predict, mdd_score};
use mddx_core::metrics::{self, classification_metrics, ConfusionCounts};
use mddx_core::narrative::{make_qa, QaPair};
use mddx_core::oracle::{
    consensus_filter, ConsensusDecision, ExtractedAnswer, HttpOracle, MockServer,
    Oracle, OracleEndpoint, RateLimit, SimOracle,
};
use mddx_core::policy::{self, PolicyParams};
use mddx_core::reasoner::{self, PipelineConfig};
use mddx_core::report::{
    read_json, tier_report, write_json, write_roc_csv, AblationRow, DelongComparison, EvalReport,
};
use mddx_core::seed::subseed;
use mddx_core::tokenizer::{CompactTokenizer, TOKENIZER_VERSION};
use mddx_core::toytask;

use crate::config::{hex, CohortMode, RunConfig};

/// Stage failures; `Usage` maps to exit code 1, everything else to 2.
#[derive(Debug)]
pub enum StageError {
    Usage(String),
    Runtime(String),
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StageError::Usage(m) | StageError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<mddx_core::Error> for StageError {
    fn from(e: mddx_core::Error) -> Self {
        StageError::Runtime(e.to_string())
    }
}

type Result<T> = std::result::Result<T, StageError>;

fn runtime(msg: impl Into<String>) -> StageError {
    StageError::Runtime(msg.into())
}

// ---------------------------------------------------------------------------
// Artifacts, stamps, locking
// ---------------------------------------------------------------------------

pub fn artifact(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.out_dir.join(name)
}

#[derive(Debug, Serialize, Deserialize)]
struct Stamp {
    stage: String,
    config_hash: String,
    artifacts: Vec<String>,
    effective_config: RunConfig,
}

fn write_stamp(cfg: &RunConfig, stage: &str, artifacts: &[&str]) -> Result<()> {
    let stamp = Stamp {
        stage: stage.to_string(),
        config_hash: cfg.hash(),
        artifacts: artifacts.iter().map(|s| s.to_string()).collect(),
        effective_config: cfg.clone(),
    };
    write_json(&artifact(cfg, &format!("stamp_{stage}.json")), &stamp)?;
    Ok(())
}

/// Check that `stage` ran under this exact configuration and its artifacts
/// are still on disk.
fn require_stage(cfg: &RunConfig, stage: &str) -> Result<()> {
    let stamp_path = artifact(cfg, &format!("stamp_{stage}.json"));
    if !stamp_path.exists() {
        return Err(runtime(format!(
            "missing upstream artifact: stage `{stage}` has not run in {} (expected {})",
            cfg.out_dir.display(),
            stamp_path.display()
        )));
    }
    let stamp: Stamp = read_json(&stamp_path)?;
    if stamp.config_hash != cfg.hash() {
        return Err(runtime(format!(
            "stage `{stage}` artifacts were produced under a different configuration \
             (stamped {}, current {}); rerun the pipeline",
            &stamp.config_hash[..12],
            &cfg.hash()[..12]
        )));
    }
    for name in &stamp.artifacts {
        if !artifact(cfg, name).exists() {
            return Err(runtime(format!(
                "missing upstream artifact `{name}` from stage `{stage}`"
            )));
        }
    }
    Ok(())
}

/// One writer per working directory.
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(out_dir: &Path) -> Result<DirLock> {
        std::fs::create_dir_all(out_dir)
            .map_err(|e| runtime(format!("cannot create {}: {e}", out_dir.display())))?;
        let path = out_dir.join(".mddx.lock");
        match std::fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(DirLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(runtime(format!(
                "another run holds {} (remove the file if that run crashed)",
                path.display()
            ))),
            Err(e) => Err(runtime(format!("cannot create lock: {e}"))),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes =
        std::fs::read(path).map_err(|e| runtime(format!("read {}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hex(&hasher.finalize()))
}

// ---------------------------------------------------------------------------
// synth / filter
// ---------------------------------------------------------------------------

fn generate_records(cfg: &RunConfig) -> Result<Vec<ParticipantRecord>> {
    let seed = subseed(cfg.seed, "cohort", &[]);
    let records = match cfg.cohort.mode {
        CohortMode::Table1 => cohort::generate_with_config(&cohort::GeneratorConfig {
            n: cfg.cohort.n,
            prevalence: cfg.cohort.prevalence,
            seed,
            exclude_comorbid: cfg.cohort.exclude_comorbid,
        })?,
        CohortMode::Separable => toytask::generate_separable(cfg.cohort.n, seed),
    };
    Ok(records)
}

/// Generate, filter, summarize, and serialize the cohort into QA pairs.
pub fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    let records = generate_records(cfg)?;
    cohort::write_cohort_csv(&artifact(cfg, "cohort.csv"), &records)?;
    cohort::write_data_dictionary(&artifact(cfg, "data_dictionary.json"))?;

    let (kept, excluded) = cohort::filter_missing(records, cfg.cohort.missing_threshold)?;
    cohort::write_cohort_csv(&artifact(cfg, "kept.csv"), &kept)?;
    cohort::write_cohort_csv(&artifact(cfg, "excluded.csv"), &excluded)?;
    write_json(&artifact(cfg, "cohort_summary.json"), &cohort::summarize(&kept))?;

    // ids are positional per file: re-read so QA ids line up with kept.csv
    let kept = cohort::read_cohort_csv(&artifact(cfg, "kept.csv"))?;
    let mut pairs: Vec<QaPair> = Vec::new();
    for record in &kept {
        for tier in &cfg.narrative.tiers {
            pairs.push(make_qa(record, *tier)?);
        }
    }
    mddx_core::narrative::write_qa_jsonl(&artifact(cfg, "qa.jsonl"), &pairs)?;

    write_stamp(
        cfg,
        "synth",
        &[
            "cohort.csv",
            "data_dictionary.json",
            "kept.csv",
            "excluded.csv",
            "cohort_summary.json",
            "qa.jsonl",
        ],
    )?;
    log::info!(
        "synth: {} records, {} kept, {} excluded, {} qa pairs",
        cfg.cohort.n,
        kept.len(),
        cfg.cohort.n - kept.len(),
        pairs.len()
    );
    Ok(())
}

/// Standalone missingness filter over an arbitrary cohort CSV.
pub fn cmd_filter(cfg: &RunConfig, input: Option<&Path>, threshold: Option<f64>) -> Result<()> {
    let input = input
        .map(Path::to_path_buf)
        .unwrap_or_else(|| artifact(cfg, "cohort.csv"));
    let threshold = threshold.unwrap_or(cfg.cohort.missing_threshold);
    let records = cohort::read_cohort_csv(&input)?;
    let total = records.len();
    let (kept, excluded) = cohort::filter_missing(records, threshold)?;
    cohort::write_cohort_csv(&artifact(cfg, "kept.csv"), &kept)?;
    cohort::write_cohort_csv(&artifact(cfg, "excluded.csv"), &excluded)?;
    write_stamp(cfg, "filter", &["kept.csv", "excluded.csv"])?;
    log::info!(
        "filter: {total} records from {}, {} kept, {} excluded",
        input.display(),
        kept.len(),
        excluded.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// reason
// ---------------------------------------------------------------------------

struct OracleSetup {
    consensus: Vec<HttpOracle>,
    generator: HttpOracle,
    // mock servers must outlive the clients talking to them
    _servers: Vec<MockServer>,
}

fn endpoint_from_section(section: &crate::config::EndpointSection) -> Result<OracleEndpoint> {
    let mut endpoint = OracleEndpoint::new(section.base_url.clone(), section.model.clone());
    endpoint.timeout = std::time::Duration::from_secs(section.timeout_s);
    endpoint.max_retries = section.max_retries;
    endpoint.backoff_ms = section.backoff_ms;
    if let (Some(capacity), Some(refill)) = (section.rate_capacity, section.rate_refill_per_sec) {
        endpoint.rate_limit = Some(RateLimit {
            capacity,
            refill_per_sec: refill,
        });
    }
    if let Some(var) = &section.token_env {
        endpoint.auth_token = Some(std::env::var(var).map_err(|_| {
            StageError::Usage(format!("oracle token env var `{var}` is not set"))
        })?);
    }
    Ok(endpoint)
}

fn build_oracles(cfg: &RunConfig, qas: &[QaPair]) -> Result<OracleSetup> {
    if cfg.oracle.mock {
        let answers: BTreeMap<String, Label> = qas
            .iter()
            .map(|qa| (qa.question.clone(), qa.answer))
            .collect();
        let mut servers = Vec::new();
        let mut consensus = Vec::new();
        for (i, accuracy) in cfg.oracle.mock_accuracies.iter().enumerate() {
            let sim = SimOracle::new(
                format!("sim-{i}"),
                answers.clone(),
                *accuracy,
                subseed(cfg.seed, "mock-oracle", &[i as u64]),
            );
            let server = MockServer::with_sim(sim).map_err(|e| runtime(e.to_string()))?;
            let mut endpoint = OracleEndpoint::new(server.url(), format!("sim-{i}"));
            endpoint.backoff_ms = 1;
            consensus.push(HttpOracle::new(endpoint)?);
            servers.push(server);
        }
        let gen_sim = SimOracle::new(
            "sim-gen",
            answers,
            cfg.oracle.mock_gen_accuracy,
            subseed(cfg.seed, "mock-oracle", &[99]),
        );
        let server = MockServer::with_sim(gen_sim).map_err(|e| runtime(e.to_string()))?;
        let mut endpoint = OracleEndpoint::new(server.url(), "sim-gen");
        endpoint.backoff_ms = 1;
        let generator = HttpOracle::new(endpoint)?;
        servers.push(server);
        Ok(OracleSetup {
            consensus,
            generator,
            _servers: servers,
        })
    } else {
        let mut consensus = Vec::new();
        for section in &cfg.oracle.endpoints {
            consensus.push(HttpOracle::new(endpoint_from_section(section)?)?);
        }
        let generator = HttpOracle::new(endpoint_from_section(&cfg.oracle.endpoints[0])?)?;
        Ok(OracleSetup {
            consensus,
            generator,
            _servers: Vec::new(),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ConsensusRow {
    id: String,
    tier: mddx_core::narrative::Tier,
    decision: ConsensusDecision,
    verdicts: Vec<(String, ExtractedAnswer)>,
}

/// Consensus-filter the QA pairs, then construct and refine reasoning paths
/// for the retained ones.
pub fn cmd_reason(cfg: &RunConfig) -> Result<()> {
    require_stage(cfg, "synth")?;
    let qas = mddx_core::narrative::read_qa_jsonl(&artifact(cfg, "qa.jsonl"))?;
    let setup = build_oracles(cfg, &qas)?;

    let retained: Vec<QaPair> = if cfg.oracle.consensus {
        let oracle_refs: Vec<&dyn Oracle> = setup
            .consensus
            .iter()
            .map(|o| o as &dyn Oracle)
            .collect();
        if oracle_refs.len() != 3 {
            return Err(StageError::Usage(format!(
                "oracle.endpoints: consensus filtering needs exactly 3 endpoints, got {}",
                oracle_refs.len()
            )));
        }
        let mut rows = Vec::with_capacity(qas.len());
        let mut retained = Vec::new();
        let consensus_seed = subseed(cfg.seed, "consensus", &[]);
        for qa in &qas {
            let (decision, verdicts) = consensus_filter(qa, &oracle_refs, consensus_seed)?;
            rows.push(ConsensusRow {
                id: qa.id.clone(),
                tier: qa.prompt.tier,
                decision,
                verdicts: verdicts
                    .into_iter()
                    .map(|v| (v.endpoint_id, v.extracted))
                    .collect(),
            });
            if decision == ConsensusDecision::Retain {
                retained.push(qa.clone());
            }
        }
        let path = artifact(cfg, "consensus.jsonl");
        let mut out = std::fs::File::create(&path)
            .map_err(|e| runtime(format!("create {}: {e}", path.display())))?;
        for row in &rows {
            writeln!(out, "{}", serde_json::to_string(row).expect("row serializes"))
                .map_err(|e| runtime(format!("write {}: {e}", path.display())))?;
        }
        retained
    } else {
        std::fs::write(artifact(cfg, "consensus.jsonl"), "")
            .map_err(|e| runtime(format!("write consensus.jsonl: {e}")))?;
        qas.clone()
    };

    let pipeline_cfg = PipelineConfig {
        t_attempts: cfg.reasoner.t_attempts,
        n_refine: cfg.reasoner.n_refine,
        gen_temperature: cfg.reasoner.gen_temperature,
        refine_temperature: 0.0,
        max_tokens: cfg.reasoner.max_tokens,
        seed: subseed(cfg.seed, "reason", &[]),
    };
    let (samples, report) = reasoner::run_corpus(&retained, &setup.generator, &pipeline_cfg)?;
    reasoner::write_corpus_jsonl(&artifact(cfg, "corpus.jsonl"), &samples)?;
    write_json(&artifact(cfg, "synthesis_report.json"), &report)?;
    write_stamp(
        cfg,
        "reason",
        &["consensus.jsonl", "corpus.jsonl", "synthesis_report.json"],
    )?;
    log::info!(
        "reason: {} retained of {}, {} usable samples, discard rate {:.3}",
        retained.len(),
        qas.len(),
        report.valid_generated + report.valid_refined + report.fallback_original,
        report.discard_rate
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

fn load_kept_by_id(cfg: &RunConfig) -> Result<BTreeMap<String, ParticipantRecord>> {
    let kept = cohort::read_cohort_csv(&artifact(cfg, "kept.csv"))?;
    Ok(kept.into_iter().map(|r| (r.id.clone(), r)).collect())
}

/// Supervised training on the usable reasoning corpus, compact-encoded.
/// Also snapshots the untrained base policy for the ablation report.
pub fn cmd_train_sft(cfg: &RunConfig) -> Result<()> {
    require_stage(cfg, "synth")?;
    require_stage(cfg, "reason")?;
    let tok = CompactTokenizer::get();
    let kept = load_kept_by_id(cfg)?;
    let samples = reasoner::read_corpus_jsonl(&artifact(cfg, "corpus.jsonl"))?;

    let tier = cfg.narrative.train_tier;
    let mut corpus = Vec::new();
    for sample in &samples {
        if !sample.status.is_usable() || sample.qa.prompt.tier != tier {
            continue;
        }
        let record = kept.get(&sample.qa.id).ok_or_else(|| {
            runtime(format!("corpus id {} not present in kept.csv", sample.qa.id))
        })?;
        let mut tokens = toytask::encode_prompt(record, tier);
        let split = tokens.len();
        tokens.extend(toytask::encode_target(record, tier, sample.qa.answer));
        corpus.push(mddx_core::policy::TokenSeq { tokens, split });
    }
    if corpus.is_empty() {
        return Err(runtime("no usable training samples in corpus.jsonl"));
    }

    let base = PolicyParams::random_init(
        tok.vocab_size(),
        cfg.policy.context,
        cfg.policy.dim,
        subseed(cfg.seed, "policy-init", &[]),
    );
    policy::save_checkpoint(&artifact(cfg, "base.ckpt"), &base)?;

    let (trained, curve) = policy::train_sft(
        base,
        &corpus,
        cfg.sft.epochs,
        cfg.sft.lr,
        cfg.sft.batch_size,
        subseed(cfg.seed, "sft", &[]),
    )?;
    policy::save_checkpoint(&artifact(cfg, "sft.ckpt"), &trained)?;
    policy::write_loss_csv(&artifact(cfg, "sft_loss.csv"), &curve)?;
    write_stamp(cfg, "train_sft", &["base.ckpt", "sft.ckpt", "sft_loss.csv"])?;
    log::info!(
        "train-sft: {} sequences, {} epochs, final loss {:.4}",
        corpus.len(),
        cfg.sft.epochs,
        curve.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

/// GRPO training from the SFT checkpoint (default) or from the untrained
/// base (`from_base`, the RL-only ablation arm).
pub fn cmd_train_rl(cfg: &RunConfig, from_base: bool) -> Result<()> {
    require_stage(cfg, "synth")?;
    require_stage(cfg, "train_sft")?;
    let kept = cohort::read_cohort_csv(&artifact(cfg, "kept.csv"))?;
    let task = toytask::task_from_records(&kept, cfg.narrative.train_tier);

    let start_name = if from_base { "base.ckpt" } else { "sft.ckpt" };
    let start = policy::load_checkpoint(&artifact(cfg, start_name))?;
    let updates = cfg.grpo_updates(task.len());
    let run = grpo::train_rl(start, &task, &cfg.grpo_config(updates))?;

    let (ckpt_name, csv_name, stage) = if from_base {
        ("rl_only.ckpt", "rl_only_stats.csv", "train_rl_only")
    } else {
        ("rl.ckpt", "rl_stats.csv", "train_rl")
    };
    policy::save_checkpoint(&artifact(cfg, ckpt_name), &run.params)?;
    grpo::write_stats_csv(&artifact(cfg, csv_name), &run.stats)?;
    write_stamp(cfg, stage, &[ckpt_name, csv_name])?;
    log::info!(
        "{stage}: {} updates from {start_name}, final reward {:.3}, final KL {:.4}{}",
        updates,
        run.stats.last().map(|s| s.mean_reward).unwrap_or(f64::NAN),
        run.stats.last().map(|s| s.kl).unwrap_or(f64::NAN),
        if run.reward_collapse {
            " (reward collapse warning)"
        } else {
            ""
        }
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// eval / report
// ---------------------------------------------------------------------------

fn eval_records(cfg: &RunConfig) -> Result<Vec<ParticipantRecord>> {
    let seed = subseed(cfg.seed, "eval", &[]);
    Ok(match cfg.cohort.mode {
        CohortMode::Separable => toytask::generate_separable(cfg.eval.n_eval, seed),
        CohortMode::Table1 => cohort::generate_with_config(&cohort::GeneratorConfig {
            n: cfg.eval.n_eval.max(100),
            prevalence: cfg.cohort.prevalence,
            seed,
            exclude_comorbid: cfg.cohort.exclude_comorbid,
        })?,
    })
}

fn variant_row(
    cfg: &RunConfig,
    name: &str,
    params: &PolicyParams,
    task: &[toytask::ToyExample],
) -> Result<(AblationRow, Vec<f64>)> {
    let truth: Vec<bool> = task.iter().map(|ex| ex.truth == Label::Mdd).collect();
    let mut predicted = Vec::with_capacity(task.len());
    let mut scores = Vec::with_capacity(task.len());
    for ex in task {
        let (answer, _) = greedy_predict(params, ex)?;
        predicted.push(match answer.to_label() {
            Some(label) => label == Label::Mdd,
            // unparseable output counts against the variant
            None => ex.truth != Label::Mdd,
        });
        scores.push(mdd_score(params, ex)?);
    }
    let counts = ConfusionCounts::from_predictions(&truth, &predicted);
    let roc = metrics::roc_auc(&truth, &scores)?;
    write_roc_csv(&artifact(cfg, &format!("roc_{name}.csv")), &roc)?;
    Ok((
        AblationRow {
            variant: name.to_string(),
            metrics: classification_metrics(&counts),
            auc: Some(roc.auc),
        },
        scores,
    ))
}

/// Evaluate every available policy variant, emit the ablation table, tier
/// report, DeLong comparison, and text-overlap scores.
pub fn cmd_eval(cfg: &RunConfig) -> Result<()> {
    require_stage(cfg, "synth")?;
    require_stage(cfg, "reason")?;
    require_stage(cfg, "train_sft")?;
    if !artifact(cfg, "sft.ckpt").exists() {
        return Err(runtime("missing trained checkpoint sft.ckpt; run train-sft"));
    }

    let records = eval_records(cfg)?;
    let task = toytask::task_from_records(&records, cfg.narrative.train_tier);
    let truth: Vec<bool> = task.iter().map(|ex| ex.truth == Label::Mdd).collect();

    let mut ablation = Vec::new();
    let mut scores_by_variant: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let variants = [
        ("base", "base.ckpt"),
        ("sft", "sft.ckpt"),
        ("rl_only", "rl_only.ckpt"),
        ("sft_rl", "rl.ckpt"),
    ];
    for (name, file) in variants {
        let path = artifact(cfg, file);
        if !path.exists() {
            continue;
        }
        let params = policy::load_checkpoint(&path)?;
        let (row, scores) = variant_row(cfg, name, &params, &task)?;
        ablation.push(row);
        scores_by_variant.insert(name.to_string(), scores);
    }

    // DeLong: strongest available trained variant against the untrained base
    let delong = ["sft_rl", "rl_only", "sft"]
        .iter()
        .find(|v| scores_by_variant.contains_key(**v))
        .map(|best| -> Result<DelongComparison> {
            Ok(DelongComparison {
                variant_a: best.to_string(),
                variant_b: "base".to_string(),
                result: metrics::delong_test(
                    &truth,
                    &scores_by_variant[*best],
                    &scores_by_variant["base"],
                )?,
            })
        })
        .transpose()?;

    let samples = reasoner::read_corpus_jsonl(&artifact(cfg, "corpus.jsonl"))?;
    let tiers = tier_report(&samples, CompactTokenizer::get());

    // overlap: policy reasoning traces vs the reference compact traces
    let text_overlap = {
        let tok = CompactTokenizer::get();
        let best_name = ["sft_rl", "sft"]
            .iter()
            .find(|v| scores_by_variant.contains_key(**v))
            .copied()
            .unwrap_or("sft");
        let params = policy::load_checkpoint(&artifact(
            cfg,
            if best_name == "sft_rl" { "rl.ckpt" } else { "sft.ckpt" },
        ))?;
        let pairs: Vec<(String, String)> = records
            .iter()
            .take(cfg.eval.overlap_samples)
            .map(|record| -> Result<(String, String)> {
                let ex = toytask::example(record, cfg.narrative.train_tier);
                let (_, hypothesis) = greedy_predict(&params, &ex)?;
                let reference = tok.decode(&toytask::encode_target(
                    record,
                    cfg.narrative.train_tier,
                    record.label,
                ));
                Ok((hypothesis, reference))
            })
            .collect::<Result<_>>()?;
        Some(metrics::overlap::text_overlap_corpus(&pairs)?)
    };

    let report = EvalReport {
        config_hash: cfg.hash(),
        tokenizer_version: TOKENIZER_VERSION.to_string(),
        ablation,
        delong,
        tiers,
        text_overlap,
    };
    write_json(&artifact(cfg, "eval_report.json"), &report)?;
    write_stamp(cfg, "eval", &["eval_report.json"])?;
    log::info!(
        "eval: {} variants on {} cases",
        report.ablation.len(),
        task.len()
    );
    Ok(())
}

/// Bundle manifest over all present artifacts.
#[derive(Debug, Serialize, Deserialize)]
pub struct ReportBundle {
    pub config_hash: String,
    pub artifacts: BTreeMap<String, String>,
}

/// Verify stamps, hash every artifact, and write the bundle manifest. The
/// printed bundle hash identifies the whole run.
pub fn cmd_report(cfg: &RunConfig) -> Result<String> {
    for stage in ["synth", "reason", "train_sft", "eval"] {
        require_stage(cfg, stage)?;
    }
    let mut artifacts = BTreeMap::new();
    let names = [
        "cohort.csv",
        "data_dictionary.json",
        "kept.csv",
        "excluded.csv",
        "cohort_summary.json",
        "qa.jsonl",
        "consensus.jsonl",
        "corpus.jsonl",
        "synthesis_report.json",
        "base.ckpt",
        "sft.ckpt",
        "sft_loss.csv",
        "rl.ckpt",
        "rl_stats.csv",
        "rl_only.ckpt",
        "rl_only_stats.csv",
        "eval_report.json",
        "roc_base.csv",
        "roc_sft.csv",
        "roc_rl_only.csv",
        "roc_sft_rl.csv",
    ];
    for name in names {
        let path = artifact(cfg, name);
        if path.exists() {
            artifacts.insert(name.to_string(), sha256_file(&path)?);
        }
    }
    let bundle = ReportBundle {
        config_hash: cfg.hash(),
        artifacts,
    };
    write_json(&artifact(cfg, "report.json"), &bundle)?;
    let bundle_hash = sha256_file(&artifact(cfg, "report.json"))?;
    println!("bundle {bundle_hash}");
    Ok(bundle_hash)
}
