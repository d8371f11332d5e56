//! Reasoning-path construction and refinement.
//!
//! For each QA pair: query the oracle with (prompt, question) up to `T`
//! times, accepting the first attempt whose extracted answer matches ground
//! truth; then derive a refined prompt from the accepted path and regenerate
//! with it up to `N` times, reverting to the original pair when every
//! regeneration misses. Transport failures defer a sample instead of
//! consuming attempts, and deferred samples get one extra pass at the end of
//! a corpus run.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::narrative::{QaPair, Tier};
use crate::oracle::{ChatMessage, ChatRequest, ExtractedAnswer, Oracle};
use crate::seed;
use crate::Result;

/// Attempt budget and sampling settings for corpus synthesis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Generation attempts per sample (>= 1).
    pub t_attempts: u32,
    /// Refinement regenerations per sample (0 disables refinement).
    pub n_refine: u32,
    /// Sampling temperature for path generation.
    pub gen_temperature: f64,
    /// Temperature for deriving the refined prompt.
    pub refine_temperature: f64,
    pub max_tokens: u32,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            t_attempts: 4,
            n_refine: 3,
            gen_temperature: 0.7,
            refine_temperature: 0.0,
            max_tokens: 1024,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_attempts < 1 {
            return Err(Error::invalid("t_attempts must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleStatus {
    ValidGenerated,
    ValidRefined,
    FallbackOriginal,
    Discarded,
}

impl SampleStatus {
    pub fn is_usable(&self) -> bool {
        !matches!(self, SampleStatus::Discarded)
    }
}

/// One reasoning sample with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningSample {
    pub qa: QaPair,
    pub path: String,
    pub predicted: ExtractedAnswer,
    pub status: SampleStatus,
    pub attempts_gen: u32,
    pub attempts_refine: u32,
    pub refined_prompt: Option<String>,
}

const REFINE_INSTRUCTION: &str = "You improve diagnostic reasoning prompts. Given the original \
prompt, a clinical question, and a reasoning path that reached the correct conclusion, write a \
sharper prompt that would guide a model through the same multi-step reasoning more reliably. \
Reply with the improved prompt only.";

fn generation_request(qa: &QaPair, cfg: &PipelineConfig, attempt: u32) -> ChatRequest {
    ChatRequest {
        model: String::new(),
        messages: vec![
            ChatMessage::system(qa.prompt.full_text()),
            ChatMessage::user(qa.question.clone()),
        ],
        temperature: cfg.gen_temperature,
        max_tokens: cfg.max_tokens,
        seed: Some(seed::subseed(
            cfg.seed,
            &format!("gen/{}", qa.id),
            &[attempt as u64],
        )),
    }
}

/// Generate a reasoning path for one QA pair: accept the first of up to `T`
/// attempts whose extracted answer equals ground truth, discard after `T`
/// misses. Transport failures surface as a deferral, never a discard.
pub fn generate_path(
    qa: &QaPair,
    oracle: &dyn Oracle,
    cfg: &PipelineConfig,
) -> Result<ReasoningSample> {
    cfg.validate()?;
    let mut last_path = String::new();
    let mut last_predicted = ExtractedAnswer::Unparseable;
    for attempt in 1..=cfg.t_attempts {
        let exchange = oracle
            .complete(&generation_request(qa, cfg, attempt))
            .map_err(|e| defer_on_transport(&qa.id, e))?;
        let predicted = crate::oracle::extract_answer(&exchange.response);
        if predicted.matches(qa.answer) {
            return Ok(ReasoningSample {
                qa: qa.clone(),
                path: exchange.response,
                predicted,
                status: SampleStatus::ValidGenerated,
                attempts_gen: attempt,
                attempts_refine: 0,
                refined_prompt: None,
            });
        }
        last_path = exchange.response;
        last_predicted = predicted;
    }
    Ok(ReasoningSample {
        qa: qa.clone(),
        path: last_path,
        predicted: last_predicted,
        status: SampleStatus::Discarded,
        attempts_gen: cfg.t_attempts,
        attempts_refine: 0,
        refined_prompt: None,
    })
}

fn defer_on_transport(id: &str, e: Error) -> Error {
    match e {
        Error::Transport { reason, .. } => Error::Deferred {
            id: id.to_string(),
            reason,
        },
        other => other,
    }
}

/// Refine an accepted sample: derive an enhanced prompt from (prompt,
/// question, path), regenerate with it up to `N` times, keep the refined
/// path on success and revert to the original pair otherwise. With `N = 0`
/// the sample is returned unchanged.
pub fn refine_path(
    sample: &ReasoningSample,
    oracle: &dyn Oracle,
    cfg: &PipelineConfig,
) -> Result<ReasoningSample> {
    if sample.status != SampleStatus::ValidGenerated {
        return Err(Error::invalid(format!(
            "refine_path requires a valid_generated sample, got {:?}",
            sample.status
        )));
    }
    if cfg.n_refine == 0 {
        return Ok(sample.clone());
    }
    let qa = &sample.qa;

    let derive_request = ChatRequest {
        model: String::new(),
        messages: vec![
            ChatMessage::system(REFINE_INSTRUCTION.to_string()),
            ChatMessage::user(format!(
                "Original prompt:\n{}\n\nQuestion:\n{}\n\nReasoning path:\n{}",
                qa.prompt.full_text(),
                qa.question,
                sample.path
            )),
        ],
        temperature: cfg.refine_temperature,
        max_tokens: cfg.max_tokens,
        seed: Some(seed::subseed(cfg.seed, &format!("refine-prompt/{}", qa.id), &[])),
    };
    let refined_prompt = oracle
        .complete(&derive_request)
        .map_err(|e| defer_on_transport(&qa.id, e))?
        .response;

    for attempt in 1..=cfg.n_refine {
        let request = ChatRequest {
            model: String::new(),
            messages: vec![
                ChatMessage::system(refined_prompt.clone()),
                ChatMessage::user(qa.question.clone()),
            ],
            temperature: cfg.gen_temperature,
            max_tokens: cfg.max_tokens,
            seed: Some(seed::subseed(
                cfg.seed,
                &format!("refine/{}", qa.id),
                &[attempt as u64],
            )),
        };
        let exchange = oracle
            .complete(&request)
            .map_err(|e| defer_on_transport(&qa.id, e))?;
        let predicted = crate::oracle::extract_answer(&exchange.response);
        if predicted.matches(qa.answer) {
            return Ok(ReasoningSample {
                qa: qa.clone(),
                path: exchange.response,
                predicted,
                status: SampleStatus::ValidRefined,
                attempts_gen: sample.attempts_gen,
                attempts_refine: attempt,
                refined_prompt: Some(refined_prompt),
            });
        }
    }
    // revert to the original generated pair
    Ok(ReasoningSample {
        qa: qa.clone(),
        path: sample.path.clone(),
        predicted: sample.predicted,
        status: SampleStatus::FallbackOriginal,
        attempts_gen: sample.attempts_gen,
        attempts_refine: cfg.n_refine,
        refined_prompt: Some(refined_prompt),
    })
}

/// Corpus-level tallies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub total: usize,
    pub valid_generated: usize,
    pub valid_refined: usize,
    pub fallback_original: usize,
    pub discarded: usize,
    pub deferred: Vec<String>,
    /// Index k = samples that used exactly k generation attempts.
    pub gen_attempt_hist: Vec<usize>,
    pub refine_attempt_hist: Vec<usize>,
    pub discard_rate: f64,
}

impl SynthesisReport {
    fn from_samples(samples: &[ReasoningSample], deferred: Vec<String>) -> SynthesisReport {
        let mut report = SynthesisReport {
            total: samples.len(),
            valid_generated: 0,
            valid_refined: 0,
            fallback_original: 0,
            discarded: 0,
            deferred,
            gen_attempt_hist: Vec::new(),
            refine_attempt_hist: Vec::new(),
            discard_rate: 0.0,
        };
        for s in samples {
            match s.status {
                SampleStatus::ValidGenerated => report.valid_generated += 1,
                SampleStatus::ValidRefined => report.valid_refined += 1,
                SampleStatus::FallbackOriginal => report.fallback_original += 1,
                SampleStatus::Discarded => report.discarded += 1,
            }
            let g = s.attempts_gen as usize;
            if report.gen_attempt_hist.len() <= g {
                report.gen_attempt_hist.resize(g + 1, 0);
            }
            report.gen_attempt_hist[g] += 1;
            let r = s.attempts_refine as usize;
            if report.refine_attempt_hist.len() <= r {
                report.refine_attempt_hist.resize(r + 1, 0);
            }
            report.refine_attempt_hist[r] += 1;
        }
        if report.total > 0 {
            report.discard_rate = report.discarded as f64 / report.total as f64;
        }
        report
    }
}

/// Run generation and refinement over a whole corpus. Per-sample failures
/// never abort the run; transport-deferred samples are re-queued for one
/// extra pass and reported if they defer again. Output is sorted by id, so
/// processing order cannot affect it.
pub fn run_corpus(
    qas: &[QaPair],
    oracle: &dyn Oracle,
    cfg: &PipelineConfig,
) -> Result<(Vec<ReasoningSample>, SynthesisReport)> {
    cfg.validate()?;
    let mut samples = Vec::with_capacity(qas.len());
    let mut deferred_queue = Vec::new();
    for qa in qas {
        match process_one(qa, oracle, cfg) {
            Ok(sample) => samples.push(sample),
            Err(e) if e.is_deferred() => deferred_queue.push(qa),
            Err(e) => return Err(e),
        }
    }
    let mut still_deferred = Vec::new();
    for qa in deferred_queue {
        match process_one(qa, oracle, cfg) {
            Ok(sample) => samples.push(sample),
            Err(e) if e.is_deferred() => still_deferred.push(qa.id.clone()),
            Err(e) => return Err(e),
        }
    }
    samples.sort_by(|a, b| a.qa.id.cmp(&b.qa.id));
    still_deferred.sort();
    let report = SynthesisReport::from_samples(&samples, still_deferred);
    Ok((samples, report))
}

fn process_one(qa: &QaPair, oracle: &dyn Oracle, cfg: &PipelineConfig) -> Result<ReasoningSample> {
    let sample = generate_path(qa, oracle, cfg)?;
    if sample.status == SampleStatus::ValidGenerated && cfg.n_refine > 0 {
        refine_path(&sample, oracle, cfg)
    } else {
        Ok(sample)
    }
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct CorpusRow {
    id: String,
    tier: Tier,
    prompt: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    refined_prompt: Option<String>,
    question: String,
    path: String,
    answer: crate::features::Label,
    predicted: ExtractedAnswer,
    status: SampleStatus,
    attempts: (u32, u32),
}

/// Corpus JSONL rows:
/// `{id, tier, prompt, refined_prompt?, question, path, answer, predicted, status, attempts}`.
pub fn write_corpus_jsonl(path: &Path, samples: &[ReasoningSample]) -> Result<()> {
    let mut out =
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    for s in samples {
        let row = CorpusRow {
            id: s.qa.id.clone(),
            tier: s.qa.prompt.tier,
            prompt: s.qa.prompt.full_text(),
            refined_prompt: s.refined_prompt.clone(),
            question: s.qa.question.clone(),
            path: s.path.clone(),
            answer: s.qa.answer,
            predicted: s.predicted,
            status: s.status,
            attempts: (s.attempts_gen, s.attempts_refine),
        };
        let line = serde_json::to_string(&row).expect("serializable row");
        writeln!(out, "{line}").map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(())
}

pub fn read_corpus_jsonl(path: &Path) -> Result<Vec<ReasoningSample>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut samples = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.is_empty() {
            continue;
        }
        let row: CorpusRow = serde_json::from_str(&line).map_err(|e| {
            Error::parse(path.display().to_string(), format!("row {}: {e}", i + 1))
        })?;
        samples.push(ReasoningSample {
            qa: QaPair {
                id: row.id,
                prompt: crate::narrative::PromptTemplate::for_tier(row.tier),
                question: row.question,
                answer: row.answer,
            },
            path: row.path,
            predicted: row.predicted,
            status: row.status,
            attempts_gen: row.attempts.0,
            attempts_refine: row.attempts.1,
            refined_prompt: row.refined_prompt,
        });
    }
    Ok(samples)
}
