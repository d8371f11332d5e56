//! Run configuration: defaults, TOML file loading with strict schema
//! validation, command-line precedence, and config hashing.
//!
//! Precedence per field: command-line flag > config file > built-in default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use mddx_core::grpo::AdvantageMode;
use mddx_core::narrative::Tier;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CohortMode {
    /// Marginals calibrated to the published baseline table.
    Table1,
    /// Fully-observed records labeled by the separable toy rule.
    Separable,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortSection {
    pub n: usize,
    pub prevalence: f64,
    pub mode: CohortMode,
    pub missing_threshold: f64,
    pub exclude_comorbid: bool,
}

impl Default for CohortSection {
    fn default() -> Self {
        CohortSection {
            n: 2000,
            // 9,755 of 208,406
            prevalence: 0.0468,
            mode: CohortMode::Separable,
            missing_threshold: mddx_core::cohort::DEFAULT_MISSING_THRESHOLD,
            exclude_comorbid: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NarrativeSection {
    /// Tiers synthesized into the QA file.
    pub tiers: Vec<Tier>,
    /// Tier used for policy training and evaluation.
    pub train_tier: Tier,
}

impl Default for NarrativeSection {
    fn default() -> Self {
        NarrativeSection {
            tiers: Tier::ALL.to_vec(),
            train_tier: Tier::ComplexCot,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointSection {
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    pub token_env: Option<String>,
    pub timeout_s: u64,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub rate_capacity: Option<f64>,
    pub rate_refill_per_sec: Option<f64>,
}

impl Default for EndpointSection {
    fn default() -> Self {
        EndpointSection {
            base_url: String::new(),
            model: String::new(),
            token_env: None,
            timeout_s: 60,
            max_retries: 2,
            backoff_ms: 100,
            rate_capacity: None,
            rate_refill_per_sec: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    /// Serve deterministic simulated oracles over loopback HTTP instead of
    /// calling external endpoints.
    pub mock: bool,
    /// Accuracies of the three consensus sims.
    pub mock_accuracies: [f64; 3],
    /// Accuracy of the generation sim.
    pub mock_gen_accuracy: f64,
    /// Run the three-model consensus filter before path construction.
    pub consensus: bool,
    pub endpoints: Vec<EndpointSection>,
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection {
            mock: true,
            mock_accuracies: [0.92, 0.88, 0.85],
            mock_gen_accuracy: 0.75,
            consensus: true,
            endpoints: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReasonerSection {
    pub t_attempts: u32,
    pub n_refine: u32,
    pub gen_temperature: f64,
    pub max_tokens: u32,
}

impl Default for ReasonerSection {
    fn default() -> Self {
        ReasonerSection {
            t_attempts: 4,
            n_refine: 3,
            gen_temperature: 0.7,
            max_tokens: 1024,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    pub context: usize,
    pub dim: usize,
}

impl Default for PolicySection {
    fn default() -> Self {
        PolicySection {
            context: 48,
            dim: 16,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SftSection {
    pub epochs: usize,
    pub lr: f64,
    /// Auto-clamped to the corpus size at training time.
    pub batch_size: usize,
}

impl Default for SftSection {
    fn default() -> Self {
        // nominal published settings; toy runs override lr/epochs in their
        // run config
        SftSection {
            epochs: 3,
            lr: 1e-5,
            batch_size: 256,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrpoSection {
    pub group_size: usize,
    pub epochs: usize,
    /// Explicit update count; overrides `epochs` when set.
    pub updates: Option<usize>,
    pub lr: f64,
    pub clip_eps: f64,
    pub kl_beta: f64,
    pub mu: f64,
    pub nu: f64,
    pub advantage_mode: AdvantageMode,
    pub rollout_temperature: f64,
    pub max_new_tokens: usize,
    pub queries_per_update: usize,
    pub sync_every: usize,
    pub reseed_rollouts: bool,
}

impl Default for GrpoSection {
    fn default() -> Self {
        GrpoSection {
            group_size: 8,
            epochs: 2,
            updates: None,
            lr: 1e-6,
            clip_eps: 0.2,
            kl_beta: 0.01,
            mu: 0.9,
            nu: 0.1,
            advantage_mode: AdvantageMode::StdNormalized,
            rollout_temperature: 1.0,
            max_new_tokens: 24,
            queries_per_update: 0,
            sync_every: 1,
            reseed_rollouts: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub n_eval: usize,
    /// Samples used for text-overlap scoring.
    pub overlap_samples: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            n_eval: 200,
            overlap_samples: 64,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub cohort: CohortSection,
    pub narrative: NarrativeSection,
    pub oracle: OracleSection,
    pub reasoner: ReasonerSection,
    pub policy: PolicySection,
    pub sft: SftSection,
    pub grpo: GrpoSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            out_dir: PathBuf::from("run"),
            cohort: CohortSection::default(),
            narrative: NarrativeSection::default(),
            oracle: OracleSection::default(),
            reasoner: ReasonerSection::default(),
            policy: PolicySection::default(),
            sft: SftSection::default(),
            grpo: GrpoSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))
    }

    /// Field-level validation with diagnostics naming the field.
    pub fn validate(&self) -> Result<(), String> {
        if self.cohort.n < 100 {
            return Err(format!("cohort.n: must be >= 100, got {}", self.cohort.n));
        }
        if !(self.cohort.prevalence > 0.0 && self.cohort.prevalence < 1.0) {
            return Err(format!(
                "cohort.prevalence: must lie in (0, 1), got {}",
                self.cohort.prevalence
            ));
        }
        if !(self.cohort.missing_threshold > 0.0 && self.cohort.missing_threshold <= 1.0) {
            return Err(format!(
                "cohort.missing_threshold: must lie in (0, 1], got {}",
                self.cohort.missing_threshold
            ));
        }
        if self.narrative.tiers.is_empty() {
            return Err("narrative.tiers: at least one tier required".into());
        }
        if self.reasoner.t_attempts < 1 {
            return Err("reasoner.t_attempts: must be >= 1".into());
        }
        if self.grpo.group_size < 2 {
            return Err(format!(
                "grpo.group_size: must be >= 2, got {}",
                self.grpo.group_size
            ));
        }
        if !(self.grpo.clip_eps > 0.0 && self.grpo.clip_eps < 1.0) {
            return Err(format!(
                "grpo.clip_eps: must lie in (0, 1), got {}",
                self.grpo.clip_eps
            ));
        }
        if self.grpo.kl_beta < 0.0 {
            return Err(format!(
                "grpo.kl_beta: must be >= 0, got {}",
                self.grpo.kl_beta
            ));
        }
        if self.eval.n_eval < 10 {
            return Err(format!("eval.n_eval: must be >= 10, got {}", self.eval.n_eval));
        }
        if !self.oracle.mock {
            if self.oracle.endpoints.is_empty() {
                return Err("oracle.endpoints: required when oracle.mock = false".into());
            }
            if self.oracle.consensus && self.oracle.endpoints.len() != 3 {
                return Err(format!(
                    "oracle.endpoints: consensus filtering needs exactly 3 endpoints, got {}",
                    self.oracle.endpoints.len()
                ));
            }
        }
        Ok(())
    }

    /// Hash of the effective configuration; stamped on all artifacts.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        hex(&hasher.finalize())
    }

    pub fn grpo_updates(&self, n_queries: usize) -> usize {
        match self.grpo.updates {
            Some(u) => u,
            None => {
                let per_epoch = if self.grpo.queries_per_update == 0 {
                    1
                } else {
                    n_queries.div_ceil(self.grpo.queries_per_update)
                };
                self.grpo.epochs * per_epoch
            }
        }
    }

    pub fn grpo_config(&self, updates: usize) -> mddx_core::grpo::GrpoConfig {
        mddx_core::grpo::GrpoConfig {
            group_size: self.grpo.group_size,
            clip_eps: self.grpo.clip_eps,
            kl_beta: self.grpo.kl_beta,
            mu: self.grpo.mu,
            nu: self.grpo.nu,
            lr: self.grpo.lr,
            updates,
            sync_every: self.grpo.sync_every,
            advantage_mode: self.grpo.advantage_mode,
            max_new_tokens: self.grpo.max_new_tokens,
            queries_per_update: self.grpo.queries_per_update,
            rollout_temperature: self.grpo.rollout_temperature,
            reseed_rollouts: self.grpo.reseed_rollouts,
            seed: mddx_core::seed::subseed(self.seed, "rl", &[]),
        }
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
