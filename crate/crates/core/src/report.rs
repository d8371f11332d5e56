//! Evaluation report schemas and emission helpers.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::metrics::{ClassificationMetrics, DelongResult, RocCurve, TextOverlapScores};
use crate::narrative::Tier;
use crate::reasoner::ReasoningSample;
use crate::tokenizer::TokenCounter;
use crate::Result;

/// One ablation-table row (Table-2 shaped columns).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    #[serde(flatten)]
    pub metrics: ClassificationMetrics,
    pub auc: Option<f64>,
}

/// One prompting-tier row (Table-3 shaped columns).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TierRow {
    pub tier: Tier,
    pub n: usize,
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
    pub avg_tokens: Option<f64>,
}

/// Named DeLong comparison between two report variants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DelongComparison {
    pub variant_a: String,
    pub variant_b: String,
    #[serde(flatten)]
    pub result: DelongResult,
}

/// Top-level evaluation report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_hash: String,
    pub tokenizer_version: String,
    pub ablation: Vec<AblationRow>,
    pub delong: Option<DelongComparison>,
    pub tiers: Vec<TierRow>,
    pub text_overlap: Option<TextOverlapScores>,
}

/// Prompting-tier report over a synthesized corpus: per tier, the oracle's
/// answer accuracy/F1 (MDD as the positive class) and the mean token count
/// of the reasoning paths.
pub fn tier_report(samples: &[ReasoningSample], counter: &dyn TokenCounter) -> Vec<TierRow> {
    use crate::features::Label;
    use crate::metrics::{avg_tokens, classification_metrics, ConfusionCounts};

    let mut rows = Vec::new();
    for tier in Tier::ALL {
        let in_tier: Vec<&ReasoningSample> = samples
            .iter()
            .filter(|s| s.qa.prompt.tier == tier)
            .collect();
        if in_tier.is_empty() {
            continue;
        }
        let truth: Vec<bool> = in_tier.iter().map(|s| s.qa.answer == Label::Mdd).collect();
        let predicted: Vec<bool> = in_tier
            .iter()
            .map(|s| {
                match s.predicted.to_label() {
                    Some(label) => label == Label::Mdd,
                    // unparseable counts as a miss: predict the wrong class
                    None => s.qa.answer != Label::Mdd,
                }
            })
            .collect();
        let metrics = classification_metrics(&ConfusionCounts::from_predictions(&truth, &predicted));
        let paths: Vec<&str> = in_tier.iter().map(|s| s.path.as_str()).collect();
        rows.push(TierRow {
            tier,
            n: in_tier.len(),
            accuracy: metrics.acc,
            f1: metrics.f1,
            avg_tokens: avg_tokens(&paths, counter),
        });
    }
    rows
}

/// Write any serializable artifact as pretty JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
}

/// ROC points as `fpr,tpr` CSV for external plotting.
pub fn write_roc_csv(path: &Path, curve: &RocCurve) -> Result<()> {
    let mut out =
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    writeln!(out, "fpr,tpr").map_err(|e| Error::io(path.display().to_string(), e))?;
    for (fpr, tpr) in &curve.points {
        writeln!(out, "{fpr},{tpr}").map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(())
}
