//! Synthetic participant cohorts: generation, missingness filtering,
//! summaries, and CSV persistence.
//!
//! Continuous features are drawn from per-class normal / log-normal families
//! whose medians and IQR widths are fit to the published baseline table;
//! categorical features follow the published per-class proportions (with
//! missingness as an explicit outcome). Features without published marginals
//! use declared defaults, flagged in the data dictionary.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::features::{self, FeatureKind, FeatureSpec, Label};
use crate::seed;
use crate::stats::{self, PValue};
use crate::Result;

/// One feature value. Continuous values are stored at the feature's display
/// precision so that text round-trips are exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Num(f64),
    Cat(String),
}

impl Value {
    pub fn cat(s: &str) -> Value {
        Value::Cat(s.to_string())
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(x) => Some(*x),
            Value::Cat(_) => None,
        }
    }

    pub fn as_cat(&self) -> Option<&str> {
        match self {
            Value::Cat(s) => Some(s),
            Value::Num(_) => None,
        }
    }
}

/// One synthetic participant: present feature values plus the class label.
/// A feature absent from `values` is missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantRecord {
    pub id: String,
    pub values: BTreeMap<String, Value>,
    pub label: Label,
}

impl ParticipantRecord {
    pub fn get(&self, feature: &str) -> Option<&Value> {
        self.values.get(feature)
    }

    pub fn num(&self, feature: &str) -> Option<f64> {
        self.get(feature).and_then(Value::as_num)
    }

    pub fn cat(&self, feature: &str) -> Option<&str> {
        self.get(feature).and_then(Value::as_cat)
    }

    pub fn missing_count(&self) -> usize {
        features::feature_count() - self.values.len()
    }

    pub fn missing_fraction(&self) -> f64 {
        self.missing_count() as f64 / features::feature_count() as f64
    }

    /// Check every stored value against the registry: known feature, finite
    /// number at the declared precision domain, or a listed category.
    pub fn validate(&self) -> Result<()> {
        for (name, value) in &self.values {
            let spec = features::spec(name).ok_or_else(|| Error::Feature {
                feature: name.clone(),
                reason: "not in the feature registry".into(),
            })?;
            match (spec.kind, value) {
                (FeatureKind::Continuous, Value::Num(x)) => {
                    if !x.is_finite() {
                        return Err(Error::Feature {
                            feature: name.clone(),
                            reason: "non-finite value".into(),
                        });
                    }
                }
                (FeatureKind::Categorical, Value::Cat(c)) => {
                    if !spec.has_category(c) {
                        return Err(Error::Feature {
                            feature: name.clone(),
                            reason: format!("unknown category `{c}`"),
                        });
                    }
                }
                _ => {
                    return Err(Error::Feature {
                        feature: name.clone(),
                        reason: "value kind does not match feature kind".into(),
                    });
                }
            }
        }
        Ok(())
    }
}

fn round_to(x: f64, decimals: u8) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    (x * scale).round() / scale
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

/// Generator settings beyond the (n, prevalence, seed) triple.
#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    pub n: usize,
    pub prevalence: f64,
    pub seed: u64,
    /// Drop and redraw candidates with a comorbid anxiety/bipolar diagnosis.
    /// Excluded diagnoses never enter the cohort, so this only alters the
    /// per-record RNG stream.
    pub exclude_comorbid: bool,
}

impl GeneratorConfig {
    pub fn new(n: usize, prevalence: f64, seed: u64) -> Self {
        GeneratorConfig {
            n,
            prevalence,
            seed,
            exclude_comorbid: true,
        }
    }
}

/// Generate a cohort of `n` records with the given MDD prevalence.
/// Deterministic in `(n, prevalence, seed)`; records are independent, each
/// driven by its own derived seed.
pub fn generate_cohort(n: usize, prevalence: f64, seed: u64) -> Result<Vec<ParticipantRecord>> {
    generate_with_config(&GeneratorConfig::new(n, prevalence, seed))
}

pub fn generate_with_config(cfg: &GeneratorConfig) -> Result<Vec<ParticipantRecord>> {
    if cfg.n < 100 {
        return Err(Error::invalid(format!(
            "cohort size n = {} is below the minimum of 100",
            cfg.n
        )));
    }
    if !(cfg.prevalence > 0.0 && cfg.prevalence < 1.0) {
        return Err(Error::invalid(format!(
            "prevalence must lie in (0, 1), got {}",
            cfg.prevalence
        )));
    }
    Ok((0..cfg.n)
        .map(|i| {
            let mut rng = seed::rng_for(cfg.seed, "cohort/record", &[i as u64]);
            let label = if rng.gen::<f64>() < cfg.prevalence {
                Label::Mdd
            } else {
                Label::Hc
            };
            let values = draw_feature_values(label, cfg.exclude_comorbid, &mut rng);
            ParticipantRecord {
                id: format!("P{i:06}"),
                values,
                label,
            }
        })
        .collect())
}

fn draw_feature_values(
    label: Label,
    exclude_comorbid: bool,
    rng: &mut ChaCha8Rng,
) -> BTreeMap<String, Value> {
    for _ in 0..32 {
        let values = draw_candidate(label, rng);
        let comorbid_rate = match label {
            Label::Hc => 0.06,
            Label::Mdd => 0.18,
        };
        let comorbid = rng.gen::<f64>() < comorbid_rate;
        if !(exclude_comorbid && comorbid) {
            return values;
        }
    }
    // 32 consecutive comorbid draws is practically impossible; fall through
    // with the last candidate redrawn once more.
    draw_candidate(label, rng)
}

fn pick_weighted<'a>(rng: &mut ChaCha8Rng, table: &[(&'a str, f64)]) -> &'a str {
    let total: f64 = table.iter().map(|(_, w)| w).sum();
    let mut u = rng.gen::<f64>() * total;
    for (cat, w) in table {
        if u < *w {
            return cat;
        }
        u -= w;
    }
    table.last().expect("non-empty table").0
}

/// Standard normal draw (Box-Muller; one deviate per call keeps streams simple).
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn normal_clamped(rng: &mut ChaCha8Rng, median: f64, iqr_lo: f64, iqr_hi: f64, lo: f64, hi: f64) -> f64 {
    // quartiles of a normal sit at mu ± 0.6744898 sigma
    let sigma = (iqr_hi - iqr_lo) / (2.0 * 0.674_489_750_196_081_7);
    (median + sigma * standard_normal(rng)).clamp(lo, hi)
}

fn lognormal_clamped(
    rng: &mut ChaCha8Rng,
    median: f64,
    iqr_lo: f64,
    iqr_hi: f64,
    lo: f64,
    hi: f64,
) -> f64 {
    let sigma_log = (iqr_hi.ln() - iqr_lo.ln()) / (2.0 * 0.674_489_750_196_081_7);
    (median.ln() + sigma_log * standard_normal(rng)).exp().clamp(lo, hi)
}

/// Draw one candidate feature map for the given class. Weights for sex,
/// sleeplessness, alcohol, self-harm, education, income, and employment are
/// the published per-class proportions; the rest are declared defaults.
fn draw_candidate(label: Label, rng: &mut ChaCha8Rng) -> BTreeMap<String, Value> {
    let mdd = label == Label::Mdd;
    let mut v: BTreeMap<String, Value> = BTreeMap::new();
    let put_num = |v: &mut BTreeMap<String, Value>, name: &str, x: f64| {
        let decimals = features::spec(name).expect("registry feature").decimals;
        v.insert(name.to_string(), Value::Num(round_to(x, decimals)));
    };

    // age: HC 61 (53-66), MDD 56 (50-63); recruitment window 40-69
    let age = if mdd {
        normal_clamped(rng, 56.0, 50.0, 63.0, 40.0, 70.0)
    } else {
        normal_clamped(rng, 61.0, 53.0, 66.0, 40.0, 70.0)
    };
    put_num(&mut v, "age", age);

    // sex: HC female 53.61%, MDD female 59.83%
    let sex = if mdd {
        pick_weighted(rng, &[("female", 59.83), ("male", 40.17)])
    } else {
        pick_weighted(rng, &[("female", 53.61), ("male", 46.39)])
    };
    v.insert("sex".into(), Value::cat(sex));

    // education bands: HC low 19.31 / intermediate 45.08 / high 33.19 / missing 2.42
    //                  MDD low 18.08 / intermediate 45.06 / high 34.68 / missing 2.18
    let edu_band = if mdd {
        pick_weighted(
            rng,
            &[("low", 18.08), ("inter", 45.06), ("high", 34.68), ("", 2.18)],
        )
    } else {
        pick_weighted(
            rng,
            &[("low", 19.31), ("inter", 45.08), ("high", 33.19), ("", 2.42)],
        )
    };
    match edu_band {
        "low" => {
            v.insert("education".into(), Value::cat("no_qualifications"));
        }
        "inter" => {
            let cat = pick_weighted(
                rng,
                &[
                    ("cse", 0.10),
                    ("o_levels", 0.40),
                    ("a_levels", 0.25),
                    ("nvq_hnd_hnc", 0.15),
                    ("other_professional", 0.10),
                ],
            );
            v.insert("education".into(), Value::cat(cat));
        }
        "high" => {
            v.insert("education".into(), Value::cat("degree"));
        }
        _ => {}
    }

    // income bands (£/yr): HC low 17.24 / medium 63.50 / high 4.89 / missing 14.37
    //                      MDD low 15.32 / medium 62.95 / high 5.53 / missing 16.31
    let income_band = if mdd {
        pick_weighted(
            rng,
            &[("low", 15.32), ("med", 62.95), ("high", 5.53), ("", 16.31)],
        )
    } else {
        pick_weighted(
            rng,
            &[("low", 17.24), ("med", 63.50), ("high", 4.89), ("", 14.37)],
        )
    };
    let income_range: Option<(f64, f64)> = match income_band {
        "low" => Some((8_000.0, 18_000.0)),
        "med" => Some((18_000.0, 100_000.0)),
        "high" => Some((100_000.0, 300_000.0)),
        _ => None,
    };
    if let Some((lo, hi)) = income_range {
        // log-uniform within band, rounded to £100
        let u = rng.gen::<f64>();
        let raw = (lo.ln() + u * (hi.ln() - lo.ln())).exp();
        put_num(&mut v, "income", (raw / 100.0).round() * 100.0);
    }

    // employment: HC employed 51.88 / not 44.96 / other 2.37 / missing 0.79
    //             MDD employed 49.36 / not 47.80 / other 2.01 / missing 0.83
    let employment = if mdd {
        pick_weighted(
            rng,
            &[
                ("employed", 49.36),
                ("not_employed", 47.80),
                ("other", 2.01),
                ("", 0.83),
            ],
        )
    } else {
        pick_weighted(
            rng,
            &[
                ("employed", 51.88),
                ("not_employed", 44.96),
                ("other", 2.37),
                ("", 0.79),
            ],
        )
    };
    if !employment.is_empty() {
        v.insert("employment_status".into(), Value::cat(employment));
    }

    // working week (declared; published table has no marginal): employed only
    match employment {
        "employed" => put_num(
            &mut v,
            "work_hours_per_week",
            normal_clamped(rng, 38.0, 33.0, 43.0, 4.0, 70.0),
        ),
        "other" => put_num(
            &mut v,
            "work_hours_per_week",
            normal_clamped(rng, 20.0, 12.0, 28.0, 1.0, 60.0),
        ),
        _ => {}
    }

    // BMI: HC 26.36 (24.29-30.18), MDD 25.97 (24.13-30.30)
    let bmi = if mdd {
        lognormal_clamped(rng, 25.97, 24.13, 30.30, 15.0, 60.0)
    } else {
        lognormal_clamped(rng, 26.36, 24.29, 30.18, 15.0, 60.0)
    };
    put_num(&mut v, "bmi", bmi);

    // sleep duration: both classes median 7 (6-8); MDD shifted to the tails
    let sleep_table: &[(&str, f64)] = if mdd {
        &[
            ("4", 0.05),
            ("5", 0.10),
            ("6", 0.22),
            ("7", 0.30),
            ("8", 0.21),
            ("9", 0.08),
            ("10", 0.03),
            ("11", 0.01),
        ]
    } else {
        &[
            ("4", 0.03),
            ("5", 0.08),
            ("6", 0.23),
            ("7", 0.33),
            ("8", 0.23),
            ("9", 0.07),
            ("10", 0.02),
            ("11", 0.01),
        ]
    };
    let sleep: f64 = pick_weighted(rng, sleep_table).parse().expect("digit");
    put_num(&mut v, "sleep_duration", sleep);

    // sleeplessness: HC usually 27.96 / sometimes 48.31 / never 23.40 / missing 0.21
    //                MDD usually 33.82 / sometimes 47.83 / never 18.32 / missing 0.03
    let sleepless = if mdd {
        pick_weighted(
            rng,
            &[
                ("usually", 33.82),
                ("sometimes", 47.83),
                ("never", 18.32),
                ("", 0.03),
            ],
        )
    } else {
        pick_weighted(
            rng,
            &[
                ("usually", 27.96),
                ("sometimes", 48.31),
                ("never", 23.40),
                ("", 0.21),
            ],
        )
    };
    if !sleepless.is_empty() {
        v.insert("sleeplessness".into(), Value::cat(sleepless));
    }

    // alcohol frequency buckets: HC usually 22.31 / sometimes 67.50 / never 10.14 / missing 0.05
    //                            MDD usually 21.46 / sometimes 68.71 / never 9.58 / missing 0.25
    let alcohol_bucket = if mdd {
        pick_weighted(
            rng,
            &[
                ("usually", 21.46),
                ("sometimes", 68.71),
                ("never", 9.58),
                ("", 0.25),
            ],
        )
    } else {
        pick_weighted(
            rng,
            &[
                ("usually", 22.31),
                ("sometimes", 67.50),
                ("never", 10.14),
                ("", 0.05),
            ],
        )
    };
    let alcohol_rate = match alcohol_bucket {
        "usually" => Some(rng.gen_range(5..=7) as f64),
        "sometimes" => Some(rng.gen_range(1..=4) as f64),
        "never" => Some(0.0),
        _ => None,
    };
    if let Some(rate) = alcohol_rate {
        put_num(&mut v, "alcohol_per_week", rate);
    }

    // self-harm: HC yes 1.49 / no 29.33 / not answered 0.12 / missing 69.06
    //            MDD yes 4.38 / no 59.03 / not answered 0.02 / missing 36.58
    let self_harm = if mdd {
        pick_weighted(
            rng,
            &[("yes", 4.38), ("no", 59.03), ("not_answer", 0.02), ("", 36.58)],
        )
    } else {
        pick_weighted(
            rng,
            &[("yes", 1.49), ("no", 29.33), ("not_answer", 0.12), ("", 69.06)],
        )
    };
    if !self_harm.is_empty() {
        v.insert("self_harm_history".into(), Value::cat(self_harm));
    }

    // suicidal thoughts (declared)
    let suicidal = if mdd {
        pick_weighted(rng, &[("yes", 25.0), ("no", 70.0), ("", 5.0)])
    } else {
        pick_weighted(rng, &[("yes", 3.0), ("no", 92.0), ("", 5.0)])
    };
    if !suicidal.is_empty() {
        v.insert("suicidal_thoughts".into(), Value::cat(suicidal));
    }

    // happiness (declared)
    let happiness = if mdd {
        pick_weighted(
            rng,
            &[
                ("very_happy", 10.0),
                ("moderately_happy", 55.0),
                ("unhappy", 33.0),
                ("", 2.0),
            ],
        )
    } else {
        pick_weighted(
            rng,
            &[
                ("very_happy", 35.0),
                ("moderately_happy", 55.0),
                ("unhappy", 8.0),
                ("", 2.0),
            ],
        )
    };
    if !happiness.is_empty() {
        v.insert("happiness".into(), Value::cat(happiness));
    }

    // four satisfaction domains (declared)
    for domain in [
        "work_satisfaction",
        "health_satisfaction",
        "family_satisfaction",
        "finance_satisfaction",
    ] {
        let cat = if mdd {
            pick_weighted(
                rng,
                &[
                    ("satisfied", 35.0),
                    ("neutral", 38.0),
                    ("dissatisfied", 25.0),
                    ("", 2.0),
                ],
            )
        } else {
            pick_weighted(
                rng,
                &[
                    ("satisfied", 60.0),
                    ("neutral", 30.0),
                    ("dissatisfied", 8.0),
                    ("", 2.0),
                ],
            )
        };
        if !cat.is_empty() {
            v.insert(domain.into(), Value::cat(cat));
        }
    }

    // long-standing illness (declared)
    let illness = if mdd {
        pick_weighted(rng, &[("yes", 45.0), ("no", 52.0), ("", 3.0)])
    } else {
        pick_weighted(rng, &[("yes", 29.0), ("no", 68.0), ("", 3.0)])
    };
    if !illness.is_empty() {
        v.insert("long_standing_illness".into(), Value::cat(illness));
    }

    // lipid panel, raw mmol/L (published table's standardized columns are not
    // ordered quartiles; raw-unit targets are declared, see data dictionary)
    let lipid_missing = 0.04;
    for (name, hc_params, mdd_params) in [
        ("hdl_cholesterol", (1.45, 1.20, 1.75), (1.42, 1.17, 1.72)),
        ("ldl_cholesterol", (3.55, 3.00, 4.15), (3.52, 2.97, 4.12)),
        ("total_cholesterol", (5.70, 5.05, 6.40), (5.64, 4.99, 6.35)),
        ("triglycerides", (1.50, 1.05, 2.15), (1.54, 1.08, 2.20)),
    ] {
        let (median, q1, q3) = if mdd { mdd_params } else { hc_params };
        let value = lognormal_clamped(rng, median, q1, q3, 0.2, 12.0);
        if rng.gen::<f64>() >= lipid_missing {
            put_num(&mut v, name, value);
        }
    }

    v
}

// ---------------------------------------------------------------------------
// Filtering
// ---------------------------------------------------------------------------

/// Split records into (kept, excluded) by missing-value fraction. A record is
/// excluded iff missing/22 is strictly greater than `threshold`; input order
/// is preserved in both outputs.
pub fn filter_missing(
    records: Vec<ParticipantRecord>,
    threshold: f64,
) -> Result<(Vec<ParticipantRecord>, Vec<ParticipantRecord>)> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::invalid(format!(
            "missingness threshold must lie in (0, 1], got {threshold}"
        )));
    }
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for record in records {
        if record.missing_fraction() > threshold {
            excluded.push(record);
        } else {
            kept.push(record);
        }
    }
    Ok((kept, excluded))
}

/// Default exclusion threshold: more than 30% missing.
pub const DEFAULT_MISSING_THRESHOLD: f64 = 0.30;

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinuousClassStats {
    pub n_observed: usize,
    pub n_missing: usize,
    pub median: Option<f64>,
    pub q1: Option<f64>,
    pub q3: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CategoricalClassStats {
    /// Proportions over the class, one entry per category plus `missing`;
    /// they sum to 1.
    pub proportions: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureSummary {
    Continuous {
        hc: ContinuousClassStats,
        mdd: ContinuousClassStats,
    },
    Categorical {
        hc: CategoricalClassStats,
        mdd: CategoricalClassStats,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSummaryEntry {
    pub name: String,
    #[serde(flatten)]
    pub summary: FeatureSummary,
    pub p_value: PValue,
}

/// Baseline-characteristics style summary of a cohort.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CohortSummary {
    pub n_total: usize,
    pub n_mdd: usize,
    pub n_hc: usize,
    pub features: Vec<FeatureSummaryEntry>,
}

fn continuous_stats(values: &[f64], class_n: usize) -> ContinuousClassStats {
    match stats::median_iqr(values) {
        Some((q1, median, q3)) => ContinuousClassStats {
            n_observed: values.len(),
            n_missing: class_n - values.len(),
            median: Some(median),
            q1: Some(q1),
            q3: Some(q3),
        },
        None => ContinuousClassStats {
            n_observed: 0,
            n_missing: class_n,
            median: None,
            q1: None,
            q3: None,
        },
    }
}

fn categorical_stats(spec: &FeatureSpec, counts: &BTreeMap<&str, usize>, class_n: usize) -> CategoricalClassStats {
    let mut proportions = Vec::new();
    if class_n == 0 {
        return CategoricalClassStats { proportions };
    }
    let mut observed = 0usize;
    for cat in spec.categories {
        let c = counts.get(cat).copied().unwrap_or(0);
        observed += c;
        proportions.push((cat.to_string(), c as f64 / class_n as f64));
    }
    proportions.push((
        "missing".to_string(),
        (class_n - observed) as f64 / class_n as f64,
    ));
    CategoricalClassStats { proportions }
}

/// Summarize a cohort: per-class median/IQR or category proportions for every
/// registry feature, plus a group-comparison p-value (rank-sum for continuous
/// features, chi-square over observed categories for categorical ones).
/// Single-class cohorts yield p-values marked unavailable.
pub fn summarize(records: &[ParticipantRecord]) -> CohortSummary {
    let n_mdd = records.iter().filter(|r| r.label == Label::Mdd).count();
    let n_hc = records.len() - n_mdd;
    let both_classes = n_mdd > 0 && n_hc > 0;

    let mut entries = Vec::with_capacity(features::feature_count());
    for spec in features::registry() {
        let entry = match spec.kind {
            FeatureKind::Continuous => {
                let mut hc_vals = Vec::new();
                let mut mdd_vals = Vec::new();
                for r in records {
                    if let Some(x) = r.num(spec.name) {
                        match r.label {
                            Label::Hc => hc_vals.push(x),
                            Label::Mdd => mdd_vals.push(x),
                        }
                    }
                }
                let p = if both_classes {
                    stats::rank_sum_test(&hc_vals, &mdd_vals)
                } else {
                    PValue::Unavailable
                };
                FeatureSummaryEntry {
                    name: spec.name.to_string(),
                    summary: FeatureSummary::Continuous {
                        hc: continuous_stats(&hc_vals, n_hc),
                        mdd: continuous_stats(&mdd_vals, n_mdd),
                    },
                    p_value: p,
                }
            }
            FeatureKind::Categorical => {
                let mut hc_counts: BTreeMap<&str, usize> = BTreeMap::new();
                let mut mdd_counts: BTreeMap<&str, usize> = BTreeMap::new();
                for r in records {
                    if let Some(c) = r.cat(spec.name) {
                        let counts = match r.label {
                            Label::Hc => &mut hc_counts,
                            Label::Mdd => &mut mdd_counts,
                        };
                        *counts.entry(spec.categories.iter().find(|k| **k == c).copied().unwrap_or("?")).or_default() += 1;
                    }
                }
                let p = if both_classes {
                    let table: Vec<Vec<u64>> = vec![
                        spec.categories
                            .iter()
                            .map(|c| hc_counts.get(c).copied().unwrap_or(0) as u64)
                            .collect(),
                        spec.categories
                            .iter()
                            .map(|c| mdd_counts.get(c).copied().unwrap_or(0) as u64)
                            .collect(),
                    ];
                    // class x category with classes as rows
                    stats::chi_square_test(&table)
                } else {
                    PValue::Unavailable
                };
                FeatureSummaryEntry {
                    name: spec.name.to_string(),
                    summary: FeatureSummary::Categorical {
                        hc: categorical_stats(spec, &hc_counts, n_hc),
                        mdd: categorical_stats(spec, &mdd_counts, n_mdd),
                    },
                    p_value: p,
                }
            }
        };
        entries.push(entry);
    }

    CohortSummary {
        n_total: records.len(),
        n_mdd,
        n_hc,
        features: entries,
    }
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

/// Format a value the way the CSV stores it (and the way narratives quote
/// numbers, minus digit grouping).
pub fn format_value(spec: &FeatureSpec, value: &Value) -> String {
    match value {
        Value::Num(x) => format!("{:.*}", spec.decimals as usize, x),
        Value::Cat(c) => c.clone(),
    }
}

/// Write a cohort as CSV: header is the registry order plus `label`, missing
/// values are empty fields.
pub fn write_cohort_csv(path: &Path, records: &[ParticipantRecord]) -> Result<()> {
    let mut out = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let header: Vec<&str> = features::registry()
        .iter()
        .map(|s| s.name)
        .chain(std::iter::once("label"))
        .collect();
    writeln!(out, "{}", header.join(",")).map_err(|e| Error::io(path.display().to_string(), e))?;
    for record in records {
        let mut fields: Vec<String> = Vec::with_capacity(features::feature_count() + 1);
        for spec in features::registry() {
            fields.push(
                record
                    .get(spec.name)
                    .map(|v| format_value(spec, v))
                    .unwrap_or_default(),
            );
        }
        fields.push(record.label.as_str().to_string());
        writeln!(out, "{}", fields.join(",")).map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(())
}

/// Read a cohort CSV written by [`write_cohort_csv`]. Record ids are assigned
/// positionally (`P000000`, ...).
pub fn read_cohort_csv(path: &Path) -> Result<Vec<ParticipantRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(path.display().to_string(), "empty file"))?
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let expected: Vec<&str> = features::registry()
        .iter()
        .map(|s| s.name)
        .chain(std::iter::once("label"))
        .collect();
    if header.split(',').collect::<Vec<_>>() != expected {
        return Err(Error::parse(
            path.display().to_string(),
            "header does not match the feature registry",
        ));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected.len() {
            return Err(Error::parse(
                path.display().to_string(),
                format!("row {} has {} fields, expected {}", i + 1, fields.len(), expected.len()),
            ));
        }
        let mut values = BTreeMap::new();
        for (spec, field) in features::registry().iter().zip(&fields) {
            if field.is_empty() {
                continue;
            }
            let value = match spec.kind {
                FeatureKind::Continuous => Value::Num(field.parse::<f64>().map_err(|_| {
                    Error::parse(
                        path.display().to_string(),
                        format!("row {}: bad number `{field}` for {}", i + 1, spec.name),
                    )
                })?),
                FeatureKind::Categorical => Value::cat(field),
            };
            values.insert(spec.name.to_string(), value);
        }
        let label = Label::parse(fields[fields.len() - 1]).ok_or_else(|| {
            Error::parse(
                path.display().to_string(),
                format!("row {}: bad label `{}`", i + 1, fields[fields.len() - 1]),
            )
        })?;
        let record = ParticipantRecord {
            id: format!("P{i:06}"),
            values,
            label,
        };
        record.validate()?;
        records.push(record);
    }
    Ok(records)
}

/// Emit the data dictionary: one entry per feature with kind, unit,
/// categories, storage precision, and generator provenance notes.
pub fn write_data_dictionary(path: &Path) -> Result<()> {
    #[derive(Serialize)]
    struct Entry {
        name: &'static str,
        kind: FeatureKind,
        unit: &'static str,
        categories: &'static [&'static str],
        decimals: u8,
        note: &'static str,
    }
    let notes: BTreeMap<&str, &str> = BTreeMap::from([
        (
            "hdl_cholesterol",
            "raw mmol/L targets; the published standardized lipid columns are \
             not ordered quartiles, so raw-unit medians near the worked \
             narrative values are used instead",
        ),
        ("ldl_cholesterol", "raw mmol/L targets, see hdl_cholesterol"),
        ("total_cholesterol", "raw mmol/L targets, see hdl_cholesterol"),
        ("triglycerides", "raw mmol/L targets, see hdl_cholesterol"),
        ("work_hours_per_week", "declared default; no published marginal"),
        ("happiness", "declared default; no published marginal"),
        ("work_satisfaction", "declared default; no published marginal"),
        ("health_satisfaction", "declared default; no published marginal"),
        ("family_satisfaction", "declared default; no published marginal"),
        ("finance_satisfaction", "declared default; no published marginal"),
        ("suicidal_thoughts", "declared default; no published marginal"),
        ("long_standing_illness", "declared default; no published marginal"),
        ("income", "continuous £/year; band proportions follow the published income bands"),
        ("alcohol_per_week", "continuous rate; bucketed to usually/sometimes/never for band proportions"),
    ]);
    let entries: Vec<Entry> = features::registry()
        .iter()
        .map(|s| Entry {
            name: s.name,
            kind: s.kind,
            unit: s.unit,
            categories: s.categories,
            decimals: s.decimals,
            note: notes.get(s.name).copied().unwrap_or(""),
        })
        .collect();
    let json = serde_json::to_string_pretty(&entries).expect("serializable");
    std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
}
