//! Separable synthetic diagnosis task.
//!
//! Participant records are drawn with independent binary risk indicators and
//! labeled by a fixed linear rule over those indicators, so the task is
//! exactly learnable by the pooled-context policy. Records go through the
//! same narrative/QA machinery as the calibrated cohort; the policy sees a
//! compact token encoding of the same indicators.

use rand::Rng;

use crate::cohort::{ParticipantRecord, Value};
use crate::features::Label;
use crate::narrative::Tier;
use crate::policy::TokenSeq;
use crate::seed;
use crate::tokenizer::{CompactTokenizer, Token};

/// Binarized clinical indicators, in encoding order. `sex_female` carries
/// zero weight in the rule; it is a deliberate distractor.
pub const INDICATORS: [(&str, &str, &str, u32); 8] = [
    // (name, fired token, clear token, rule weight)
    ("age_low", "age_low", "age_ok", 1),
    ("sex_female", "sex_female", "sex_male", 0),
    ("sleep_short", "sleep_short", "sleep_ok", 2),
    ("insomnia_high", "insomnia_high", "insomnia_low", 2),
    ("selfharm_yes", "selfharm_yes", "selfharm_no", 3),
    ("mood_low", "mood_low", "mood_ok", 2),
    ("illness_yes", "illness_yes", "illness_no", 1),
    ("alcohol_high", "alcohol_high", "alcohol_low", 1),
];

/// Risk points at or above this threshold label a record MDD.
pub const RISK_THRESHOLD: u32 = 4;

/// Probability that each indicator fires in the separable generator.
const INDICATOR_RATES: [f64; 8] = [0.45, 0.50, 0.35, 0.35, 0.25, 0.30, 0.35, 0.30];

/// Extract the indicator vector from a record (missing features count as
/// not fired).
pub fn indicators(record: &ParticipantRecord) -> [bool; 8] {
    [
        record.num("age").map(|a| a < 58.0).unwrap_or(false),
        record.cat("sex") == Some("female"),
        record.num("sleep_duration").map(|s| s < 6.5).unwrap_or(false),
        record.cat("sleeplessness") == Some("usually"),
        record.cat("self_harm_history") == Some("yes"),
        record.cat("happiness") == Some("unhappy"),
        record.cat("long_standing_illness") == Some("yes"),
        record.num("alcohol_per_week").map(|a| a >= 5.0).unwrap_or(false),
    ]
}

pub fn risk_points(fired: &[bool; 8]) -> u32 {
    INDICATORS
        .iter()
        .zip(fired)
        .map(|((_, _, _, w), f)| if *f { *w } else { 0 })
        .sum()
}

pub fn rule_label(fired: &[bool; 8]) -> Label {
    if risk_points(fired) >= RISK_THRESHOLD {
        Label::Mdd
    } else {
        Label::Hc
    }
}

/// Generate `n` fully-observed records whose labels follow the linear rule.
/// Deterministic in `seed`, record-wise independent.
pub fn generate_separable(n: usize, seed: u64) -> Vec<ParticipantRecord> {
    (0..n)
        .map(|i| {
            let mut rng = seed::rng_for(seed, "separable/record", &[i as u64]);
            let mut fired = [false; 8];
            for (f, rate) in fired.iter_mut().zip(INDICATOR_RATES) {
                *f = rng.gen::<f64>() < rate;
            }
            let label = rule_label(&fired);
            let mut record = ParticipantRecord {
                id: format!("P{i:06}"),
                values: Default::default(),
                label,
            };
            let num = |r: &mut ParticipantRecord, k: &str, v: f64| {
                r.values.insert(k.to_string(), Value::Num(v));
            };
            let cat = |r: &mut ParticipantRecord, k: &str, v: &str| {
                r.values.insert(k.to_string(), Value::cat(v));
            };

            let age = if fired[0] {
                rng.gen_range(40..58)
            } else {
                rng.gen_range(58..70)
            };
            num(&mut record, "age", age as f64);
            cat(&mut record, "sex", if fired[1] { "female" } else { "male" });
            let sleep = if fired[2] {
                rng.gen_range(4..=6)
            } else {
                rng.gen_range(7..=9)
            };
            num(&mut record, "sleep_duration", sleep as f64);
            cat(
                &mut record,
                "sleeplessness",
                if fired[3] {
                    "usually"
                } else if rng.gen::<bool>() {
                    "sometimes"
                } else {
                    "never"
                },
            );
            cat(
                &mut record,
                "self_harm_history",
                if fired[4] { "yes" } else { "no" },
            );
            cat(
                &mut record,
                "happiness",
                if fired[5] {
                    "unhappy"
                } else if rng.gen::<bool>() {
                    "moderately_happy"
                } else {
                    "very_happy"
                },
            );
            cat(
                &mut record,
                "long_standing_illness",
                if fired[6] { "yes" } else { "no" },
            );
            let alcohol = if fired[7] {
                rng.gen_range(5..=7)
            } else {
                rng.gen_range(0..=4)
            };
            num(&mut record, "alcohol_per_week", alcohol as f64);

            // class-neutral filler so every registry feature is observed
            num(&mut record, "bmi", 26.0);
            num(&mut record, "income", 30_000.0);
            cat(&mut record, "education", "o_levels");
            cat(&mut record, "employment_status", "employed");
            num(&mut record, "work_hours_per_week", 37.0);
            cat(&mut record, "suicidal_thoughts", "no");
            cat(&mut record, "work_satisfaction", "neutral");
            cat(&mut record, "health_satisfaction", "neutral");
            cat(&mut record, "family_satisfaction", "neutral");
            cat(&mut record, "finance_satisfaction", "neutral");
            num(&mut record, "hdl_cholesterol", 1.40);
            num(&mut record, "ldl_cholesterol", 3.50);
            num(&mut record, "total_cholesterol", 5.60);
            num(&mut record, "triglycerides", 1.50);
            record
        })
        .collect()
}

/// One policy-facing task instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyExample {
    pub id: String,
    pub prompt: Vec<Token>,
    pub truth: Label,
}

/// Compact prompt encoding: `<bos> tier indicator*8 <sep>`.
pub fn encode_prompt(record: &ParticipantRecord, tier: Tier) -> Vec<Token> {
    let tok = CompactTokenizer::get();
    let fired = indicators(record);
    let mut prompt = Vec::with_capacity(11);
    prompt.push(tok.bos());
    prompt.push(tok.tier_token(tier));
    for ((_, on, off, _), f) in INDICATORS.iter().zip(fired) {
        prompt.push(tok.tok(if f { on } else { off }));
    }
    prompt.push(tok.sep());
    prompt
}

/// Reasoning-step tokens for the fired weighted indicators, in order.
fn sign_tokens(record: &ParticipantRecord) -> Vec<Token> {
    let tok = CompactTokenizer::get();
    let fired = indicators(record);
    let signs = [
        "sign_age",
        "", // the sex distractor carries no reasoning step
        "sign_sleep",
        "sign_insomnia",
        "sign_selfharm",
        "sign_mood",
        "sign_illness",
        "sign_alcohol",
    ];
    signs
        .iter()
        .zip(fired)
        .filter(|(name, f)| !name.is_empty() && *f)
        .map(|(name, _)| tok.tok(name))
        .collect()
}

/// Target-region tokens for supervised training: scaffold depth grows with
/// the tier.
pub fn encode_target(record: &ParticipantRecord, tier: Tier, label: Label) -> Vec<Token> {
    let tok = CompactTokenizer::get();
    let overall = if label == Label::Mdd {
        tok.tok("overall_risk")
    } else {
        tok.tok("overall_ok")
    };
    let mut target = Vec::new();
    match tier {
        Tier::Direct => {}
        Tier::SimpleCot => {
            target.push(tok.think());
            let signs = sign_tokens(record);
            target.extend(signs.into_iter().take(2));
            target.push(overall);
            target.push(tok.end_think());
        }
        Tier::ComplexCot => {
            target.push(tok.think());
            target.extend(sign_tokens(record));
            target.push(overall);
            target.push(tok.end_think());
        }
    }
    target.push(tok.answer());
    target.push(tok.label_token(label));
    target.push(tok.end_answer());
    target.push(tok.eos());
    target
}

pub fn example(record: &ParticipantRecord, tier: Tier) -> ToyExample {
    ToyExample {
        id: record.id.clone(),
        prompt: encode_prompt(record, tier),
        truth: record.label,
    }
}

pub fn task_from_records(records: &[ParticipantRecord], tier: Tier) -> Vec<ToyExample> {
    records.iter().map(|r| example(r, tier)).collect()
}

/// Supervised corpus of full sequences (prompt + target, split at the
/// prompt boundary) with ground-truth labels.
pub fn sft_corpus(records: &[ParticipantRecord], tier: Tier) -> Vec<TokenSeq> {
    records
        .iter()
        .map(|r| {
            let mut tokens = encode_prompt(r, tier);
            let split = tokens.len();
            tokens.extend(encode_target(r, tier, r.label));
            TokenSeq { tokens, split }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_records_validate_and_follow_the_rule() {
        let records = generate_separable(200, 3);
        assert_eq!(records.len(), 200);
        for r in &records {
            r.validate().unwrap();
            assert_eq!(r.missing_count(), 0);
            assert_eq!(rule_label(&indicators(r)), r.label);
        }
        // both classes present with reasonable balance
        let mdd = records.iter().filter(|r| r.label == Label::Mdd).count();
        assert!(mdd > 40 && mdd < 160, "mdd count {mdd}");
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(generate_separable(50, 9), generate_separable(50, 9));
    }

    #[test]
    fn prompt_encoding_is_fixed_width() {
        let records = generate_separable(20, 5);
        for r in &records {
            let p = encode_prompt(r, Tier::ComplexCot);
            assert_eq!(p.len(), 11);
        }
    }

    #[test]
    fn target_lengths_grow_with_tier() {
        let records = generate_separable(100, 7);
        let mean_len = |tier: Tier| -> f64 {
            let total: usize = records
                .iter()
                .map(|r| encode_target(r, tier, r.label).len())
                .sum();
            total as f64 / records.len() as f64
        };
        let d = mean_len(Tier::Direct);
        let s = mean_len(Tier::SimpleCot);
        let c = mean_len(Tier::ComplexCot);
        assert!(d < s && s < c, "{d} {s} {c}");
    }

    #[test]
    fn sft_corpus_targets_carry_true_labels() {
        let tok = CompactTokenizer::get();
        let records = generate_separable(30, 11);
        for (seq, record) in sft_corpus(&records, Tier::ComplexCot).iter().zip(&records) {
            let text = tok.decode(seq.target());
            assert!(crate::grpo::format_ok(&text), "{text}");
            assert!(
                crate::oracle::extract_answer(&text).matches(record.label),
                "{text}"
            );
        }
    }
}
