//! Feature registry for the synthetic cohort.
//!
//! Twenty-two variables spanning demographics, socioeconomics, lifestyle,
//! psychosocial state, clinical history, and serum lipids. Category sets for
//! education, income bands, and employment follow the UK Biobank-style
//! groupings documented in the emitted data dictionary; the lipid panel is
//! kept in raw mmol/L units.

use serde::{Deserialize, Serialize};

/// Binary diagnostic label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    Mdd,
    Hc,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Mdd => "MDD",
            Label::Hc => "HC",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "MDD" => Some(Label::Mdd),
            "HC" => Some(Label::Hc),
            _ => None,
        }
    }

    pub fn flipped(&self) -> Label {
        match self {
            Label::Mdd => Label::Hc,
            Label::Hc => Label::Mdd,
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    Categorical,
}

/// One feature of the registry.
///
/// `decimals` is the display/storage precision for continuous features;
/// generated values are rounded to it so that serialization round-trips are
/// exact.
#[derive(Debug, Clone, Serialize)]
pub struct FeatureSpec {
    pub name: &'static str,
    pub kind: FeatureKind,
    pub unit: &'static str,
    pub categories: &'static [&'static str],
    pub decimals: u8,
}

impl FeatureSpec {
    const fn continuous(name: &'static str, unit: &'static str, decimals: u8) -> Self {
        FeatureSpec {
            name,
            kind: FeatureKind::Continuous,
            unit,
            categories: &[],
            decimals,
        }
    }

    const fn categorical(name: &'static str, categories: &'static [&'static str]) -> Self {
        FeatureSpec {
            name,
            kind: FeatureKind::Categorical,
            unit: "",
            categories,
            decimals: 0,
        }
    }

    pub fn has_category(&self, cat: &str) -> bool {
        self.categories.contains(&cat)
    }
}

pub const SLEEPLESSNESS_CATS: &[&str] = &["usually", "sometimes", "never"];
pub const SELF_HARM_CATS: &[&str] = &["yes", "no", "not_answer"];
pub const EDUCATION_CATS: &[&str] = &[
    "no_qualifications",
    "cse",
    "o_levels",
    "a_levels",
    "nvq_hnd_hnc",
    "other_professional",
    "degree",
];
pub const EMPLOYMENT_CATS: &[&str] = &["employed", "not_employed", "other"];
pub const HAPPINESS_CATS: &[&str] = &["very_happy", "moderately_happy", "unhappy"];
pub const SATISFACTION_CATS: &[&str] = &["satisfied", "neutral", "dissatisfied"];
pub const YES_NO: &[&str] = &["yes", "no"];

static REGISTRY: [FeatureSpec; 22] = [
    FeatureSpec::continuous("age", "years", 0),
    FeatureSpec::categorical("sex", &["female", "male"]),
    FeatureSpec::categorical("education", EDUCATION_CATS),
    FeatureSpec::continuous("income", "£/year", 0),
    FeatureSpec::categorical("employment_status", EMPLOYMENT_CATS),
    FeatureSpec::continuous("work_hours_per_week", "hours", 0),
    FeatureSpec::continuous("bmi", "kg/m²", 1),
    FeatureSpec::continuous("sleep_duration", "hours", 0),
    FeatureSpec::categorical("sleeplessness", SLEEPLESSNESS_CATS),
    FeatureSpec::continuous("alcohol_per_week", "times/week", 0),
    FeatureSpec::categorical("self_harm_history", SELF_HARM_CATS),
    FeatureSpec::categorical("suicidal_thoughts", YES_NO),
    FeatureSpec::categorical("happiness", HAPPINESS_CATS),
    FeatureSpec::categorical("work_satisfaction", SATISFACTION_CATS),
    FeatureSpec::categorical("health_satisfaction", SATISFACTION_CATS),
    FeatureSpec::categorical("family_satisfaction", SATISFACTION_CATS),
    FeatureSpec::categorical("finance_satisfaction", SATISFACTION_CATS),
    FeatureSpec::categorical("long_standing_illness", YES_NO),
    FeatureSpec::continuous("hdl_cholesterol", "mmol/L", 2),
    FeatureSpec::continuous("ldl_cholesterol", "mmol/L", 2),
    FeatureSpec::continuous("total_cholesterol", "mmol/L", 2),
    FeatureSpec::continuous("triglycerides", "mmol/L", 2),
];

/// The default 22-feature registry, in canonical (serialization) order.
pub fn registry() -> &'static [FeatureSpec] {
    &REGISTRY
}

/// Look up a feature spec by name.
pub fn spec(name: &str) -> Option<&'static FeatureSpec> {
    REGISTRY.iter().find(|s| s.name == name)
}

/// Number of registry features.
pub fn feature_count() -> usize {
    REGISTRY.len()
}
