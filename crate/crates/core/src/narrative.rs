//! Tabular-to-text serialization and question-answer assembly.
//!
//! A [`ParticipantRecord`] becomes a fixed-order clinical paragraph
//! (demographics, sleep, alcohol/self-harm, employment/income, education,
//! illness, lipids) with a provenance map from each non-missing feature to
//! the character span of its rendered value. Missing core features are
//! rendered as "was not recorded" clauses; the psychosocial extension
//! features appear only when present.
//!
//! Surface forms are frozen in versioned template files under `assets/` so
//! the serialization is reproducible.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::cohort::{ParticipantRecord, Value};
use crate::error::Error;
use crate::features::Label;
use crate::Result;

/// Prompting tier for question assembly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Direct,
    SimpleCot,
    ComplexCot,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Direct, Tier::SimpleCot, Tier::ComplexCot];

    pub fn as_str(&self) -> &'static str {
        match self {
            Tier::Direct => "direct",
            Tier::SimpleCot => "simple_cot",
            Tier::ComplexCot => "complex_cot",
        }
    }

    pub fn parse(s: &str) -> Option<Tier> {
        match s {
            "direct" => Some(Tier::Direct),
            "simple_cot" => Some(Tier::SimpleCot),
            "complex_cot" => Some(Tier::ComplexCot),
            _ => None,
        }
    }
}

// ---------------------------------------------------------------------------
// Template files
// ---------------------------------------------------------------------------

/// A versioned `key=value` template file.
#[derive(Debug, Clone)]
pub struct TemplateFile {
    pub version: u32,
    entries: BTreeMap<String, String>,
}

impl TemplateFile {
    pub fn parse(text: &str, origin: &str) -> Result<TemplateFile> {
        let mut entries = BTreeMap::new();
        for line in text.lines() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, format!("malformed line `{line}`")))?;
            entries.insert(key.to_string(), value.to_string());
        }
        let version = entries
            .get("version")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::parse(origin, "missing or invalid `version` entry"))?;
        Ok(TemplateFile { version, entries })
    }

    pub fn from_file(path: &Path) -> Result<TemplateFile> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        TemplateFile::parse(&text, &path.display().to_string())
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.entries
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::parse("template", format!("missing key `{key}`")))
    }
}

/// The built-in narrative template (version 1).
pub fn default_narrative_template() -> &'static TemplateFile {
    static T: OnceLock<TemplateFile> = OnceLock::new();
    T.get_or_init(|| {
        TemplateFile::parse(include_str!("../assets/narrative_v1.txt"), "narrative_v1")
            .expect("built-in narrative template parses")
    })
}

/// The built-in prompt template (version 1).
pub fn default_prompt_template() -> &'static TemplateFile {
    static T: OnceLock<TemplateFile> = OnceLock::new();
    T.get_or_init(|| {
        TemplateFile::parse(include_str!("../assets/prompts_v1.txt"), "prompts_v1")
            .expect("built-in prompt template parses")
    })
}

// ---------------------------------------------------------------------------
// Narrative document
// ---------------------------------------------------------------------------

/// Serialized narrative plus feature -> value span provenance (byte offsets
/// into `text`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarrativeDoc {
    pub text: String,
    pub provenance: BTreeMap<String, (usize, usize)>,
}

impl NarrativeDoc {
    pub fn span_text(&self, feature: &str) -> Option<&str> {
        self.provenance
            .get(feature)
            .map(|&(start, end)| &self.text[start..end])
    }
}

struct Pronouns {
    subj: &'static str,
    subj_cap: &'static str,
    poss: &'static str,
    poss_cap: &'static str,
}

fn pronouns_for(sex: Option<&str>) -> Pronouns {
    match sex {
        Some("female") => Pronouns {
            subj: "she",
            subj_cap: "She",
            poss: "her",
            poss_cap: "Her",
        },
        Some("male") => Pronouns {
            subj: "he",
            subj_cap: "He",
            poss: "his",
            poss_cap: "His",
        },
        _ => Pronouns {
            subj: "the participant",
            subj_cap: "The participant",
            poss: "the participant's",
            poss_cap: "The participant's",
        },
    }
}

#[derive(Debug, Default, Clone)]
struct Fragment {
    text: String,
    spans: Vec<(String, usize, usize)>,
}

impl Fragment {
    fn push_str(&mut self, s: &str) {
        self.text.push_str(s);
    }

    fn push_feature(&mut self, feature: &str, rendered: &str) {
        let start = self.text.len();
        self.text.push_str(rendered);
        self.spans.push((feature.to_string(), start, self.text.len()));
    }

    fn push_fragment(&mut self, frag: Fragment) {
        let offset = self.text.len();
        self.text.push_str(&frag.text);
        for (feature, start, end) in frag.spans {
            self.spans.push((feature, start + offset, end + offset));
        }
    }
}

enum Slot<'a> {
    Text(&'a str),
    Feature(&'a str, String),
    Frag(Fragment),
}

/// Fill a `{slot}` skeleton into `out`, recording provenance for feature and
/// fragment slots. Pronoun slots resolve from `pron`.
fn fill(out: &mut Fragment, skeleton: &str, slots: Vec<(&str, Slot)>, pron: &Pronouns) -> Result<()> {
    let mut slots: BTreeMap<&str, Option<Slot>> =
        slots.into_iter().map(|(k, v)| (k, Some(v))).collect();
    let mut rest = skeleton;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .ok_or_else(|| Error::parse("template", format!("unclosed slot in `{skeleton}`")))?;
        let name = &after[..close];
        match name {
            "subj" => out.push_str(pron.subj),
            "Subj" => out.push_str(pron.subj_cap),
            "poss" => out.push_str(pron.poss),
            "Poss" => out.push_str(pron.poss_cap),
            _ => {
                let slot = slots
                    .get_mut(name)
                    .and_then(Option::take)
                    .ok_or_else(|| Error::parse("template", format!("unbound slot `{name}`")))?;
                match slot {
                    Slot::Text(s) => out.push_str(s),
                    Slot::Feature(feature, rendered) => out.push_feature(feature, &rendered),
                    Slot::Frag(frag) => out.push_fragment(frag),
                }
            }
        }
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    Ok(())
}

// ---------------------------------------------------------------------------
// Value rendering and span parsing
// ---------------------------------------------------------------------------

const NUMBER_WORDS: [&str; 25] = [
    "zero",
    "one",
    "two",
    "three",
    "four",
    "five",
    "six",
    "seven",
    "eight",
    "nine",
    "ten",
    "eleven",
    "twelve",
    "thirteen",
    "fourteen",
    "fifteen",
    "sixteen",
    "seventeen",
    "eighteen",
    "nineteen",
    "twenty",
    "twenty-one",
    "twenty-two",
    "twenty-three",
    "twenty-four",
];

fn count_word(n: i64) -> String {
    if (0..NUMBER_WORDS.len() as i64).contains(&n) {
        NUMBER_WORDS[n as usize].to_string()
    } else {
        n.to_string()
    }
}

fn parse_count_word(s: &str) -> Option<i64> {
    NUMBER_WORDS
        .iter()
        .position(|w| *w == s)
        .map(|i| i as i64)
        .or_else(|| s.parse().ok())
}

fn group_thousands(n: i64) -> String {
    let digits = n.abs().to_string();
    let mut grouped = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            grouped.push(',');
        }
        grouped.push(ch);
    }
    if n < 0 {
        format!("-{grouped}")
    } else {
        grouped
    }
}

fn as_int(x: f64) -> i64 {
    x.round() as i64
}

const LIPIDS: [&str; 4] = [
    "hdl_cholesterol",
    "ldl_cholesterol",
    "total_cholesterol",
    "triglycerides",
];

const SATISFACTIONS: [(&str, &str); 4] = [
    ("work_satisfaction", "work"),
    ("health_satisfaction", "health"),
    ("family_satisfaction", "family"),
    ("finance_satisfaction", "finances"),
];

/// Core features carry "was not recorded" clauses when missing; the
/// psychosocial extension features are simply omitted.
const EXTENSION_FEATURES: [&str; 6] = [
    "happiness",
    "work_satisfaction",
    "health_satisfaction",
    "family_satisfaction",
    "finance_satisfaction",
    "suicidal_thoughts",
];

fn is_extension(feature: &str) -> bool {
    EXTENSION_FEATURES.contains(&feature)
}

fn inverse_phrase(
    t: &TemplateFile,
    prefix: &str,
    categories: &[&str],
    span: &str,
) -> Option<String> {
    categories
        .iter()
        .find(|cat| t.get(&format!("{prefix}.{cat}")).ok() == Some(span))
        .map(|cat| cat.to_string())
}

/// Parse a provenance span back into the feature value (units are not part
/// of spans). Returns `None` when the span does not decode, which the
/// round-trip property treats as a failure.
pub fn parse_feature_span(t: &TemplateFile, feature: &str, span: &str) -> Option<Value> {
    match feature {
        "age" | "work_hours_per_week" => span.parse::<i64>().ok().map(|n| Value::Num(n as f64)),
        "income" => span
            .replace(',', "")
            .parse::<i64>()
            .ok()
            .map(|n| Value::Num(n as f64)),
        "bmi" | "hdl_cholesterol" | "ldl_cholesterol" | "total_cholesterol" | "triglycerides" => {
            span.parse::<f64>().ok().map(Value::Num)
        }
        "sleep_duration" => parse_count_word(span).map(|n| Value::Num(n as f64)),
        "alcohol_per_week" => {
            if t.get("phrase.alcohol.never").ok() == Some(span) {
                Some(Value::Num(0.0))
            } else if span == "once" {
                Some(Value::Num(1.0))
            } else {
                parse_count_word(span).map(|n| Value::Num(n as f64))
            }
        }
        "sex" => matches!(span, "female" | "male").then(|| Value::cat(span)),
        "sleeplessness" => {
            inverse_phrase(t, "phrase.sleeplessness", crate::features::SLEEPLESSNESS_CATS, span)
                .map(Value::Cat)
        }
        "self_harm_history" => {
            inverse_phrase(t, "phrase.selfharm", crate::features::SELF_HARM_CATS, span)
                .map(Value::Cat)
        }
        "employment_status" => {
            inverse_phrase(t, "phrase.employment", crate::features::EMPLOYMENT_CATS, span)
                .map(Value::Cat)
        }
        "education" => inverse_phrase(t, "phrase.education", crate::features::EDUCATION_CATS, span)
            .map(Value::Cat),
        "long_standing_illness" => {
            inverse_phrase(t, "phrase.illness", crate::features::YES_NO, span).map(Value::Cat)
        }
        "happiness" => inverse_phrase(t, "phrase.happiness", crate::features::HAPPINESS_CATS, span)
            .map(Value::Cat),
        "suicidal_thoughts" => {
            inverse_phrase(t, "phrase.suicidal", crate::features::YES_NO, span).map(Value::Cat)
        }
        "work_satisfaction" | "health_satisfaction" | "family_satisfaction"
        | "finance_satisfaction" => {
            inverse_phrase(t, "phrase.satisfaction", crate::features::SATISFACTION_CATS, span)
                .map(Value::Cat)
        }
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

/// Serialize a record into its clinical narrative with the default template.
pub fn serialize(record: &ParticipantRecord) -> Result<NarrativeDoc> {
    serialize_with(default_narrative_template(), record)
}

/// Series join: "a", "a and b", "a, b, and c", ...
fn join_series(clauses: Vec<Fragment>) -> Fragment {
    let n = clauses.len();
    let mut out = Fragment::default();
    for (i, clause) in clauses.into_iter().enumerate() {
        if i > 0 {
            if n == 2 {
                out.push_str(" and ");
            } else if i + 1 == n {
                out.push_str(", and ");
            } else {
                out.push_str(", ");
            }
        }
        out.push_fragment(clause);
    }
    out
}

pub fn serialize_with(t: &TemplateFile, record: &ParticipantRecord) -> Result<NarrativeDoc> {
    record.validate()?;
    let pron = pronouns_for(record.cat("sex"));
    let mut doc = Fragment::default();
    let gap = |doc: &mut Fragment| {
        if !doc.text.is_empty() {
            doc.push_str(" ");
        }
    };

    // demographics
    {
        let age = record.num("age").map(|x| as_int(x).to_string());
        let sex = record.cat("sex").map(str::to_string);
        let bmi = record.num("bmi").map(|x| format!("{x:.1}"));
        let key = match (&age, &sex, &bmi) {
            (Some(_), Some(_), Some(_)) => Some("s_demo.full"),
            (Some(_), Some(_), None) => Some("s_demo.age_sex"),
            (Some(_), None, Some(_)) => Some("s_demo.age_bmi"),
            (None, Some(_), Some(_)) => Some("s_demo.sex_bmi"),
            (Some(_), None, None) => Some("s_demo.age"),
            (None, Some(_), None) => Some("s_demo.sex"),
            (None, None, Some(_)) => Some("s_demo.bmi"),
            (None, None, None) => None,
        };
        if let Some(key) = key {
            gap(&mut doc);
            let mut slots = Vec::new();
            if let Some(a) = age {
                slots.push(("age", Slot::Feature("age", a)));
            }
            if let Some(s) = sex {
                slots.push(("sex", Slot::Feature("sex", s)));
            }
            if let Some(m) = bmi {
                slots.push(("bmi", Slot::Feature("bmi", m)));
            }
            fill(&mut doc, t.get(key)?, slots, &pron)?;
        }
    }

    // sleep
    {
        let sleepless = record
            .cat("sleeplessness")
            .map(|c| t.get(&format!("phrase.sleeplessness.{c}")).map(str::to_string))
            .transpose()?;
        let hours = record.num("sleep_duration").map(|x| count_word(as_int(x)));
        let key = match (&sleepless, &hours) {
            (Some(_), Some(_)) => Some("s_sleep.full"),
            (Some(_), None) => Some("s_sleep.sleeplessness"),
            (None, Some(_)) => Some("s_sleep.duration"),
            (None, None) => None,
        };
        if let Some(key) = key {
            gap(&mut doc);
            let mut slots = Vec::new();
            if let Some(p) = sleepless {
                slots.push(("sleeplessness", Slot::Feature("sleeplessness", p)));
            }
            if let Some(h) = hours {
                slots.push(("sleep_hours", Slot::Feature("sleep_duration", h)));
            }
            fill(&mut doc, t.get(key)?, slots, &pron)?;
        }
    }

    // alcohol and self-harm
    {
        let alcohol = match record.num("alcohol_per_week").map(as_int) {
            Some(0) => {
                let mut f = Fragment::default();
                f.push_feature("alcohol_per_week", t.get("phrase.alcohol.never")?);
                Some(f)
            }
            Some(1) => {
                let mut f = Fragment::default();
                fill(
                    &mut f,
                    t.get("phrase.alcohol.once")?,
                    vec![("n", Slot::Feature("alcohol_per_week", "once".into()))],
                    &pron,
                )?;
                Some(f)
            }
            Some(n) => {
                let mut f = Fragment::default();
                fill(
                    &mut f,
                    t.get("phrase.alcohol.many")?,
                    vec![("n", Slot::Feature("alcohol_per_week", count_word(n)))],
                    &pron,
                )?;
                Some(f)
            }
            None => None,
        };
        let selfharm = record
            .cat("self_harm_history")
            .map(|c| t.get(&format!("phrase.selfharm.{c}")).map(str::to_string))
            .transpose()?;
        let key = match (&alcohol, &selfharm) {
            (Some(_), Some(_)) => Some("s_habits.full"),
            (Some(_), None) => Some("s_habits.alcohol"),
            (None, Some(_)) => Some("s_habits.selfharm"),
            (None, None) => None,
        };
        if let Some(key) = key {
            gap(&mut doc);
            let mut slots = Vec::new();
            if let Some(frag) = alcohol {
                slots.push(("alcohol", Slot::Frag(frag)));
            }
            if let Some(p) = selfharm {
                slots.push(("selfharm", Slot::Feature("self_harm_history", p)));
            }
            fill(&mut doc, t.get(key)?, slots, &pron)?;
        }
    }

    // employment, income, working week
    {
        let emp = record
            .cat("employment_status")
            .map(|c| t.get(&format!("phrase.employment.{c}")).map(str::to_string))
            .transpose()?;
        let income = record.num("income").map(|x| group_thousands(as_int(x)));
        let hours = record
            .num("work_hours_per_week")
            .map(|x| as_int(x).to_string());
        let key = match (&emp, &income, &hours) {
            (Some(_), Some(_), Some(_)) => Some("s_work.emp_income_hours"),
            (Some(_), Some(_), None) => Some("s_work.emp_income"),
            (Some(_), None, Some(_)) => Some("s_work.emp_hours"),
            (Some(_), None, None) => Some("s_work.emp"),
            (None, Some(_), Some(_)) => Some("s_work.income_hours"),
            (None, Some(_), None) => Some("s_work.income"),
            (None, None, Some(_)) => Some("s_work.hours"),
            (None, None, None) => None,
        };
        if let Some(key) = key {
            gap(&mut doc);
            let mut slots = Vec::new();
            if let Some(e) = emp {
                slots.push(("emp", Slot::Feature("employment_status", e)));
            }
            if let Some(i) = income {
                slots.push(("income", Slot::Feature("income", i)));
            }
            if let Some(h) = hours {
                slots.push(("hours", Slot::Feature("work_hours_per_week", h)));
            }
            fill(&mut doc, t.get(key)?, slots, &pron)?;
        }
    }

    // education and long-standing illness
    {
        let edu = record
            .cat("education")
            .map(|c| t.get(&format!("phrase.education.{c}")).map(str::to_string))
            .transpose()?;
        let illness = record
            .cat("long_standing_illness")
            .map(|c| t.get(&format!("phrase.illness.{c}")).map(str::to_string))
            .transpose()?;
        let key = match (&edu, &illness) {
            (Some(_), Some(_)) => Some("s_edu.full"),
            (Some(_), None) => Some("s_edu.edu"),
            (None, Some(_)) => Some("s_edu.illness"),
            (None, None) => None,
        };
        if let Some(key) = key {
            gap(&mut doc);
            let mut slots = Vec::new();
            if let Some(e) = edu {
                slots.push(("edu", Slot::Feature("education", e)));
            }
            if let Some(i) = illness {
                slots.push(("illness", Slot::Feature("long_standing_illness", i)));
            }
            fill(&mut doc, t.get(key)?, slots, &pron)?;
        }
    }

    // lipid panel
    {
        let mut clauses = Vec::new();
        for name in LIPIDS {
            if let Some(x) = record.num(name) {
                let mut clause = Fragment::default();
                fill(
                    &mut clause,
                    t.get(&format!("phrase.lipid.{name}"))?,
                    vec![("v", Slot::Feature(name, format!("{x:.2}")))],
                    &pron,
                )?;
                clauses.push(clause);
            }
        }
        if !clauses.is_empty() {
            gap(&mut doc);
            fill(
                &mut doc,
                t.get("s_lipids.skeleton")?,
                vec![("series", Slot::Frag(join_series(clauses)))],
                &pron,
            )?;
        }
    }

    // psychosocial extension features, present only
    if let Some(c) = record.cat("happiness") {
        gap(&mut doc);
        let phrase = t.get(&format!("phrase.happiness.{c}"))?.to_string();
        fill(
            &mut doc,
            t.get("s_mood.happiness")?,
            vec![("mood", Slot::Feature("happiness", phrase))],
            &pron,
        )?;
    }
    if let Some(c) = record.cat("suicidal_thoughts") {
        gap(&mut doc);
        let phrase = t.get(&format!("phrase.suicidal.{c}"))?.to_string();
        fill(
            &mut doc,
            t.get("s_mood.suicidal")?,
            vec![("suicidal", Slot::Feature("suicidal_thoughts", phrase))],
            &pron,
        )?;
    }
    {
        let mut items = Vec::new();
        for (feature, domain) in SATISFACTIONS {
            if let Some(c) = record.cat(feature) {
                let adj = t.get(&format!("phrase.satisfaction.{c}"))?.to_string();
                let mut item = Fragment::default();
                fill(
                    &mut item,
                    t.get("phrase.satisfaction.item")?,
                    vec![
                        ("adj", Slot::Feature(feature, adj)),
                        ("domain", Slot::Text(domain)),
                    ],
                    &pron,
                )?;
                items.push(item);
            }
        }
        if !items.is_empty() {
            gap(&mut doc);
            fill(
                &mut doc,
                t.get("s_satisfaction.skeleton")?,
                vec![("series", Slot::Frag(join_series(items)))],
                &pron,
            )?;
        }
    }

    // missing core features
    for spec in crate::features::registry() {
        if record.get(spec.name).is_none() && !is_extension(spec.name) {
            gap(&mut doc);
            let what = t.get(&format!("missing.{}", spec.name))?;
            fill(
                &mut doc,
                t.get("s_missing")?,
                vec![("what", Slot::Text(what))],
                &pron,
            )?;
        }
    }

    let mut provenance = BTreeMap::new();
    for (feature, start, end) in doc.spans {
        provenance.insert(feature, (start, end));
    }
    Ok(NarrativeDoc {
        text: doc.text,
        provenance,
    })
}

// ---------------------------------------------------------------------------
// Prompt templates and QA assembly
// ---------------------------------------------------------------------------

/// Tiered diagnostic prompt: instruction text plus ordered reasoning-stage
/// labels (empty for the direct tier).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub tier: Tier,
    pub instruction_text: String,
    pub step_scaffold: Vec<String>,
}

impl PromptTemplate {
    pub fn for_tier(tier: Tier) -> PromptTemplate {
        Self::for_tier_with(default_prompt_template(), tier).expect("built-in prompt template")
    }

    pub fn for_tier_with(t: &TemplateFile, tier: Tier) -> Result<PromptTemplate> {
        let (instruction_key, stages_key) = match tier {
            Tier::Direct => ("direct.instruction", None),
            Tier::SimpleCot => ("simple.instruction", Some("simple.stages")),
            Tier::ComplexCot => ("complex.instruction", Some("complex.stages")),
        };
        let instruction_text = format!("{}\n{}", t.get(instruction_key)?, t.get("answer_format")?);
        let step_scaffold = match stages_key {
            Some(key) => t.get(key)?.split(',').map(str::to_string).collect(),
            None => Vec::new(),
        };
        Ok(PromptTemplate {
            tier,
            instruction_text,
            step_scaffold,
        })
    }

    /// Full prompt text: instruction, answer format, and the stage list.
    pub fn full_text(&self) -> String {
        if self.step_scaffold.is_empty() {
            self.instruction_text.clone()
        } else {
            format!(
                "{}\nStages: {}.",
                self.instruction_text,
                self.step_scaffold.join(", ")
            )
        }
    }
}

/// A (prompt, question, answer) triple for one record and tier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaPair {
    pub id: String,
    pub prompt: PromptTemplate,
    pub question: String,
    pub answer: Label,
}

/// Build the QA pair for a record: narrative plus the fixed task statement,
/// answered by the record's label.
pub fn make_qa(record: &ParticipantRecord, tier: Tier) -> Result<QaPair> {
    let narrative = serialize(record)?;
    let task = default_prompt_template().get("task")?;
    Ok(QaPair {
        id: record.id.clone(),
        prompt: PromptTemplate::for_tier(tier),
        question: format!("{}\n\n{}", narrative.text, task),
        answer: record.label,
    })
}

#[derive(Serialize, Deserialize)]
struct QaRow {
    id: String,
    tier: Tier,
    prompt: String,
    question: String,
    answer: Label,
}

/// Persist QA pairs as JSONL rows `{id, tier, prompt, question, answer}`.
pub fn write_qa_jsonl(path: &Path, pairs: &[QaPair]) -> Result<()> {
    use std::io::Write;
    let mut out =
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    for pair in pairs {
        let row = QaRow {
            id: pair.id.clone(),
            tier: pair.prompt.tier,
            prompt: pair.prompt.full_text(),
            question: pair.question.clone(),
            answer: pair.answer,
        };
        let line = serde_json::to_string(&row).expect("serializable row");
        writeln!(out, "{line}").map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(())
}

/// Read QA pairs back; prompts are rebuilt from the versioned template for
/// the stored tier.
pub fn read_qa_jsonl(path: &Path) -> Result<Vec<QaPair>> {
    use std::io::BufRead;
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut pairs = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.is_empty() {
            continue;
        }
        let row: QaRow = serde_json::from_str(&line).map_err(|e| {
            Error::parse(path.display().to_string(), format!("row {}: {e}", i + 1))
        })?;
        pairs.push(QaPair {
            id: row.id,
            prompt: PromptTemplate::for_tier(row.tier),
            question: row.question,
            answer: row.answer,
        });
    }
    Ok(pairs)
}
