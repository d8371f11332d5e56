//! Chat-completion oracle clients: a uniform trait over HTTP endpoints and
//! in-process mocks, answer extraction, and the three-model consensus filter.

pub mod http;
pub mod mock;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::features::Label;
use crate::narrative::QaPair;
use crate::seed;
use crate::Result;

pub use http::{HttpOracle, OracleEndpoint, RateLimit};
pub use mock::{MockRule, MockServer, ScriptOracle, ScriptStep, SimOracle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> ChatMessage {
        ChatMessage {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> ChatMessage {
        ChatMessage {
            role: "user".into(),
            content: content.into(),
        }
    }
}

/// One chat-completion request. `seed` disambiguates repeated attempts with
/// identical messages; compliant servers may ignore it, the mock uses it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ChatRequest {
    pub fn new(messages: Vec<ChatMessage>, temperature: f64, seed: Option<u64>) -> ChatRequest {
        ChatRequest {
            model: String::new(),
            messages,
            temperature,
            max_tokens: 1024,
            seed,
        }
    }

    pub fn last_user_content(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == "user")
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }

    pub fn system_content(&self) -> &str {
        self.messages
            .iter()
            .find(|m| m.role == "system")
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }
}

/// A completed request/response exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub request: ChatRequest,
    pub response: String,
    pub latency_ms: u64,
    pub prompt_tokens: u32,
    pub completion_tokens: u32,
    /// How many transport attempts were made (1 = first try succeeded).
    pub attempts: u32,
}

/// Uniform oracle interface; implementations must be deterministic mocks or
/// remote endpoints.
pub trait Oracle: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, request: &ChatRequest) -> Result<ChatExchange>;
}

/// Extracted final answer of an oracle reply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExtractedAnswer {
    #[serde(rename = "MDD")]
    Mdd,
    #[serde(rename = "HC")]
    Hc,
    #[serde(rename = "unparseable")]
    Unparseable,
}

impl ExtractedAnswer {
    pub fn from_label(label: Label) -> ExtractedAnswer {
        match label {
            Label::Mdd => ExtractedAnswer::Mdd,
            Label::Hc => ExtractedAnswer::Hc,
        }
    }

    pub fn to_label(self) -> Option<Label> {
        match self {
            ExtractedAnswer::Mdd => Some(Label::Mdd),
            ExtractedAnswer::Hc => Some(Label::Hc),
            ExtractedAnswer::Unparseable => None,
        }
    }

    pub fn matches(self, label: Label) -> bool {
        self.to_label() == Some(label)
    }
}

fn label_from_word(word: &str) -> Option<Label> {
    if word.eq_ignore_ascii_case("MDD") {
        Some(Label::Mdd)
    } else if word.eq_ignore_ascii_case("HC") {
        Some(Label::Hc)
    } else {
        None
    }
}

/// Total answer-extraction function: the last `<answer>...</answer>` tag wins;
/// failing that, a unique label keyword on the last non-empty line. Anything
/// else is `Unparseable`. Never panics.
pub fn extract_answer(text: &str) -> ExtractedAnswer {
    // tag grammar, last occurrence
    let mut search = text;
    let mut last_tag: Option<&str> = None;
    while let Some(open) = search.find("<answer>") {
        let after = &search[open + "<answer>".len()..];
        match after.find("</answer>") {
            Some(close) => {
                last_tag = Some(&after[..close]);
                search = &after[close + "</answer>".len()..];
            }
            None => break,
        }
    }
    if let Some(content) = last_tag {
        return match label_from_word(content.trim()) {
            Some(label) => ExtractedAnswer::from_label(label),
            None => ExtractedAnswer::Unparseable,
        };
    }

    // fallback: unique keyword on the last non-empty line
    let Some(line) = text.lines().rev().find(|l| !l.trim().is_empty()) else {
        return ExtractedAnswer::Unparseable;
    };
    let mut found: Option<Label> = None;
    for word in line.split(|c: char| !c.is_ascii_alphanumeric()) {
        if let Some(label) = label_from_word(word) {
            match found {
                None => found = Some(label),
                Some(prev) if prev == label => {}
                Some(_) => return ExtractedAnswer::Unparseable,
            }
        }
    }
    match found {
        Some(label) => ExtractedAnswer::from_label(label),
        None => ExtractedAnswer::Unparseable,
    }
}

/// One endpoint's verdict on a QA pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleVerdict {
    pub endpoint_id: String,
    pub extracted: ExtractedAnswer,
    #[serde(skip)]
    pub exchange: Option<ChatExchange>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsensusDecision {
    Retain,
    Exclude,
    /// Transport failure on at least one endpoint: an infrastructure
    /// outcome, not model disagreement. The sample should be retried.
    Deferred,
}

/// Keep a QA pair only if all three oracles classify it correctly;
/// unparseable verdicts count as incorrect.
pub fn consensus_filter(
    qa: &QaPair,
    oracles: &[&dyn Oracle],
    seed: u64,
) -> Result<(ConsensusDecision, Vec<OracleVerdict>)> {
    if oracles.len() != 3 {
        return Err(Error::invalid(format!(
            "consensus filtering requires exactly 3 oracles, got {}",
            oracles.len()
        )));
    }
    let mut verdicts = Vec::with_capacity(3);
    for (i, oracle) in oracles.iter().enumerate() {
        let request = ChatRequest::new(
            vec![
                ChatMessage::system(qa.prompt.full_text()),
                ChatMessage::user(qa.question.clone()),
            ],
            0.0,
            Some(seed::subseed(seed, &format!("consensus/{}", qa.id), &[i as u64])),
        );
        match oracle.complete(&request) {
            Ok(exchange) => {
                verdicts.push(OracleVerdict {
                    endpoint_id: oracle.id().to_string(),
                    extracted: extract_answer(&exchange.response),
                    exchange: Some(exchange),
                });
            }
            Err(e) if matches!(e, Error::Transport { .. }) => {
                return Ok((ConsensusDecision::Deferred, verdicts));
            }
            Err(e) => return Err(e),
        }
    }
    let all_correct = verdicts.iter().all(|v| v.extracted.matches(qa.answer));
    let decision = if all_correct {
        ConsensusDecision::Retain
    } else {
        ConsensusDecision::Exclude
    };
    Ok((decision, verdicts))
}
