//! Compact word-level tokenizer over a closed vocabulary.
//!
//! The toy policy works in a small token space: scaffold tags, diagnosis
//! labels, tier markers, binarized clinical indicators, and reasoning-step
//! tokens. Unknown words map to `<unk>`, so token counting over arbitrary
//! text degenerates to whitespace word counting (the versioned convention
//! used for average-token statistics).

use std::collections::BTreeMap;
use std::sync::OnceLock;

use crate::features::Label;
use crate::narrative::Tier;

pub type Token = u32;

/// Version string stamped on artifacts that depend on token counting.
pub const TOKENIZER_VERSION: &str = "compact-v1";

pub const VOCAB: &[&str] = &[
    "<unk>",
    "<bos>",
    "<sep>",
    "<think>",
    "</think>",
    "<answer>",
    "</answer>",
    "<eos>",
    "MDD",
    "HC",
    "tier_direct",
    "tier_simple",
    "tier_complex",
    "age_low",
    "age_ok",
    "sex_female",
    "sex_male",
    "sleep_short",
    "sleep_ok",
    "insomnia_high",
    "insomnia_low",
    "selfharm_yes",
    "selfharm_no",
    "mood_low",
    "mood_ok",
    "illness_yes",
    "illness_no",
    "alcohol_high",
    "alcohol_low",
    "sign_age",
    "sign_sleep",
    "sign_insomnia",
    "sign_selfharm",
    "sign_mood",
    "sign_illness",
    "sign_alcohol",
    "overall_risk",
    "overall_ok",
];

#[derive(Debug)]
pub struct CompactTokenizer {
    index: BTreeMap<&'static str, Token>,
}

impl CompactTokenizer {
    fn new() -> CompactTokenizer {
        let index = VOCAB
            .iter()
            .enumerate()
            .map(|(i, w)| (*w, i as Token))
            .collect();
        CompactTokenizer { index }
    }

    /// Shared default instance.
    pub fn get() -> &'static CompactTokenizer {
        static T: OnceLock<CompactTokenizer> = OnceLock::new();
        T.get_or_init(CompactTokenizer::new)
    }

    pub fn vocab_size(&self) -> usize {
        VOCAB.len()
    }

    /// Token id for a vocabulary word; panics on words missing from the
    /// closed vocabulary (a programming error, not a data error).
    pub fn tok(&self, word: &str) -> Token {
        *self
            .index
            .get(word)
            .unwrap_or_else(|| panic!("`{word}` is not in the closed vocabulary"))
    }

    pub fn unk(&self) -> Token {
        0
    }

    pub fn bos(&self) -> Token {
        self.tok("<bos>")
    }

    pub fn sep(&self) -> Token {
        self.tok("<sep>")
    }

    pub fn think(&self) -> Token {
        self.tok("<think>")
    }

    pub fn end_think(&self) -> Token {
        self.tok("</think>")
    }

    pub fn answer(&self) -> Token {
        self.tok("<answer>")
    }

    pub fn end_answer(&self) -> Token {
        self.tok("</answer>")
    }

    pub fn eos(&self) -> Token {
        self.tok("<eos>")
    }

    pub fn label_token(&self, label: Label) -> Token {
        self.tok(label.as_str())
    }

    pub fn tier_token(&self, tier: Tier) -> Token {
        match tier {
            Tier::Direct => self.tok("tier_direct"),
            Tier::SimpleCot => self.tok("tier_simple"),
            Tier::ComplexCot => self.tok("tier_complex"),
        }
    }

    pub fn token_str(&self, token: Token) -> &'static str {
        VOCAB.get(token as usize).copied().unwrap_or("<unk>")
    }

    /// Whitespace word-level encoding; unknown words become `<unk>`.
    pub fn encode_words(&self, text: &str) -> Vec<Token> {
        text.split_whitespace()
            .map(|w| self.index.get(w).copied().unwrap_or(0))
            .collect()
    }

    /// Inverse of [`encode_words`] up to unknown words.
    pub fn decode(&self, tokens: &[Token]) -> String {
        tokens
            .iter()
            .map(|t| self.token_str(*t))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Token counting for average-token statistics.
pub trait TokenCounter {
    fn count(&self, text: &str) -> usize;
    fn version(&self) -> &'static str;
}

impl TokenCounter for CompactTokenizer {
    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }

    fn version(&self) -> &'static str {
        TOKENIZER_VERSION
    }
}

/// Plain whitespace tokenizer.
pub struct WhitespaceTokenizer;

impl TokenCounter for WhitespaceTokenizer {
    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }

    fn version(&self) -> &'static str {
        "whitespace-v1"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocab_is_closed_and_small() {
        let t = CompactTokenizer::get();
        assert!(t.vocab_size() <= 64);
        // ids are dense and stable
        for (i, w) in VOCAB.iter().enumerate() {
            assert_eq!(t.tok(w), i as Token);
            assert_eq!(t.token_str(i as Token), *w);
        }
    }

    #[test]
    fn unknown_words_map_to_unk() {
        let t = CompactTokenizer::get();
        let ids = t.encode_words("MDD certainly <eos>");
        assert_eq!(ids[0], t.label_token(Label::Mdd));
        assert_eq!(ids[1], t.unk());
        assert_eq!(ids[2], t.eos());
    }

    #[test]
    fn decode_inverts_known_words() {
        let t = CompactTokenizer::get();
        let text = "<think> sign_sleep overall_risk </think> <answer> MDD </answer>";
        assert_eq!(t.decode(&t.encode_words(text)), text);
    }

    #[test]
    fn counting_is_whitespace_words() {
        assert_eq!(WhitespaceTokenizer.count("hello world"), 2);
        assert_eq!(CompactTokenizer::get().count("hello world"), 2);
        assert_eq!(WhitespaceTokenizer.count(""), 0);
    }
}
