//! Key Concept Sets: presets, tokenization, mention extraction and synthesis,
//! masking, and construction of per-concept instance bags.

mod bags;
mod lexicon;
mod mentions;
mod preset;
mod tokenize;

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bags::{build_bags, label_bags, prepare_document, prepare_documents, BuiltBags, PreparedDocument};
pub use lexicon::{parse_lexicon, Lexicons, LEXICON_DIR_ENV};
pub use mentions::{
    extract_human_mentions, extract_keyword_mentions, mask, mask_ranges, synthesize_human_mention,
    HumanMentionDetector, KeywordMatcher, RuleBasedHumanDetector, SynthRule, Synthesis,
};
pub use preset::{TaskPreset, BUILTIN_PRESETS};
pub use tokenize::{split_sentences, token_strings, tokenize, Token};

pub const HUMAN_MASK: &str = "HUM_TOK";
pub const DRUG_MASK: &str = "DRUG_TOK";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConceptKind {
    Human,
    Keyword,
}

/// A named concept view over the vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyConceptSet {
    pub name: String,
    pub kind: ConceptKind,
    #[serde(default)]
    pub keywords: Vec<String>,
    #[serde(default)]
    pub mask_token: Option<String>,
}

impl KeyConceptSet {
    pub fn human(name: impl Into<String>) -> Self {
        KeyConceptSet {
            name: name.into(),
            kind: ConceptKind::Human,
            keywords: Vec::new(),
            mask_token: Some(HUMAN_MASK.to_string()),
        }
    }

    pub fn keyword<S: AsRef<str>>(name: impl Into<String>, keywords: &[S]) -> Self {
        KeyConceptSet {
            name: name.into(),
            kind: ConceptKind::Keyword,
            keywords: keywords.iter().map(|k| k.as_ref().to_lowercase()).collect(),
            mask_token: None,
        }
    }

    pub fn with_mask(mut self, mask: impl Into<String>) -> Self {
        self.mask_token = Some(mask.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::config("kcs.name", "empty concept name"));
        }
        match self.kind {
            ConceptKind::Keyword if self.keywords.iter().all(|k| k.trim().is_empty()) => Err(
                Error::config(format!("kcs.{}.keywords", self.name), "keyword concept needs keywords"),
            ),
            ConceptKind::Human if !self.keywords.is_empty() => Err(Error::config(
                format!("kcs.{}.keywords", self.name),
                "human concept takes no keywords",
            )),
            _ => Ok(()),
        }
    }
}

/// One occurrence of a concept member in a tokenized document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub doc_id: String,
    pub kcs_name: String,
    /// `[start, end)` token indices.
    pub token_range: (usize, usize),
    pub surface: String,
    #[serde(default)]
    pub synthetic: bool,
}

impl Mention {
    pub fn range(&self) -> Range<usize> {
        self.token_range.0..self.token_range.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstanceLabel {
    Positive,
    Negative,
    Unlabeled,
}

impl InstanceLabel {
    pub fn as_target(self) -> Option<bool> {
        match self {
            InstanceLabel::Positive => Some(true),
            InstanceLabel::Negative => Some(false),
            InstanceLabel::Unlabeled => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub mention: Mention,
    pub label: InstanceLabel,
}

/// The instances of one concept in one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bag {
    pub doc_id: String,
    pub kcs_name: String,
    pub instances: Vec<Instance>,
}

impl Bag {
    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}
