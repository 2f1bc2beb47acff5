use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::lexicon::Lexicons;
use super::mentions::{
    extract_human_mentions, mask_ranges, synthesize_human_mention, HumanMentionDetector,
    KeywordMatcher, RuleBasedHumanDetector,
};
use super::preset::TaskPreset;
use super::tokenize::{split_sentences, tokenize, Token};
use super::{Bag, ConceptKind, Instance, InstanceLabel, Mention};
use crate::corpus::{Document, Label};
use crate::error::Result;

/// A document after tokenization, mention synthesis, extraction and masking.
/// Independent of any labels, so it can be computed once per corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedDocument {
    pub id: String,
    /// Tokens including synthesized ones.
    pub tokens: Vec<Token>,
    /// Tokens with every masked concept occurrence collapsed to its mask token.
    pub masked: Vec<String>,
    /// `mask_index[i]` is the position of token `i` inside `masked`.
    pub mask_index: Vec<usize>,
    /// Mentions per concept, in preset order.
    pub mentions: Vec<Vec<Mention>>,
}

impl PreparedDocument {
    /// The mention's token range inside `masked`.
    pub fn masked_range(&self, mention: &Mention) -> Range<usize> {
        let (s, e) = mention.token_range;
        self.mask_index[s]..self.mask_index[e - 1] + 1
    }

    /// Character range covered by the mention; zero-width for synthesized mentions.
    pub fn char_range(&self, mention: &Mention) -> (usize, usize) {
        let (s, e) = mention.token_range;
        (self.tokens[s].start, self.tokens[e - 1].end)
    }
}

struct Extractor<'a> {
    preset: &'a TaskPreset,
    lexicons: &'a Lexicons,
    detector: &'a dyn HumanMentionDetector,
    matchers: Vec<Option<KeywordMatcher>>,
}

impl<'a> Extractor<'a> {
    fn new(preset: &'a TaskPreset, lexicons: &'a Lexicons, detector: &'a dyn HumanMentionDetector) -> Self {
        let matchers = preset
            .kcs
            .iter()
            .map(|k| (k.kind == ConceptKind::Keyword).then(|| KeywordMatcher::new(&k.keywords)))
            .collect();
        Extractor {
            preset,
            lexicons,
            detector,
            matchers,
        }
    }

    fn synthesize(&self, text: &str, tokens: Vec<Token>) -> Vec<Token> {
        if !self.preset.has_human_view() {
            return tokens;
        }
        let mut out = Vec::with_capacity(tokens.len() + 4);
        for sentence in split_sentences(text, &tokens) {
            let sentence = &tokens[sentence];
            let opens_with_mention = self
                .detector
                .detect(&sentence[..sentence.len().min(1)])
                .iter()
                .any(|r| r.start == 0);
            if opens_with_mention {
                out.extend_from_slice(sentence);
            } else {
                out.extend(synthesize_human_mention(sentence, self.lexicons).tokens);
            }
        }
        out
    }

    fn prepare(&self, doc: &Document) -> Result<PreparedDocument> {
        let tokens = self.synthesize(&doc.text, tokenize(&doc.text));
        let texts: Vec<&str> = tokens.iter().map(|t| t.text.as_str()).collect();
        let mut mentions = Vec::with_capacity(self.preset.kcs.len());
        for (kcs, matcher) in self.preset.kcs.iter().zip(&self.matchers) {
            let found = match matcher {
                None => extract_human_mentions(&doc.id, &kcs.name, &tokens, self.detector),
                Some(m) => m
                    .find(&texts)
                    .into_iter()
                    .map(|r| Mention {
                        doc_id: doc.id.clone(),
                        kcs_name: kcs.name.clone(),
                        token_range: (r.start, r.end),
                        surface: texts[r].join(" "),
                        synthetic: false,
                    })
                    .collect(),
            };
            mentions.push(found);
        }
        let mut replacements = Vec::new();
        for (kcs, found) in self.preset.kcs.iter().zip(&mentions) {
            if let Some(mask) = kcs.mask_token.as_deref() {
                replacements.extend(found.iter().map(|m| (m.range(), mask)));
            }
        }
        let (masked, mask_index) = mask_ranges(&texts, &replacements)?;
        Ok(PreparedDocument {
            id: doc.id.clone(),
            tokens,
            masked,
            mask_index,
            mentions,
        })
    }
}

/// Prepares a document with the rule-based human detector.
pub fn prepare_document(doc: &Document, preset: &TaskPreset, lexicons: &Lexicons) -> Result<PreparedDocument> {
    let detector = RuleBasedHumanDetector::new(lexicons);
    Extractor::new(preset, lexicons, &detector).prepare(doc)
}

/// Prepares many documents, sharing keyword matchers.
pub fn prepare_documents<'d>(
    docs: impl IntoIterator<Item = &'d Document>,
    preset: &TaskPreset,
    lexicons: &Lexicons,
    detector: &dyn HumanMentionDetector,
) -> Result<Vec<PreparedDocument>> {
    let extractor = Extractor::new(preset, lexicons, detector);
    docs.into_iter().map(|d| extractor.prepare(d)).collect()
}

fn covered(range: (usize, usize), spans: &[(usize, usize)]) -> bool {
    let (start, end) = range;
    spans.iter().any(|&(s, e)| {
        if start == end || s == e {
            s == start && e == end
        } else {
            s < end && start < e
        }
    })
}

/// Applies the instance auto-labeling policy:
///
/// * unlabeled document: every instance unlabeled;
/// * negative document: every instance negative;
/// * positive document: keyword instances positive; human instances positive
///   iff covered by an annotated span, otherwise negative. Without any
///   annotated span the human bag stays unlabeled and a warning is returned.
pub fn label_bags(prepared: &PreparedDocument, doc: &Document, preset: &TaskPreset) -> (Vec<Bag>, Vec<String>) {
    let mut warnings = Vec::new();
    let bags = preset
        .kcs
        .iter()
        .zip(&prepared.mentions)
        .map(|(kcs, mentions)| {
            let label_for = |m: &Mention| match (doc.gold_label, kcs.kind) {
                (None, _) => InstanceLabel::Unlabeled,
                (Some(Label::Negative), _) => InstanceLabel::Negative,
                (Some(Label::Positive), ConceptKind::Keyword) => InstanceLabel::Positive,
                (Some(Label::Positive), ConceptKind::Human) => {
                    if doc.positive_human_spans.is_empty() {
                        InstanceLabel::Unlabeled
                    } else if covered(prepared.char_range(m), &doc.positive_human_spans) {
                        InstanceLabel::Positive
                    } else {
                        InstanceLabel::Negative
                    }
                }
            };
            if doc.gold_label == Some(Label::Positive)
                && kcs.kind == ConceptKind::Human
                && doc.positive_human_spans.is_empty()
                && !mentions.is_empty()
            {
                warnings.push(format!(
                    "document {:?} is positive but has no annotated human mention; bag {:?} left unlabeled",
                    doc.id, kcs.name
                ));
            }
            Bag {
                doc_id: doc.id.clone(),
                kcs_name: kcs.name.clone(),
                instances: mentions
                    .iter()
                    .map(|m| Instance {
                        mention: m.clone(),
                        label: label_for(m),
                    })
                    .collect(),
            }
        })
        .collect();
    (bags, warnings)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltBags {
    pub prepared: PreparedDocument,
    pub bags: Vec<Bag>,
    pub warnings: Vec<String>,
}

pub fn build_bags(doc: &Document, preset: &TaskPreset, lexicons: &Lexicons) -> Result<BuiltBags> {
    let prepared = prepare_document(doc, preset, lexicons)?;
    let (bags, warnings) = label_bags(&prepared, doc, preset);
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(BuiltBags {
        prepared,
        bags,
        warnings,
    })
}
