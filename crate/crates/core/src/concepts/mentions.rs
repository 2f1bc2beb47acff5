use std::ops::Range;

use super::lexicon::Lexicons;
use super::tokenize::{token_strings, Token};
use super::{ConceptKind, KeyConceptSet, Mention};
use crate::error::{Error, Result};

/// Finds human mentions in a token sequence. Implementations return
/// non-overlapping token ranges in ascending order.
pub trait HumanMentionDetector: Send + Sync {
    fn detect(&self, tokens: &[Token]) -> Vec<Range<usize>>;
}

/// Pronouns (never "it"), `@handles`, and person-dictionary hits.
#[derive(Debug, Clone, Copy)]
pub struct RuleBasedHumanDetector<'a> {
    lexicons: &'a Lexicons,
}

impl<'a> RuleBasedHumanDetector<'a> {
    pub fn new(lexicons: &'a Lexicons) -> Self {
        RuleBasedHumanDetector { lexicons }
    }

    pub fn is_human_token(&self, token: &str) -> bool {
        if token == "it" {
            return false;
        }
        (token.len() > 1 && token.starts_with('@'))
            || self.lexicons.pronouns.contains(token)
            || self.lexicons.person_dictionary.contains(token)
    }
}

impl HumanMentionDetector for RuleBasedHumanDetector<'_> {
    fn detect(&self, tokens: &[Token]) -> Vec<Range<usize>> {
        tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| self.is_human_token(&t.text))
            .map(|(i, _)| i..i + 1)
            .collect()
    }
}

fn make_mention(doc_id: &str, kcs_name: &str, tokens: &[Token], range: Range<usize>) -> Mention {
    let surface = tokens[range.clone()]
        .iter()
        .map(|t| t.text.as_str())
        .collect::<Vec<_>>()
        .join(" ");
    let synthetic = tokens[range.clone()].iter().any(|t| t.synthetic);
    Mention {
        doc_id: doc_id.to_string(),
        kcs_name: kcs_name.to_string(),
        token_range: (range.start, range.end),
        surface,
        synthetic,
    }
}

pub fn extract_human_mentions(
    doc_id: &str,
    kcs_name: &str,
    tokens: &[Token],
    detector: &dyn HumanMentionDetector,
) -> Vec<Mention> {
    detector
        .detect(tokens)
        .into_iter()
        .map(|r| make_mention(doc_id, kcs_name, tokens, r))
        .collect()
}

/// Exact-token matcher for (possibly multi-token) keywords. Scans left to
/// right, preferring the longest keyword at each position; matches never overlap.
#[derive(Debug, Clone)]
pub struct KeywordMatcher {
    patterns: Vec<Vec<String>>,
}

impl KeywordMatcher {
    pub fn new<S: AsRef<str>>(keywords: &[S]) -> Self {
        let mut patterns: Vec<Vec<String>> = keywords
            .iter()
            .map(|k| token_strings(k.as_ref()))
            .filter(|p| !p.is_empty())
            .collect();
        patterns.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        patterns.dedup();
        KeywordMatcher { patterns }
    }

    pub fn find<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<Range<usize>> {
        let mut found = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let hit = self.patterns.iter().find(|p| {
                i + p.len() <= tokens.len()
                    && p.iter().zip(&tokens[i..]).all(|(a, b)| a == b.as_ref())
            });
            match hit {
                Some(p) => {
                    found.push(i..i + p.len());
                    i += p.len();
                }
                None => i += 1,
            }
        }
        found
    }
}

pub fn extract_keyword_mentions(
    doc_id: &str,
    tokens: &[Token],
    kcs: &KeyConceptSet,
) -> Result<Vec<Mention>> {
    if kcs.kind != ConceptKind::Keyword {
        return Err(Error::config(
            format!("kcs.{}", kcs.name),
            "keyword extraction on a non-keyword concept",
        ));
    }
    let texts: Vec<&str> = tokens.iter().map(|t| t.text.as_str()).collect();
    Ok(KeywordMatcher::new(&kcs.keywords)
        .find(&texts)
        .into_iter()
        .map(|r| make_mention(doc_id, &kcs.name, tokens, r))
        .collect())
}

/// Replaces each range by a single replacement token. Returns the new tokens
/// and, for every input position, its index in the output.
pub fn mask_ranges<S: AsRef<str>>(
    tokens: &[S],
    replacements: &[(Range<usize>, &str)],
) -> Result<(Vec<String>, Vec<usize>)> {
    let mut sorted: Vec<&(Range<usize>, &str)> = replacements.iter().collect();
    sorted.sort_by_key(|(r, _)| (r.start, r.end));
    for pair in sorted.windows(2) {
        let (a, b) = (&pair[0].0, &pair[1].0);
        if b.start < a.end {
            return Err(Error::OverlappingMentions {
                first: (a.start, a.end),
                second: (b.start, b.end),
            });
        }
    }
    let mut out = Vec::with_capacity(tokens.len());
    let mut index = Vec::with_capacity(tokens.len());
    let mut next = sorted.into_iter().peekable();
    let mut i = 0;
    while i < tokens.len() {
        match next.peek() {
            Some((range, mask)) if range.start == i && !range.is_empty() => {
                let end = range.end.min(tokens.len());
                for _ in i..end {
                    index.push(out.len());
                }
                out.push((*mask).to_string());
                i = end;
                next.next();
            }
            Some((range, _)) if range.start <= i => {
                next.next();
            }
            _ => {
                index.push(out.len());
                out.push(tokens[i].as_ref().to_string());
                i += 1;
            }
        }
    }
    Ok((out, index))
}

/// Replaces every mention of `kcs` with the concept's mask token.
pub fn mask<S: AsRef<str>>(tokens: &[S], mentions: &[Mention], kcs: &KeyConceptSet) -> Result<Vec<String>> {
    let mask_token = kcs
        .mask_token
        .as_deref()
        .ok_or_else(|| Error::MissingMaskToken(kcs.name.clone()))?;
    let mut replacements = Vec::with_capacity(mentions.len());
    for m in mentions {
        if m.kcs_name != kcs.name {
            return Err(Error::config(
                format!("kcs.{}", kcs.name),
                format!("mention {:?} belongs to concept {:?}", m.surface, m.kcs_name),
            ));
        }
        if m.token_range.1 > tokens.len() || m.token_range.0 >= m.token_range.1 {
            return Err(Error::config(
                "mention.token_range",
                format!("{:?} invalid for {} tokens", m.token_range, tokens.len()),
            ));
        }
        replacements.push((m.range(), mask_token));
    }
    Ok(mask_ranges(tokens, &replacements)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthRule {
    PastTense,
    Adjective,
    PastParticiple,
    PresentContinuous,
    LeadingIs,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Synthesis {
    pub tokens: Vec<Token>,
    /// Token range of the inserted "i", if a rule fired.
    pub mention: Option<Range<usize>>,
    pub rule: Option<SynthRule>,
}

const ED_NON_VERBS: &[&str] = &[
    "bed", "red", "need", "feed", "seed", "speed", "weed", "breed", "bleed", "indeed", "hundred",
    "sacred", "naked", "wicked", "shed", "wed", "sled", "greed", "tweed", "embed",
];

const ING_NON_VERBS: &[&str] = &[
    "thing", "things", "nothing", "something", "anything", "everything", "morning", "evening",
    "during", "ceiling", "wedding", "spring", "string", "king", "ring", "sing", "bring", "wing",
    "sting", "swing", "sibling", "pudding", "darling", "icing", "ping",
];

fn is_alpha(word: &str) -> bool {
    word.chars().all(|c| c.is_alphabetic() || c == '\'')
}

fn is_past_participle(word: &str, lex: &Lexicons) -> bool {
    lex.past_participles.contains(word)
}

fn is_past_tense(word: &str, lex: &Lexicons) -> bool {
    if is_past_participle(word, lex) || !is_alpha(word) {
        return false;
    }
    lex.irregular_past_verbs.contains(word)
        || (word.len() > 3 && word.ends_with("ed") && !ED_NON_VERBS.contains(&word))
}

fn is_present_continuous(word: &str) -> bool {
    word.len() >= 5 && word.ends_with("ing") && is_alpha(word) && !ING_NON_VERBS.contains(&word)
}

fn classify_opening(word: &str, lex: &Lexicons) -> Option<SynthRule> {
    if is_past_tense(word, lex) {
        Some(SynthRule::PastTense)
    } else if lex.common_adjectives.contains(word) {
        Some(SynthRule::Adjective)
    } else if is_past_participle(word, lex) {
        Some(SynthRule::PastParticiple)
    } else if is_present_continuous(word) {
        Some(SynthRule::PresentContinuous)
    } else if word == "is" {
        Some(SynthRule::LeadingIs)
    } else {
        None
    }
}

/// Inserts an implicit first-person mention at the start of a sentence. The
/// first matching rule wins:
///
/// | sentence opens with      | rewrite           |
/// |--------------------------|-------------------|
/// | past-tense verb          | `i ...`           |
/// | adjective                | `i am ...`        |
/// | past participle          | `i have ...`      |
/// | `-ing` verb              | `i am ...`        |
/// | `is`                     | `is` -> `i am`    |
pub fn synthesize_human_mention(sentence: &[Token], lexicons: &Lexicons) -> Synthesis {
    let unchanged = || Synthesis {
        tokens: sentence.to_vec(),
        mention: None,
        rule: None,
    };
    let Some(first) = sentence.first() else {
        return unchanged();
    };
    let Some(rule) = classify_opening(&first.text, lexicons) else {
        return unchanged();
    };
    let anchor = first.start;
    let mut tokens = vec![Token::synthetic("i", anchor)];
    match rule {
        SynthRule::PastTense => tokens.extend_from_slice(sentence),
        SynthRule::Adjective | SynthRule::PresentContinuous => {
            tokens.push(Token::synthetic("am", anchor));
            tokens.extend_from_slice(sentence);
        }
        SynthRule::PastParticiple => {
            tokens.push(Token::synthetic("have", anchor));
            tokens.extend_from_slice(sentence);
        }
        SynthRule::LeadingIs => {
            tokens.push(Token {
                text: "am".into(),
                start: first.start,
                end: first.end,
                synthetic: true,
            });
            tokens.extend_from_slice(&sentence[1..]);
        }
    }
    Synthesis {
        tokens,
        mention: Some(0..1),
        rule: Some(rule),
    }
}
