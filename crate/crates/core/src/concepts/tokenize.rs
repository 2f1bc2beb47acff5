use std::ops::Range;

use serde::{Deserialize, Serialize};

/// A lowercased token with its character range in the source text.
///
/// Tokens inserted by the mention synthesizer carry `synthetic = true` and a
/// zero-width range anchored at the start of the sentence they were added to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub synthetic: bool,
}

impl Token {
    pub fn new(text: impl Into<String>, start: usize, end: usize) -> Self {
        Token {
            text: text.into(),
            start,
            end,
            synthetic: false,
        }
    }

    pub(crate) fn synthetic(text: &str, anchor: usize) -> Self {
        Token {
            text: text.to_string(),
            start: anchor,
            end: anchor,
            synthetic: true,
        }
    }

    pub fn char_range(&self) -> Range<usize> {
        self.start..self.end
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

fn normalize(chars: &[char]) -> String {
    chars
        .iter()
        .map(|&c| if is_apostrophe(c) { '\'' } else { c })
        .collect::<String>()
        .to_lowercase()
}

/// Splits text into lowercased word, handle and punctuation tokens.
///
/// `@handle` stays one token, apostrophes inside words are kept ("it's"),
/// every other non-space, non-word character becomes its own token.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c == '@' && chars.get(i + 1).copied().is_some_and(is_word_char) {
            i += 1;
            while i < chars.len() && is_word_char(chars[i]) {
                i += 1;
            }
        } else if is_word_char(c) {
            while i < chars.len() {
                if is_word_char(chars[i])
                    || (is_apostrophe(chars[i]) && chars.get(i + 1).copied().is_some_and(char::is_alphanumeric))
                {
                    i += 1;
                } else {
                    break;
                }
            }
        } else {
            i += 1;
        }
        tokens.push(Token::new(normalize(&chars[start..i]), start, i));
    }
    tokens
}

/// Tokenizes and keeps only the token strings.
pub fn token_strings(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.text).collect()
}

fn is_terminal(token: &str) -> bool {
    matches!(token, "." | "!" | "?" | "\u{2026}")
}

/// Token index ranges of the sentences in `text`. A sentence ends after a run
/// of `.`, `!` or `?` tokens, or where a newline separates two tokens.
pub fn split_sentences(text: &str, tokens: &[Token]) -> Vec<Range<usize>> {
    let chars: Vec<char> = text.chars().collect();
    let mut sentences = Vec::new();
    let mut start = 0;
    for i in 0..tokens.len() {
        let next = tokens.get(i + 1);
        let boundary = match next {
            None => true,
            Some(next) => {
                let terminal_run_ends = is_terminal(&tokens[i].text) && !is_terminal(&next.text);
                let gap = &chars[tokens[i].end.min(chars.len())..next.start.min(chars.len())];
                terminal_run_ends || gap.contains(&'\n')
            }
        };
        if boundary {
            sentences.push(start..i + 1);
            start = i + 1;
        }
    }
    sentences
}
