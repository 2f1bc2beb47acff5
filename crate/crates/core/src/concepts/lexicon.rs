use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Environment variable naming a directory that overrides the built-in lexicons.
pub const LEXICON_DIR_ENV: &str = "CODECOMP_LEXICON_DIR";

const PRONOUNS: &str = include_str!("../../lexicons/pronouns.txt");
const PERSONS: &str = include_str!("../../lexicons/persons.txt");
const IRREGULAR_PAST: &str = include_str!("../../lexicons/irregular_past.txt");
const PAST_PARTICIPLES: &str = include_str!("../../lexicons/past_participles.txt");
const ADJECTIVES: &str = include_str!("../../lexicons/adjectives.txt");
const DRUGS: &str = include_str!("../../lexicons/drugs.txt");

/// Word lists behind the rule-based human-mention detector and synthesizer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicons {
    pub pronouns: BTreeSet<String>,
    pub person_dictionary: BTreeSet<String>,
    pub irregular_past_verbs: BTreeSet<String>,
    pub past_participles: BTreeSet<String>,
    pub common_adjectives: BTreeSet<String>,
    pub drug_names: BTreeSet<String>,
}

/// Parses the lexicon file format: one entry per line, `#` starts a comment,
/// blank lines ignored. Entries are lowercased; duplicates collapse.
pub fn parse_lexicon(raw: &str) -> BTreeSet<String> {
    raw.lines()
        .map(|line| line.split('#').next().unwrap_or("").trim())
        .filter(|line| !line.is_empty())
        .map(str::to_lowercase)
        .collect()
}

impl Default for Lexicons {
    fn default() -> Self {
        Self::builtin()
    }
}

impl Lexicons {
    pub fn builtin() -> Self {
        Lexicons {
            pronouns: parse_lexicon(PRONOUNS),
            person_dictionary: parse_lexicon(PERSONS),
            irregular_past_verbs: parse_lexicon(IRREGULAR_PAST),
            past_participles: parse_lexicon(PAST_PARTICIPLES),
            common_adjectives: parse_lexicon(ADJECTIVES),
            drug_names: parse_lexicon(DRUGS),
        }
    }

    /// Loads lexicons from `dir`. Files that are absent fall back to the built-in list.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(Error::config(
                LEXICON_DIR_ENV,
                format!("{} is not a directory", dir.display()),
            ));
        }
        let load = |file: &str, fallback: &str| -> Result<BTreeSet<String>> {
            let path = dir.join(file);
            if path.exists() {
                let raw = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                Ok(parse_lexicon(&raw))
            } else {
                Ok(parse_lexicon(fallback))
            }
        };
        Ok(Lexicons {
            pronouns: load("pronouns.txt", PRONOUNS)?,
            person_dictionary: load("persons.txt", PERSONS)?,
            irregular_past_verbs: load("irregular_past.txt", IRREGULAR_PAST)?,
            past_participles: load("past_participles.txt", PAST_PARTICIPLES)?,
            common_adjectives: load("adjectives.txt", ADJECTIVES)?,
            drug_names: load("drugs.txt", DRUGS)?,
        })
    }

    /// Built-in lexicons unless `CODECOMP_LEXICON_DIR` is set.
    pub fn from_env() -> Result<Self> {
        match std::env::var_os(LEXICON_DIR_ENV) {
            Some(dir) if !dir.is_empty() => Self::load_dir(dir),
            _ => Ok(Self::builtin()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_lists_are_normalized() {
        let lex = Lexicons::builtin();
        for set in [
            &lex.pronouns,
            &lex.person_dictionary,
            &lex.irregular_past_verbs,
            &lex.past_participles,
            &lex.common_adjectives,
            &lex.drug_names,
        ] {
            assert!(!set.is_empty());
            assert!(set.iter().all(|w| *w == w.to_lowercase() && !w.contains('#')));
        }
        assert!(!lex.pronouns.contains("it"));
        assert!(!lex.pronouns.contains("its"));
        assert!(lex.pronouns.contains("my"));
        assert!(lex.person_dictionary.contains("friend"));
        assert!((230..=270).contains(&lex.person_dictionary.len()));
    }

    #[test]
    fn parse_handles_comments_and_case() {
        let set = parse_lexicon("# header\nFriend\n\nfriend  # dup\nMom\n");
        assert_eq!(set.into_iter().collect::<Vec<_>>(), ["friend", "mom"]);
    }

    #[test]
    fn load_dir_overrides_present_files() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("persons.txt"), "wizard\n").unwrap();
        let lex = Lexicons::load_dir(dir.path()).unwrap();
        assert_eq!(lex.person_dictionary.len(), 1);
        assert_eq!(lex.pronouns, Lexicons::builtin().pronouns);
    }
}
