use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::lexicon::{parse_lexicon, Lexicons};
use super::{ConceptKind, KeyConceptSet, DRUG_MASK};
use crate::error::{Error, Result};

/// Names accepted by [`TaskPreset::builtin`].
pub const BUILTIN_PRESETS: &[&str] = &[
    "phm-alzheimer",
    "phm-cancer",
    "phm-depression",
    "phm-flu",
    "phm-heart-attack",
    "phm-parkinson",
    "phm-stroke",
    "crisis-earthquake",
    "adr",
    "synthetic-two-view",
];

/// The ordered list of concept views for one task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskPreset {
    pub name: String,
    pub kcs: Vec<KeyConceptSet>,
}

#[derive(Debug, Deserialize)]
struct PresetFile {
    name: String,
    kcs: Vec<ConceptEntry>,
}

#[derive(Debug, Deserialize)]
struct ConceptEntry {
    name: String,
    kind: ConceptKind,
    #[serde(default)]
    keywords: Vec<String>,
    /// Lexicon-format file, relative to the preset file.
    #[serde(default)]
    keywords_file: Option<String>,
    #[serde(default)]
    mask_token: Option<String>,
}

fn phm(name: &str, keywords: &[&str]) -> TaskPreset {
    TaskPreset {
        name: name.to_string(),
        kcs: vec![
            KeyConceptSet::human("human"),
            KeyConceptSet::keyword("disease", keywords),
        ],
    }
}

impl TaskPreset {
    pub fn builtin(name: &str, lexicons: &Lexicons) -> Result<Self> {
        let preset = match name {
            "phm-alzheimer" => phm(name, &["alzheimer's", "alzheimers", "alzheimer"]),
            "phm-cancer" => phm(name, &["cancer"]),
            "phm-depression" => phm(name, &["depression"]),
            "phm-flu" => phm(name, &["flu", "influenza"]),
            "phm-heart-attack" => phm(name, &["heart attack"]),
            "phm-parkinson" => phm(name, &["parkinson's", "parkinsons", "parkinson"]),
            "phm-stroke" => phm(name, &["stroke"]),
            "crisis-earthquake" => TaskPreset {
                name: name.to_string(),
                kcs: vec![
                    KeyConceptSet::human("human"),
                    KeyConceptSet::keyword("crisis", &["earthquake", "quake"]),
                ],
            },
            "adr" => {
                let drugs: Vec<&str> = lexicons.drug_names.iter().map(String::as_str).collect();
                TaskPreset {
                    name: name.to_string(),
                    kcs: vec![
                        KeyConceptSet::human("human"),
                        KeyConceptSet::keyword("drug", &drugs).with_mask(DRUG_MASK),
                    ],
                }
            }
            "synthetic-two-view" => TaskPreset {
                name: name.to_string(),
                kcs: vec![
                    KeyConceptSet::keyword("alpha", &[crate::synthetic::ALPHA_KEYWORD]),
                    KeyConceptSet::keyword("beta", &[crate::synthetic::BETA_KEYWORD]),
                ],
            },
            _ => {
                return Err(Error::UnknownTask {
                    name: name.to_string(),
                    available: BUILTIN_PRESETS.join(", "),
                })
            }
        };
        Ok(preset)
    }

    /// A built-in preset name, or a path to a preset TOML file.
    pub fn resolve(name_or_path: &str, lexicons: &Lexicons) -> Result<Self> {
        let path = Path::new(name_or_path);
        if BUILTIN_PRESETS.contains(&name_or_path) || !path.is_file() {
            return Self::builtin(name_or_path, lexicons);
        }
        Self::load(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&raw, path.parent())
    }

    /// Parses a preset file:
    ///
    /// ```toml
    /// name = "phm-cancer"
    ///
    /// [[kcs]]
    /// name = "human"
    /// kind = "human"
    /// mask_token = "HUM_TOK"
    ///
    /// [[kcs]]
    /// name = "disease"
    /// kind = "keyword"
    /// keywords = ["cancer"]
    /// ```
    pub fn parse(raw: &str, base_dir: Option<&Path>) -> Result<Self> {
        let file: PresetFile =
            toml::from_str(raw).map_err(|e| Error::config("preset", e.to_string()))?;
        let mut kcs = Vec::with_capacity(file.kcs.len());
        for entry in file.kcs {
            let mut keywords: Vec<String> = entry.keywords.iter().map(|k| k.to_lowercase()).collect();
            if let Some(rel) = &entry.keywords_file {
                let path = base_dir.map(|d| d.join(rel)).unwrap_or_else(|| rel.into());
                let raw = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                keywords.extend(parse_lexicon(&raw));
            }
            kcs.push(KeyConceptSet {
                name: entry.name,
                kind: entry.kind,
                keywords,
                mask_token: entry.mask_token,
            });
        }
        let preset = TaskPreset { name: file.name, kcs };
        preset.validate()?;
        Ok(preset)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kcs.is_empty() {
            return Err(Error::config("preset.kcs", "a task needs at least one concept"));
        }
        let mut names = HashSet::new();
        for k in &self.kcs {
            k.validate()?;
            if !names.insert(k.name.as_str()) {
                return Err(Error::config(
                    "preset.kcs",
                    format!("duplicate concept name {:?}", k.name),
                ));
            }
        }
        Ok(())
    }

    pub fn names(&self) -> Vec<&str> {
        self.kcs.iter().map(|k| k.name.as_str()).collect()
    }

    pub fn has_human_view(&self) -> bool {
        self.kcs.iter().any(|k| k.kind == ConceptKind::Human)
    }
}
