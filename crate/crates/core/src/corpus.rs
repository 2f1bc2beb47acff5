//! Corpus ingestion, stratified fold planning and labeled/unlabeled sampling.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }

    pub fn from_bool(positive: bool) -> Self {
        if positive {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

/// One short text. Spans are character offsets (Unicode scalar values),
/// start inclusive, end exclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub gold_label: Option<Label>,
    #[serde(default)]
    pub positive_human_spans: Vec<(usize, usize)>,
    #[serde(default)]
    pub task: String,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>, gold_label: Option<Label>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            gold_label,
            positive_human_spans: Vec::new(),
            task: String::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |message: String| Error::InvalidDocument {
            id: self.id.clone(),
            message,
        };
        if self.id.is_empty() {
            return Err(invalid("empty id".into()));
        }
        let len = self.text.chars().count();
        let mut spans = self.positive_human_spans.clone();
        spans.sort_unstable();
        for &(start, end) in &spans {
            if start > end || end > len {
                return Err(invalid(format!(
                    "span [{start}, {end}) outside text of {len} characters"
                )));
            }
        }
        for pair in spans.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if b.0 < a.1 || a == b {
                return Err(invalid(format!("spans {a:?} and {b:?} overlap")));
            }
        }
        if !spans.is_empty() && self.gold_label != Some(Label::Positive) {
            return Err(invalid(
                "positive_human_spans present on a document that is not labeled positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    Tsv,
}

impl std::str::FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(CorpusFormat::Jsonl),
            "tsv" => Ok(CorpusFormat::Tsv),
            other => Err(Error::config("format", format!("unknown corpus format {other:?}"))),
        }
    }
}

impl CorpusFormat {
    /// Guess from the file extension; JSONL unless the file ends in `.tsv`.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("tsv") => CorpusFormat::Tsv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

/// An ordered, id-unique collection of documents. Immutable once built.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    documents: Vec<Document>,
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(documents.len());
        for doc in &documents {
            doc.validate()?;
            if !seen.insert(doc.id.as_str()) {
                return Err(Error::DuplicateId(doc.id.clone()));
            }
        }
        Ok(Corpus { documents })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn into_documents(self) -> Vec<Document> {
        self.documents
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Document> {
        self.documents.iter()
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn count_label(&self, label: Label) -> usize {
        self.documents
            .iter()
            .filter(|d| d.gold_label == Some(label))
            .count()
    }

    fn subset(&self, keep: impl Fn(&Document) -> bool) -> Corpus {
        Corpus {
            documents: self.documents.iter().filter(|d| keep(d)).cloned().collect(),
        }
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a Document;
    type IntoIter = std::slice::Iter<'a, Document>;

    fn into_iter(self) -> Self::IntoIter {
        self.documents.iter()
    }
}

pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Corpus> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        CorpusFormat::Jsonl => parse_jsonl(&raw),
        CorpusFormat::Tsv => parse_tsv(&raw),
    }
}

pub fn parse_jsonl(raw: &str) -> Result<Corpus> {
    let mut docs = Vec::new();
    for (idx, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(line).map_err(|e| Error::Malformed {
            line: idx + 1,
            message: e.to_string(),
        })?;
        docs.push(doc);
    }
    Corpus::new(docs)
}

/// `id <TAB> label <TAB> text`. An optional header row starting with `id` is skipped.
pub fn parse_tsv(raw: &str) -> Result<Corpus> {
    let mut docs = Vec::new();
    for (idx, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.splitn(3, '\t');
        let (Some(id), Some(label), Some(text)) = (cols.next(), cols.next(), cols.next()) else {
            return Err(Error::Malformed {
                line: idx + 1,
                message: "expected three tab-separated columns: id, label, text".into(),
            });
        };
        if idx == 0 && id.eq_ignore_ascii_case("id") && label.eq_ignore_ascii_case("label") {
            continue;
        }
        let gold_label = match label.trim().to_ascii_lowercase().as_str() {
            "positive" | "pos" | "1" => Some(Label::Positive),
            "negative" | "neg" | "0" => Some(Label::Negative),
            "" => None,
            other => {
                return Err(Error::Malformed {
                    line: idx + 1,
                    message: format!("unknown label {other:?}"),
                })
            }
        };
        docs.push(Document::new(id, text, gold_label));
    }
    Corpus::new(docs)
}

pub fn write_jsonl(path: impl AsRef<Path>, corpus: &Corpus) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for doc in corpus {
        out.push_str(&serde_json::to_string(doc)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// SplitMix64 finalizer, used to derive independent sub-seeds from one base seed.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Assignment of every labeled document to one of `k` test folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.assignments.get(id).copied()
    }

    /// (train, test) for fold `fold`, both in corpus order.
    pub fn split(&self, corpus: &Corpus, fold: usize) -> (Corpus, Corpus) {
        let train = corpus.subset(|d| self.fold_of(&d.id).is_some_and(|f| f != fold));
        let test = corpus.subset(|d| self.fold_of(&d.id) == Some(fold));
        (train, test)
    }

    /// Checks that the plan assigns every document of `corpus` exactly once.
    pub fn check_partition(&self, corpus: &Corpus) -> Result<()> {
        if self.assignments.len() != corpus.len() {
            return Err(Error::Sampling(format!(
                "fold plan covers {} documents, corpus has {}",
                self.assignments.len(),
                corpus.len()
            )));
        }
        for doc in corpus {
            match self.fold_of(&doc.id) {
                Some(f) if f < self.k => {}
                Some(f) => {
                    return Err(Error::Sampling(format!(
                        "document {:?} assigned to fold {f} >= k={}",
                        doc.id, self.k
                    )))
                }
                None => {
                    return Err(Error::Sampling(format!(
                        "document {:?} missing from fold plan",
                        doc.id
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(raw: &str) -> Result<Self> {
        Ok(serde_json::from_str(raw)?)
    }
}

/// Stratified k-fold assignment. Each class is shuffled independently and dealt
/// round-robin; the negative deal continues where the positive one stopped so
/// that total fold sizes also differ by at most one.
pub fn stratified_folds(corpus: &Corpus, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::config("folds", "k must be at least 2"));
    }
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for doc in corpus {
        match doc.gold_label {
            Some(Label::Positive) => positives.push(doc.id.as_str()),
            Some(Label::Negative) => negatives.push(doc.id.as_str()),
            None => {
                return Err(Error::InvalidDocument {
                    id: doc.id.clone(),
                    message: "fold planning requires a gold label".into(),
                })
            }
        }
    }
    for (name, members) in [("positive", &positives), ("negative", &negatives)] {
        if members.len() < k {
            return Err(Error::Sampling(format!(
                "class {name} has {} members, fewer than k={k}",
                members.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    positives.shuffle(&mut rng);
    negatives.shuffle(&mut rng);

    let mut assignments = BTreeMap::new();
    for (slot, id) in positives.iter().chain(negatives.iter()).enumerate() {
        assignments.insert((*id).to_string(), slot % k);
    }
    Ok(FoldPlan { k, assignments })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub n_labeled: usize,
    pub seed: u64,
}

/// Gold labels of documents moved to the unlabeled pool. Only evaluation code
/// should look inside.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SealedLabels {
    labels: BTreeMap<String, Option<Label>>,
}

impl SealedLabels {
    pub fn reveal(&self, id: &str) -> Option<Label> {
        self.labels.get(id).copied().flatten()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UnlabeledSplit {
    /// Documents with gold labels and annotation spans stripped.
    pub documents: Corpus,
    pub sealed: SealedLabels,
}

/// Draws `n_labeled` documents by stratified sampling; the rest become the
/// unlabeled pool. Documents without a gold label always go to the pool.
pub fn sample_labeled(train_split: &Corpus, spec: SampleSpec) -> Result<(Corpus, UnlabeledSplit)> {
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for (idx, doc) in train_split.iter().enumerate() {
        match doc.gold_label {
            Some(Label::Positive) => positives.push(idx),
            Some(Label::Negative) => negatives.push(idx),
            None => {}
        }
    }
    let available = positives.len() + negatives.len();
    if spec.n_labeled > available {
        return Err(Error::Sampling(format!(
            "n_labeled={} exceeds the {available} labeled documents in the training split",
            spec.n_labeled
        )));
    }

    let n = spec.n_labeled;
    let mut n_pos = if available == 0 {
        0
    } else {
        ((n as f64) * positives.len() as f64 / available as f64).round() as usize
    };
    if n >= 2 && !positives.is_empty() && !negatives.is_empty() {
        n_pos = n_pos.clamp(1, n - 1);
    }
    n_pos = n_pos.min(positives.len()).max(n.saturating_sub(negatives.len()));
    let n_neg = n - n_pos;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    positives.shuffle(&mut rng);
    negatives.shuffle(&mut rng);
    let chosen: HashSet<usize> = positives[..n_pos]
        .iter()
        .chain(&negatives[..n_neg])
        .copied()
        .collect();

    let mut labeled = Vec::with_capacity(n);
    let mut unlabeled = Vec::with_capacity(train_split.len() - n);
    let mut sealed = BTreeMap::new();
    for (idx, doc) in train_split.iter().enumerate() {
        if chosen.contains(&idx) {
            labeled.push(doc.clone());
        } else {
            sealed.insert(doc.id.clone(), doc.gold_label);
            let mut hidden = doc.clone();
            hidden.gold_label = None;
            hidden.positive_human_spans.clear();
            unlabeled.push(hidden);
        }
    }
    Ok((
        Corpus { documents: labeled },
        UnlabeledSplit {
            documents: Corpus {
                documents: unlabeled,
            },
            sealed: SealedLabels { labels: sealed },
        },
    ))
}
