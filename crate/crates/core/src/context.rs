//! Context functions mapping one concept occurrence to a fixed-dimension vector,
//! and the pairwise-distance check on Key Concept Sets.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::concepts::{PreparedDocument, TaskPreset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContextVector(Vec<f64>);

impl ContextVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(ContextVector(values))
    }

    pub fn zeros(dim: usize) -> Self {
        ContextVector(vec![0.0; dim])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// What a provider needs to know about one occurrence.
#[derive(Debug, Clone)]
pub struct ContextQuery<'a> {
    pub doc_id: &'a str,
    pub kcs_name: &'a str,
    /// Index of the occurrence within its concept's bag.
    pub occurrence: usize,
    /// Masked token sequence of the document.
    pub tokens: &'a [String],
    /// Occurrence position inside `tokens`.
    pub range: Range<usize>,
}

pub trait ContextProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn context(&self, query: &ContextQuery<'_>) -> Result<ContextVector>;
}

fn fnv1a(side: u8, token: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in std::iter::once(side).chain(token.bytes()) {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Bag of the tokens within `window` positions on either side of the
/// occurrence (the occurrence itself excluded). Left-context tokens hash into
/// the first half of the buckets, right-context tokens into the second half.
/// Counts are L2-normalized; an empty context gives the zero vector.
pub fn hashed_window_context<S: AsRef<str>>(
    tokens: &[S],
    position_range: Range<usize>,
    window: usize,
    dim: usize,
) -> ContextVector {
    let mut values = vec![0.0; dim];
    let left_buckets = (dim / 2).max(1) as u64;
    let right_buckets = (dim as u64 - left_buckets).max(1);
    let start = position_range.start.min(tokens.len());
    let end = position_range.end.min(tokens.len());
    for tok in &tokens[start.saturating_sub(window)..start] {
        values[(fnv1a(b'L', tok.as_ref()) % left_buckets) as usize] += 1.0;
    }
    for tok in &tokens[end..(end + window).min(tokens.len())] {
        let bucket = left_buckets + fnv1a(b'R', tok.as_ref()) % right_buckets;
        values[bucket.min(dim as u64 - 1) as usize] += 1.0;
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        values.iter_mut().for_each(|v| *v /= norm);
    }
    ContextVector(values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedWindowProvider {
    window: usize,
    dim: usize,
}

impl HashedWindowProvider {
    pub fn new(window: usize, dim: usize) -> Result<Self> {
        if window < 1 {
            return Err(Error::config("provider.window", "window must be at least 1"));
        }
        if dim < 2 {
            return Err(Error::config("provider.dim", "dim must be at least 2"));
        }
        Ok(HashedWindowProvider { window, dim })
    }
}

impl ContextProvider for HashedWindowProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn context(&self, q: &ContextQuery<'_>) -> Result<ContextVector> {
        if q.range.start >= q.range.end || q.range.end > q.tokens.len() {
            return Err(Error::config(
                "mention.token_range",
                format!("{:?} invalid for {} tokens", q.range, q.tokens.len()),
            ));
        }
        Ok(hashed_window_context(q.tokens, q.range.clone(), self.window, self.dim))
    }
}

type VectorKey = (String, String, usize);

/// Externally computed vectors keyed by (doc id, concept, occurrence index).
#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputedProvider {
    dim: usize,
    vectors: HashMap<VectorKey, ContextVector>,
}

impl PrecomputedProvider {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, doc_id: &str, kcs: &str, occurrence: usize) -> Result<&ContextVector> {
        self.vectors
            .get(&(doc_id.to_string(), kcs.to_string(), occurrence))
            .ok_or_else(|| Error::MissingVector {
                doc_id: doc_id.to_string(),
                kcs: kcs.to_string(),
                occurrence,
            })
    }
}

impl ContextProvider for PrecomputedProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn context(&self, q: &ContextQuery<'_>) -> Result<ContextVector> {
        self.get(q.doc_id, q.kcs_name, q.occurrence).cloned()
    }
}

/// Parses the vector file: a `dim N` header, then
/// `doc_id \t kcs_name \t occurrence \t v1 v2 ... vN` per line.
pub fn parse_precomputed(raw: &str) -> Result<PrecomputedProvider> {
    let mut lines = raw.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::Malformed {
        line: 1,
        message: "missing `dim N` header".into(),
    })?;
    let dim: usize = header
        .strip_prefix("dim ")
        .and_then(|n| n.trim().parse().ok())
        .ok_or_else(|| Error::Malformed {
            line: 1,
            message: format!("expected `dim N` header, found {header:?}"),
        })?;
    let mut vectors = HashMap::new();
    for (idx, line) in lines {
        let malformed = |message: String| Error::Malformed {
            line: idx + 1,
            message,
        };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(malformed(format!("expected 4 tab-separated fields, found {}", cols.len())));
        }
        let occurrence: usize = cols[2]
            .trim()
            .parse()
            .map_err(|_| malformed(format!("bad occurrence index {:?}", cols[2])))?;
        let values = cols[3]
            .split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|_| malformed(format!("bad number {v:?}"))))
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != dim {
            return Err(malformed(format!("{} values under a {dim}-dim header", values.len())));
        }
        let vector = ContextVector::new(values).map_err(|_| malformed("non-finite value".into()))?;
        let key = (cols[0].to_string(), cols[1].to_string(), occurrence);
        if vectors.insert(key, vector).is_some() {
            return Err(malformed(format!(
                "duplicate key ({}, {}, {occurrence})",
                cols[0], cols[1]
            )));
        }
    }
    Ok(PrecomputedProvider { dim, vectors })
}

pub fn load_precomputed(path: impl AsRef<Path>) -> Result<PrecomputedProvider> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_precomputed(&raw)
}

/// Renders vectors in the precomputed file format; floats use the shortest
/// representation that parses back to the identical value.
pub fn format_precomputed<'a>(
    dim: usize,
    records: impl IntoIterator<Item = (&'a str, &'a str, usize, &'a ContextVector)>,
) -> String {
    let mut out = format!("dim {dim}\n");
    for (doc, kcs, occ, v) in records {
        let _ = write!(out, "{doc}\t{kcs}\t{occ}\t");
        let rendered: Vec<String> = v.values().iter().map(|x| format!("{x:?}")).collect();
        out.push_str(&rendered.join(" "));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProviderSpec {
    Hashed { window: usize, dim: usize },
    Precomputed { path: PathBuf },
}

impl Default for ProviderSpec {
    fn default() -> Self {
        ProviderSpec::Hashed { window: 3, dim: 64 }
    }
}

impl ProviderSpec {
    pub fn build(&self) -> Result<Box<dyn ContextProvider>> {
        Ok(match self {
            ProviderSpec::Hashed { window, dim } => Box::new(HashedWindowProvider::new(*window, *dim)?),
            ProviderSpec::Precomputed { path } => Box::new(load_precomputed(path)?),
        })
    }
}

/// Context vector of occurrence `occurrence` of concept `kcs_index`.
pub fn context_of(
    provider: &dyn ContextProvider,
    prepared: &PreparedDocument,
    preset: &TaskPreset,
    kcs_index: usize,
    occurrence: usize,
) -> Result<ContextVector> {
    let mention = &prepared.mentions[kcs_index][occurrence];
    let query = ContextQuery {
        doc_id: &prepared.id,
        kcs_name: &preset.kcs[kcs_index].name,
        occurrence,
        tokens: &prepared.masked,
        range: prepared.masked_range(mention),
    };
    let v = provider.context(&query)?;
    if v.dim() != provider.dim() {
        return Err(Error::DimensionMismatch {
            expected: provider.dim(),
            actual: v.dim(),
        });
    }
    Ok(v)
}

/// Context vectors for every occurrence of every concept, in preset order.
pub fn featurize(
    provider: &dyn ContextProvider,
    prepared: &PreparedDocument,
    preset: &TaskPreset,
) -> Result<Vec<Vec<ContextVector>>> {
    (0..preset.kcs.len())
        .map(|k| {
            (0..prepared.mentions[k].len())
                .map(|occ| context_of(provider, prepared, preset, k, occ))
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    #[default]
    Euclidean,
    Cosine,
}

impl Distance {
    pub fn between(self, a: &ContextVector, b: &ContextVector) -> f64 {
        match self {
            Distance::Euclidean => a
                .values()
                .iter()
                .zip(b.values())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Distance::Cosine => {
                let (na, nb) = (a.norm(), b.norm());
                if na == 0.0 || nb == 0.0 {
                    return if na == nb { 0.0 } else { 1.0 };
                }
                let dot: f64 = a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum();
                (1.0 - dot / (na * nb)).max(0.0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaReport {
    pub kcs_name: String,
    pub gamma: f64,
    pub distance: Distance,
    pub mentions: usize,
    pub sampled_pairs: usize,
    pub max_distance: f64,
    pub quantile95_distance: f64,
    pub satisfied: bool,
}

/// Samples `sample_pairs` mention pairs (distinct occurrences, with
/// replacement) of one concept across the corpus and summarizes the distance
/// between their context vectors. Satisfied when the 95th percentile
/// (nearest rank) is at most `gamma`.
pub fn validate_kcs_gamma(
    provider: &dyn ContextProvider,
    prepared: &[PreparedDocument],
    preset: &TaskPreset,
    kcs_name: &str,
    gamma: f64,
    sample_pairs: usize,
    seed: u64,
    distance: Distance,
) -> Result<GammaReport> {
    if sample_pairs < 1 {
        return Err(Error::config("validate.sample_pairs", "must be at least 1"));
    }
    if !(gamma >= 0.0) {
        return Err(Error::config("validate.gamma", "must be a non-negative number"));
    }
    let kcs_index = preset
        .kcs
        .iter()
        .position(|k| k.name == kcs_name)
        .ok_or_else(|| Error::config("validate.kcs", format!("unknown concept {kcs_name:?}")))?;
    let mut vectors = Vec::new();
    for doc in prepared {
        for occ in 0..doc.mentions[kcs_index].len() {
            vectors.push(context_of(provider, doc, preset, kcs_index, occ)?);
        }
    }
    if vectors.len() < 2 {
        return Err(Error::EmptyInput(format!(
            "concept {kcs_name:?} has {} mentions; at least 2 are needed",
            vectors.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = vectors.len();
    let mut distances: Vec<f64> = (0..sample_pairs)
        .map(|_| {
            let a = rng.random_range(0..n);
            let mut b = rng.random_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            distance.between(&vectors[a], &vectors[b])
        })
        .collect();
    distances.sort_by(f64::total_cmp);
    let rank = ((0.95 * sample_pairs as f64).ceil() as usize).clamp(1, sample_pairs);
    let quantile95 = distances[rank - 1];
    let report = GammaReport {
        kcs_name: kcs_name.to_string(),
        gamma,
        distance,
        mentions: n,
        sampled_pairs: sample_pairs,
        max_distance: distances[sample_pairs - 1],
        quantile95_distance: quantile95,
        satisfied: quantile95 <= gamma,
    };
    if !report.satisfied {
        log::warn!(
            "concept {kcs_name:?}: 95th-percentile context distance {:.4} exceeds gamma {gamma}",
            quantile95
        );
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concepts::{prepare_document, Lexicons};
    use crate::corpus::Document;
    use proptest::prelude::*;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn identical_windows_identical_vectors() {
        let a = words("x y a X b z");
        let b = words("q a X b r s");
        let va = hashed_window_context(&a, 3..4, 1, 16);
        let vb = hashed_window_context(&b, 2..3, 1, 16);
        assert_eq!(va, vb);
        assert!((va.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn left_edge_truncates() {
        let t = words("X b c d");
        let v = hashed_window_context(&t, 0..1, 3, 8);
        assert_eq!(v.dim(), 8);
        assert!((v.norm() - 1.0).abs() < 1e-12);
        assert!(v.values()[..4].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_token_is_zero_vector() {
        let v = hashed_window_context(&words("X"), 0..1, 5, 8);
        assert_eq!(v, ContextVector::zeros(8));
    }

    #[test]
    fn provider_rejects_bad_config() {
        assert!(HashedWindowProvider::new(0, 8).is_err());
        assert!(HashedWindowProvider::new(2, 1).is_err());
    }

    fn fixture() -> String {
        let v: Vec<String> = (0..768).map(|i| format!("{}", (i as f64) * 0.001 - 0.25)).collect();
        format!(
            "dim 768\n1\tdisease\t0\t{}\n1\thuman\t0\t{}\n2\thuman\t1\t{}\n",
            v.join(" "),
            v.join(" "),
            v.join(" ")
        )
    }

    #[test]
    fn precomputed_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vectors.tsv");
        fs::write(&path, fixture()).unwrap();
        let p = load_precomputed(&path).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.dim(), 768);
        let v = p.get("1", "disease", 0).unwrap();
        let expected: Vec<f64> = (0..768).map(|i| (i as f64) * 0.001 - 0.25).collect();
        assert_eq!(v.values(), expected.as_slice());

        let rendered = format_precomputed(768, [("1", "disease", 0, v)]);
        let again = parse_precomputed(&rendered).unwrap();
        assert_eq!(again.get("1", "disease", 0).unwrap(), v);
    }

    #[test]
    fn precomputed_dimension_mismatch() {
        let raw = "dim 4\na\tk\t0\t1 2 3 4 5\n";
        assert!(matches!(parse_precomputed(raw), Err(Error::Malformed { line: 2, .. })));
    }

    #[test]
    fn precomputed_missing_key_names_it() {
        let p = parse_precomputed("dim 2\na\tk\t0\t1 2\n").unwrap();
        let err = p.get("b", "k", 3).unwrap_err();
        assert!(matches!(
            &err,
            Error::MissingVector { doc_id, kcs, occurrence: 3 } if doc_id == "b" && kcs == "k"
        ));
    }

    #[test]
    fn precomputed_provider_via_prepared_document() {
        let lex = Lexicons::builtin();
        let preset = TaskPreset::builtin("phm-cancer", &lex).unwrap();
        let doc = Document::new("1", "cancer again", None);
        let prepared = prepare_document(&doc, &preset, &lex).unwrap();
        let p = parse_precomputed("dim 3\n1\tdisease\t0\t0.5 -1 2e-3\n").unwrap();
        let v = context_of(&p, &prepared, &preset, 1, 0).unwrap();
        assert_eq!(v.values(), &[0.5, -1.0, 2e-3]);
    }

    fn gamma_setup(texts: &[&str]) -> (TaskPreset, Vec<PreparedDocument>) {
        let lex = Lexicons::builtin();
        let preset = TaskPreset::builtin("phm-cancer", &lex).unwrap();
        let docs = texts
            .iter()
            .enumerate()
            .map(|(i, t)| prepare_document(&Document::new(i.to_string(), *t, None), &preset, &lex).unwrap())
            .collect();
        (preset, docs)
    }

    #[test]
    fn gamma_identical_contexts() {
        let (preset, docs) = gamma_setup(&["the cancer is", "the cancer is", "the cancer is"]);
        let provider = HashedWindowProvider::new(2, 16).unwrap();
        let r = validate_kcs_gamma(&provider, &docs, &preset, "disease", 0.0, 50, 1, Distance::Euclidean).unwrap();
        assert_eq!(r.max_distance, 0.0);
        assert!(r.satisfied);
    }

    #[test]
    fn gamma_zero_with_distinct_contexts_fails() {
        let (preset, docs) = gamma_setup(&["the cancer is", "awful cancer news"]);
        let provider = HashedWindowProvider::new(2, 16).unwrap();
        let r = validate_kcs_gamma(&provider, &docs, &preset, "disease", 0.0, 10, 1, Distance::Euclidean).unwrap();
        assert!(!r.satisfied);
        assert!(r.quantile95_distance > 0.0);
        let again = validate_kcs_gamma(&provider, &docs, &preset, "disease", 0.0, 10, 1, Distance::Euclidean).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn gamma_needs_two_mentions() {
        let (preset, docs) = gamma_setup(&["cancer", "nothing here"]);
        let provider = HashedWindowProvider::new(2, 16).unwrap();
        assert!(validate_kcs_gamma(&provider, &docs, &preset, "disease", 1.0, 10, 1, Distance::Euclidean).is_err());
    }

    #[test]
    fn cosine_distance_bounds() {
        let a = ContextVector::new(vec![1.0, 0.0]).unwrap();
        let b = ContextVector::new(vec![0.0, 2.0]).unwrap();
        assert!((Distance::Cosine.between(&a, &b) - 1.0).abs() < 1e-12);
        assert_eq!(Distance::Cosine.between(&a, &a), 0.0);
    }

    proptest! {
        #[test]
        fn norm_is_zero_or_one(tokens in prop::collection::vec("[a-e]{1,3}", 1..20),
                               pos in 0usize..20, window in 1usize..5, dim in 2usize..40) {
            let pos = pos % tokens.len();
            let v = hashed_window_context(&tokens, pos..pos + 1, window, dim);
            prop_assert!(v.values().iter().all(|x| x.is_finite()));
            let n = v.norm();
            prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-12);
        }

        #[test]
        fn prepending_outside_window_is_invariant(tokens in prop::collection::vec("[a-e]{1,3}", 1..12),
                                                  prefix in prop::collection::vec("[f-j]{1,3}", 0..6),
                                                  pos in 0usize..12, window in 1usize..4) {
            let pos = pos % tokens.len();
            prop_assume!(pos >= window);
            let base = hashed_window_context(&tokens, pos..pos + 1, window, 32);
            let mut shifted = prefix.clone();
            shifted.extend(tokens.iter().cloned());
            let at = prefix.len() + pos;
            prop_assert_eq!(base, hashed_window_context(&shifted, at..at + 1, window, 32));
        }
    }
}
