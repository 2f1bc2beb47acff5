//! Generator for two-view decomposable corpora.
//!
//! Every document mentions [`ALPHA_KEYWORD`] and [`BETA_KEYWORD`]. The tokens
//! around each mention are drawn from per-view cue vocabularies whose polarity
//! agrees with the document label with probability `cue_accuracy`, so each
//! view carries partial, independently corrupted evidence.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, Label};
use crate::error::{Error, Result};

pub const ALPHA_KEYWORD: &str = "kwalpha";
pub const BETA_KEYWORD: &str = "kwbeta";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_docs: usize,
    pub positive_rate: f64,
    /// Probability that a cue token's polarity matches the document label.
    pub cue_accuracy: f64,
    /// Probability that a context slot holds a cue rather than filler.
    pub cue_rate: f64,
    /// Context slots on each side of a mention.
    pub context_width: usize,
    /// Cue words per polarity per view.
    pub cue_vocab: usize,
    pub filler_vocab: usize,
    pub zipf_exponent: f64,
    /// Probability of an extra mention surrounded only by filler.
    pub decoy_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_docs: 2000,
            positive_rate: 0.3,
            cue_accuracy: 0.8,
            cue_rate: 0.7,
            context_width: 3,
            cue_vocab: 40,
            filler_vocab: 300,
            zipf_exponent: 1.0,
            decoy_rate: 0.3,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.positive_rate) {
            return Err(Error::config("synthetic.positive_rate", "must lie in [0, 1]"));
        }
        if !unit(self.cue_accuracy) || !unit(self.cue_rate) || !unit(self.decoy_rate) {
            return Err(Error::config("synthetic", "rates must lie in [0, 1]"));
        }
        if self.context_width == 0 || self.cue_vocab == 0 || self.filler_vocab == 0 {
            return Err(Error::config("synthetic", "widths and vocabulary sizes must be positive"));
        }
        if !(self.zipf_exponent >= 0.0) {
            return Err(Error::config("synthetic.zipf_exponent", "must be non-negative"));
        }
        Ok(())
    }
}

fn zipf(n: usize, s: f64) -> WeightedIndex<f64> {
    let weights: Vec<f64> = (1..=n).map(|r| (r as f64).powf(-s)).collect();
    WeightedIndex::new(weights).expect("positive weights")
}

struct Sampler {
    cfg: SyntheticConfig,
    cues: WeightedIndex<f64>,
    filler: WeightedIndex<f64>,
}

impl Sampler {
    fn filler(&self, rng: &mut ChaCha8Rng) -> String {
        format!("f{}", self.filler.sample(rng))
    }

    fn slot(&self, view: char, positive: bool, rng: &mut ChaCha8Rng) -> String {
        if rng.random_bool(self.cfg.cue_rate) {
            let polarity = if rng.random_bool(self.cfg.cue_accuracy) { positive } else { !positive };
            format!("{view}{}{}", if polarity { 'p' } else { 'n' }, self.cues.sample(rng))
        } else {
            self.filler(rng)
        }
    }

    fn block(&self, out: &mut Vec<String>, view: char, keyword: &str, positive: bool, rng: &mut ChaCha8Rng) {
        for _ in 0..self.cfg.context_width {
            out.push(self.slot(view, positive, rng));
        }
        out.push(keyword.to_string());
        for _ in 0..self.cfg.context_width {
            out.push(self.slot(view, positive, rng));
        }
    }

    fn decoy(&self, out: &mut Vec<String>, keyword: &str, rng: &mut ChaCha8Rng) {
        for _ in 0..self.cfg.context_width {
            out.push(self.filler(rng));
        }
        out.push(keyword.to_string());
        for _ in 0..self.cfg.context_width {
            out.push(self.filler(rng));
        }
    }

    fn gap(&self, out: &mut Vec<String>, rng: &mut ChaCha8Rng) {
        for _ in 0..self.cfg.context_width {
            out.push(self.filler(rng));
        }
    }

    fn document(&self, positive: bool, rng: &mut ChaCha8Rng) -> String {
        let mut tokens = Vec::new();
        let views = [('a', ALPHA_KEYWORD), ('b', BETA_KEYWORD)];
        for (i, (view, keyword)) in views.iter().enumerate() {
            if i > 0 {
                self.gap(&mut tokens, rng);
            }
            self.block(&mut tokens, *view, keyword, positive, rng);
        }
        for (_, keyword) in views {
            if rng.random_bool(self.cfg.decoy_rate) {
                self.gap(&mut tokens, rng);
                self.decoy(&mut tokens, keyword, rng);
            }
        }
        tokens.join(" ")
    }
}

/// Generates a labeled corpus with exactly `round(n_docs · positive_rate)`
/// positives. Ids are `syn-00000`, `syn-00001`, ...
pub fn generate(cfg: &SyntheticConfig) -> Result<Corpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_pos = (cfg.n_docs as f64 * cfg.positive_rate).round() as usize;
    let mut labels: Vec<bool> = (0..cfg.n_docs).map(|i| i < n_pos).collect();
    labels.shuffle(&mut rng);
    let sampler = Sampler {
        cfg: cfg.clone(),
        cues: zipf(cfg.cue_vocab, cfg.zipf_exponent),
        filler: zipf(cfg.filler_vocab, cfg.zipf_exponent),
    };
    let width = cfg.n_docs.to_string().len().max(5);
    let docs = labels
        .iter()
        .enumerate()
        .map(|(i, &positive)| {
            Document::new(
                format!("syn-{i:0width$}"),
                sampler.document(positive, &mut rng),
                Some(Label::from_bool(positive)),
            )
        })
        .collect();
    Corpus::new(docs)
}
