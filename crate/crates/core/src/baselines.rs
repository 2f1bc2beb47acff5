//! Naive Bayes over raw-text n-grams and its semi-supervised EM extension.

use serde::{Deserialize, Serialize};

use crate::concepts::token_strings;
use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::learners::{ngram_features, train_nb, NbModel};

/// Unigram and bigram features of the unmasked document text.
pub fn document_features(doc: &Document) -> Vec<String> {
    ngram_features(&token_strings(&doc.text))
}

fn gold_labels(docs: &[Document]) -> Result<Vec<bool>> {
    docs.iter()
        .map(|d| {
            d.gold_label.map(|l| l.is_positive()).ok_or_else(|| Error::InvalidDocument {
                id: d.id.clone(),
                message: "labeled training document has no gold label".into(),
            })
        })
        .collect()
}

pub fn nb_baseline_fit(labeled: &[Document], alpha: f64) -> Result<NbModel> {
    let features: Vec<Vec<String>> = labeled.iter().map(document_features).collect();
    train_nb(&features, &gold_labels(labeled)?, alpha)
}

/// Positive-class posterior of a document under a naive Bayes model.
pub fn nb_predict_document(model: &NbModel, doc: &Document) -> f64 {
    model.predict_proba(&document_features(doc))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmConfig {
    pub max_iterations: usize,
    /// Weight of unlabeled documents in the M-step, in `(0, 1]`.
    pub unlabeled_weight: f64,
    /// Stop once the log-likelihood changes by less than this.
    pub convergence_tolerance: f64,
    /// Use only the first `n` unlabeled documents.
    pub unlabeled_pool: Option<usize>,
    pub alpha: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            max_iterations: 25,
            unlabeled_weight: 1.0,
            convergence_tolerance: 1e-6,
            unlabeled_pool: None,
            alpha: 1.0,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::config("em.max_iterations", "must be at least 1"));
        }
        if !(self.unlabeled_weight > 0.0 && self.unlabeled_weight <= 1.0) {
            return Err(Error::config("em.unlabeled_weight", "must lie in (0, 1]"));
        }
        if !(self.convergence_tolerance >= 0.0) {
            return Err(Error::config("em.convergence_tolerance", "must be non-negative"));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::config("em.alpha", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmFit {
    pub model: NbModel,
    /// Objective after each M-step.
    pub log_likelihoods: Vec<f64>,
    pub iterations: usize,
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Weighted observed-data log-likelihood plus the log density of the
/// smoothing prior, which EM never decreases.
pub fn em_objective(
    model: &NbModel,
    labeled: &[Vec<String>],
    labels: &[bool],
    unlabeled: &[Vec<String>],
    unlabeled_weight: f64,
) -> f64 {
    let mut ll = 0.0;
    for (doc, &y) in labeled.iter().zip(labels) {
        ll += model.log_joint(doc)[usize::from(y)];
    }
    for doc in unlabeled {
        let [neg, pos] = model.log_joint(doc);
        ll += unlabeled_weight * log_sum_exp(neg, pos);
    }
    let denoms = [false, true].map(|c| {
        let c = usize::from(c);
        (model.totals[c] + model.alpha * model.vocabulary_size() as f64).ln()
    });
    for counts in model.feature_counts.values() {
        for c in 0..2 {
            ll += model.alpha * ((counts[c] + model.alpha).ln() - denoms[c]);
        }
    }
    ll
}

/// Semi-supervised naive Bayes: starts from the labeled model, then alternates
/// fractional class assignment of unlabeled documents with weighted
/// re-estimation. The vocabulary spans labeled and unlabeled documents.
pub fn em_fit(labeled: &[Document], unlabeled: &[Document], cfg: &EmConfig) -> Result<EmFit> {
    cfg.validate()?;
    if labeled.is_empty() {
        return Err(Error::EmptyInput("EM needs labeled documents".into()));
    }
    let labels = gold_labels(labeled)?;
    let lab_feats: Vec<Vec<String>> = labeled.iter().map(document_features).collect();
    let pool = cfg.unlabeled_pool.unwrap_or(unlabeled.len()).min(unlabeled.len());
    let unl_feats: Vec<Vec<String>> = unlabeled[..pool].iter().map(document_features).collect();

    let mut model = train_nb(&lab_feats, &labels, cfg.alpha)?;
    if unl_feats.is_empty() {
        return Ok(EmFit {
            model,
            log_likelihoods: Vec::new(),
            iterations: 0,
        });
    }

    let mut all_feats = lab_feats.clone();
    all_feats.extend(unl_feats.iter().cloned());
    let mut weights: Vec<[f64; 2]> = labels
        .iter()
        .map(|&y| if y { [0.0, 1.0] } else { [1.0, 0.0] })
        .collect();
    weights.resize(all_feats.len(), [0.0; 2]);

    let mut log_likelihoods = Vec::new();
    for _ in 0..cfg.max_iterations {
        for (k, doc) in unl_feats.iter().enumerate() {
            let [neg, pos] = model.log_joint(doc);
            let r = 1.0 / (1.0 + (neg - pos).exp());
            weights[labels.len() + k] = [cfg.unlabeled_weight * (1.0 - r), cfg.unlabeled_weight * r];
        }
        model = NbModel::fit_weighted(&all_feats, &weights, cfg.alpha)?;
        let ll = em_objective(&model, &lab_feats, &labels, &unl_feats, cfg.unlabeled_weight);
        let done = log_likelihoods
            .last()
            .is_some_and(|prev: &f64| (ll - prev).abs() < cfg.convergence_tolerance);
        log_likelihoods.push(ll);
        if done {
            break;
        }
    }
    Ok(EmFit {
        model,
        iterations: log_likelihoods.len(),
        log_likelihoods,
    })
}
