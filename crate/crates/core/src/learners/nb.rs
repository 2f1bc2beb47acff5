use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bound applied to naive Bayes posteriors so they stay inside `(0, 1)`.
const POSTERIOR_FLOOR: f64 = 1e-12;

const NEG: usize = 0;
const POS: usize = 1;

/// Multinomial naive Bayes with additive smoothing. Counts are stored as
/// `[negative, positive]` pairs and may be fractional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbModel {
    pub alpha: f64,
    pub class_counts: [f64; 2],
    pub feature_counts: BTreeMap<String, [f64; 2]>,
    pub totals: [f64; 2],
}

/// Unigrams followed by bigrams; a bigram is its two tokens joined by a space.
pub fn ngram_features<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
    let mut out: Vec<String> = tokens.iter().map(|t| t.as_ref().to_string()).collect();
    out.extend(
        tokens
            .windows(2)
            .map(|w| format!("{} {}", w[0].as_ref(), w[1].as_ref())),
    );
    out
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::config("nb.alpha", "must be positive"));
    }
    Ok(())
}

impl NbModel {
    /// Fits from per-document class weights `[negative, positive]`. Every
    /// feature of every document joins the vocabulary, even at zero weight.
    pub fn fit_weighted(documents: &[Vec<String>], weights: &[[f64; 2]], alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if documents.len() != weights.len() {
            return Err(Error::config(
                "training data",
                format!("{} documents but {} weights", documents.len(), weights.len()),
            ));
        }
        let mut class_counts = [0.0; 2];
        let mut feature_counts: BTreeMap<String, [f64; 2]> = BTreeMap::new();
        let mut totals = [0.0; 2];
        for (doc, w) in documents.iter().zip(weights) {
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::NonFinite);
            }
            for c in [NEG, POS] {
                class_counts[c] += w[c];
                totals[c] += w[c] * doc.len() as f64;
            }
            for f in doc {
                let entry = feature_counts.entry(f.clone()).or_insert([0.0; 2]);
                entry[NEG] += w[NEG];
                entry[POS] += w[POS];
            }
        }
        if class_counts[NEG] + class_counts[POS] <= 0.0 {
            return Err(Error::EmptyInput("naive Bayes needs at least one weighted document".into()));
        }
        Ok(NbModel {
            alpha,
            class_counts,
            feature_counts,
            totals,
        })
    }

    pub fn vocabulary_size(&self) -> usize {
        self.feature_counts.len()
    }

    /// `ln P(class)`, the maximum-likelihood estimate from class counts.
    pub fn log_prior(&self, positive: bool) -> f64 {
        let c = usize::from(positive);
        (self.class_counts[c] / (self.class_counts[NEG] + self.class_counts[POS])).ln()
    }

    fn denominator(&self, c: usize) -> f64 {
        self.totals[c] + self.alpha * self.vocabulary_size() as f64
    }

    /// `ln P(feature | class)`. Unseen features receive `α / (total + α|V|)`.
    pub fn log_likelihood(&self, feature: &str, positive: bool) -> f64 {
        let c = usize::from(positive);
        let count = self.feature_counts.get(feature).map_or(0.0, |v| v[c]);
        ((count + self.alpha) / self.denominator(c)).ln()
    }

    /// `[ln P(neg, doc), ln P(pos, doc)]` up to the shared multinomial coefficient.
    pub fn log_joint<S: AsRef<str>>(&self, features: &[S]) -> [f64; 2] {
        let dn = [self.denominator(NEG).ln(), self.denominator(POS).ln()];
        let mut out = [self.log_prior(false), self.log_prior(true)];
        for f in features {
            let counts = self.feature_counts.get(f.as_ref()).copied().unwrap_or([0.0; 2]);
            for c in [NEG, POS] {
                out[c] += (counts[c] + self.alpha).ln() - dn[c];
            }
        }
        out
    }

    /// Posterior of the positive class, computed in log space.
    pub fn predict_proba<S: AsRef<str>>(&self, features: &[S]) -> f64 {
        let [neg, pos] = self.log_joint(features);
        posterior_from_log_joint(neg, pos)
    }
}

fn posterior_from_log_joint(neg: f64, pos: f64) -> f64 {
    let p = 1.0 / (1.0 + (neg - pos).exp());
    p.clamp(POSTERIOR_FLOOR, 1.0 - POSTERIOR_FLOOR)
}

/// Fits naive Bayes on labeled feature multisets. Both classes must occur.
pub fn train_nb(documents: &[Vec<String>], labels: &[bool], alpha: f64) -> Result<NbModel> {
    check_alpha(alpha)?;
    if documents.len() != labels.len() {
        return Err(Error::config(
            "training data",
            format!("{} documents but {} labels", documents.len(), labels.len()),
        ));
    }
    if !(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l)) {
        return Err(Error::SingleClass {
            context: "naive Bayes".into(),
        });
    }
    let weights: Vec<[f64; 2]> = labels
        .iter()
        .map(|&l| if l { [0.0, 1.0] } else { [1.0, 0.0] })
        .collect();
    NbModel::fit_weighted(documents, &weights, alpha)
}

pub fn nb_predict_proba<S: AsRef<str>>(model: &NbModel, features: &[S]) -> f64 {
    model.predict_proba(features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn feats(s: &str) -> Vec<String> {
        let toks: Vec<&str> = s.split_whitespace().collect();
        ngram_features(&toks)
    }

    #[test]
    fn ngrams_are_unigrams_then_bigrams() {
        assert_eq!(feats("a b c"), ["a", "b", "c", "a b", "b c"]);
        assert!(feats("").is_empty());
    }

    #[test]
    fn toy_corpus_posterior_matches_hand_computation() {
        let docs = vec![feats("sick flu"), feats("flu shot")];
        let m = train_nb(&docs, &[true, false], 1.0).unwrap();
        // Vocabulary: sick, flu, shot, "sick flu", "flu shot"; 3 features per class.
        let p_pos = 0.5 * (1.0 + 1.0) / (3.0 + 5.0);
        let p_neg = 0.5 * (0.0 + 1.0) / (3.0 + 5.0);
        let expected = p_pos / (p_pos + p_neg);
        let got = m.predict_proba(&["sick"]);
        assert!((got - expected).abs() < 1e-12);
        assert!(got > 0.5);
    }

    #[test]
    fn unseen_token_gets_smoothing_mass() {
        let m = train_nb(&[feats("a"), feats("b")], &[true, false], 0.5).unwrap();
        let ll = m.log_likelihood("zzz", true);
        assert!(ll.is_finite());
        assert!((ll.exp() - 0.5 / (1.0 + 0.5 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn priors_follow_class_counts() {
        let docs = vec![feats("a"), feats("b"), feats("c")];
        let m = train_nb(&docs, &[true, false, false], 1.0).unwrap();
        assert!((m.log_prior(true).exp() - 1.0 / 3.0).abs() < 1e-12);
        assert!((m.log_prior(false).exp() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_class_and_bad_alpha_rejected() {
        assert!(matches!(
            train_nb(&[feats("a")], &[true], 1.0),
            Err(Error::SingleClass { .. })
        ));
        assert!(train_nb(&[feats("a"), feats("b")], &[true, false], 0.0).is_err());
    }

    #[test]
    fn symmetric_corpus_gives_half() {
        let m = train_nb(&[feats("x y"), feats("y x")], &[true, false], 1.0).unwrap();
        assert!((m.predict_proba(&["x", "y"]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn long_document_stays_finite() {
        let m = train_nb(&[feats("a b a"), feats("b c")], &[true, false], 1.0).unwrap();
        let doc: Vec<&str> = (0..10_000).map(|i| ["a", "b", "c", "d"][i % 4]).collect();
        let lj = m.log_joint(&doc);
        assert!(lj.iter().all(|v| v.is_finite()));
        let p = m.predict_proba(&doc);
        assert!(p > 0.0 && p < 1.0);
    }

    #[test]
    fn likelihoods_sum_to_one() {
        let docs = vec![feats("a b a c"), feats("b c d"), feats("d d e")];
        let m = train_nb(&docs, &[true, false, true], 0.7).unwrap();
        for pos in [false, true] {
            let s: f64 = m.feature_counts.keys().map(|f| m.log_likelihood(f, pos).exp()).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn model_json_round_trip_is_exact() {
        let docs = vec![feats("a b a c"), feats("b c d")];
        let m = train_nb(&docs, &[true, false], 0.3).unwrap();
        let back: NbModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    proptest! {
        #[test]
        fn posterior_matches_direct_product(
            train in prop::collection::vec((prop::collection::vec(0usize..20, 1..6), any::<bool>()), 2..12),
            doc in prop::collection::vec(0usize..20, 0..6),
            alpha in 0.1f64..2.0,
        ) {
            let labels: Vec<bool> = train.iter().map(|(_, l)| *l).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let docs: Vec<Vec<String>> = train.iter().map(|(d, _)| d.iter().map(|i| format!("w{i}")).collect()).collect();
            let m = train_nb(&docs, &labels, alpha).unwrap();
            let words: Vec<String> = doc.iter().map(|i| format!("w{i}")).collect();
            let n_pos = labels.iter().filter(|&&l| l).count() as f64;
            let mut joint = [0.0; 2];
            for (c, pos) in [(0, false), (1, true)] {
                let prior = if pos { n_pos } else { labels.len() as f64 - n_pos } / labels.len() as f64;
                let total: usize = docs.iter().zip(&labels).filter(|(_, &l)| l == pos).map(|(d, _)| d.len()).sum();
                let mut p = prior;
                for w in &words {
                    let count = docs.iter().zip(&labels).filter(|(_, &l)| l == pos)
                        .map(|(d, _)| d.iter().filter(|x| *x == w).count()).sum::<usize>();
                    p *= (count as f64 + alpha) / (total as f64 + alpha * m.vocabulary_size() as f64);
                }
                joint[c] = p;
            }
            let expected = joint[1] / (joint[0] + joint[1]);
            prop_assert!((m.predict_proba(&words) - expected).abs() < 1e-9);
        }
    }
}
