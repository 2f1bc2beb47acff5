//! Co-training over concept instances with bag-level scoring, and product-rule
//! aggregation of the per-view probabilities.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::concepts::{label_bags, InstanceLabel, PreparedDocument, TaskPreset};
use crate::context::{featurize, ContextProvider, ContextVector, ProviderSpec};
use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::learners::{train_logreg, LogRegModel, TrainConfig};

/// Iteration counts reported by the ablation table.
pub const DEFAULT_CHECKPOINTS: [usize; 4] = [13, 25, 50, 75];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoConfig {
    pub iterations: usize,
    /// Positives and negatives promoted per view per iteration.
    pub promotions_per_view: usize,
    pub confidence_floor: f64,
    /// Probability substituted for a view whose bag is empty.
    pub neutral_prob: f64,
}

impl Default for CoConfig {
    fn default() -> Self {
        CoConfig {
            iterations: 25,
            promotions_per_view: 1,
            confidence_floor: 0.7,
            neutral_prob: 0.5,
        }
    }
}

impl CoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.promotions_per_view < 1 {
            return Err(Error::config("cotrain.promotions_per_view", "must be at least 1"));
        }
        if !(self.confidence_floor > 0.5 && self.confidence_floor <= 1.0) {
            return Err(Error::config("cotrain.confidence_floor", "must lie in (0.5, 1]"));
        }
        if !(0.0..=1.0).contains(&self.neutral_prob) {
            return Err(Error::config("cotrain.neutral_prob", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// The instances of one concept in one example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewBag {
    pub instances: Vec<ContextVector>,
    pub labels: Vec<InstanceLabel>,
}

impl ViewBag {
    pub fn unlabeled(instances: Vec<ContextVector>) -> Self {
        let labels = vec![InstanceLabel::Unlabeled; instances.len()];
        ViewBag { instances, labels }
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

/// A document as a list of bags, one per concept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub views: Vec<ViewBag>,
}

impl Example {
    pub fn labeled_instances(&self) -> usize {
        self.views
            .iter()
            .flat_map(|v| &v.labels)
            .filter(|l| l.as_target().is_some())
            .count()
    }

    fn has_empty_bag(&self) -> bool {
        self.views.iter().any(ViewBag::is_empty)
    }

    fn vectors(&self) -> Vec<Vec<ContextVector>> {
        self.views.iter().map(|v| v.instances.clone()).collect()
    }
}

/// Builds an example from a prepared document. Instance labels follow the
/// document's gold label and annotations; pass a label-free document for the
/// unlabeled pool.
pub fn build_example(
    doc: &Document,
    prepared: &PreparedDocument,
    preset: &TaskPreset,
    provider: &dyn ContextProvider,
) -> Result<Example> {
    let (bags, _) = label_bags(prepared, doc, preset);
    let vectors = featurize(provider, prepared, preset)?;
    let views = bags
        .into_iter()
        .zip(vectors)
        .map(|(bag, instances)| ViewBag {
            labels: bag.instances.iter().map(|i| i.label).collect(),
            instances,
        })
        .collect();
    Ok(Example {
        id: doc.id.clone(),
        views,
    })
}

/// Bag score: the largest instance probability and its index, ties going to
/// the lowest index.
pub fn mil_example_score(instance_probs: &[f64]) -> Result<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for (i, &p) in instance_probs.iter().enumerate() {
        if best.is_none_or(|(b, _)| p > b) {
            best = Some((p, i));
        }
    }
    best.ok_or_else(|| Error::EmptyInput("bag has no instances".into()))
}

/// Product rule: positive iff `∏ P ≥ ∏ (1 − P)`. The factors are multiplied
/// in sorted order so the decision depends only on the multiset of inputs.
pub fn aggregate(probs: &[f64]) -> bool {
    let mut sorted = probs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos: f64 = sorted.iter().product();
    let neg: f64 = sorted.iter().map(|p| 1.0 - p).product();
    pos >= neg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub positive: bool,
    /// Per-view probability; `neutral_prob` for empty bags.
    pub probs: Vec<f64>,
    /// Winning instance per view; `None` for empty bags.
    pub winners: Vec<Option<usize>>,
}

/// One classifier per concept, applied to that concept's instances only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoDecompModel {
    pub kcs_names: Vec<String>,
    pub classifiers: Vec<LogRegModel>,
    pub co_config: CoConfig,
    pub provider: ProviderSpec,
}

impl CoDecompModel {
    /// Per-view bag scores of an example given as context vectors per view.
    pub fn score(&self, views: &[Vec<ContextVector>]) -> Result<(Vec<f64>, Vec<Option<usize>>)> {
        if views.len() != self.classifiers.len() {
            return Err(Error::config(
                "example",
                format!("{} views given for {} concepts", views.len(), self.classifiers.len()),
            ));
        }
        let mut probs = Vec::with_capacity(views.len());
        let mut winners = Vec::with_capacity(views.len());
        for (clf, bag) in self.classifiers.iter().zip(views) {
            if bag.is_empty() {
                probs.push(self.co_config.neutral_prob);
                winners.push(None);
                continue;
            }
            let inst: Vec<f64> = bag.iter().map(|x| clf.predict_proba(x)).collect::<Result<_>>()?;
            let (p, idx) = mil_example_score(&inst)?;
            probs.push(p);
            winners.push(Some(idx));
        }
        Ok((probs, winners))
    }

    pub fn predict(&self, views: &[Vec<ContextVector>]) -> Result<Prediction> {
        let (probs, winners) = self.score(views)?;
        Ok(Prediction {
            positive: aggregate(&probs),
            probs,
            winners,
        })
    }

    pub fn predict_example(&self, example: &Example) -> Result<Prediction> {
        self.predict(&example.vectors())
    }
}

pub fn predict(model: &CoDecompModel, views: &[Vec<ContextVector>]) -> Result<Prediction> {
    model.predict(views)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Promotion {
    pub view: usize,
    pub kcs_name: String,
    pub doc_id: String,
    pub polarity: Polarity,
    /// Bag score of the selecting view (for negatives, the largest instance
    /// probability across all views).
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub labeled_before: usize,
    pub unlabeled_before: usize,
    pub labeled_after: usize,
    pub unlabeled_after: usize,
    pub labeled_instances: usize,
    pub promotions: Vec<Promotion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_reason: Option<String>,
}

pub fn iteration_log_jsonl(log: &[IterationLog]) -> Result<String> {
    let mut out = String::new();
    for entry in log {
        out.push_str(&serde_json::to_string(entry)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_iteration_log(path: impl AsRef<Path>, log: &[IterationLog]) -> Result<()> {
    let path = path.as_ref();
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(iteration_log_jsonl(log)?.as_bytes())
        .map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoFit {
    pub model: CoDecompModel,
    pub log: Vec<IterationLog>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointFit {
    /// `(iterations, model)` in the order the checkpoints were requested.
    pub models: Vec<(usize, CoDecompModel)>,
    pub log: Vec<IterationLog>,
}

fn train_views(labeled: &[Example], names: &[String], cfg: &TrainConfig) -> Result<Vec<LogRegModel>> {
    (0..names.len())
        .into_par_iter()
        .map(|j| {
            let mut x = Vec::new();
            let mut y = Vec::new();
            for ex in labeled {
                let bag = &ex.views[j];
                for (v, l) in bag.instances.iter().zip(&bag.labels) {
                    if let Some(t) = l.as_target() {
                        x.push(v.clone());
                        y.push(t);
                    }
                }
            }
            if !(y.iter().any(|&t| t) && y.iter().any(|&t| !t)) {
                return Err(Error::SingleClass {
                    context: format!("labeled instances of concept {:?}", names[j]),
                });
            }
            train_logreg(&x, &y, cfg)
        })
        .collect()
}

fn check_shapes(examples: &[Example], j: usize) -> Result<()> {
    for ex in examples {
        if ex.views.len() != j {
            return Err(Error::config(
                "example",
                format!("{:?} has {} views, expected {j}", ex.id, ex.views.len()),
            ));
        }
        if ex.views.iter().any(|v| v.instances.len() != v.labels.len()) {
            return Err(Error::config("example", format!("{:?} has a label count mismatch", ex.id)));
        }
    }
    Ok(())
}

struct Scored {
    bag: Vec<(f64, usize)>,
    max_instance: f64,
    eligible: bool,
}

fn score_pool(pool: &[Example], classifiers: &[LogRegModel]) -> Result<Vec<Scored>> {
    pool.par_iter()
        .map(|ex| {
            if ex.has_empty_bag() {
                return Ok(Scored {
                    bag: Vec::new(),
                    max_instance: f64::NAN,
                    eligible: false,
                });
            }
            let mut bag = Vec::with_capacity(classifiers.len());
            let mut max_instance = f64::NEG_INFINITY;
            for (clf, view) in classifiers.iter().zip(&ex.views) {
                let probs: Vec<f64> = view
                    .instances
                    .iter()
                    .map(|x| clf.predict_proba(x))
                    .collect::<Result<_>>()?;
                let s = mil_example_score(&probs)?;
                max_instance = max_instance.max(s.0);
                bag.push(s);
            }
            Ok(Scored {
                bag,
                max_instance,
                eligible: true,
            })
        })
        .collect()
}

/// Picks the best candidate under `key` (larger is better), ties going to the
/// lowest document id.
fn best_candidate(
    pool: &[Example],
    scored: &[Scored],
    consumed: &BTreeSet<usize>,
    key: impl Fn(&Scored) -> Option<f64>,
) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for (i, s) in scored.iter().enumerate() {
        if !s.eligible || consumed.contains(&i) {
            continue;
        }
        let Some(k) = key(s) else { continue };
        let better = match best {
            None => true,
            Some((bk, bi)) => k > bk || (k == bk && pool[i].id < pool[bi].id),
        };
        if better {
            best = Some((k, i));
        }
    }
    best.map(|(_, i)| i)
}

/// Runs co-training and returns a model retrained on the final labeled set.
pub fn cotrain_fit(
    labeled: &[Example],
    unlabeled: &[Example],
    kcs_names: &[String],
    co: &CoConfig,
    train: &TrainConfig,
) -> Result<CoFit> {
    let fit = cotrain_fit_checkpoints(labeled, unlabeled, kcs_names, co, train, &[co.iterations])?;
    let model = fit.models.into_iter().next().map(|(_, m)| m).expect("one checkpoint");
    Ok(CoFit { model, log: fit.log })
}

/// Runs co-training once up to the largest checkpoint and snapshots a model
/// retrained on the labeled set after each requested iteration count. If the
/// loop stops early, later checkpoints share the final labeled set.
pub fn cotrain_fit_checkpoints(
    labeled: &[Example],
    unlabeled: &[Example],
    kcs_names: &[String],
    co: &CoConfig,
    train: &TrainConfig,
    checkpoints: &[usize],
) -> Result<CheckpointFit> {
    co.validate()?;
    train.validate()?;
    let j = kcs_names.len();
    if j == 0 {
        return Err(Error::config("kcs", "at least one concept is required"));
    }
    check_shapes(labeled, j)?;
    check_shapes(unlabeled, j)?;
    let snapshot = |classifiers: Vec<LogRegModel>| CoDecompModel {
        kcs_names: kcs_names.to_vec(),
        classifiers,
        co_config: CoConfig {
            iterations: 0,
            ..*co
        },
        provider: ProviderSpec::default(),
    };

    let mut l: Vec<Example> = labeled.to_vec();
    let mut u: Vec<Example> = unlabeled.to_vec();
    let mut log = Vec::new();
    let max_k = checkpoints.iter().copied().max().unwrap_or(0);

    let mut classifiers = train_views(&l, kcs_names, train)?;
    let mut fresh = true;
    let mut at_iteration: Vec<Option<Vec<LogRegModel>>> = vec![None; max_k + 1];
    at_iteration[0] = Some(classifiers.clone());
    let mut stopped_at = None;

    for iteration in 1..=max_k {
        if !fresh {
            classifiers = train_views(&l, kcs_names, train)?;
            fresh = true;
        }
        let labeled_before = l.len();
        let unlabeled_before = u.len();
        let mut promotions = Vec::new();
        let mut stop_reason = None;

        if u.is_empty() {
            stop_reason = Some("unlabeled pool exhausted".to_string());
        } else {
            let scored = score_pool(&u, &classifiers)?;
            let mut consumed = BTreeSet::new();
            let mut updates: Vec<(usize, Vec<Vec<InstanceLabel>>)> = Vec::new();
            for view in 0..j {
                for _ in 0..co.promotions_per_view {
                    let pick = best_candidate(&u, &scored, &consumed, |s| {
                        let p = s.bag[view].0;
                        (p >= co.confidence_floor).then_some(p)
                    });
                    let Some(i) = pick else { break };
                    consumed.insert(i);
                    let labels = u[i]
                        .views
                        .iter()
                        .enumerate()
                        .map(|(k, bag)| {
                            let winner = scored[i].bag[k].1;
                            (0..bag.instances.len())
                                .map(|n| {
                                    if n == winner {
                                        InstanceLabel::Positive
                                    } else {
                                        InstanceLabel::Unlabeled
                                    }
                                })
                                .collect()
                        })
                        .collect();
                    updates.push((i, labels));
                    promotions.push(Promotion {
                        view,
                        kcs_name: kcs_names[view].clone(),
                        doc_id: u[i].id.clone(),
                        polarity: Polarity::Positive,
                        confidence: scored[i].bag[view].0,
                    });
                }
            }
            for view in 0..j {
                for _ in 0..co.promotions_per_view {
                    let pick = best_candidate(&u, &scored, &consumed, |s| {
                        (s.max_instance < 1.0 - co.confidence_floor).then_some(-s.bag[view].0)
                    });
                    let Some(i) = pick else { break };
                    consumed.insert(i);
                    let labels = u[i]
                        .views
                        .iter()
                        .map(|bag| vec![InstanceLabel::Negative; bag.instances.len()])
                        .collect();
                    updates.push((i, labels));
                    promotions.push(Promotion {
                        view,
                        kcs_name: kcs_names[view].clone(),
                        doc_id: u[i].id.clone(),
                        polarity: Polarity::Negative,
                        confidence: scored[i].max_instance,
                    });
                }
            }
            if updates.is_empty() {
                stop_reason = Some("no example cleared the confidence floor".to_string());
            }
            for (i, labels) in &updates {
                for (bag, new) in u[*i].views.iter_mut().zip(labels) {
                    bag.labels.clone_from(new);
                }
            }
            let mut moved: Vec<usize> = updates.iter().map(|(i, _)| *i).collect();
            moved.sort_unstable();
            for i in moved.into_iter().rev() {
                l.push(u.remove(i));
            }
            fresh = promotions.is_empty();
        }

        log.push(IterationLog {
            iteration,
            labeled_before,
            unlabeled_before,
            labeled_after: l.len(),
            unlabeled_after: u.len(),
            labeled_instances: l.iter().map(Example::labeled_instances).sum(),
            promotions,
            stop_reason: stop_reason.clone(),
        });
        if stop_reason.is_some() {
            stopped_at = Some(iteration);
            break;
        }
        if checkpoints.contains(&iteration) {
            classifiers = train_views(&l, kcs_names, train)?;
            fresh = true;
            at_iteration[iteration] = Some(classifiers.clone());
        }
    }

    if !fresh {
        classifiers = train_views(&l, kcs_names, train)?;
    }
    let models = checkpoints
        .iter()
        .map(|&k| {
            let clfs = match (stopped_at, &at_iteration[k]) {
                (Some(s), _) if k >= s => classifiers.clone(),
                (_, Some(c)) => c.clone(),
                _ => classifiers.clone(),
            };
            let mut m = snapshot(clfs);
            m.co_config.iterations = k;
            (k, m)
        })
        .collect();
    Ok(CheckpointFit { models, log })
}

/// Predictions of every ablation variant on a set of examples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantPredictions {
    pub name: String,
    pub predictions: Vec<bool>,
}

pub fn single_view_name(kcs_name: &str) -> String {
    format!("{kcs_name}-cl")
}

pub const COMBINED: &str = "Combined";

pub fn cotrain_variant_name(iterations: usize) -> String {
    format!("+{iterations}-itr")
}

/// Single-view rows threshold each view's bag score at 0.5, `Combined`
/// aggregates the base classifiers, and one row follows per co-trained model.
pub fn ablation_variants(
    base: &CoDecompModel,
    cotrained: &[(usize, CoDecompModel)],
    examples: &[Vec<Vec<ContextVector>>],
) -> Result<Vec<VariantPredictions>> {
    let base_scores: Vec<Vec<f64>> = examples
        .iter()
        .map(|v| base.score(v).map(|(p, _)| p))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (view, name) in base.kcs_names.iter().enumerate() {
        out.push(VariantPredictions {
            name: single_view_name(name),
            predictions: base_scores.iter().map(|p| aggregate(&p[view..=view])).collect(),
        });
    }
    out.push(VariantPredictions {
        name: COMBINED.to_string(),
        predictions: base_scores.iter().map(|p| aggregate(p)).collect(),
    });
    for (k, model) in cotrained {
        let predictions = examples
            .iter()
            .map(|v| model.predict(v).map(|p| p.positive))
            .collect::<Result<_>>()?;
        out.push(VariantPredictions {
            name: cotrain_variant_name(*k),
            predictions,
        });
    }
    Ok(out)
}
