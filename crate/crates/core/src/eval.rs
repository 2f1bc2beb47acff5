//! Positive-class metrics, the folds × repetitions protocol, ablation tables
//! and training-size sweeps.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{em_fit, nb_baseline_fit, nb_predict_document, EmConfig};
use crate::concepts::{label_bags, prepare_documents, Lexicons, PreparedDocument, RuleBasedHumanDetector, TaskPreset};
use crate::context::{featurize, ContextVector, ProviderSpec};
use crate::corpus::{derive_seed, sample_labeled, stratified_folds, Corpus, Document, SampleSpec};
use crate::cotrain::{
    ablation_variants, cotrain_fit_checkpoints, cotrain_variant_name, CoConfig, Example, ViewBag,
};
use crate::error::{Error, Result};
use crate::learners::TrainConfig;

/// Confusion counts and positive-class precision, recall and F1.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Metrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Metrics {
            tp,
            fp,
            fn_,
            tn,
            precision,
            recall,
            f1,
        }
    }

    /// Arithmetic mean of precision, recall and F1; counts are summed.
    pub fn mean(items: &[Metrics]) -> Metrics {
        let n = items.len().max(1) as f64;
        let sum = |f: fn(&Metrics) -> f64| items.iter().map(f).sum::<f64>() / n;
        Metrics {
            tp: items.iter().map(|m| m.tp).sum(),
            fp: items.iter().map(|m| m.fp).sum(),
            fn_: items.iter().map(|m| m.fn_).sum(),
            tn: items.iter().map(|m| m.tn).sum(),
            precision: sum(|m| m.precision),
            recall: sum(|m| m.recall),
            f1: sum(|m| m.f1),
        }
    }
}

/// Scores predictions against gold labels; both maps must share one id set.
pub fn compute_metrics(predictions: &BTreeMap<String, bool>, gold: &BTreeMap<String, bool>) -> Result<Metrics> {
    if predictions.len() != gold.len() || predictions.keys().ne(gold.keys()) {
        let missing = gold.keys().find(|k| !predictions.contains_key(*k));
        let extra = predictions.keys().find(|k| !gold.contains_key(*k));
        return Err(Error::IdMismatch(format!(
            "first gold id without prediction: {missing:?}; first prediction without gold: {extra:?}"
        )));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (id, &p) in predictions {
        match (p, gold[id]) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(Metrics::from_counts(tp, fp, fn_, tn))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoDecompSpec {
    pub preset: TaskPreset,
    pub provider: ProviderSpec,
    pub co: CoConfig,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelSpec {
    #[serde(rename = "codecomp")]
    CoDecomp(CoDecompSpec),
    #[serde(rename = "nb")]
    NaiveBayes { alpha: f64 },
    Em(EmConfig),
}

impl ModelSpec {
    pub fn name(&self) -> String {
        match self {
            ModelSpec::CoDecomp(s) => format!("codecomp{}", cotrain_variant_name(s.co.iterations)),
            ModelSpec::NaiveBayes { .. } => "nb".to_string(),
            ModelSpec::Em(_) => "em".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub k_folds: usize,
    pub n_labeled: usize,
    pub repetitions: usize,
    pub master_seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            k_folds: 10,
            n_labeled: 100,
            repetitions: 5,
            master_seed: 42,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k_folds < 2 {
            return Err(Error::config("experiment.k_folds", "must be at least 2"));
        }
        if self.repetitions < 1 {
            return Err(Error::config("experiment.repetitions", "must be at least 1"));
        }
        if self.n_labeled < 2 {
            return Err(Error::config("experiment.n_labeled", "must be at least 2"));
        }
        Ok(())
    }

    /// Seed of repetition `rep`.
    pub fn repetition_seed(&self, rep: usize) -> u64 {
        self.master_seed.wrapping_add(rep as u64)
    }
}

fn fold_seed(rep_seed: u64) -> u64 {
    derive_seed(rep_seed, 0)
}

fn sample_seed(rep_seed: u64, fold: usize) -> u64 {
    derive_seed(rep_seed, 1 + fold as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRun {
    pub repetition: usize,
    pub fold: usize,
    pub sample_seed: u64,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub model: String,
    pub fingerprint: String,
    pub experiment: ExperimentSpec,
    pub repetition_seeds: Vec<u64>,
    pub runs: Vec<FoldRun>,
    /// Mean over folds, one entry per repetition.
    pub repetition_means: Vec<Metrics>,
    /// Mean of `repetition_means`.
    pub mean: Metrics,
}

impl RunReport {
    fn assemble(model: String, fingerprint: String, spec: &ExperimentSpec, runs: Vec<FoldRun>) -> Self {
        let repetition_means: Vec<Metrics> = (0..spec.repetitions)
            .map(|r| {
                let per_fold: Vec<Metrics> = runs.iter().filter(|x| x.repetition == r).map(|x| x.metrics).collect();
                Metrics::mean(&per_fold)
            })
            .collect();
        RunReport {
            model,
            fingerprint,
            experiment: *spec,
            repetition_seeds: (0..spec.repetitions).map(|r| spec.repetition_seed(r)).collect(),
            mean: Metrics::mean(&repetition_means),
            repetition_means,
            runs,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// One row per repetition × fold followed by a `mean` row.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Serde(e.to_string());
        w.write_record(["model", "repetition", "fold", "tp", "fp", "fn", "tn", "precision", "recall", "f1"])
            .map_err(io)?;
        let row = |rep: String, fold: String, m: &Metrics| {
            vec![
                self.model.clone(),
                rep,
                fold,
                m.tp.to_string(),
                m.fp.to_string(),
                m.fn_.to_string(),
                m.tn.to_string(),
                m.precision.to_string(),
                m.recall.to_string(),
                m.f1.to_string(),
            ]
        };
        for r in &self.runs {
            w.write_record(row(r.repetition.to_string(), r.fold.to_string(), &r.metrics)).map_err(io)?;
        }
        w.write_record(row("mean".into(), "mean".into(), &self.mean)).map_err(io)?;
        csv_string(w)
    }
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Serde(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serde(e.to_string()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 over the model and experiment settings and the corpus content.
pub fn fingerprint(corpus: &Corpus, model: &ModelSpec, spec: &ExperimentSpec) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(model)?);
    h.update(serde_json::to_vec(spec)?);
    for doc in corpus {
        h.update(serde_json::to_vec(doc)?);
    }
    Ok(hex(&h.finalize()))
}

/// Prepared documents and context vectors, computed once per corpus. Neither
/// depends on labels.
pub struct FeatureCache {
    preset: TaskPreset,
    entries: HashMap<String, (PreparedDocument, Vec<Vec<ContextVector>>)>,
}

impl FeatureCache {
    pub fn build(corpus: &Corpus, preset: &TaskPreset, provider: &ProviderSpec, lexicons: &Lexicons) -> Result<Self> {
        let provider = provider.build()?;
        let detector = RuleBasedHumanDetector::new(lexicons);
        let docs = corpus.documents();
        let prepared: Vec<PreparedDocument> = docs
            .par_chunks(64)
            .map(|chunk| prepare_documents(chunk, preset, lexicons, &detector))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        let entries = prepared
            .into_par_iter()
            .map(|p| {
                let v = featurize(provider.as_ref(), &p, preset)?;
                Ok((p.id.clone(), (p, v)))
            })
            .collect::<Result<HashMap<_, _>>>()?;
        Ok(FeatureCache {
            preset: preset.clone(),
            entries,
        })
    }

    fn entry(&self, id: &str) -> Result<&(PreparedDocument, Vec<Vec<ContextVector>>)> {
        self.entries
            .get(id)
            .ok_or_else(|| Error::IdMismatch(format!("document {id:?} missing from feature cache")))
    }

    /// Example whose instance labels follow `doc`'s gold label and annotations.
    pub fn example(&self, doc: &Document) -> Result<Example> {
        let (prepared, vectors) = self.entry(&doc.id)?;
        let (bags, _) = label_bags(prepared, doc, &self.preset);
        Ok(Example {
            id: doc.id.clone(),
            views: bags
                .iter()
                .zip(vectors)
                .map(|(bag, inst)| ViewBag {
                    instances: inst.clone(),
                    labels: bag.instances.iter().map(|i| i.label).collect(),
                })
                .collect(),
        })
    }

    pub fn unlabeled_example(&self, id: &str) -> Result<Example> {
        let (_, vectors) = self.entry(id)?;
        Ok(Example {
            id: id.to_string(),
            views: vectors.iter().map(|v| ViewBag::unlabeled(v.clone())).collect(),
        })
    }

    pub fn vectors(&self, id: &str) -> Result<&Vec<Vec<ContextVector>>> {
        Ok(&self.entry(id)?.1)
    }
}

/// Per-variant predictions on one test fold.
type FoldOutput = Vec<(String, BTreeMap<String, bool>)>;

struct Split {
    labeled: Corpus,
    unlabeled: Vec<Document>,
    test: Corpus,
}

fn run_codecomp(
    spec: &CoDecompSpec,
    cache: &FeatureCache,
    split: &Split,
    checkpoints: &[usize],
    ablation: bool,
) -> Result<FoldOutput> {
    let labeled: Vec<Example> = split.labeled.iter().map(|d| cache.example(d)).collect::<Result<_>>()?;
    let unlabeled: Vec<Example> = split
        .unlabeled
        .iter()
        .map(|d| cache.unlabeled_example(&d.id))
        .collect::<Result<_>>()?;
    let names: Vec<String> = spec.preset.names().iter().map(|s| s.to_string()).collect();
    let mut wanted = checkpoints.to_vec();
    if ablation {
        wanted.insert(0, 0);
    }
    let fit = cotrain_fit_checkpoints(&labeled, &unlabeled, &names, &spec.co, &spec.train, &wanted)?;
    let test_ids: Vec<&str> = split.test.iter().map(|d| d.id.as_str()).collect();
    let test_vectors: Vec<Vec<Vec<ContextVector>>> =
        test_ids.iter().map(|id| cache.vectors(id).cloned()).collect::<Result<_>>()?;
    let variants = if ablation {
        ablation_variants(&fit.models[0].1, &fit.models[1..], &test_vectors)?
    } else {
        let model = &fit.models[0].1;
        let predictions = test_vectors
            .iter()
            .map(|v| model.predict(v).map(|p| p.positive))
            .collect::<Result<_>>()?;
        vec![crate::cotrain::VariantPredictions {
            name: ModelSpec::CoDecomp(spec.clone()).name(),
            predictions,
        }]
    };
    Ok(variants
        .into_iter()
        .map(|v| {
            let map = test_ids.iter().map(|s| s.to_string()).zip(v.predictions).collect();
            (v.name, map)
        })
        .collect())
}

fn run_fold(
    model: &ModelSpec,
    cache: Option<&FeatureCache>,
    split: &Split,
    ablation_checkpoints: Option<&[usize]>,
    seed: u64,
) -> Result<FoldOutput> {
    let predict_nb = |m: &crate::learners::NbModel| -> BTreeMap<String, bool> {
        split
            .test
            .iter()
            .map(|d| (d.id.clone(), nb_predict_document(m, d) >= 0.5))
            .collect()
    };
    match model {
        ModelSpec::CoDecomp(spec) => {
            let cache = cache.expect("feature cache for co-training");
            match ablation_checkpoints {
                Some(cp) => run_codecomp(spec, cache, split, cp, true),
                None => run_codecomp(spec, cache, split, &[spec.co.iterations], false),
            }
        }
        ModelSpec::NaiveBayes { alpha } => {
            let m = nb_baseline_fit(split.labeled.documents(), *alpha)?;
            Ok(vec![(model.name(), predict_nb(&m))])
        }
        ModelSpec::Em(cfg) => {
            let mut pool = split.unlabeled.clone();
            pool.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let fit = em_fit(split.labeled.documents(), &pool, cfg)?;
            Ok(vec![(model.name(), predict_nb(&fit.model))])
        }
    }
}

/// Results of one protocol run, grouped by variant name in first-seen order.
fn run_protocol(
    corpus: &Corpus,
    model: &ModelSpec,
    lexicons: &Lexicons,
    spec: &ExperimentSpec,
    ablation_checkpoints: Option<&[usize]>,
    cache: Option<&FeatureCache>,
) -> Result<Vec<RunReport>> {
    spec.validate()?;
    let owned_cache;
    let cache = match (model, cache) {
        (ModelSpec::CoDecomp(s), None) => {
            owned_cache = FeatureCache::build(corpus, &s.preset, &s.provider, lexicons)?;
            Some(&owned_cache)
        }
        (_, c) => c,
    };
    let gold: BTreeMap<String, bool> = corpus
        .iter()
        .map(|d| (d.id.clone(), d.gold_label.is_some_and(|l| l.is_positive())))
        .collect();
    let plans = (0..spec.repetitions)
        .map(|r| stratified_folds(corpus, spec.k_folds, fold_seed(spec.repetition_seed(r))))
        .collect::<Result<Vec<_>>>()?;
    let tasks: Vec<(usize, usize)> = (0..spec.repetitions)
        .flat_map(|r| (0..spec.k_folds).map(move |f| (r, f)))
        .collect();
    let outputs: Vec<(usize, usize, u64, FoldOutput)> = tasks
        .par_iter()
        .map(|&(r, f)| {
            let (train, test) = plans[r].split(corpus, f);
            let seed = sample_seed(spec.repetition_seed(r), f);
            let (labeled, unlabeled) = sample_labeled(
                &train,
                SampleSpec {
                    n_labeled: spec.n_labeled,
                    seed,
                },
            )?;
            let split = Split {
                labeled,
                unlabeled: unlabeled.documents.into_documents(),
                test,
            };
            let out = run_fold(model, cache, &split, ablation_checkpoints, seed)?;
            Ok((r, f, seed, out))
        })
        .collect::<Result<_>>()?;

    let fp = fingerprint(corpus, model, spec)?;
    let mut by_variant: Vec<(String, Vec<FoldRun>)> = Vec::new();
    for (r, f, seed, out) in outputs {
        for (name, preds) in out {
            let fold_gold: BTreeMap<String, bool> = preds.keys().map(|k| (k.clone(), gold[k])).collect();
            let run = FoldRun {
                repetition: r,
                fold: f,
                sample_seed: seed,
                metrics: compute_metrics(&preds, &fold_gold)?,
            };
            match by_variant.iter_mut().find(|(n, _)| *n == name) {
                Some((_, runs)) => runs.push(run),
                None => by_variant.push((name, vec![run])),
            }
        }
    }
    Ok(by_variant
        .into_iter()
        .map(|(name, runs)| RunReport::assemble(name, fp.clone(), spec, runs))
        .collect())
}

/// Runs the repetition × fold protocol for one model.
pub fn run_experiment(corpus: &Corpus, model: &ModelSpec, lexicons: &Lexicons, spec: &ExperimentSpec) -> Result<RunReport> {
    let mut reports = run_protocol(corpus, model, lexicons, spec, None, None)?;
    Ok(reports.remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub model: String,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    pub reports: Vec<RunReport>,
}

impl AblationTable {
    /// Columns: model, F1, precision, recall.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Serde(e.to_string());
        w.write_record(["model", "f1", "precision", "recall"]).map_err(io)?;
        for r in &self.rows {
            w.write_record([
                r.model.clone(),
                r.metrics.f1.to_string(),
                r.metrics.precision.to_string(),
                r.metrics.recall.to_string(),
            ])
            .map_err(io)?;
        }
        csv_string(w)
    }

    pub fn row(&self, name: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.model == name)
    }
}

/// Single-view rows, `Combined`, and one co-training row per checkpoint,
/// all over the same folds and labeled samples.
pub fn ablation_table(
    corpus: &Corpus,
    spec: &CoDecompSpec,
    lexicons: &Lexicons,
    experiment: &ExperimentSpec,
    checkpoints: &[usize],
) -> Result<AblationTable> {
    let model = ModelSpec::CoDecomp(spec.clone());
    let reports = run_protocol(corpus, &model, lexicons, experiment, Some(checkpoints), None)?;
    let rows = reports
        .iter()
        .map(|r| AblationRow {
            model: r.model.clone(),
            metrics: r.mean,
        })
        .collect();
    Ok(AblationTable { rows, reports })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n_labeled: usize,
    pub report: RunReport,
}

/// One experiment per labeled-set size over shared folds.
pub fn training_size_sweep(
    corpus: &Corpus,
    model: &ModelSpec,
    lexicons: &Lexicons,
    experiment: &ExperimentSpec,
    sizes: &[usize],
) -> Result<Vec<SweepPoint>> {
    if sizes.is_empty() {
        return Err(Error::config("sizes", "at least one size is required"));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("sizes", "sizes must be strictly ascending"));
    }
    let cache = match model {
        ModelSpec::CoDecomp(s) => Some(FeatureCache::build(corpus, &s.preset, &s.provider, lexicons)?),
        _ => None,
    };
    sizes
        .iter()
        .map(|&n| {
            let spec = ExperimentSpec {
                n_labeled: n,
                ..*experiment
            };
            let report = run_protocol(corpus, model, lexicons, &spec, None, cache.as_ref())?.remove(0);
            Ok(SweepPoint { n_labeled: n, report })
        })
        .collect()
}

/// Columns: n_labeled, F1, precision, recall.
pub fn sweep_csv(points: &[SweepPoint]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Serde(e.to_string());
    w.write_record(["model", "n_labeled", "f1", "precision", "recall"]).map_err(io)?;
    for p in points {
        let m = &p.report.mean;
        w.write_record([
            p.report.model.clone(),
            p.n_labeled.to_string(),
            m.f1.to_string(),
            m.precision.to_string(),
            m.recall.to_string(),
        ])
        .map_err(io)?;
    }
    csv_string(w)
}
