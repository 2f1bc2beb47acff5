//! Operator commands. Each one reads its inputs, runs one pipeline stage and
//! writes its artifacts; `main` only parses flags and dispatches here.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::concepts::{label_bags, prepare_documents, Bag, ConceptKind, Lexicons, PreparedDocument, RuleBasedHumanDetector, TaskPreset};
use crate::config::ExperimentConfig;
use crate::context::{validate_kcs_gamma, GammaReport};
use crate::corpus::{load_corpus, sample_labeled, Corpus, CorpusFormat, Document, Label, SampleSpec};
use crate::cotrain::{build_example, cotrain_fit, iteration_log_jsonl, CoFit, Example};
use crate::error::{Error, Result};
use crate::eval::{ablation_table, run_experiment, sweep_csv, training_size_sweep, AblationTable, CoDecompSpec, ModelSpec, RunReport, SweepPoint};

/// Writes `contents` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_any_corpus(path: &Path) -> Result<Corpus> {
    load_corpus(path, CorpusFormat::from_path(path))
}

/// Lexicons, task preset and corpus named by a configuration.
pub struct Workspace {
    pub config: ExperimentConfig,
    pub lexicons: Lexicons,
    pub preset: TaskPreset,
    pub corpus: Corpus,
}

impl Workspace {
    pub fn open(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let lexicons = Lexicons::from_env()?;
        let preset = TaskPreset::resolve(&config.experiment.task, &lexicons)?;
        let corpus = load_any_corpus(config.corpus_path()?)?;
        Ok(Workspace {
            config,
            lexicons,
            preset,
            corpus,
        })
    }

    pub fn codecomp_spec(&self) -> CoDecompSpec {
        CoDecompSpec {
            preset: self.preset.clone(),
            provider: self.config.provider.clone(),
            co: self.config.cotrain,
            train: self.config.learner,
        }
    }

    pub fn model_spec(&self, kind: ModelKind) -> ModelSpec {
        match kind {
            ModelKind::CoDecomp => ModelSpec::CoDecomp(self.codecomp_spec()),
            ModelKind::Nb => ModelSpec::NaiveBayes {
                alpha: self.config.nb.alpha,
            },
            ModelKind::Em => ModelSpec::Em(self.config.em),
        }
    }

    fn out_dir(&self) -> &Path {
        &self.config.experiment.out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[serde(rename = "codecomp")]
    CoDecomp,
    Nb,
    Em,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::CoDecomp => "codecomp",
            ModelKind::Nb => "nb",
            ModelKind::Em => "em",
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "codecomp" => Ok(ModelKind::CoDecomp),
            "nb" => Ok(ModelKind::Nb),
            "em" => Ok(ModelKind::Em),
            other => Err(Error::config("model", format!("unknown model {other:?}; expected codecomp, nb or em"))),
        }
    }
}

/// One line of an enriched corpus: the document plus its tokens, mentions
/// and labeled bags. Readable as a plain corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichedDocument {
    #[serde(flatten)]
    pub document: Document,
    pub prepared: PreparedDocument,
    pub bags: Vec<Bag>,
    /// Set once an operator has reviewed the human mentions.
    #[serde(default)]
    pub annotated: bool,
}

pub fn read_enriched(path: &Path) -> Result<Vec<EnrichedDocument>> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    raw.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Malformed {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn enriched_jsonl(docs: &[EnrichedDocument]) -> Result<String> {
    let mut out = String::new();
    for d in docs {
        out.push_str(&serde_json::to_string(d)?);
        out.push('\n');
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrepareSummary {
    pub documents: usize,
    pub mentions: BTreeMap<String, usize>,
    pub synthesized_mentions: usize,
    pub empty_bags: BTreeMap<String, usize>,
    pub warnings: usize,
}

impl PrepareSummary {
    /// Recounts from enriched records.
    pub fn from_enriched(preset: &TaskPreset, docs: &[EnrichedDocument], warnings: usize) -> Self {
        let mut s = PrepareSummary {
            documents: docs.len(),
            warnings,
            ..PrepareSummary::default()
        };
        for k in &preset.kcs {
            s.mentions.insert(k.name.clone(), 0);
            s.empty_bags.insert(k.name.clone(), 0);
        }
        for d in docs {
            for bag in &d.bags {
                *s.mentions.entry(bag.kcs_name.clone()).or_default() += bag.instances.len();
                if bag.is_empty() {
                    *s.empty_bags.entry(bag.kcs_name.clone()).or_default() += 1;
                }
                s.synthesized_mentions += bag.instances.iter().filter(|i| i.mention.synthetic).count();
            }
        }
        s
    }
}

impl std::fmt::Display for PrepareSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "documents: {}", self.documents)?;
        for (name, n) in &self.mentions {
            writeln!(f, "mentions[{name}]: {n} (empty bags: {})", self.empty_bags[name])?;
        }
        writeln!(f, "synthesized mentions: {}", self.synthesized_mentions)?;
        write!(f, "warnings: {}", self.warnings)
    }
}

/// Tokenizes, extracts mentions and builds bags for every document.
pub fn enrich(corpus: &Corpus, preset: &TaskPreset, lexicons: &Lexicons) -> Result<(Vec<EnrichedDocument>, usize)> {
    let detector = RuleBasedHumanDetector::new(lexicons);
    let prepared = prepare_documents(corpus, preset, lexicons, &detector)?;
    let mut warnings = 0;
    let docs = corpus
        .iter()
        .zip(prepared)
        .map(|(doc, prepared)| {
            let (bags, w) = label_bags(&prepared, doc, preset);
            for msg in &w {
                log::warn!("{msg}");
            }
            warnings += w.len();
            let mut document = doc.clone();
            if document.task.is_empty() {
                document.task.clone_from(&preset.name);
            }
            EnrichedDocument {
                annotated: !doc.positive_human_spans.is_empty(),
                document,
                prepared,
                bags,
            }
        })
        .collect();
    Ok((docs, warnings))
}

pub fn cmd_prepare(corpus_in: &Path, task: &str, out: &Path) -> Result<PrepareSummary> {
    let lexicons = Lexicons::from_env()?;
    let preset = TaskPreset::resolve(task, &lexicons)?;
    let corpus = load_any_corpus(corpus_in)?;
    let (docs, warnings) = enrich(&corpus, &preset, &lexicons)?;
    write_atomic(out, enriched_jsonl(&docs)?.as_bytes())?;
    Ok(PrepareSummary::from_enriched(&preset, &docs, warnings))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotateSummary {
    pub annotated: usize,
    pub skipped_already_done: usize,
    pub left_empty: usize,
    pub remaining: usize,
}

fn human_view(preset: &TaskPreset) -> Result<usize> {
    preset
        .kcs
        .iter()
        .position(|k| k.kind == ConceptKind::Human)
        .ok_or_else(|| Error::config("task", format!("preset {:?} has no human concept to annotate", preset.name)))
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<terminal>", e)
}

/// Asks for the positive human mention of every unannotated positive
/// document. Progress is saved to `out` after each answer; when `out`
/// already exists it is resumed instead of re-reading `enriched_in`. Stops
/// early, leaving the rest for a later run, when `input` is exhausted.
pub fn cmd_annotate(
    enriched_in: &Path,
    out: &Path,
    preset: &TaskPreset,
    input: &mut impl BufRead,
    output: &mut impl Write,
) -> Result<AnnotateSummary> {
    let view = human_view(preset)?;
    let source = if out.is_file() { out } else { enriched_in };
    let mut docs = read_enriched(source)?;
    let mut summary = AnnotateSummary::default();
    let pending: Vec<usize> = docs
        .iter()
        .enumerate()
        .filter(|(_, d)| d.document.gold_label == Some(Label::Positive))
        .filter_map(|(i, d)| {
            if d.annotated {
                summary.skipped_already_done += 1;
                None
            } else {
                Some(i)
            }
        })
        .collect();
    let mut line = String::new();
    for (done, &idx) in pending.iter().enumerate() {
        let doc = &docs[idx];
        let mentions = &doc.prepared.mentions[view];
        writeln!(output, "[{}] {}", doc.document.id, doc.document.text).map_err(io_err)?;
        for (i, m) in mentions.iter().enumerate() {
            let tag = if m.synthetic { " (synthesized)" } else { "" };
            writeln!(output, "  {i}: {}{tag}", m.surface).map_err(io_err)?;
        }
        let choice = if mentions.is_empty() {
            writeln!(output, "  no human mentions").map_err(io_err)?;
            None
        } else {
            loop {
                write!(output, "positive mention index (0-{}) or none: ", mentions.len() - 1).map_err(io_err)?;
                output.flush().map_err(io_err)?;
                line.clear();
                if input.read_line(&mut line).map_err(io_err)? == 0 {
                    summary.remaining = pending.len() - done;
                    return Ok(summary);
                }
                let answer = line.trim();
                if answer.eq_ignore_ascii_case("none") {
                    break None;
                }
                match answer.parse::<usize>() {
                    Ok(i) if i < mentions.len() => break Some(i),
                    _ => writeln!(output, "  expected a number in 0-{} or none", mentions.len() - 1).map_err(io_err)?,
                }
            }
        };
        let doc = &mut docs[idx];
        match choice {
            Some(i) => {
                let span = doc.prepared.char_range(&doc.prepared.mentions[view][i]);
                doc.document.positive_human_spans = vec![span];
            }
            None => {
                let msg = format!("document {:?}: no positive human mention selected", doc.document.id);
                log::warn!("{msg}");
                writeln!(output, "  warning: {msg}").map_err(io_err)?;
                doc.document.positive_human_spans.clear();
                summary.left_empty += 1;
            }
        }
        doc.bags = label_bags(&doc.prepared, &doc.document, preset).0;
        doc.annotated = true;
        summary.annotated += 1;
        write_atomic(out, enriched_jsonl(&docs)?.as_bytes())?;
    }
    if pending.is_empty() && !out.is_file() {
        write_atomic(out, enriched_jsonl(&docs)?.as_bytes())?;
    }
    Ok(summary)
}

/// Checks the context-similarity condition for every concept with at least
/// two mentions and writes `validate_kcs.json`. Unsatisfied concepts are
/// reported, not treated as errors.
pub fn cmd_validate_kcs(ws: &Workspace) -> Result<Vec<GammaReport>> {
    let provider = ws.config.provider.build()?;
    let detector = RuleBasedHumanDetector::new(&ws.lexicons);
    let prepared = prepare_documents(&ws.corpus, &ws.preset, &ws.lexicons, &detector)?;
    let v = &ws.config.validate;
    let gamma = v
        .gamma
        .ok_or_else(|| Error::config("validate.gamma", "required (set it in [validate] or pass --gamma)"))?;
    let mut reports = Vec::new();
    for kcs in &ws.preset.kcs {
        match validate_kcs_gamma(
            provider.as_ref(),
            &prepared,
            &ws.preset,
            &kcs.name,
            gamma,
            v.sample_pairs,
            ws.config.experiment.seed,
            v.distance,
        ) {
            Ok(r) => reports.push(r),
            Err(Error::EmptyInput(msg)) => log::warn!("{msg}"),
            Err(e) => return Err(e),
        }
    }
    let json = serde_json::to_string_pretty(&reports)? + "\n";
    write_atomic(&ws.out_dir().join("validate_kcs.json"), json.as_bytes())?;
    Ok(reports)
}

/// Samples `n_labeled` labeled documents with the master seed, uses the rest
/// of the corpus as the unlabeled pool, co-trains, and writes `model.json`
/// and `iteration_log.jsonl`.
pub fn cmd_train(ws: &Workspace) -> Result<CoFit> {
    let (labeled, unlabeled) = sample_labeled(
        &ws.corpus,
        SampleSpec {
            n_labeled: ws.config.experiment.n_labeled,
            seed: ws.config.experiment.seed,
        },
    )?;
    let provider = ws.config.provider.build()?;
    let detector = RuleBasedHumanDetector::new(&ws.lexicons);
    let examples = |c: &Corpus| -> Result<Vec<Example>> {
        let prepared = prepare_documents(c, &ws.preset, &ws.lexicons, &detector)?;
        c.iter()
            .zip(&prepared)
            .map(|(d, p)| build_example(d, p, &ws.preset, provider.as_ref()))
            .collect()
    };
    let l = examples(&labeled)?;
    let u = examples(&unlabeled.documents)?;
    let names: Vec<String> = ws.preset.names().iter().map(|s| s.to_string()).collect();
    let mut fit = cotrain_fit(&l, &u, &names, &ws.config.cotrain, &ws.config.learner)?;
    fit.model.provider = ws.config.provider.clone();
    let dir = ws.out_dir();
    let model = serde_json::to_string_pretty(&fit.model)? + "\n";
    write_atomic(&dir.join("model.json"), model.as_bytes())?;
    write_atomic(&dir.join("iteration_log.jsonl"), iteration_log_jsonl(&fit.log)?.as_bytes())?;
    Ok(fit)
}

/// Runs the cross-validation protocol and writes `evaluate_{model}.json` and
/// `evaluate_{model}.csv`.
pub fn cmd_evaluate(ws: &Workspace, kind: ModelKind) -> Result<RunReport> {
    let spec = ws.model_spec(kind);
    let report = run_experiment(&ws.corpus, &spec, &ws.lexicons, &ws.config.experiment_spec())?;
    let dir = ws.out_dir();
    let stem = format!("evaluate_{}", kind.as_str());
    write_atomic(&dir.join(format!("{stem}.json")), report.to_json()?.as_bytes())?;
    write_atomic(&dir.join(format!("{stem}.csv")), report.to_csv()?.as_bytes())?;
    Ok(report)
}

/// Writes `ablation.csv` and `ablation.json`.
pub fn cmd_ablate(ws: &Workspace) -> Result<AblationTable> {
    let table = ablation_table(
        &ws.corpus,
        &ws.codecomp_spec(),
        &ws.lexicons,
        &ws.config.experiment_spec(),
        &ws.config.ablation.checkpoints,
    )?;
    let dir = ws.out_dir();
    write_atomic(&dir.join("ablation.csv"), table.to_csv()?.as_bytes())?;
    let json = serde_json::to_string_pretty(&table)? + "\n";
    write_atomic(&dir.join("ablation.json"), json.as_bytes())?;
    Ok(table)
}

/// Writes `sweep_{model}.csv` and `sweep_{model}.json`.
pub fn cmd_sweep(ws: &Workspace, kind: ModelKind, sizes: &[usize]) -> Result<Vec<SweepPoint>> {
    let spec = ws.model_spec(kind);
    let points = training_size_sweep(&ws.corpus, &spec, &ws.lexicons, &ws.config.experiment_spec(), sizes)?;
    let dir = ws.out_dir();
    let stem = format!("sweep_{}", kind.as_str());
    write_atomic(&dir.join(format!("{stem}.csv")), sweep_csv(&points)?.as_bytes())?;
    let json = serde_json::to_string_pretty(&points)? + "\n";
    write_atomic(&dir.join(format!("{stem}.json")), json.as_bytes())?;
    Ok(points)
}
