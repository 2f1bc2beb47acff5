//! Experiment configuration: a TOML file with one section per module,
//! overridable from the command line.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::EmConfig;
use crate::context::{Distance, ProviderSpec};
use crate::cotrain::{CoConfig, DEFAULT_CHECKPOINTS};
use crate::error::{Error, Result};
use crate::eval::ExperimentSpec;
use crate::learners::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub task: String,
    pub corpus: Option<PathBuf>,
    pub out: PathBuf,
    pub k_folds: usize,
    pub n_labeled: usize,
    pub repetitions: usize,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        let spec = ExperimentSpec::default();
        ExperimentSection {
            task: "phm-cancer".to_string(),
            corpus: None,
            out: PathBuf::from("out"),
            k_folds: spec.k_folds,
            n_labeled: spec.n_labeled,
            repetitions: spec.repetitions,
            seed: spec.master_seed,
            jobs: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NbSection {
    pub alpha: f64,
}

impl Default for NbSection {
    fn default() -> Self {
        NbSection { alpha: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateSection {
    /// Similarity threshold; there is no default, so it must be given.
    pub gamma: Option<f64>,
    pub sample_pairs: usize,
    pub distance: Distance,
}

impl Default for ValidateSection {
    fn default() -> Self {
        ValidateSection {
            gamma: None,
            sample_pairs: 1000,
            distance: Distance::Euclidean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSection {
    pub checkpoints: Vec<usize>,
}

impl Default for AblationSection {
    fn default() -> Self {
        AblationSection {
            checkpoints: DEFAULT_CHECKPOINTS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub provider: ProviderSpec,
    pub cotrain: CoConfig,
    pub learner: TrainConfig,
    pub nb: NbSection,
    pub em: EmConfig,
    pub validate: ValidateSection,
    pub ablation: AblationSection,
}

/// Command-line values that replace file values when present.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub task: Option<String>,
    pub corpus: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub folds: Option<usize>,
    pub n_labeled: Option<usize>,
    pub reps: Option<usize>,
    pub iters: Option<usize>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    /// `hashed`, or a path to a precomputed vector file.
    pub provider: Option<String>,
    pub window: Option<usize>,
    pub dim: Option<usize>,
    pub gamma: Option<f64>,
}

impl ExperimentConfig {
    pub fn parse(raw: &str) -> Result<Self> {
        toml::from_str(raw).map_err(|e| Error::config("config", e.message().to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&raw)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        let e = &mut self.experiment;
        if let Some(v) = &o.task {
            e.task.clone_from(v);
        }
        if let Some(v) = &o.corpus {
            e.corpus = Some(v.clone());
        }
        if let Some(v) = &o.out {
            e.out.clone_from(v);
        }
        if let Some(v) = o.folds {
            e.k_folds = v;
        }
        if let Some(v) = o.n_labeled {
            e.n_labeled = v;
        }
        if let Some(v) = o.reps {
            e.repetitions = v;
        }
        if let Some(v) = o.seed {
            e.seed = v;
        }
        if let Some(v) = o.jobs {
            e.jobs = v;
        }
        if let Some(v) = o.iters {
            self.cotrain.iterations = v;
        }
        if let Some(v) = o.gamma {
            self.validate.gamma = Some(v);
        }
        match o.provider.as_deref() {
            Some("hashed") => {
                if !matches!(self.provider, ProviderSpec::Hashed { .. }) {
                    self.provider = ProviderSpec::default();
                }
            }
            Some(path) => {
                self.provider = ProviderSpec::Precomputed { path: path.into() };
            }
            None => {}
        }
        if let ProviderSpec::Hashed { window, dim } = &mut self.provider {
            if let Some(v) = o.window {
                *window = v;
            }
            if let Some(v) = o.dim {
                *dim = v;
            }
        }
    }

    pub fn experiment_spec(&self) -> ExperimentSpec {
        ExperimentSpec {
            k_folds: self.experiment.k_folds,
            n_labeled: self.experiment.n_labeled,
            repetitions: self.experiment.repetitions,
            master_seed: self.experiment.seed,
        }
    }

    /// Checks numeric bounds and that referenced files exist.
    pub fn validate(&self) -> Result<()> {
        self.experiment_spec().validate()?;
        self.cotrain.validate()?;
        self.learner.validate()?;
        self.em.validate()?;
        if !(self.nb.alpha > 0.0) {
            return Err(Error::config("nb.alpha", "must be positive"));
        }
        if self.validate.gamma.is_some_and(|g| !(g >= 0.0)) {
            return Err(Error::config("validate.gamma", "must be non-negative"));
        }
        if self.validate.sample_pairs < 1 {
            return Err(Error::config("validate.sample_pairs", "must be at least 1"));
        }
        match &self.provider {
            ProviderSpec::Hashed { window, dim } => {
                if *window < 1 {
                    return Err(Error::config("provider.window", "must be at least 1"));
                }
                if *dim < 2 {
                    return Err(Error::config("provider.dim", "must be at least 2"));
                }
            }
            ProviderSpec::Precomputed { path } => {
                if !path.is_file() {
                    return Err(Error::config("provider.path", format!("{} does not exist", path.display())));
                }
            }
        }
        if let Some(c) = &self.experiment.corpus {
            if !c.is_file() {
                return Err(Error::config("experiment.corpus", format!("{} does not exist", c.display())));
            }
        }
        Ok(())
    }

    pub fn corpus_path(&self) -> Result<&Path> {
        self.experiment
            .corpus
            .as_deref()
            .ok_or_else(|| Error::config("experiment.corpus", "no corpus given (use --corpus or the config file)"))
    }
}
