use std::io::{self, Write};
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use codecomp::commands::{self, ModelKind, Workspace};
use codecomp::concepts::{Lexicons, TaskPreset};
use codecomp::config::{ExperimentConfig, Overrides};
use codecomp::corpus::write_jsonl;
use codecomp::synthetic::{generate, SyntheticConfig};

#[derive(Parser)]
#[command(name = "codecomp", version, about = "Key-concept decomposition with multi-view co-training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Task preset name or preset file.
    #[arg(long, global = true)]
    task: Option<String>,
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    /// Output directory (a file for `prepare`, `annotate` and `synth`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    folds: Option<usize>,
    #[arg(long, global = true)]
    n_labeled: Option<usize>,
    #[arg(long, global = true)]
    reps: Option<usize>,
    /// Co-training iterations.
    #[arg(long, global = true)]
    iters: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// `hashed`, or a path to a precomputed vector file.
    #[arg(long, global = true)]
    provider: Option<String>,
    #[arg(long, global = true)]
    window: Option<usize>,
    #[arg(long, global = true)]
    dim: Option<usize>,
    #[arg(long, global = true)]
    gamma: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Tokenize, extract mentions and build bags into an enriched JSONL file.
    Prepare {
        #[command(flatten)]
        common: Common,
    },
    /// Pick the positive human mention of each positive document.
    Annotate {
        /// Enriched file written by `prepare`.
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Check the context-similarity condition of every concept.
    ValidateKcs {
        #[command(flatten)]
        common: Common,
    },
    /// Co-train on one labeled sample and save the model.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Run the cross-validation protocol for one model.
    Evaluate {
        #[arg(long, default_value = "codecomp")]
        model: ModelKind,
        #[command(flatten)]
        common: Common,
    },
    /// Single views, combined views and co-training checkpoints side by side.
    Ablate {
        #[command(flatten)]
        common: Common,
    },
    /// Repeat the protocol for several labeled-set sizes.
    Sweep {
        #[arg(long, default_value = "codecomp")]
        model: ModelKind,
        /// Comma-separated ascending sizes.
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Write a synthetic two-view corpus.
    Synth {
        #[arg(long, default_value_t = 2000)]
        docs: usize,
        #[arg(long, default_value_t = 0.3)]
        positive_rate: f64,
        #[command(flatten)]
        common: Common,
    },
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            task: self.task.clone(),
            corpus: self.corpus.clone(),
            out: self.out.clone(),
            folds: self.folds,
            n_labeled: self.n_labeled,
            reps: self.reps,
            iters: self.iters,
            seed: self.seed,
            jobs: self.jobs,
            provider: self.provider.clone(),
            window: self.window,
            dim: self.dim,
            gamma: self.gamma,
        }
    }

    fn config(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        config.apply(&self.overrides());
        config.validate()?;
        Ok(config)
    }

    fn workspace(&self) -> Result<Workspace> {
        let config = self.config()?;
        init_pool(config.experiment.jobs)?;
        Ok(Workspace::open(config)?)
    }

    fn out_file(&self) -> Result<PathBuf> {
        self.out.clone().context("--out is required")
    }
}

fn init_pool(jobs: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
        .context("configuring worker threads")
}

/// Writes to stdout; a closed pipe ends output quietly.
fn emit(text: &str) -> Result<()> {
    match io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    emit(&(serde_json::to_string_pretty(value)? + "\n"))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare { common } => {
            let config = common.config()?;
            let summary = commands::cmd_prepare(config.corpus_path()?, &config.experiment.task, &common.out_file()?)?;
            emit(&format!("{summary}\n"))?;
        }
        Command::Annotate { input, common } => {
            let config = common.config()?;
            let preset = TaskPreset::resolve(&config.experiment.task, &Lexicons::from_env()?)?;
            let stdin = io::stdin();
            let summary = commands::cmd_annotate(&input, &common.out_file()?, &preset, &mut stdin.lock(), &mut io::stdout())?;
            print_json(&summary)?;
        }
        Command::ValidateKcs { common } => {
            let reports = commands::cmd_validate_kcs(&common.workspace()?)?;
            print_json(&reports)?;
        }
        Command::Train { common } => {
            let fit = commands::cmd_train(&common.workspace()?)?;
            let last = fit.log.last();
            emit(&format!(
                "trained {} views; {} iterations; labeled {}\n",
                fit.model.classifiers.len(),
                fit.log.len(),
                last.map_or(0, |l| l.labeled_after)
            ))?;
        }
        Command::Evaluate { model, common } => {
            let report = commands::cmd_evaluate(&common.workspace()?, model)?;
            print_json(&report.mean)?;
        }
        Command::Ablate { common } => {
            let table = commands::cmd_ablate(&common.workspace()?)?;
            emit(&table.to_csv()?)?;
        }
        Command::Sweep { model, sizes, common } => {
            let points = commands::cmd_sweep(&common.workspace()?, model, &sizes)?;
            emit(&codecomp::eval::sweep_csv(&points)?)?;
        }
        Command::Synth { docs, positive_rate, common } => {
            let cfg = SyntheticConfig {
                n_docs: docs,
                positive_rate,
                seed: common.seed.unwrap_or(0),
                ..SyntheticConfig::default()
            };
            let out = common.out_file()?;
            write_jsonl(&out, &generate(&cfg)?)?;
            emit(&format!("wrote {docs} documents to {}\n", out.display()))?;
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
