//! Command-line front end: `synth`, `ingest-check`, `train`, `predict`,
//! `eval`.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{
    cmd_eval, cmd_ingest_check, cmd_predict, cmd_synth, cmd_train, corpus_hash, file_hash, EvalArgs, IngestReport,
    Manifest, PredictArgs, SynthArgs, TrainArgs,
};
pub use config::{ConfigLayer, ModelKind, ObservationSource, RunConfig, TrainOverrides};

use crate::error::Error;
use crate::eval::Pooling;

#[derive(Debug, Parser)]
#[command(name = "anticipate", version, about = "Anticipate future activity segments in videos")]
pub struct Cli {
    /// Worker threads for per-video work; defaults to the available cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus from a TOML spec.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the spec.
        #[arg(long)]
        seed: Option<u64>,
        /// Fraction of videos placed in the test split.
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
    },
    /// Load a dataset split and print a summary.
    IngestCheck {
        #[command(flatten)]
        overrides: Overrides,
        /// Splits to check; defaults to the train and test splits.
        #[arg(long)]
        split: Vec<String>,
    },
    /// Train a model on the training split.
    Train {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict future frames for every test video.
    Predict {
        #[command(flatten)]
        overrides: Overrides,
        /// Output directory of `train`.
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score prediction dumps against the ground truth.
    Eval {
        #[command(flatten)]
        overrides: Overrides,
        /// Output directories of `predict`; several runs are reported as
        /// mean and standard deviation.
        #[arg(long, required = true)]
        predictions: Vec<PathBuf>,
        /// Also report next-segment label accuracy of these models.
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Flags that override keys of the run configuration.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// TOML config file, or a run manifest to repeat.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub train_split: Option<String>,
    #[arg(long)]
    pub test_split: Option<String>,
    /// rnn or ngram-N with N from 1 to 8.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub hidden_size: Option<usize>,
    #[arg(long)]
    pub action_epochs: Option<usize>,
    #[arg(long)]
    pub length_epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub observe: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub predict: Option<Vec<f64>>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// "groundtruth" or a directory of frame-label files.
    #[arg(long)]
    pub observations: Option<String>,
    #[arg(long, value_parser = parse_pooling)]
    pub pooling: Option<Pooling>,
}

fn parse_pooling(s: &str) -> Result<Pooling, String> {
    match s {
        "pooled" => Ok(Pooling::Pooled),
        "per-video" => Ok(Pooling::PerVideo),
        _ => Err(format!("expected pooled or per-video, got {s:?}")),
    }
}

impl Overrides {
    pub fn layer(&self) -> ConfigLayer {
        let both = TrainOverrides {
            hidden_size: self.hidden_size,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            dropout: self.dropout,
            ..Default::default()
        };
        ConfigLayer {
            dataset: self.dataset.clone(),
            train_split: self.train_split.clone(),
            test_split: self.test_split.clone(),
            model: self.model.clone(),
            seed: self.seed,
            action: TrainOverrides {
                epochs: self.action_epochs,
                ..both.clone()
            },
            length: TrainOverrides {
                epochs: self.length_epochs,
                ..both
            },
            observe: self.observe.clone(),
            predict: self.predict.clone(),
            samples: self.samples,
            observations: self.observations.clone(),
            pooling: self.pooling,
        }
    }

    /// Config file (or `fallback`, usually an upstream manifest) overlaid
    /// with the flags.
    pub fn resolve(&self, fallback: Option<PathBuf>) -> crate::Result<RunConfig> {
        let base = match self.config.clone().or_else(|| fallback.filter(|p| p.exists())) {
            Some(path) => ConfigLayer::load(&path)?,
            None => ConfigLayer::default(),
        };
        base.merge(&self.layer()).resolve()
    }
}

/// Process exit status for an error: 1 usage/config, 2 data, 3 numeric.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 1,
        Error::Numeric(_) => 3,
        _ => 2,
    }
}

pub fn run(cli: Cli) -> crate::Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Synth {
            spec,
            out,
            seed,
            test_fraction,
        } => cmd_synth(&SynthArgs {
            spec,
            out,
            seed,
            test_fraction,
        }),
        Command::IngestCheck { overrides, split } => {
            let config = overrides.resolve(None)?;
            let splits = if split.is_empty() {
                vec![config.train_split.clone(), config.test_split.clone()]
            } else {
                split
            };
            for report in cmd_ingest_check(&config, &splits)? {
                println!("{report}");
            }
            Ok(())
        }
        Command::Train { overrides, out } => {
            let config = overrides.resolve(None)?;
            let log = cmd_train(&TrainArgs { config, out })?;
            for line in log {
                eprintln!("{line}");
            }
            Ok(())
        }
        Command::Predict { overrides, models, out } => {
            let config = overrides.resolve(Some(models.join("manifest.json")))?;
            cmd_predict(&PredictArgs { config, models, out })
        }
        Command::Eval {
            overrides,
            predictions,
            models,
            out,
        } => {
            let config = overrides.resolve(predictions.first().map(|p| p.join("manifest.json")))?;
            let table = cmd_eval(&EvalArgs {
                config,
                predictions,
                models,
                out,
            })?;
            print!("{}", table.to_csv()?);
            Ok(())
        }
    }
}
