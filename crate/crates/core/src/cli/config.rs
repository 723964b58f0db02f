//! Run configuration: a TOML file, optionally overridden flag by flag.
//!
//! ```toml
//! dataset = "data/synthetic"
//! train_split = "train"
//! test_split = "test"
//! model = "rnn"            # or "ngram-2", "ngram-3", "ngram-4"
//! seed = 0
//! observe = [0.2, 0.3]
//! predict = [0.1, 0.2, 0.3, 0.5]
//! samples = 25
//! observations = "groundtruth"   # or a directory of frame-label files
//! pooling = "pooled"             # or "per-video"
//!
//! [action]
//! epochs = 60
//! hidden_size = 128
//!
//! [length]
//! epochs = 30
//! ```
//!
//! Every key is optional. `[action]` and `[length]` accept `epochs`,
//! `batch_size`, `learning_rate`, `dropout`, `hidden_size`, `seed` and
//! `grad_clip`; a table-level seed falls back to the top-level one.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Pooling;
use crate::model::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Rnn,
    NGram(usize),
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "rnn" {
            return Ok(ModelKind::Rnn);
        }
        match s.strip_prefix("ngram-").and_then(|n| n.parse().ok()) {
            Some(n) if (1..=8).contains(&n) => Ok(ModelKind::NGram(n)),
            _ => Err(Error::Config(format!(
                "unknown model {s:?}; expected rnn or ngram-N"
            ))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Rnn => write!(f, "rnn"),
            ModelKind::NGram(n) => write!(f, "ngram-{n}"),
        }
    }
}

/// Where the observed part of each test video comes from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ObservationSource {
    GroundTruth,
    /// Directory of `<video>.txt` frame labels, e.g. a segmenter's output.
    Predicted(PathBuf),
}

impl FromStr for ObservationSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "" => Err(Error::Config("empty observation source".into())),
            "groundtruth" => Ok(ObservationSource::GroundTruth),
            dir => Ok(ObservationSource::Predicted(PathBuf::from(dir))),
        }
    }
}

impl fmt::Display for ObservationSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObservationSource::GroundTruth => write!(f, "groundtruth"),
            ObservationSource::Predicted(p) => write!(f, "{}", p.display()),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub dropout: Option<f64>,
    pub hidden_size: Option<usize>,
    pub seed: Option<u64>,
    pub grad_clip: Option<f64>,
}

impl TrainOverrides {
    fn resolve(&self, base: TrainConfig, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs.unwrap_or(base.epochs),
            batch_size: self.batch_size.unwrap_or(base.batch_size),
            learning_rate: self.learning_rate.unwrap_or(base.learning_rate),
            dropout: self.dropout.unwrap_or(base.dropout),
            hidden_size: self.hidden_size.unwrap_or(base.hidden_size),
            seed: self.seed.unwrap_or(seed),
            grad_clip: self.grad_clip.or(base.grad_clip),
        }
    }

    fn merge(&mut self, other: &TrainOverrides) {
        macro_rules! take {
            ($($f:ident),*) => { $(if other.$f.is_some() { self.$f = other.$f; })* };
        }
        take!(epochs, batch_size, learning_rate, dropout, hidden_size, seed, grad_clip);
    }
}

/// A partially specified configuration, as read from a file or the flags.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub dataset: Option<PathBuf>,
    pub train_split: Option<String>,
    pub test_split: Option<String>,
    pub model: Option<String>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub action: TrainOverrides,
    #[serde(default)]
    pub length: TrainOverrides,
    pub observe: Option<Vec<f64>>,
    pub predict: Option<Vec<f64>>,
    pub samples: Option<usize>,
    pub observations: Option<String>,
    pub pooling: Option<Pooling>,
}

impl ConfigLayer {
    /// Reads a TOML config, or the effective config of a JSON run manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            let manifest: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let config = manifest
                .get("config")
                .cloned()
                .ok_or_else(|| Error::Config(format!("{}: no config section", path.display())))?;
            serde_json::from_value(config).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        }
    }

    /// Keys set in `over` replace those in `self`.
    pub fn merge(mut self, over: &ConfigLayer) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $(if over.$f.is_some() { self.$f = over.$f.clone(); })* };
        }
        take!(dataset, train_split, test_split, model, seed, observe, predict, samples, observations, pooling);
        if let Some(seed) = over.seed {
            // a new top-level seed also reseeds both networks
            self.action.seed = Some(seed);
            self.length.seed = Some(seed);
        }
        self.action.merge(&over.action);
        self.length.merge(&over.length);
        self
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        let seed = self.seed.unwrap_or(0);
        let config = RunConfig {
            dataset: self.dataset.clone(),
            train_split: self.train_split.clone().unwrap_or_else(|| "train".into()),
            test_split: self.test_split.clone().unwrap_or_else(|| "test".into()),
            model: self.model.as_deref().unwrap_or("rnn").parse()?,
            seed,
            action: self.action.resolve(TrainConfig::action_defaults(), seed),
            length: self.length.resolve(TrainConfig::length_defaults(), seed),
            observe: self.observe.clone().unwrap_or_else(|| vec![0.2, 0.3]),
            predict: self.predict.clone().unwrap_or_else(|| vec![0.1, 0.2, 0.3, 0.5]),
            samples: self.samples.unwrap_or(25),
            observations: self.observations.as_deref().unwrap_or("groundtruth").parse()?,
            pooling: self.pooling.unwrap_or_default(),
        };
        config.validate()?;
        Ok(config)
    }
}

/// Fully resolved configuration, echoed into every manifest.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub train_split: String,
    pub test_split: String,
    pub model: ModelKind,
    pub seed: u64,
    pub action: TrainConfig,
    pub length: TrainConfig,
    pub observe: Vec<f64>,
    pub predict: Vec<f64>,
    pub samples: usize,
    pub observations: ObservationSource,
    pub pooling: Pooling,
}

#[derive(Serialize)]
struct RunConfigRepr<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    dataset: Option<&'a Path>,
    train_split: &'a str,
    test_split: &'a str,
    model: String,
    seed: u64,
    action: &'a TrainConfig,
    length: &'a TrainConfig,
    observe: &'a [f64],
    predict: &'a [f64],
    samples: usize,
    observations: String,
    pooling: Pooling,
}

impl Serialize for RunConfig {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RunConfigRepr {
            dataset: self.dataset.as_deref(),
            train_split: &self.train_split,
            test_split: &self.test_split,
            model: self.model.to_string(),
            seed: self.seed,
            action: &self.action,
            length: &self.length,
            observe: &self.observe,
            predict: &self.predict,
            samples: self.samples,
            observations: self.observations.to_string(),
            pooling: self.pooling,
        }
        .serialize(s)
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |x: f64| x > 0.0 && x < 1.0;
        if self.observe.is_empty() || self.predict.is_empty() {
            return Err(Error::Config("observe and predict fractions must be non-empty".into()));
        }
        if let Some(x) = self.observe.iter().chain(&self.predict).find(|&&x| !in_unit(x)) {
            return Err(Error::Config(format!("fraction {x} outside (0, 1)")));
        }
        for &o in &self.observe {
            for &p in &self.predict {
                if o + p > 1.0 + 1e-9 {
                    return Err(Error::Config(format!("observe {o} + predict {p} exceeds the video")));
                }
            }
        }
        if self.samples == 0 {
            return Err(Error::Config("samples must be at least 1".into()));
        }
        Ok(())
    }

    pub fn dataset(&self) -> Result<&Path> {
        self.dataset
            .as_deref()
            .ok_or_else(|| Error::Config("no dataset given (set `dataset` or pass --dataset)".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = ConfigLayer::default().resolve().unwrap();
        assert_eq!(c.model, ModelKind::Rnn);
        assert_eq!(c.action, TrainConfig::action_defaults());
        assert_eq!(c.length, TrainConfig::length_defaults());
        assert_eq!((c.action.epochs, c.length.epochs), (60, 30));
        assert_eq!((c.action.batch_size, c.action.learning_rate, c.action.dropout), (32, 1e-3, 0.5));
        assert_eq!(c.observe, [0.2, 0.3]);
        assert_eq!(c.predict, [0.1, 0.2, 0.3, 0.5]);
        assert_eq!(c.samples, 25);
        assert_eq!(c.observations, ObservationSource::GroundTruth);
        assert_eq!(c.pooling, Pooling::Pooled);
    }

    #[test]
    fn flags_override_file() {
        let file: ConfigLayer = toml::from_str(
            "model = \"ngram-3\"\nseed = 4\n[action]\nepochs = 5\nhidden_size = 16\n[length]\nseed = 9\n",
        )
        .unwrap();
        let c = file.resolve().unwrap();
        assert_eq!(c.model, ModelKind::NGram(3));
        assert_eq!((c.action.epochs, c.action.hidden_size, c.action.seed), (5, 16, 4));
        assert_eq!((c.length.epochs, c.length.seed), (30, 9));

        let flags = ConfigLayer {
            seed: Some(11),
            action: TrainOverrides {
                epochs: Some(2),
                ..Default::default()
            },
            ..Default::default()
        };
        let merged = file.merge(&flags).resolve().unwrap();
        assert_eq!((merged.action.epochs, merged.action.seed, merged.length.seed), (2, 11, 11));
        assert_eq!(merged.action.hidden_size, 16);
    }

    #[test]
    fn manifest_config_reads_back() {
        let c = ConfigLayer {
            dataset: Some("d".into()),
            model: Some("ngram-2".into()),
            observations: Some("preds/seg".into()),
            pooling: Some(Pooling::PerVideo),
            ..Default::default()
        }
        .resolve()
        .unwrap();
        let json = serde_json::to_value(&c).unwrap();
        let back: ConfigLayer = serde_json::from_value(json).unwrap();
        assert_eq!(back.resolve().unwrap(), c);
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "model = \"lstm\"",
            "observe = [0.0]",
            "observe = [0.6]\npredict = [0.5]",
            "samples = 0",
            "unknown = 1",
            "[action]\nlayers = 2",
        ] {
            let layer = toml::from_str::<ConfigLayer>(text);
            assert!(layer.map_or(true, |l| l.resolve().is_err()), "{text}");
        }
    }
}
