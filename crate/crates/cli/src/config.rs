//! Flat `key = value` run configuration.
//!
//! ```text
//! # comments start with '#'
//! ema.alpha = 0.7
//! policy.kind = threshold
//! ```
//!
//! Values are resolved as defaults, then the config file, then `--set`
//! overrides. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::Path;

use bls_core::pruning::{CycleSchedule, PrunePolicy, WindowProgress};
use bls_core::score::{EmaConfig, InitPolicy};
use bls_core::spectral::{Detrend, WelchConfig, Window};
use bls_core::trainer::{Arch, DatasetSpec, ModelSpec, TrainConfig, DEFAULT_SWEEP_ALPHAS};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("{origin}: expected 'key = value', got '{line}'")]
    Syntax { origin: String, line: String },
    #[error("invalid value '{value}' for {key}: {reason}")]
    Value {
        key: String,
        value: String,
        reason: String,
    },
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    /// Errors that stem from how the tool was invoked rather than from data.
    pub fn is_usage(&self) -> bool {
        matches!(self, ConfigError::UnknownKey(_) | ConfigError::Syntax { .. })
    }
}

/// Every accepted key with its default and a one-line description.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("dataset.n_samples", "2000", "total synthetic samples (80% train, 20% test)"),
    ("dataset.n_features", "20", "feature dimension"),
    ("dataset.n_classes", "5", "number of Gaussian clusters"),
    ("dataset.cluster_spread", "2.0", "within-cluster standard deviation"),
    ("dataset.label_noise", "0.1", "fraction of training labels flipped"),
    ("dataset.seed", "0", "data generation seed"),
    ("model.arch", "softmax", "softmax | mlp"),
    ("model.hidden", "32", "hidden width when model.arch = mlp"),
    ("model.init_seed", "0", "parameter initialization seed"),
    ("train.epochs", "50", "training epochs"),
    ("train.batch_size", "32", "minibatch size"),
    ("train.learning_rate", "0.1", "SGD step size"),
    ("train.seed", "0", "seed for batch order and pruning draws"),
    ("train.instrument", "false", "log per-sample losses with every step"),
    ("ema.alpha", "0.7", "decay factor in [0, 1]; 0 keeps only the last batch loss"),
    ("ema.init", "first_batch", "first_batch | first_observed | fixed"),
    ("ema.init_value", "0.0", "starting score when ema.init = fixed"),
    ("policy.kind", "threshold", "full | threshold | window"),
    ("policy.prune_prob", "0.6", "threshold: chance of skipping a below-mean sample"),
    ("policy.rescale", "true", "threshold: upweight kept below-mean samples"),
    ("policy.anneal_tail", "0.125", "threshold: final fraction of epochs without pruning"),
    ("policy.keep_fraction", "0.7", "window: fraction of samples kept"),
    ("policy.progress", "easy_to_hard", "window: easy_to_hard | static"),
    ("schedule.cycle_len", "1", "epochs between pruning decisions"),
    ("welch.segment_len", "32", "Welch segment length"),
    ("welch.overlap", "16", "overlap between Welch segments"),
    ("welch.window", "hann", "hann | rect"),
    ("welch.detrend", "mean", "mean | none"),
    ("io.log", "", "batch-loss log path (written by train, read by replay and psd)"),
    ("io.out_dir", ".", "directory for CSV outputs"),
    ("replay.n_samples", "0", "score table size; 0 infers it from the log"),
    ("replay.cycle", "1", "cycle index the replayed decisions are made for"),
    ("sweep.alphas", "0.3,0.5,0.7,0.8,0.9,1.0", "comma-separated decay factors"),
    ("filter.points", "1000", "frequency grid size over [0, pi]"),
];

/// Short names accepted in place of full keys.
const ALIASES: &[(&str, &str)] = &[("alpha", "ema.alpha")];

fn canonical(key: &str) -> Result<&'static str, ConfigError> {
    let key = ALIASES
        .iter()
        .find(|(a, _)| *a == key)
        .map_or(key, |(_, k)| k);
    KEYS.iter()
        .map(|(k, _, _)| *k)
        .find(|k| *k == key)
        .ok_or_else(|| ConfigError::UnknownKey(key.to_string()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|(k, v, _)| (*k, v.to_string())).collect(),
        }
    }
}

fn split_assignment(line: &str) -> Option<(&str, &str)> {
    let (k, v) = line.split_once('=')?;
    let k = k.trim();
    (!k.is_empty()).then_some((k, v.trim()))
}

impl RunConfig {
    /// Defaults, then `file`, then `overrides` (each `key=value`).
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                path: path.display().to_string(),
                source,
            })?;
            cfg.apply_text(&text, &path.display().to_string())?;
        }
        for o in overrides {
            let (k, v) = split_assignment(o).ok_or_else(|| ConfigError::Syntax {
                origin: "--set".into(),
                line: o.clone(),
            })?;
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = split_assignment(line).ok_or_else(|| ConfigError::Syntax {
                origin: format!("{origin}:{}", n + 1),
                line: raw.to_string(),
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = canonical(key)?;
        self.values.insert(key, value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .unwrap_or_else(|| panic!("key {key} missing from KEYS"))
    }

    fn bad(&self, key: &str, reason: impl ToString) -> ConfigError {
        ConfigError::Value {
            key: key.to_string(),
            value: self.get(key).to_string(),
            reason: reason.to_string(),
        }
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key).parse::<T>().map_err(|e| self.bad(key, e))
    }

    fn choice<T: Copy>(&self, key: &str, options: &[(&str, T)]) -> Result<T, ConfigError> {
        let v = self.get(key);
        options
            .iter()
            .find(|(name, _)| *name == v)
            .map(|(_, t)| *t)
            .ok_or_else(|| {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                self.bad(key, format!("expected one of {}", names.join(", ")))
            })
    }

    pub fn dataset(&self) -> Result<DatasetSpec, ConfigError> {
        Ok(DatasetSpec {
            n_samples: self.parse("dataset.n_samples")?,
            n_features: self.parse("dataset.n_features")?,
            n_classes: self.parse("dataset.n_classes")?,
            cluster_spread: self.parse("dataset.cluster_spread")?,
            label_noise: self.parse("dataset.label_noise")?,
            seed: self.parse("dataset.seed")?,
        })
    }

    pub fn model(&self) -> Result<ModelSpec, ConfigError> {
        let arch = match self.get("model.arch") {
            "softmax" => Arch::Softmax,
            "mlp" => Arch::Mlp {
                hidden: self.parse("model.hidden")?,
            },
            _ => return Err(self.bad("model.arch", "expected one of softmax, mlp")),
        };
        Ok(ModelSpec {
            arch,
            init_seed: self.parse("model.init_seed")?,
        })
    }

    pub fn ema(&self) -> Result<EmaConfig, ConfigError> {
        let alpha: f64 = self.parse("ema.alpha")?;
        if alpha == 0.0 {
            return Ok(EmaConfig::last_loss());
        }
        let init = match self.get("ema.init") {
            "first_batch" => InitPolicy::FirstBatchLoss,
            "first_observed" => InitPolicy::FirstObservedBatchLoss,
            "fixed" => InitPolicy::FixedValue(self.parse("ema.init_value")?),
            _ => {
                return Err(self.bad("ema.init", "expected one of first_batch, first_observed, fixed"))
            }
        };
        EmaConfig::new(alpha, init).map_err(|e| self.bad("ema.alpha", e))
    }

    pub fn policy(&self) -> Result<PrunePolicy, ConfigError> {
        let policy = match self.get("policy.kind") {
            "full" => PrunePolicy::Full,
            "threshold" => PrunePolicy::ThresholdSoftPrune {
                prune_prob: self.parse("policy.prune_prob")?,
                rescale: self.parse("policy.rescale")?,
                anneal_tail: self.parse("policy.anneal_tail")?,
            },
            "window" => PrunePolicy::WindowSelect {
                keep_fraction: self.parse("policy.keep_fraction")?,
                progress: self.choice(
                    "policy.progress",
                    &[
                        ("easy_to_hard", WindowProgress::EasyToHard),
                        ("static", WindowProgress::Static),
                    ],
                )?,
            },
            _ => return Err(self.bad("policy.kind", "expected one of full, threshold, window")),
        };
        policy.validate().map_err(|e| self.bad("policy.kind", e))?;
        Ok(policy)
    }

    pub fn train(&self) -> Result<TrainConfig, ConfigError> {
        Ok(TrainConfig {
            epochs: self.parse("train.epochs")?,
            batch_size: self.parse("train.batch_size")?,
            learning_rate: self.parse("train.learning_rate")?,
            ema: self.ema()?,
            policy: self.policy()?,
            cycle_len_epochs: self.parse("schedule.cycle_len")?,
            instrument_per_sample: self.parse("train.instrument")?,
            seed: self.parse("train.seed")?,
        })
    }

    pub fn schedule(&self) -> Result<CycleSchedule, ConfigError> {
        CycleSchedule::new(self.parse("schedule.cycle_len")?, self.parse("train.epochs")?)
            .map_err(|e| self.bad("schedule.cycle_len", e))
    }

    pub fn welch(&self) -> Result<WelchConfig, ConfigError> {
        let window = self.choice("welch.window", &[("hann", Window::Hann), ("rect", Window::Rectangular)])?;
        let detrend = self.choice(
            "welch.detrend",
            &[("mean", Detrend::MeanRemoval), ("none", Detrend::None)],
        )?;
        WelchConfig::new(
            self.parse("welch.segment_len")?,
            self.parse("welch.overlap")?,
            window,
            detrend,
        )
        .map_err(|e| self.bad("welch.segment_len", e))
    }

    pub fn sweep_alphas(&self) -> Result<Vec<f64>, ConfigError> {
        let raw = self.get("sweep.alphas").trim();
        if raw.is_empty() {
            return Ok(DEFAULT_SWEEP_ALPHAS.to_vec());
        }
        raw.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| self.bad("sweep.alphas", e)))
            .collect()
    }

    /// `None` when the key is empty.
    pub fn path(&self, key: &str) -> Option<&Path> {
        let v = self.get(key);
        (!v.is_empty()).then(|| Path::new(v))
    }
}
