//! Flat `section.key = value` configuration files.
//!
//! ```text
//! # comment
//! model.n = 2000
//! noise.alpha = 1.9
//! ```
//!
//! Every key must be consumed by the reader; leftovers are reported as
//! unknown keys so typos do not silently fall back to defaults.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use stablesgd::data::{self, Dataset};
use stablesgd::net::{Activation, SecondLayer};
use stablesgd::stable::{StableSpec, VectorType};
use stablesgd::trainer::{InitDistribution, InitSpec, TrainConfig};

/// Environment variable naming the data root; relative dataset paths resolve against it.
pub const DATA_ENV: &str = "STABLESGD_DATA";

pub fn data_root() -> PathBuf {
    std::env::var_os(DATA_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub source_name: String,
    pub key: Option<String>,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.source_name)?;
        if let Some(line) = self.line {
            write!(f, ":{line}")?;
        }
        if let Some(key) = &self.key {
            write!(f, ": {key}")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Parsed key/value pairs with the line each key came from.
#[derive(Debug, Clone)]
pub struct KeyValues {
    source_name: String,
    entries: BTreeMap<String, (usize, String)>,
    used: RefCell<BTreeSet<String>>,
}

impl KeyValues {
    pub fn parse(text: &str, source_name: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| ConfigError {
                source_name: source_name.into(),
                key: None,
                line: Some(no + 1),
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `section.key = value`, found {line:?}")))?;
            let key = key.trim();
            let parts: Vec<&str> = key.split('.').collect();
            if parts.len() != 2 || parts.iter().any(|p| p.is_empty()) {
                return Err(err(format!("key {key:?} must have the form section.key")));
            }
            if entries
                .insert(key.to_string(), (no + 1, value.trim().to_string()))
                .is_some()
            {
                return Err(err(format!("duplicate key {key}")));
            }
        }
        Ok(KeyValues {
            source_name: source_name.into(),
            entries,
            used: RefCell::new(BTreeSet::new()),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            source_name: path.display().to_string(),
            key: None,
            line: None,
            message: e.to_string(),
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn error(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            source_name: self.source_name.clone(),
            key: Some(key.into()),
            line: self.entries.get(key).map(|(l, _)| *l),
            message: message.into(),
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.used.borrow_mut().insert(key.to_string());
        self.entries
            .get(key)
            .map(|(_, v)| v.as_str())
            .filter(|v| !v.is_empty())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|e| self.error(key, format!("invalid value {v:?}: {e}"))))
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.get(key)?.ok_or_else(|| self.error(key, "missing required key"))
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(|item| {
                        let item = item.trim();
                        item.parse::<T>()
                            .map_err(|e| self.error(key, format!("invalid list item {item:?}: {e}")))
                    })
                    .collect()
            })
            .transpose()
    }

    /// Fails on any key that was never read.
    pub fn finish(&self) -> Result<(), ConfigError> {
        let used = self.used.borrow();
        match self.entries.keys().find(|k| !used.contains(*k)) {
            Some(k) => Err(self.error(k, "unknown key")),
            None => Ok(()),
        }
    }

    /// Sorted `key = value` lines, the canonical form hashed into manifests.
    pub fn canonical(&self) -> String {
        self.entries
            .iter()
            .map(|(k, (_, v))| format!("{k} = {v}\n"))
            .collect()
    }
}

/// Where a run's data comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Ecg5000 { dir: PathBuf, split_seed: u64 },
    Mnist { dir: PathBuf },
    Cifar10 { dir: PathBuf },
    Synthetic { d: usize, classes: usize, per_class: usize, test_per_class: usize, separation: f64, seed: u64 },
}

impl DatasetSpec {
    fn from_keys(kv: &KeyValues) -> Result<Self, ConfigError> {
        let name: String = kv.require("dataset.name")?;
        let dir = |default: &str| -> Result<PathBuf, ConfigError> {
            let p = PathBuf::from(kv.get_or("dataset.path", default.to_string())?);
            Ok(if p.is_absolute() { p } else { data_root().join(p) })
        };
        Ok(match name.as_str() {
            "ecg5000" => DatasetSpec::Ecg5000 {
                dir: dir("ecg5000")?,
                split_seed: kv.get_or("dataset.split_seed", 0)?,
            },
            "mnist" => DatasetSpec::Mnist { dir: dir("mnist")? },
            "cifar10" => DatasetSpec::Cifar10 { dir: dir("cifar10")? },
            "synthetic" => {
                let spec = DatasetSpec::Synthetic {
                    d: kv.get_or("dataset.d", 2)?,
                    classes: kv.get_or("dataset.classes", 2)?,
                    per_class: kv.get_or("dataset.per_class", 50)?,
                    test_per_class: kv.get_or("dataset.test_per_class", 50)?,
                    separation: kv.get_or("dataset.separation", 10.0)?,
                    seed: kv.get_or("dataset.seed", 0)?,
                };
                if let DatasetSpec::Synthetic { per_class: 0, .. } | DatasetSpec::Synthetic { test_per_class: 0, .. } = spec {
                    return Err(kv.error("dataset.per_class", "per-class counts must be at least 1"));
                }
                spec
            }
            other => {
                return Err(kv.error(
                    "dataset.name",
                    format!("unknown dataset {other:?} (expected ecg5000, mnist, cifar10 or synthetic)"),
                ))
            }
        })
    }

    /// Loads `(train, test)`.
    pub fn load(&self) -> stablesgd::Result<(Dataset, Dataset)> {
        match self {
            DatasetSpec::Ecg5000 { dir, split_seed } => data::load_ecg5000(&data::ecg5000_files(dir)?, *split_seed),
            DatasetSpec::Mnist { dir } => Ok((
                data::load_mnist_idx(&dir.join("train-images-idx3-ubyte"), &dir.join("train-labels-idx1-ubyte"))?,
                data::load_mnist_idx(&dir.join("t10k-images-idx3-ubyte"), &dir.join("t10k-labels-idx1-ubyte"))?,
            )),
            DatasetSpec::Cifar10 { dir } => {
                let train: Vec<PathBuf> = (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect();
                Ok((data::load_cifar10(&train)?, data::load_cifar10(&[dir.join("test_batch.bin")])?))
            }
            &DatasetSpec::Synthetic { d, classes, per_class, test_per_class, separation, seed } => Ok((
                data::synthetic_mixture(d, classes, per_class, separation, seed)?,
                data::synthetic_mixture(d, classes, test_per_class, separation, seed.wrapping_add(1))?,
            )),
        }
    }
}

/// Noise block shared by both config kinds. `noise.sigma = 0` (the default) means no noise.
pub fn noise_from_keys(kv: &KeyValues, default_type: VectorType, default_sigma: f64) -> Result<StableSpec, ConfigError> {
    let alpha: f64 = kv.get_or("noise.alpha", 2.0)?;
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(kv.error("noise.alpha", format!("alpha={alpha} is outside the stability range (0, 2]")));
    }
    let vtype: VectorType = kv.get_or("noise.type", default_type)?;
    let sigma: f64 = kv.get_or("noise.sigma", default_sigma)?;
    StableSpec::new(alpha, vtype, sigma).map_err(|e| kv.error("noise.sigma", e.to_string()))
}

/// Declarative description of a repeated training experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub n: usize,
    pub train: TrainConfig,
    pub repeat: usize,
    pub epsilon: f64,
    pub output: PathBuf,
    /// Sorted `key = value` text of the source file.
    pub canonical: String,
}

impl ExperimentConfig {
    pub fn from_keys(kv: &KeyValues) -> Result<Self, ConfigError> {
        let dataset = DatasetSpec::from_keys(kv)?;
        let n: usize = kv.require("model.n")?;
        if n == 0 {
            return Err(kv.error("model.n", "network width must be at least 1"));
        }
        let second_layer: SecondLayer = kv.get_or("model.second_layer", SecondLayer::Trainable)?;
        let activation: Activation = kv.get_or("model.activation", Activation::Relu)?;
        let bias: bool = kv.get_or("model.bias", true)?;
        let init = InitSpec {
            distribution: kv.get_or("init.distribution", InitDistributionKey(InitDistribution::Gaussian))?.0,
            scale: kv.get("init.scale")?,
            second_layer_scale: kv.get_or("init.second_layer_scale", 1.0)?,
        };
        let train = TrainConfig {
            eta: kv.require("train.eta")?,
            batch_size: kv.require("train.batch_size")?,
            epochs: kv.require("train.epochs")?,
            noise: noise_from_keys(kv, VectorType::TypeI, 0.0)?,
            seed: kv.get_or("run.seed", 0)?,
            second_layer,
            activation,
            bias,
            init,
            noise_on_second_layer: kv.get_or("noise.second_layer", true)?,
            target_train_acc: kv.get("train.target_train_acc")?,
            eval_every: kv.get_or("train.eval_every", 1)?,
        };
        train.validate().map_err(|e| kv.error("train", e.to_string()))?;
        let repeat: usize = kv.get_or("run.repeat", 1)?;
        if repeat == 0 {
            return Err(kv.error("run.repeat", "repeat must be at least 1"));
        }
        let epsilon: f64 = kv.get_or("prune.epsilon", 0.1)?;
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(kv.error("prune.epsilon", format!("epsilon={epsilon} must lie in (0, 1)")));
        }
        let output = PathBuf::from(kv.get_or("run.output", "results".to_string())?);
        kv.finish()?;
        Ok(ExperimentConfig {
            dataset,
            n,
            train,
            repeat,
            epsilon,
            output,
            canonical: kv.canonical(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_keys(&KeyValues::load(path)?)
    }

    /// Seeds of the repeated runs: `run.seed`, `run.seed + 1`, ...
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.repeat as u64).map(|r| self.train.seed + r).collect()
    }
}

struct InitDistributionKey(InitDistribution);

impl FromStr for InitDistributionKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(InitDistributionKey(InitDistribution::Gaussian)),
            "uniform" => Ok(InitDistributionKey(InitDistribution::Uniform)),
            _ => Err("expected gaussian or uniform".into()),
        }
    }
}
