//! Experiment harness: configuration, seeded multi-run training with
//! metrics emission, and summarising run directories into comparison
//! tables.

mod metrics;
mod runner;
mod summary;

pub use metrics::{comparable_body, MetricsFile, MetricsRecord, RunStatus};
pub use runner::{run_experiment, ExperimentOutcome, RunOutcome};
pub use summary::{summarise, Summary, SummaryRow};

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::DataError;
use crate::nn::NnError;
use crate::optim::{HyperParams, OptimError, OptimizerKind, TransformKind};

#[derive(Debug)]
pub enum ExpError {
    Config(String),
    Data(DataError),
    Nn(NnError),
    Optim(OptimError),
    Io(std::io::Error),
    Parse(String),
}

impl fmt::Display for ExpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExpError::Config(msg) => write!(f, "configuration error: {msg}"),
            ExpError::Data(e) => write!(f, "dataset error: {e}"),
            ExpError::Nn(e) => write!(f, "model error: {e}"),
            ExpError::Optim(e) => write!(f, "optimiser error: {e}"),
            ExpError::Io(e) => write!(f, "i/o error: {e}"),
            ExpError::Parse(msg) => write!(f, "parse error: {msg}"),
        }
    }
}

impl std::error::Error for ExpError {}

impl From<DataError> for ExpError {
    fn from(e: DataError) -> Self {
        ExpError::Data(e)
    }
}
impl From<NnError> for ExpError {
    fn from(e: NnError) -> Self {
        ExpError::Nn(e)
    }
}
impl From<OptimError> for ExpError {
    fn from(e: OptimError) -> Self {
        ExpError::Optim(e)
    }
}
impl From<std::io::Error> for ExpError {
    fn from(e: std::io::Error) -> Self {
        ExpError::Io(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn label(&self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetConfig {
    Cifar10 {
        dir: PathBuf,
        /// Use only the first n training images.
        #[serde(default)]
        train_subset: Option<usize>,
    },
    Synthetic {
        classes: usize,
        n_train_per_class: usize,
        n_test_per_class: usize,
        data_seed: u64,
        separation: f64,
    },
}

/// The effective experiment configuration; serialised verbatim into every
/// metrics file header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: String,
    pub dataset: DatasetConfig,
    pub optimiser: OptimizerKind,
    pub transform: TransformKind,
    pub skip_dense: bool,
    pub hyper: HyperParams,
    pub decay_before_transform: bool,
    pub batch_size: usize,
    pub epochs: usize,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub precision: Precision,
}

impl Default for RunConfig {
    /// The reference protocol: mini-batch 1024, lr 1e-2, momentum 0.9,
    /// weight decay 5e-4, 100 epochs.
    fn default() -> Self {
        Self {
            model: "basiccnn".into(),
            dataset: DatasetConfig::Cifar10 {
                dir: PathBuf::from("data/cifar-10-batches-bin"),
                train_subset: None,
            },
            optimiser: OptimizerKind::Sgdm,
            transform: TransformKind::Identity,
            skip_dense: false,
            hyper: HyperParams::default(),
            decay_before_transform: false,
            batch_size: 1024,
            epochs: 100,
            seeds: vec![1],
            out_dir: PathBuf::from("runs"),
            precision: Precision::F32,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ExpError> {
        self.hyper.validate().map_err(ExpError::Optim)?;
        if self.batch_size == 0 {
            return Err(ExpError::Config("batch_size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(ExpError::Config("epochs must be >= 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(ExpError::Config("at least one seed required".into()));
        }
        Ok(())
    }

    /// Identifier shared by all seeds of this configuration.
    pub fn config_label(&self) -> String {
        let mut label = format!("{}-{}", self.optimiser.label(), self.transform.label());
        if self.skip_dense {
            label.push_str("-convonly");
        }
        label
    }

    pub fn run_id(&self, seed: u64) -> String {
        format!("{}_s{}", self.config_label(), seed)
    }

    /// Canonical single-line JSON of the effective config.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, ExpError> {
        serde_json::from_str(text).map_err(|e| ExpError::Parse(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_carries_the_protocol_hyper_params() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.batch_size, 1024);
        assert_eq!(cfg.hyper.lr, 1e-2);
        assert_eq!(cfg.hyper.momentum, 0.9);
        assert_eq!(cfg.hyper.weight_decay, 5e-4);
        assert_eq!(cfg.epochs, 100);
        cfg.validate().unwrap();
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = RunConfig {
            transform: TransformKind::Orthogonalise,
            seeds: vec![1, 2, 3],
            ..RunConfig::default()
        };
        let json = cfg.canonical_json();
        let back = RunConfig::from_json(&json).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(json, back.canonical_json());
    }

    #[test]
    fn run_ids_are_config_plus_seed() {
        let cfg = RunConfig {
            transform: TransformKind::Orthogonalise,
            skip_dense: true,
            ..RunConfig::default()
        };
        assert_eq!(cfg.run_id(7), "sgdm-orth-convonly_s7");
    }
}
