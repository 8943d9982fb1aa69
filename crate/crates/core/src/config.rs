//! Run configuration files and the record of resolved parameters.
//!
//! A config file is TOML. Every key is optional; values given on the command
//! line take precedence.
//!
//! ```toml
//! cube = "data/cube.vcube"
//! threads = 4
//!
//! [experiment]
//! target = "tmp"
//! inputs = ["pet", "tmp", "vap"]
//! c_t = 0.5
//!
//! [experiment.train]
//! epochs = 10
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::catalog::VariableId;
use crate::encoder::{Knockout, ScalingMode};
use crate::error::{Error, Result};
use crate::experiment::{ActivationSetting, ExperimentSpec, PrecisionSetting, Target};
use crate::window::Thresholds;

/// Parses a setting written the way config files spell it, such as
/// `"seasonal_only"` or `"f64"`.
pub fn parse_setting<T: DeserializeOwned>(s: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| Error::Validation(format!("unrecognized value '{s}'")))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOverrides {
    pub epochs: Option<usize>,
    pub base_lr: Option<f64>,
    pub decay_gamma: Option<f64>,
    pub batch_size: Option<usize>,
    pub momentum: Option<f64>,
    pub precision: Option<PrecisionSetting>,
    pub conv1_filters: Option<usize>,
    pub conv2_filters: Option<usize>,
    pub hidden: Option<usize>,
    pub activation: Option<ActivationSetting>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentOverrides {
    pub id: Option<u32>,
    pub target: Option<Target>,
    pub inputs: Option<Vec<VariableId>>,
    pub knockout: Option<Knockout>,
    pub training_years: Option<usize>,
    pub labeling_years: Option<usize>,
    pub c_t: Option<f64>,
    pub seed: Option<u64>,
    pub scaling: Option<ScalingMode>,
    pub quantize: Option<bool>,
    pub shuffle_labels: Option<bool>,
    pub thresholds: Option<[f64; 4]>,
    pub train: TrainOverrides,
}

macro_rules! set {
    ($dst:expr, $src:expr; $($field:ident),*) => {
        $(if let Some(v) = $src.$field.clone() { $dst.$field = v; })*
    };
}

macro_rules! replace {
    ($dst:expr, $src:expr; $($field:ident),*) => {
        $(if $src.$field.is_some() { $dst.$field = $src.$field.clone(); })*
    };
}

impl ExperimentOverrides {
    /// Copies every present value onto `spec`.
    pub fn apply(&self, spec: &mut ExperimentSpec) {
        set!(
            spec, self;
            id,
            target,
            inputs,
            knockout,
            training_years,
            labeling_years,
            c_t,
            seed,
            scaling,
            quantize,
            shuffle_labels
        );
        if let Some(t) = self.thresholds {
            spec.thresholds = Some(Thresholds(t));
        }
        let t = &self.train;
        set!(
            spec.train, t;
            epochs,
            base_lr,
            decay_gamma,
            batch_size,
            momentum,
            precision,
            conv1_filters,
            conv2_filters,
            hidden,
            activation
        );
    }

    /// Fields set in `other` replace those set here.
    pub fn merge(&mut self, other: &ExperimentOverrides) {
        replace!(
            self, other;
            id,
            target,
            inputs,
            knockout,
            training_years,
            labeling_years,
            c_t,
            seed,
            scaling,
            quantize,
            shuffle_labels,
            thresholds
        );
        let t = &other.train;
        replace!(
            self.train, t;
            epochs,
            base_lr,
            decay_gamma,
            batch_size,
            momentum,
            precision,
            conv1_filters,
            conv2_filters,
            hidden,
            activation
        );
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub cube: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub ids: Option<Vec<u32>>,
    pub save_images: Option<bool>,
    pub experiment: ExperimentOverrides,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Everything a run actually used, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedParams {
    pub command: String,
    pub version: String,
    pub threads: usize,
    pub paths: BTreeMap<String, PathBuf>,
    pub experiment: Option<ExperimentSpec>,
    pub settings: BTreeMap<String, serde_json::Value>,
}

impl ResolvedParams {
    pub fn new(command: &str, threads: usize) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            threads,
            paths: BTreeMap::new(),
            experiment: None,
            settings: BTreeMap::new(),
        }
    }

    pub fn path(mut self, key: &str, p: impl AsRef<Path>) -> Self {
        self.paths.insert(key.to_string(), p.as_ref().to_path_buf());
        self
    }

    pub fn setting(mut self, key: &str, v: impl Serialize) -> Self {
        self.settings.insert(
            key.to_string(),
            serde_json::to_value(v).expect("setting serializes"),
        );
        self
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("params serialize");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
