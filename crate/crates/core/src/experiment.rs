//! Experiment definitions and the 92 input-variable combinations.

use serde::{Deserialize, Serialize};
use varenn_lenet::{Activation, Architecture, Precision, TrainConfig};

use crate::catalog::VariableId;
use crate::encoder::{check_channel_order, Knockout, ScalingMode};
use crate::error::{Error, Result};
use crate::window::{LabelFamily, Thresholds, DEFAULT_LABELING_YEARS, DEFAULT_TRAINING_YEARS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Tmp,
    Pre,
}

impl Target {
    pub fn variable(self) -> VariableId {
        match self {
            Target::Tmp => VariableId::Tmp,
            Target::Pre => VariableId::Pre,
        }
    }

    pub fn family(self) -> LabelFamily {
        match self {
            Target::Tmp => LabelFamily::T,
            Target::Pre => LabelFamily::P,
        }
    }

    pub fn default_thresholds(self) -> Thresholds {
        match self {
            Target::Tmp => Thresholds::TMP,
            Target::Pre => Thresholds::PRE,
        }
    }

    pub fn suite_name(self) -> &'static str {
        match self {
            Target::Tmp => "TMP-EX",
            Target::Pre => "PRE-EX",
        }
    }
}

impl std::str::FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tmp" | "tmp-ex" => Ok(Target::Tmp),
            "pre" | "pre-ex" => Ok(Target::Pre),
            _ => Err(Error::Validation(format!(
                "unknown target '{s}' (expected tmp or pre)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecisionSetting {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationSetting {
    #[default]
    Relu,
    Tanh,
}

/// Network widths and optimizer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub epochs: usize,
    pub base_lr: f64,
    pub decay_gamma: f64,
    pub batch_size: usize,
    pub momentum: f64,
    pub precision: PrecisionSetting,
    pub conv1_filters: usize,
    pub conv2_filters: usize,
    pub hidden: usize,
    pub activation: ActivationSetting,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let arch = Architecture::lenet();
        let cfg = TrainConfig::default();
        Self {
            epochs: cfg.epochs,
            base_lr: cfg.base_lr,
            decay_gamma: cfg.decay_gamma,
            batch_size: cfg.batch_size,
            momentum: cfg.momentum,
            precision: PrecisionSetting::F32,
            conv1_filters: arch.conv1.filters,
            conv2_filters: arch.conv2.filters,
            hidden: arch.hidden,
            activation: ActivationSetting::Relu,
        }
    }
}

impl TrainSettings {
    pub fn architecture(&self) -> Architecture {
        let mut arch =
            Architecture::lenet_narrow(self.conv1_filters, self.conv2_filters, self.hidden);
        arch.activation = match self.activation {
            ActivationSetting::Relu => Activation::Relu,
            ActivationSetting::Tanh => Activation::Tanh,
        };
        arch
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            base_lr: self.base_lr,
            decay_gamma: self.decay_gamma,
            batch_size: self.batch_size,
            momentum: self.momentum,
            seed,
            precision: match self.precision {
                PrecisionSetting::F32 => Precision::F32,
                PrecisionSetting::F64 => Precision::F64,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config(0).validate()?;
        self.architecture().shape_chain()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub id: u32,
    pub target: Target,
    pub inputs: Vec<VariableId>,
    #[serde(default)]
    pub knockout: Knockout,
    #[serde(default = "default_training_years")]
    pub training_years: usize,
    #[serde(default = "default_labeling_years")]
    pub labeling_years: usize,
    #[serde(default)]
    pub c_t: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub scaling: ScalingMode,
    /// Feed the network 8-bit levels rather than exact values.
    #[serde(default = "default_true")]
    pub quantize: bool,
    /// Randomly permute labels across records (chance-level control).
    #[serde(default)]
    pub shuffle_labels: bool,
    #[serde(default)]
    pub thresholds: Option<Thresholds>,
    #[serde(default)]
    pub train: TrainSettings,
}

fn default_training_years() -> usize {
    DEFAULT_TRAINING_YEARS
}

fn default_labeling_years() -> usize {
    DEFAULT_LABELING_YEARS
}

fn default_true() -> bool {
    true
}

impl ExperimentSpec {
    pub fn new(id: u32, target: Target, inputs: Vec<VariableId>) -> Self {
        Self {
            id,
            target,
            inputs,
            knockout: Knockout::None,
            training_years: DEFAULT_TRAINING_YEARS,
            labeling_years: DEFAULT_LABELING_YEARS,
            c_t: 0.0,
            seed: 0,
            scaling: ScalingMode::Global,
            quantize: true,
            shuffle_labels: false,
            thresholds: None,
            train: TrainSettings::default(),
        }
    }

    pub fn thresholds(&self) -> Thresholds {
        self.thresholds
            .unwrap_or_else(|| self.target.default_thresholds())
    }

    pub fn validate(&self) -> Result<()> {
        check_channel_order(&self.inputs)?;
        if !(0.0..=1.0).contains(&self.c_t) {
            return Err(Error::Config(format!("c_t {} outside [0, 1]", self.c_t)));
        }
        if self.training_years == 0 || 60 % self.training_years != 0 {
            return Err(Error::Config(format!(
                "training_years {} must divide 60",
                self.training_years
            )));
        }
        if self.labeling_years == 0 {
            return Err(Error::Config("labeling_years must be positive".into()));
        }
        self.thresholds().validate()?;
        self.train.validate()
    }

    pub fn inputs_label(&self) -> String {
        self.inputs
            .iter()
            .map(|v| v.code())
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// All 1-, 2- and 3-variable subsets: singles first, then pairs, then
/// triples, each block in lexicographic canonical order.
pub fn combinations() -> Vec<Vec<VariableId>> {
    let all = VariableId::ALL;
    let mut out: Vec<Vec<VariableId>> = all.iter().map(|&v| vec![v]).collect();
    for i in 0..all.len() {
        for j in i + 1..all.len() {
            out.push(vec![all[i], all[j]]);
        }
    }
    for i in 0..all.len() {
        for j in i + 1..all.len() {
            for k in j + 1..all.len() {
                out.push(vec![all[i], all[j], all[k]]);
            }
        }
    }
    out
}

/// The 92 experiments for `template.target`, numbered from 1, sharing every
/// other setting of `template`.
pub fn enumerate_combinations(template: &ExperimentSpec) -> Vec<ExperimentSpec> {
    combinations()
        .into_iter()
        .enumerate()
        .map(|(i, inputs)| ExperimentSpec {
            id: i as u32 + 1,
            inputs,
            ..template.clone()
        })
        .collect()
}
