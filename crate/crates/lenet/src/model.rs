use crate::arch::Architecture;
use crate::checkpoint;
use crate::error::Result;
use crate::params::Params;
use crate::train::{self, LabeledImages, Precision, Prediction, TrainConfig, TrainLog};

/// Trained parameters in whichever precision the run used.
#[derive(Debug, Clone)]
pub enum Model {
    F32(Params<f32>),
    F64(Params<f64>),
}

impl Model {
    pub fn train(
        arch: &Architecture,
        train_set: &LabeledImages,
        val_set: &LabeledImages,
        cfg: &TrainConfig,
    ) -> Result<(Self, TrainLog)> {
        Ok(match cfg.precision {
            Precision::F32 => {
                let (p, log) = train::train::<f32>(arch, train_set, val_set, cfg)?;
                (Model::F32(p), log)
            }
            Precision::F64 => {
                let (p, log) = train::train::<f64>(arch, train_set, val_set, cfg)?;
                (Model::F64(p), log)
            }
        })
    }

    pub fn arch(&self) -> &Architecture {
        match self {
            Model::F32(p) => p.arch(),
            Model::F64(p) => p.arch(),
        }
    }

    pub fn predict(&self, images: &[f32]) -> Result<Vec<Prediction>> {
        match self {
            Model::F32(p) => train::predict(p, images),
            Model::F64(p) => train::predict(p, images),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            Model::F32(p) => checkpoint::encode(p),
            Model::F64(p) => checkpoint::encode(p),
        }
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = checkpoint::read_header(bytes)?;
        Ok(if header.elem_bytes == 8 {
            Model::F64(checkpoint::decode(bytes)?)
        } else {
            Model::F32(checkpoint::decode(bytes)?)
        })
    }
}
