use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arch::Architecture;
use crate::error::{LeNetError, Result};
use crate::real::Real;
use crate::tensor::Tensor;

pub const PARAM_NAMES: [&str; 8] = [
    "conv1.weight",
    "conv1.bias",
    "conv2.weight",
    "conv2.bias",
    "fc1.weight",
    "fc1.bias",
    "fc2.weight",
    "fc2.bias",
];

pub(crate) const CONV1_W: usize = 0;
pub(crate) const CONV1_B: usize = 1;
pub(crate) const CONV2_W: usize = 2;
pub(crate) const CONV2_B: usize = 3;
pub(crate) const FC1_W: usize = 4;
pub(crate) const FC1_B: usize = 5;
pub(crate) const FC2_W: usize = 6;
pub(crate) const FC2_B: usize = 7;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

/// All trainable weights and biases.
///
/// Convolution weights are `[filters][in_channels·k·k]` with the inner index
/// ordered (channel, row, column); fully connected weights are `[out][in]`.
/// Every mutable borrow bumps a generation counter so forward caches can be
/// checked for staleness.
#[derive(Debug, Clone)]
pub struct Params<T> {
    arch: Architecture,
    tensors: [Tensor<T>; 8],
    id: u64,
    generation: u64,
}

/// Gradients share the parameter layout.
pub type Gradients<T> = Params<T>;

impl<T: Real> Params<T> {
    pub fn zeros(arch: &Architecture) -> Result<Self> {
        let shapes = param_shapes(arch)?;
        let tensors = shapes.map(|s| Tensor::zeros(&s));
        Ok(Self {
            arch: *arch,
            tensors,
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            generation: 0,
        })
    }

    /// Fan-in scaled uniform weights `U(-√(3/fan_in), √(3/fan_in))`, zero biases.
    pub fn init(arch: &Architecture, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for idx in [CONV1_W, CONV2_W, FC1_W, FC2_W] {
            let t = &mut params.tensors[idx];
            let fan_in = t.shape()[1];
            let limit = (3.0 / fan_in as f64).sqrt();
            for w in t.data_mut() {
                *w = T::cast(rng.random_range(-limit..limit));
            }
        }
        Ok(params)
    }

    pub fn from_tensors(arch: &Architecture, tensors: Vec<Tensor<T>>) -> Result<Self> {
        let mut params = Self::zeros(arch)?;
        if tensors.len() != 8 {
            return Err(LeNetError::Shape {
                layer: "params",
                expected: "8 tensors".into(),
                actual: format!("{} tensors", tensors.len()),
            });
        }
        for (i, t) in tensors.into_iter().enumerate() {
            if t.shape() != params.tensors[i].shape() {
                return Err(LeNetError::Shape {
                    layer: PARAM_NAMES[i],
                    expected: format!("{:?}", params.tensors[i].shape()),
                    actual: format!("{:?}", t.shape()),
                });
            }
            params.tensors[i] = t;
        }
        Ok(params)
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn tensors(&self) -> &[Tensor<T>; 8] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>; 8] {
        self.generation += 1;
        &mut self.tensors
    }

    pub fn tensor(&self, idx: usize) -> &Tensor<T> {
        &self.tensors[idx]
    }

    pub(crate) fn stamp(&self) -> (u64, u64) {
        (self.id, self.generation)
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Iterates over every scalar in canonical tensor order.
    pub fn values(&self) -> impl Iterator<Item = T> + '_ {
        self.tensors.iter().flat_map(|t| t.data().iter().copied())
    }

    /// `self += other`, elementwise.
    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors_mut().iter_mut().zip(other.tensors.iter()) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x = *x + *y;
            }
        }
    }

    /// Largest absolute element, useful for "all zero" checks.
    pub fn max_abs(&self) -> T {
        self.values().fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

pub(crate) fn param_shapes(arch: &Architecture) -> Result<[Vec<usize>; 8]> {
    let chain = arch.shape_chain()?;
    let c1 = &arch.conv1;
    let c2 = &arch.conv2;
    Ok([
        vec![c1.filters, arch.channels * c1.kernel * c1.kernel],
        vec![c1.filters],
        vec![c2.filters, c1.filters * c2.kernel * c2.kernel],
        vec![c2.filters],
        vec![arch.hidden, chain.flatten],
        vec![arch.hidden],
        vec![arch.classes, arch.hidden],
        vec![arch.classes],
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lenet_parameter_count() {
        let p = Params::<f32>::zeros(&Architecture::lenet()).unwrap();
        let expected = 20 * 75 + 20 + 50 * 500 + 50 + 500 * 7200 + 500 + 5 * 500 + 5;
        assert_eq!(p.num_params(), expected);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let arch = Architecture::lenet_narrow(4, 6, 16);
        let a = Params::<f64>::init(&arch, 9).unwrap();
        let b = Params::<f64>::init(&arch, 9).unwrap();
        let c = Params::<f64>::init(&arch, 10).unwrap();
        assert!(a.values().eq(b.values()));
        assert!(!a.values().eq(c.values()));
        let limit = (3.0f64 / 75.0).sqrt();
        assert!(a.tensor(CONV1_W).data().iter().all(|w| w.abs() <= limit));
        assert!(a.tensor(CONV1_B).data().iter().all(|&b| b == 0.0));
    }
}
