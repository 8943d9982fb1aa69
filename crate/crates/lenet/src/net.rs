//! Batched forward and backward passes.
//!
//! The convolutional trunk runs per sample and may fan out over rayon
//! workers; the fully connected head runs as whole-batch GEMMs. Convolution
//! gradients are reduced over fixed-size sample chunks in index order, so the
//! result does not depend on the number of worker threads.

use rayon::prelude::*;

use crate::arch::ShapeChain;
use crate::error::{LeNetError, Result};
use crate::layers::{activate, activate_backward, col2im, im2col, max_pool, max_pool_backward};
use crate::params::*;
use crate::real::{gemm, Op, Real};
use crate::tensor::Tensor;

/// Samples per gradient-reduction chunk. Fixed so that summation order is
/// independent of the thread count.
const CHUNK: usize = 4;

struct SampleCache<T> {
    input: Vec<T>,
    act1: Vec<T>,
    pool1: Vec<T>,
    arg1: Vec<u32>,
    act2: Vec<T>,
    arg2: Vec<u32>,
}

/// Activations retained from [`forward`] for use by [`backward`].
pub struct ForwardCache<T> {
    stamp: (u64, u64),
    batch: usize,
    samples: Vec<SampleCache<T>>,
    features: Vec<T>,
    hidden: Vec<T>,
}

impl<T> ForwardCache<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// Runs the network on `batch` images stored HWC-interleaved in `inputs`.
/// Returns `[batch][classes]` logits and the cache needed for backprop.
pub fn forward<T: Real>(
    params: &Params<T>,
    inputs: &[f32],
    batch: usize,
) -> Result<(Tensor<T>, ForwardCache<T>)> {
    let arch = *params.arch();
    let chain = arch.shape_chain()?;
    let per = arch.input_len();
    if inputs.len() != per * batch {
        return Err(LeNetError::Shape {
            layer: "input",
            expected: format!(
                "{batch} × {}×{}×{} = {} values",
                arch.height,
                arch.width,
                arch.channels,
                per * batch
            ),
            actual: format!("{} values", inputs.len()),
        });
    }

    let samples: Vec<(SampleCache<T>, Vec<T>)> = (0..batch)
        .into_par_iter()
        .map(|i| trunk_forward(params, &chain, &inputs[i * per..(i + 1) * per]))
        .collect();

    let d = chain.flatten;
    let h = chain.hidden;
    let k = chain.classes;
    let mut features = Vec::with_capacity(batch * d);
    let mut caches = Vec::with_capacity(batch);
    for (cache, feat) in samples {
        features.extend_from_slice(&feat);
        caches.push(cache);
    }

    let t = params.tensors();
    let mut hidden = vec![T::zero(); batch * h];
    gemm(
        Op::N,
        Op::T,
        batch,
        d,
        h,
        T::one(),
        &features,
        t[FC1_W].data(),
        T::zero(),
        &mut hidden,
    );
    add_row_bias(&mut hidden, t[FC1_B].data());
    activate(arch.activation, &mut hidden);

    let mut logits = vec![T::zero(); batch * k];
    gemm(
        Op::N,
        Op::T,
        batch,
        h,
        k,
        T::one(),
        &hidden,
        t[FC2_W].data(),
        T::zero(),
        &mut logits,
    );
    add_row_bias(&mut logits, t[FC2_B].data());

    let cache = ForwardCache {
        stamp: params.stamp(),
        batch,
        samples: caches,
        features,
        hidden,
    };
    Ok((Tensor::from_vec(&[batch, k], logits)?, cache))
}

fn trunk_forward<T: Real>(
    params: &Params<T>,
    chain: &ShapeChain,
    hwc: &[f32],
) -> (SampleCache<T>, Vec<T>) {
    let arch = params.arch();
    let t = params.tensors();
    let [c, hh, ww] = chain.input;
    let mut input = vec![T::zero(); c * hh * ww];
    for (pix, chunk) in hwc.chunks_exact(c).enumerate() {
        for (ch, &v) in chunk.iter().enumerate() {
            input[ch * hh * ww + pix] = T::cast(v as f64);
        }
    }

    let mut cols = Vec::new();
    let act1 = conv(
        &input,
        chain.input,
        chain.conv1,
        arch.conv1.kernel,
        t[CONV1_W].data(),
        t[CONV1_B].data(),
        arch.activation,
        &mut cols,
    );
    let (mut pool1, mut arg1) = (Vec::new(), Vec::new());
    max_pool(&act1, chain.conv1, arch.conv1.pool, &mut pool1, &mut arg1);

    let act2 = conv(
        &pool1,
        chain.pool1,
        chain.conv2,
        arch.conv2.kernel,
        t[CONV2_W].data(),
        t[CONV2_B].data(),
        arch.activation,
        &mut cols,
    );
    let (mut pool2, mut arg2) = (Vec::new(), Vec::new());
    max_pool(&act2, chain.conv2, arch.conv2.pool, &mut pool2, &mut arg2);

    (
        SampleCache {
            input,
            act1,
            pool1,
            arg1,
            act2,
            arg2,
        },
        pool2,
    )
}

#[allow(clippy::too_many_arguments)]
fn conv<T: Real>(
    input: &[T],
    in_shape: [usize; 3],
    out_shape: [usize; 3],
    k: usize,
    weight: &[T],
    bias: &[T],
    act: crate::arch::Activation,
    cols: &mut Vec<T>,
) -> Vec<T> {
    im2col(input, in_shape, k, cols);
    let f = out_shape[0];
    let p = out_shape[1] * out_shape[2];
    let ckk = in_shape[0] * k * k;
    let mut out = vec![T::zero(); f * p];
    gemm(
        Op::N,
        Op::N,
        f,
        ckk,
        p,
        T::one(),
        weight,
        cols,
        T::zero(),
        &mut out,
    );
    for (row, &b) in out.chunks_exact_mut(p).zip(bias) {
        row.iter_mut().for_each(|v| *v = *v + b);
    }
    activate(act, &mut out);
    out
}

fn add_row_bias<T: Real>(m: &mut [T], bias: &[T]) {
    for row in m.chunks_exact_mut(bias.len()) {
        for (v, &b) in row.iter_mut().zip(bias) {
            *v = *v + b;
        }
    }
}

fn column_sums<T: Real>(m: &[T], cols: usize, out: &mut [T]) {
    for row in m.chunks_exact(cols) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o = *o + v;
        }
    }
}

/// Exact gradients of `sum(dlogits ⊙ logits)` with respect to every parameter.
pub fn backward<T: Real>(
    params: &Params<T>,
    cache: &ForwardCache<T>,
    dlogits: &Tensor<T>,
) -> Result<Gradients<T>> {
    if cache.stamp != params.stamp() {
        return Err(LeNetError::StaleCache);
    }
    let arch = *params.arch();
    let chain = arch.shape_chain()?;
    let b = cache.batch;
    let (d, h, k) = (chain.flatten, chain.hidden, chain.classes);
    if dlogits.shape() != [b, k] {
        return Err(LeNetError::Shape {
            layer: "fc2",
            expected: format!("[{b}, {k}] logit gradient"),
            actual: format!("{:?}", dlogits.shape()),
        });
    }
    let t = params.tensors();
    let mut grads = Params::zeros(&arch)?;
    let dy = dlogits.data();

    let mut dhidden = vec![T::zero(); b * h];
    let mut dfeatures = vec![T::zero(); b * d];
    {
        let g = grads.tensors_mut();
        gemm(
            Op::T,
            Op::N,
            k,
            b,
            h,
            T::one(),
            dy,
            &cache.hidden,
            T::zero(),
            g[FC2_W].data_mut(),
        );
        column_sums(dy, k, g[FC2_B].data_mut());
        gemm(
            Op::N,
            Op::N,
            b,
            k,
            h,
            T::one(),
            dy,
            t[FC2_W].data(),
            T::zero(),
            &mut dhidden,
        );
        activate_backward(arch.activation, &cache.hidden, &mut dhidden);
        gemm(
            Op::T,
            Op::N,
            h,
            b,
            d,
            T::one(),
            &dhidden,
            &cache.features,
            T::zero(),
            g[FC1_W].data_mut(),
        );
        column_sums(&dhidden, h, g[FC1_B].data_mut());
        gemm(
            Op::N,
            Op::N,
            b,
            h,
            d,
            T::one(),
            &dhidden,
            t[FC1_W].data(),
            T::zero(),
            &mut dfeatures,
        );
    }

    let partials: Vec<[Vec<T>; 4]> = cache
        .samples
        .par_chunks(CHUNK)
        .zip(dfeatures.par_chunks(CHUNK * d))
        .map(|(samples, dfeat)| {
            let mut acc = [
                vec![T::zero(); t[CONV1_W].len()],
                vec![T::zero(); t[CONV1_B].len()],
                vec![T::zero(); t[CONV2_W].len()],
                vec![T::zero(); t[CONV2_B].len()],
            ];
            for (s, df) in samples.iter().zip(dfeat.chunks_exact(d)) {
                trunk_backward(params, &chain, s, df, &mut acc);
            }
            acc
        })
        .collect();

    let g = grads.tensors_mut();
    for part in &partials {
        for (slot, src) in [CONV1_W, CONV1_B, CONV2_W, CONV2_B].into_iter().zip(part) {
            for (x, &y) in g[slot].data_mut().iter_mut().zip(src) {
                *x = *x + y;
            }
        }
    }
    Ok(grads)
}

fn trunk_backward<T: Real>(
    params: &Params<T>,
    chain: &ShapeChain,
    s: &SampleCache<T>,
    dpool2: &[T],
    acc: &mut [Vec<T>; 4],
) {
    let arch = params.arch();
    let t = params.tensors();
    let mut cols = Vec::new();

    // conv2
    let [f2, h2, w2] = chain.conv2;
    let p2 = h2 * w2;
    let k2 = arch.conv2.kernel;
    let ckk2 = chain.pool1[0] * k2 * k2;
    let mut dz2 = vec![T::zero(); f2 * p2];
    max_pool_backward(dpool2, &s.arg2, &mut dz2);
    activate_backward(arch.activation, &s.act2, &mut dz2);
    im2col(&s.pool1, chain.pool1, k2, &mut cols);
    gemm(
        Op::N,
        Op::T,
        f2,
        p2,
        ckk2,
        T::one(),
        &dz2,
        &cols,
        T::one(),
        &mut acc[2],
    );
    for (bias, row) in acc[3].iter_mut().zip(dz2.chunks_exact(p2)) {
        *bias = *bias + row.iter().copied().sum::<T>();
    }
    let mut dcols = vec![T::zero(); ckk2 * p2];
    gemm(
        Op::T,
        Op::N,
        ckk2,
        f2,
        p2,
        T::one(),
        t[CONV2_W].data(),
        &dz2,
        T::zero(),
        &mut dcols,
    );
    let mut dpool1 = vec![T::zero(); s.pool1.len()];
    col2im(&dcols, chain.pool1, k2, &mut dpool1);

    // conv1
    let [f1, h1, w1] = chain.conv1;
    let p1 = h1 * w1;
    let k1 = arch.conv1.kernel;
    let ckk1 = chain.input[0] * k1 * k1;
    let mut dz1 = vec![T::zero(); f1 * p1];
    max_pool_backward(&dpool1, &s.arg1, &mut dz1);
    activate_backward(arch.activation, &s.act1, &mut dz1);
    im2col(&s.input, chain.input, k1, &mut cols);
    gemm(
        Op::N,
        Op::T,
        f1,
        p1,
        ckk1,
        T::one(),
        &dz1,
        &cols,
        T::one(),
        &mut acc[0],
    );
    for (bias, row) in acc[1].iter_mut().zip(dz1.chunks_exact(p1)) {
        *bias = *bias + row.iter().copied().sum::<T>();
    }
}
