//! Per-sample building blocks in channel-major (C, H, W) layout.

use crate::arch::Activation;
use crate::real::Real;

/// Unfolds a (c, h, w) volume into a `(c·k·k) × (oh·ow)` matrix for valid,
/// stride-1 convolution.
pub(crate) fn im2col<T: Real>(input: &[T], [c, h, w]: [usize; 3], k: usize, cols: &mut Vec<T>) {
    let (oh, ow) = (h - k + 1, w - k + 1);
    let p = oh * ow;
    cols.clear();
    cols.resize(c * k * k * p, T::zero());
    for ci in 0..c {
        let plane = &input[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let src = &plane[(oy + ky) * w + kx..(oy + ky) * w + kx + ow];
                    dst[oy * ow..(oy + 1) * ow].copy_from_slice(src);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back into a (c, h, w) volume.
pub(crate) fn col2im<T: Real>(cols: &[T], [c, h, w]: [usize; 3], k: usize, out: &mut [T]) {
    let (oh, ow) = (h - k + 1, w - k + 1);
    let p = oh * ow;
    out.iter_mut().for_each(|v| *v = T::zero());
    for ci in 0..c {
        let plane = &mut out[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let dst = &mut plane[(oy + ky) * w + kx..(oy + ky) * w + kx + ow];
                    for (d, s) in dst.iter_mut().zip(&src[oy * ow..(oy + 1) * ow]) {
                        *d = *d + *s;
                    }
                }
            }
        }
    }
}

/// Non-overlapping max pooling. Records the flat input index of each maximum;
/// ties go to the first element in scan order.
pub(crate) fn max_pool<T: Real>(
    input: &[T],
    [c, h, w]: [usize; 3],
    pool: usize,
    out: &mut Vec<T>,
    argmax: &mut Vec<u32>,
) {
    let (ph, pw) = (h / pool, w / pool);
    out.clear();
    argmax.clear();
    out.reserve(c * ph * pw);
    argmax.reserve(c * ph * pw);
    for ci in 0..c {
        let base = ci * h * w;
        for py in 0..ph {
            for px in 0..pw {
                let mut best = base + py * pool * w + px * pool;
                let mut best_v = input[best];
                for dy in 0..pool {
                    for dx in 0..pool {
                        let idx = base + (py * pool + dy) * w + px * pool + dx;
                        if input[idx] > best_v {
                            best_v = input[idx];
                            best = idx;
                        }
                    }
                }
                out.push(best_v);
                argmax.push(best as u32);
            }
        }
    }
}

pub(crate) fn max_pool_backward<T: Real>(dout: &[T], argmax: &[u32], din: &mut [T]) {
    din.iter_mut().for_each(|v| *v = T::zero());
    for (&g, &idx) in dout.iter().zip(argmax) {
        let slot = &mut din[idx as usize];
        *slot = *slot + g;
    }
}

pub(crate) fn activate<T: Real>(act: Activation, values: &mut [T]) {
    match act {
        Activation::Relu => values.iter_mut().for_each(|v| {
            if *v < T::zero() {
                *v = T::zero()
            }
        }),
        Activation::Tanh => values.iter_mut().for_each(|v| *v = v.tanh()),
    }
}

/// Multiplies `grad` in place by the activation derivative, expressed through
/// the activation's output.
pub(crate) fn activate_backward<T: Real>(act: Activation, output: &[T], grad: &mut [T]) {
    match act {
        Activation::Relu => {
            for (g, &a) in grad.iter_mut().zip(output) {
                if a <= T::zero() {
                    *g = T::zero();
                }
            }
        }
        Activation::Tanh => {
            for (g, &a) in grad.iter_mut().zip(output) {
                *g = *g * (T::one() - a * a);
            }
        }
    }
}
