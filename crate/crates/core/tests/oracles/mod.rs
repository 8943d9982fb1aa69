//! Brute-force reference implementations shared by test targets.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn naive_rank(x: f64, pooled: &[f64]) -> f64 {
    let below = pooled.iter().filter(|&&v| v < x).count() as f64;
    let equal = pooled.iter().filter(|&&v| v == x).count() as f64;
    below + (equal + 1.0) / 2.0
}

pub fn naive_h(groups: &[Vec<f64>]) -> f64 {
    let pooled: Vec<f64> = groups.concat();
    let n = pooled.len() as f64;
    let mut s = 0.0;
    for g in groups {
        let r: f64 = g.iter().map(|&x| naive_rank(x, &pooled)).sum();
        s += r * r / g.len() as f64;
    }
    let h = 12.0 / (n * (n + 1.0)) * s - 3.0 * (n + 1.0);
    let mut ties = 0.0;
    let mut seen: Vec<f64> = Vec::new();
    for &x in &pooled {
        if !seen.contains(&x) {
            seen.push(x);
            let t = pooled.iter().filter(|&&v| v == x).count() as f64;
            ties += t * t * t - t;
        }
    }
    h / (1.0 - ties / (n * n * n - n))
}

/// Fraction of all group relabelings (same group sizes) whose H reaches
/// the observed H, found by scanning every label vector.
pub fn kw_permutation_p(groups: &[Vec<f64>]) -> f64 {
    let pooled: Vec<f64> = groups.concat();
    let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    let k = groups.len();
    let observed = naive_h(groups);
    let total = k.pow(pooled.len() as u32);
    let (mut hits, mut count) = (0u64, 0u64);
    for code in 0..total {
        let mut labels = Vec::with_capacity(pooled.len());
        let mut c = code;
        for _ in 0..pooled.len() {
            labels.push(c % k);
            c /= k;
        }
        if (0..k).any(|g| labels.iter().filter(|&&l| l == g).count() != sizes[g]) {
            continue;
        }
        let regrouped: Vec<Vec<f64>> = (0..k)
            .map(|g| {
                pooled
                    .iter()
                    .zip(&labels)
                    .filter(|(_, &l)| l == g)
                    .map(|(&x, _)| x)
                    .collect()
            })
            .collect();
        count += 1;
        if naive_h(&regrouped) >= observed - 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / count as f64
}

pub fn naive_u(a: &[f64], b: &[f64]) -> f64 {
    let mut u = 0.0;
    for &x in a {
        for &y in b {
            u += if x > y {
                1.0
            } else if x == y {
                0.5
            } else {
                0.0
            };
        }
    }
    u
}

pub fn mwu_permutation_p(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let mean = (a.len() * b.len()) as f64 / 2.0;
    let observed = (naive_u(a, b) - mean).abs();
    let (mut hits, mut count) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != a.len() {
            continue;
        }
        let in_x = |i: usize| mask >> i & 1 == 1;
        let x: Vec<f64> = (0..n).filter(|&i| in_x(i)).map(|i| pooled[i]).collect();
        let y: Vec<f64> = (0..n).filter(|&i| !in_x(i)).map(|i| pooled[i]).collect();
        count += 1;
        if (naive_u(&x, &y) - mean).abs() >= observed - 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / count as f64
}

pub fn small_group(rng: &mut ChaCha8Rng, max: usize, tie_prone: bool) -> Vec<f64> {
    let n = rng.random_range(1..=max);
    (0..n)
        .map(|_| {
            if tie_prone {
                rng.random_range(0..4) as f64
            } else {
                rng.random::<f64>()
            }
        })
        .collect()
}

/// Intercept and slope from the 2x2 normal equations
/// [n Σx; Σx Σx²] [b0 b1]ᵀ = [Σy Σxy]ᵀ.
pub fn normal_equations(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sy: f64 = y.iter().sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let det = n * sxx - sx * sx;
    ((sy * sxx - sx * sxy) / det, (n * sxy - sx * sy) / det)
}
