//! Classification metrics, rank tests, variable distances and OLS.
//!
//! The rank tests use exact permutation distributions when the number of
//! distinct group assignments is small enough to count (the usual situation
//! for a handful of seeds per group) and the chi-square or tie-corrected
//! normal approximation otherwise.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

use crate::catalog::VariableId;
use crate::cube::ClimateCube;
use crate::error::{Error, Result};

pub const CLASSES: usize = 5;

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl Default for ConfusionMatrix {
    fn default() -> Self {
        Self::new(CLASSES)
    }
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.len();
        if k == 0 || rows.iter().any(|r| r.len() != k) {
            return Err(Error::Length(
                "confusion matrix rows must form a square".into(),
            ));
        }
        Ok(Self {
            classes: k,
            counts: rows.concat(),
        })
    }

    /// Tallies zero-based (truth, prediction) pairs.
    pub fn from_pairs(classes: usize, truth: &[usize], predicted: &[usize]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Length(format!(
                "{} true labels but {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut cm = Self::new(classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= classes || p >= classes {
                return Err(Error::Validation(format!(
                    "class index outside 0..{classes}"
                )));
            }
            cm.add(t, p);
        }
        Ok(cm)
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.classes + predicted] += 1;
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn n(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts
            .chunks(self.classes)
            .map(|r| r.iter().sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.classes)
            .map(|j| (0..self.classes).map(|i| self.get(i, j)).sum())
            .collect()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|i| self.get(i, i)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts
            .chunks(self.classes)
            .map(<[u64]>::to_vec)
            .collect()
    }
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let n = cm.n();
    if n == 0 {
        return Err(Error::Statistics(
            "accuracy of an empty confusion matrix".into(),
        ));
    }
    Ok(cm.trace() as f64 / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KappaWeights {
    #[default]
    Quadratic,
    Linear,
}

pub fn weighted_kappa(cm: &ConfusionMatrix, weights: KappaWeights) -> Result<f64> {
    let n = cm.n();
    let k = cm.classes();
    if n == 0 || k < 2 {
        return Err(Error::Statistics(
            "kappa of an empty confusion matrix".into(),
        ));
    }
    let n = n as f64;
    let rows = cm.row_sums();
    let cols = cm.col_sums();
    let (mut observed, mut expected) = (0.0, 0.0);
    #[allow(clippy::needless_range_loop)]
    for i in 0..k {
        for j in 0..k {
            let d = (i as f64 - j as f64).abs() / (k - 1) as f64;
            let w = match weights {
                KappaWeights::Quadratic => d * d,
                KappaWeights::Linear => d,
            };
            observed += w * cm.get(i, j) as f64 / n;
            expected += w * (rows[i] as f64 / n) * (cols[j] as f64 / n);
        }
    }
    if expected == 0.0 {
        return Err(Error::Statistics(
            "kappa undefined: marginals concentrated in one class".into(),
        ));
    }
    Ok(1.0 - observed / expected)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    KruskalWallis,
    MannWhitneyU,
    OlsSlopeT,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adjustment {
    None,
    Bonferroni,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatTestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: TestMethod,
    pub adjustment: Adjustment,
    /// The p-value comes from the exact permutation distribution.
    pub exact: bool,
}

pub fn bonferroni(p: f64, comparisons: usize) -> f64 {
    (p * comparisons.max(1) as f64).min(1.0)
}

/// Midranks (1-based) of the pooled values, doubled so they are integers.
fn doubled_midranks(values: &[f64]) -> Result<(Vec<u64>, Vec<usize>)> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Statistics("rank test on non-finite values".into()));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0u64; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // ranks i+1..=j+1 share their mean; doubled that is i+j+2
        for &o in &order[i..=j] {
            ranks[o] = (i + j + 2) as u64;
        }
        ties.push(j - i + 1);
        i = j + 1;
    }
    Ok((ranks, ties))
}

fn tie_sum(ties: &[usize]) -> f64 {
    ties.iter().map(|&t| (t * t * t - t) as f64).sum()
}

fn log_multinomial(sizes: &[usize]) -> f64 {
    let lf = |n: usize| (1..=n).map(|i| (i as f64).ln()).sum::<f64>();
    lf(sizes.iter().sum()) - sizes.iter().map(|&s| lf(s)).sum::<f64>()
}

/// Largest number of distinct assignments the exact tests will enumerate.
pub const EXACT_LIMIT: f64 = 2.0e5;

fn kw_statistic(rank_sums2: &[u64], sizes: &[usize], n: usize, ties: f64) -> f64 {
    let n = n as f64;
    let s: f64 = rank_sums2
        .iter()
        .zip(sizes)
        .map(|(&r2, &k)| {
            let r = r2 as f64 / 2.0;
            r * r / k as f64
        })
        .sum();
    let h = 12.0 / (n * (n + 1.0)) * s - 3.0 * (n + 1.0);
    h / (1.0 - ties / (n * n * n - n))
}

/// Counts assignments whose between-group statistic reaches the observed one.
fn kw_exact(ranks2: &[u64], sizes: &[usize], observed: f64) -> f64 {
    struct State<'a> {
        ranks2: &'a [u64],
        sizes: &'a [usize],
        fill: Vec<usize>,
        sums: Vec<u64>,
        threshold: f64,
        hits: u64,
        total: u64,
    }
    fn score(sums: &[u64], sizes: &[usize]) -> f64 {
        sums.iter()
            .zip(sizes)
            .map(|(&s, &k)| (s * s) as f64 / k as f64)
            .sum()
    }
    fn go(st: &mut State, item: usize) {
        if item == st.ranks2.len() {
            st.total += 1;
            if score(&st.sums, st.sizes) >= st.threshold {
                st.hits += 1;
            }
            return;
        }
        for g in 0..st.sizes.len() {
            if st.fill[g] < st.sizes[g] {
                st.fill[g] += 1;
                st.sums[g] += st.ranks2[item];
                go(st, item + 1);
                st.sums[g] -= st.ranks2[item];
                st.fill[g] -= 1;
            }
        }
    }
    let mut sorted = ranks2.to_vec();
    sorted.sort_unstable();
    let threshold = observed * (1.0 - 1e-12);
    let mut st = State {
        ranks2: &sorted,
        sizes,
        fill: vec![0; sizes.len()],
        sums: vec![0; sizes.len()],
        threshold,
        hits: 0,
        total: 0,
    };
    go(&mut st, 0);
    st.hits as f64 / st.total as f64
}

pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<StatTestResult> {
    if groups.len() < 2 || groups.iter().any(Vec::is_empty) {
        return Err(Error::Statistics(
            "Kruskal-Wallis needs at least two non-empty groups".into(),
        ));
    }
    let pooled: Vec<f64> = groups.concat();
    let n = pooled.len();
    let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    let (ranks2, ties) = doubled_midranks(&pooled)?;
    let t = tie_sum(&ties);
    let result = |statistic, p_value, exact| StatTestResult {
        statistic,
        p_value,
        method: TestMethod::KruskalWallis,
        adjustment: Adjustment::None,
        exact,
    };
    if t == (n * n * n - n) as f64 {
        return Ok(result(0.0, 1.0, true));
    }
    let mut sums = Vec::with_capacity(groups.len());
    let mut offset = 0;
    for &k in &sizes {
        sums.push(ranks2[offset..offset + k].iter().sum::<u64>());
        offset += k;
    }
    let h = kw_statistic(&sums, &sizes, n, t).max(0.0);
    if log_multinomial(&sizes) <= EXACT_LIMIT.ln() {
        let observed: f64 = sums
            .iter()
            .zip(&sizes)
            .map(|(&s, &k)| (s * s) as f64 / k as f64)
            .sum();
        return Ok(result(h, kw_exact(&ranks2, &sizes, observed), true));
    }
    let chi =
        ChiSquared::new((groups.len() - 1) as f64).map_err(|e| Error::Statistics(e.to_string()))?;
    Ok(result(h, chi.sf(h).clamp(0.0, 1.0), false))
}

/// Two-sided rank-sum test; `statistic` is U for `a` (pairs with a > b,
/// ties counting one half). The p-value is multiplied by `comparisons`.
pub fn mann_whitney_u(a: &[f64], b: &[f64], comparisons: usize) -> Result<StatTestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Statistics(
            "Mann-Whitney U needs two non-empty samples".into(),
        ));
    }
    let (na, nb) = (a.len(), b.len());
    let n = na + nb;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks2, ties) = doubled_midranks(&pooled)?;
    let r2: u64 = ranks2[..na].iter().sum();
    let u = r2 as f64 / 2.0 - (na * (na + 1)) as f64 / 2.0;
    let t = tie_sum(&ties);

    let exact = log_multinomial(&[na, nb]) <= EXACT_LIMIT.ln();
    let p = if t == (n * n * n - n) as f64 {
        1.0
    } else if exact {
        mwu_exact(&ranks2, na, r2)
    } else {
        let mean = (na * nb) as f64 / 2.0;
        let var = (na * nb) as f64 / 12.0 * ((n + 1) as f64 - t / (n * (n - 1)) as f64);
        let z = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
        let normal = Normal::standard();
        (2.0 * normal.sf(z)).min(1.0)
    };
    Ok(StatTestResult {
        statistic: u,
        p_value: bonferroni(p, comparisons),
        method: TestMethod::MannWhitneyU,
        adjustment: if comparisons > 1 {
            Adjustment::Bonferroni
        } else {
            Adjustment::None
        },
        exact,
    })
}

/// P(|S − E| ≥ |s − E|) where S is the doubled rank sum of a random
/// `na`-subset of the pooled sample.
fn mwu_exact(ranks2: &[u64], na: usize, observed: u64) -> f64 {
    let max_sum: u64 = ranks2.iter().sum();
    let width = max_sum as usize + 1;
    // ways[j][s]: subsets of size j with doubled rank sum s
    let mut ways = vec![vec![0u128; width]; na + 1];
    ways[0][0] = 1;
    for &r in ranks2 {
        for j in (1..=na).rev() {
            let (lo, hi) = ways.split_at_mut(j);
            for s in (r as usize..width).rev() {
                hi[0][s] += lo[j - 1][s - r as usize];
            }
        }
    }
    let n = ranks2.len() as i128;
    // doubled expectation: na (n + 1)
    let e = na as i128 * (n + 1);
    let dev = (observed as i128 - e).abs();
    let (mut hits, mut total) = (0u128, 0u128);
    for (s, &w) in ways[na].iter().enumerate() {
        total += w;
        if (s as i128 - e).abs() >= dev {
            hits += w;
        }
    }
    hits as f64 / total as f64
}

/// Normalized Euclidean distance between two z-scored variables.
pub fn variable_distance(cube: &ClimateCube, v1: VariableId, v2: VariableId) -> Result<f64> {
    let a = cube.variable_values(cube.require_var(v1)?);
    let b = cube.variable_values(cube.require_var(v2)?);
    let standardize = |x: &[f32], v: VariableId| -> Result<(f64, f64)> {
        let vals = x.iter().filter(|v| !v.is_nan()).map(|&v| v as f64);
        let (n, sum) = vals.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
        if n == 0 {
            return Err(Error::Domain(format!("{v} has no values")));
        }
        let mean = sum / n as f64;
        let var = vals.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        if var == 0.0 {
            return Err(Error::Domain(format!(
                "{v} is constant and cannot be standardized"
            )));
        }
        Ok((mean, var.sqrt()))
    };
    let (ma, sa) = standardize(a, v1)?;
    let (mb, sb) = standardize(b, v2)?;
    let (mut n, mut sum) = (0usize, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        if x.is_nan() || y.is_nan() {
            continue;
        }
        let d = (x as f64 - ma) / sa - (y as f64 - mb) / sb;
        sum += d * d;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Domain(format!("{v1} and {v2} share no entries")));
    }
    Ok((sum / n as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub variables: Vec<VariableId>,
    /// Row-major distances.
    pub distances: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn from_cube(cube: &ClimateCube) -> Result<Self> {
        let vars = cube.variables().to_vec();
        let k = vars.len();
        let mut distances = vec![0.0; k * k];
        for i in 0..k {
            for j in i + 1..k {
                let d = variable_distance(cube, vars[i], vars[j])?;
                distances[i * k + j] = d;
                distances[j * k + i] = d;
            }
        }
        Ok(Self {
            variables: vars,
            distances,
        })
    }

    pub fn get(&self, a: VariableId, b: VariableId) -> Option<f64> {
        let k = self.variables.len();
        let i = self.variables.iter().position(|&v| v == a)?;
        let j = self.variables.iter().position(|&v| v == b)?;
        Some(self.distances[i * k + j])
    }

    pub fn is_symmetric(&self) -> bool {
        let k = self.variables.len();
        (0..k).all(|i| {
            self.distances[i * k + i] == 0.0
                && (0..k).all(|j| self.distances[i * k + j] == self.distances[j * k + i])
        })
    }
}

/// Mean distance from `target` to each input.
pub fn experiment_similarity(
    target: VariableId,
    inputs: &[VariableId],
    sim: &SimilarityMatrix,
) -> Result<f64> {
    if inputs.is_empty() {
        return Err(Error::Validation(
            "similarity needs at least one input".into(),
        ));
    }
    let mut sum = 0.0;
    for &v in inputs {
        sum += sim
            .get(target, v)
            .ok_or_else(|| Error::Validation(format!("no distance between {target} and {v}")))?;
    }
    Ok(sum / inputs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub r_squared: f64,
    pub n: usize,
    /// Two-sided t-test of a zero slope.
    pub p_value: f64,
}

impl OlsFit {
    pub fn as_test(&self) -> StatTestResult {
        StatTestResult {
            statistic: self.slope / self.slope_se,
            p_value: self.p_value,
            method: TestMethod::OlsSlopeT,
            adjustment: Adjustment::None,
            exact: false,
        }
    }
}

pub fn ols_regression(x: &[f64], y: &[f64]) -> Result<OlsFit> {
    if x.len() != y.len() {
        return Err(Error::Length(format!(
            "{} x values but {} y values",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::Statistics(format!(
            "regression needs at least 3 points, got {n}"
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Statistics("regression on non-finite values".into()));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Statistics(
            "degenerate regressor: x is constant".into(),
        ));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - intercept - slope * a;
            r * r
        })
        .sum();
    let df = nf - 2.0;
    let slope_se = (sse / df / sxx).sqrt();
    let p_value = if slope_se == 0.0 || !slope_se.is_finite() {
        if slope == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        let t = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Statistics(e.to_string()))?;
        (2.0 * t.sf((slope / slope_se).abs())).clamp(0.0, 1.0)
    };
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    Ok(OlsFit {
        slope,
        intercept,
        slope_se,
        r_squared,
        n,
        p_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_cases() {
        let mut rows = vec![vec![0u64; 5]; 5];
        rows[0][0] = 3;
        rows[0][1] = 1;
        rows[1][0] = 1;
        rows[1][1] = 3;
        let cm = ConfusionMatrix::from_rows(&rows).unwrap();
        assert_eq!(accuracy(&cm).unwrap(), 0.75);
        assert!(accuracy(&ConfusionMatrix::default()).is_err());
        let off = ConfusionMatrix::from_pairs(5, &[0, 1, 2], &[1, 2, 3]).unwrap();
        assert_eq!(accuracy(&off).unwrap(), 0.0);
    }

    #[test]
    fn kappa_textbook_two_class() {
        // po = 15/20, pe = (12·13 + 8·7)/400 = 0.53, κ = (0.75 − 0.53)/0.47
        let cm = ConfusionMatrix::from_rows(&[vec![10, 2], vec![3, 5]]).unwrap();
        let want = (0.75 - 0.53) / 0.47;
        assert!((weighted_kappa(&cm, KappaWeights::Quadratic).unwrap() - want).abs() < 1e-12);
        assert!((weighted_kappa(&cm, KappaWeights::Linear).unwrap() - want).abs() < 1e-12);
        let mut padded = vec![vec![0u64; 5]; 5];
        padded[0][0] = 10;
        padded[0][1] = 2;
        padded[1][0] = 3;
        padded[1][1] = 5;
        let p = ConfusionMatrix::from_rows(&padded).unwrap();
        assert!((weighted_kappa(&p, KappaWeights::Quadratic).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn kappa_degenerate() {
        let cm = ConfusionMatrix::from_pairs(5, &[2, 2], &[2, 2]).unwrap();
        assert!(matches!(
            weighted_kappa(&cm, KappaWeights::Quadratic),
            Err(Error::Statistics(_))
        ));
    }

    #[test]
    fn kw_identical_values() {
        let r = kruskal_wallis(&[vec![1.0, 1.0], vec![1.0]]).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
        assert!(kruskal_wallis(&[vec![1.0]]).is_err());
        assert!(kruskal_wallis(&[vec![1.0], vec![]]).is_err());
    }

    #[test]
    fn mwu_separation() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], 1).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(r.exact);
        assert!((r.p_value - 0.1).abs() < 1e-12);
        let adj = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], 3).unwrap();
        assert!((adj.p_value - 0.3).abs() < 1e-12);
        assert_eq!(adj.adjustment, Adjustment::Bonferroni);
    }

    #[test]
    fn mwu_normal_branch() {
        let a: Vec<f64> = (0..60).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..60).map(|i| i as f64 + 0.5).collect();
        let r = mann_whitney_u(&a, &b, 1).unwrap();
        assert!(!r.exact);
        assert!(r.p_value > 0.8);
    }

    #[test]
    fn ols_exact_line() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let f = ols_regression(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12);
        assert!(f.p_value < 1e-12);
        assert!(ols_regression(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(ols_regression(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }
}
