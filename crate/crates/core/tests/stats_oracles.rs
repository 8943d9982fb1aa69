use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use varenn_core::stats::{
    experiment_similarity, kruskal_wallis, mann_whitney_u, ols_regression, variable_distance,
    SimilarityMatrix,
};
use varenn_core::{ClimateCube, GridCell, VariableId};

mod oracles;
use oracles::*;

#[test]
fn kruskal_wallis_matches_permutation_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst: f64 = 0.0;
    for case in 0..40 {
        let k = if case % 2 == 0 { 3 } else { 2 };
        let groups: Vec<Vec<f64>> = (0..k)
            .map(|_| small_group(&mut rng, 4, case % 3 == 0))
            .collect();
        if groups.concat().iter().all(|&v| v == groups[0][0]) {
            continue;
        }
        let lib = kruskal_wallis(&groups).unwrap();
        let oracle = kw_permutation_p(&groups);
        worst = worst.max((lib.p_value - oracle).abs());
        assert!((lib.statistic - naive_h(&groups)).abs() < 1e-9);
    }
    assert!(worst <= 0.02, "max |p - permutation p| = {worst}");
}

#[test]
fn kruskal_wallis_statistic_matches_naive_ranks() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let groups: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..5).map(|_| rng.random_range(0..12) as f64).collect())
            .collect();
        let h = kruskal_wallis(&groups).unwrap().statistic;
        assert!((h - naive_h(&groups)).abs() < 1e-9);
    }
}

#[test]
fn kruskal_wallis_reference_groups() {
    let same = vec![vec![1.0, 2.0, 3.0]; 3];
    let r = kruskal_wallis(&same).unwrap();
    assert!(r.statistic.abs() < 1e-12 && r.p_value > 0.99);
    let apart = vec![
        vec![1.0, 2.0, 3.0],
        vec![10.0, 11.0, 12.0],
        vec![20.0, 21.0, 22.0],
    ];
    let r = kruskal_wallis(&apart).unwrap();
    assert!(r.p_value < 0.05);
    assert!((r.p_value - kw_permutation_p(&apart)).abs() < 0.02);
}

#[test]
fn mann_whitney_matches_permutation_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut worst: f64 = 0.0;
    for case in 0..60 {
        let (a, b) = if case < 20 {
            let g = |rng: &mut ChaCha8Rng| {
                (0..4)
                    .map(|_| rng.random_range(0..6) as f64)
                    .collect::<Vec<_>>()
            };
            (g(&mut rng), g(&mut rng))
        } else {
            (
                small_group(&mut rng, 4, case % 2 == 0),
                small_group(&mut rng, 4, case % 2 == 0),
            )
        };
        let lib = mann_whitney_u(&a, &b, 1).unwrap();
        assert_eq!(lib.statistic, naive_u(&a, &b));
        worst = worst.max((lib.p_value - mwu_permutation_p(&a, &b)).abs());
    }
    assert!(worst <= 0.02, "max |p - permutation p| = {worst}");
}

#[test]
fn mann_whitney_equal_samples() {
    let a = [1.0, 5.0, 2.0, 8.0];
    let r = mann_whitney_u(&a, &a, 1).unwrap();
    assert!(r.p_value > 0.95);
}

#[test]
fn ols_matches_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let n = rng.random_range(3..40);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| 0.7 * v - 2.0 + rng.random_range(-3.0..3.0))
            .collect();
        let (b0, b1) = normal_equations(&x, &y);
        let fit = ols_regression(&x, &y).unwrap();
        assert!((fit.slope - b1).abs() <= 1e-9 * b1.abs().max(1.0));
        assert!((fit.intercept - b0).abs() <= 1e-9 * b0.abs().max(1.0));
        assert!((0.0..=1.0).contains(&fit.p_value));
    }
}

#[test]
fn ols_null_rejection_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let x: Vec<f64> = (0..30).map(f64::from).collect();
    let mut y: Vec<f64> = (0..30).map(|_| rng.random::<f64>()).collect();
    let mut rejections = 0;
    for _ in 0..1000 {
        y.shuffle(&mut rng);
        if ols_regression(&x, &y).unwrap().p_value < 0.05 {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / 1000.0;
    assert!((rate - 0.05).abs() <= 0.02, "rejection rate {rate}");
}

fn field_cube(fields: &[(VariableId, Vec<f32>)], cells: usize) -> ClimateCube {
    let months = fields[0].1.len() / cells;
    let grid = (0..cells)
        .map(|i| GridCell {
            cell_id: i as u32,
            lat: 1.0,
            lon: i as f64,
        })
        .collect();
    ClimateCube::new(
        fields.iter().map(|f| f.0).collect(),
        2000,
        months,
        grid,
        fields.iter().flat_map(|f| f.1.clone()).collect(),
    )
    .unwrap()
}

#[test]
fn distance_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 24 * 3;
    let a: Vec<f32> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
    let mut b: Vec<f32> = (0..n).map(|_| rng.random_range(0.0..100.0)).collect();
    b[7] = f32::NAN;
    let affine: Vec<f32> = a.iter().map(|v| 3.0 * v + 40.0).collect();
    let cube = field_cube(
        &[
            (VariableId::Cld, a.clone()),
            (VariableId::Pre, b.clone()),
            (VariableId::Tmp, affine),
        ],
        3,
    );
    let z = |v: &[f32]| {
        let xs: Vec<f64> = v
            .iter()
            .filter(|x| !x.is_nan())
            .map(|&x| x as f64)
            .collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
        v.iter()
            .map(move |&x| (x as f64 - m) / sd)
            .collect::<Vec<_>>()
    };
    let (za, zb) = (z(&a), z(&b));
    let mut sum = 0.0;
    let mut count = 0;
    for i in 0..n {
        if !b[i].is_nan() {
            sum += (za[i] - zb[i]).powi(2);
            count += 1;
        }
    }
    let want = (sum / count as f64).sqrt();
    let got = variable_distance(&cube, VariableId::Cld, VariableId::Pre).unwrap();
    assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    assert!(variable_distance(&cube, VariableId::Cld, VariableId::Cld).unwrap() < 1e-12);
    assert!(variable_distance(&cube, VariableId::Cld, VariableId::Tmp).unwrap() < 1e-6);

    let sim = SimilarityMatrix::from_cube(&cube).unwrap();
    assert!(sim.is_symmetric());
    let d = |x, y| sim.get(x, y).unwrap();
    let t = VariableId::Tmp;
    assert_eq!(experiment_similarity(t, &[t], &sim).unwrap(), 0.0);
    assert_eq!(
        experiment_similarity(t, &[VariableId::Pre], &sim).unwrap(),
        d(t, VariableId::Pre)
    );
    let mid = experiment_similarity(t, &[VariableId::Cld, VariableId::Pre], &sim).unwrap();
    assert!((mid - (d(t, VariableId::Cld) + d(t, VariableId::Pre)) / 2.0).abs() < 1e-15);
}
