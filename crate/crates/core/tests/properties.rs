use std::collections::BTreeMap;

use proptest::prelude::*;
use varenn_core::cube::{decode_cube, encode_cube, global_minmax};
use varenn_core::encoder::{
    compose_rgb, knockout_interannual, knockout_seasonal, rasterize, scale01, Knockout,
    MonthYearGrid,
};
use varenn_core::experiment::combinations;
use varenn_core::stats::{
    bonferroni, kruskal_wallis, mann_whitney_u, weighted_kappa, ConfusionMatrix, KappaWeights,
};
use varenn_core::synth::{synth_generate, GridLayout, LatentSpec, SynthSpec, VariableSynth};
use varenn_core::window::{enumerate_windows, label_pre, label_tmp, trend_delta};
use varenn_core::{ClimateCube, GridCell, ValueRange, VariableId};

fn arb_cube() -> impl Strategy<Value = ClimateCube> {
    (1usize..4, 1usize..3, 1usize..5, -3000i32..3000)
        .prop_flat_map(|(n_vars, years, cells, start)| {
            let n = n_vars * years * 12 * cells;
            (
                Just((n_vars, years, cells, start)),
                proptest::sample::subsequence(VariableId::ALL.to_vec(), n_vars),
                proptest::collection::vec(
                    prop_oneof![9 => -1e6f32..1e6f32, 1 => Just(f32::NAN)],
                    n,
                ),
                proptest::collection::vec((-90.0f64..=90.0, -180.0f64..180.0), cells),
            )
        })
        .prop_map(|((_, years, cells, start), vars, values, coords)| {
            let grid = coords
                .into_iter()
                .enumerate()
                .map(|(i, (lat, lon))| GridCell {
                    cell_id: i as u32 * 7 + 3,
                    lat,
                    lon,
                })
                .collect();
            let _ = cells;
            ClimateCube::new(vars, start, years * 12, grid, values).unwrap()
        })
}

proptest! {
    #[test]
    fn cube_round_trip(cube in arb_cube()) {
        let bytes = encode_cube(&cube);
        let back = decode_cube(&bytes).unwrap();
        prop_assert_eq!(&back, &cube);
        prop_assert_eq!(encode_cube(&back), bytes);
    }

    #[test]
    fn minmax_matches_full_scan(cube in arb_cube()) {
        match global_minmax(&cube) {
            Ok(stats) => {
                for (vi, &v) in cube.variables().iter().enumerate() {
                    let mut lo = f64::INFINITY;
                    let mut hi = f64::NEG_INFINITY;
                    for t in 0..cube.n_months() {
                        for c in 0..cube.grid().len() {
                            let x = cube.value(vi, t, c);
                            if !x.is_nan() {
                                lo = lo.min(x as f64);
                                hi = hi.max(x as f64);
                            }
                        }
                    }
                    prop_assert_eq!(stats.range(v).unwrap(), ValueRange { min: lo, max: hi });
                }
            }
            Err(_) => {
                let all_missing = (0..cube.variables().len())
                    .any(|vi| cube.variable_values(vi).iter().all(|x| x.is_nan()));
                prop_assert!(all_missing);
            }
        }
    }

    #[test]
    fn synth_zero_noise_closed_form(
        base in -50.0f64..50.0,
        amp in 0.0f64..20.0,
        phase in 0.0f64..12.0,
        trend in -0.5f64..0.5,
        loading in -0.3f64..0.3,
        seed in any::<u64>(),
    ) {
        let p = VariableSynth {
            seasonal_amplitude: amp,
            seasonal_phase: phase,
            trend_per_year: trend,
            trend_loading: loading,
            ..VariableSynth::constant(base)
        };
        let spec = SynthSpec {
            n_cells: 3,
            n_years: 41,
            start_year: 1901,
            seed,
            latent: LatentSpec::default(),
            grid: GridLayout::default(),
            variables: BTreeMap::from([(VariableId::Pre, p)]),
        };
        let out = synth_generate(&spec).unwrap();
        for c in 0..3 {
            let t = trend + loading * out.truth.cells[c].trend_latent;
            for month in 0..out.cube.n_months() {
                let (y, m) = (month / 12, month % 12);
                let want = base + amp * (2.0 * std::f64::consts::PI * (m as f64 - phase) / 12.0).cos() + t * y as f64;
                let got = out.cube.value(0, month, c) as f64;
                prop_assert!((got - want).abs() <= 1e-6 * want.abs().max(1.0), "{} vs {}", got, want);
            }
        }
    }

    #[test]
    fn labels_partition_and_order(a in -1e6f64..1e6, b in -1e6f64..1e6) {
        for label in [label_tmp, label_pre] {
            let (la, lb) = (label(a).unwrap(), label(b).unwrap());
            prop_assert!((1..=5).contains(&la.ordinal));
            if a < b {
                prop_assert!(la.ordinal >= lb.ordinal);
            }
        }
    }

    #[test]
    fn delta_means_match_two_pass(values in proptest::collection::vec(-100.0f32..100.0, 600)) {
        let cube = ClimateCube::new(
            vec![VariableId::Tmp],
            1950,
            600,
            vec![GridCell { cell_id: 0, lat: 0.0, lon: 0.0 }],
            values.clone(),
        )
        .unwrap();
        for w in enumerate_windows(50, 30, 10).unwrap() {
            let d = trend_delta(&cube, 0, VariableId::Tmp, &w).unwrap().unwrap();
            let naive = |r: std::ops::Range<usize>| {
                let xs: Vec<f64> = values[r].iter().map(|&x| x as f64).collect();
                let mut s = 0.0;
                for x in &xs {
                    s += x;
                }
                s / xs.len() as f64
            };
            let (mt, ml) = (naive(w.training_months()), naive(w.labeling_months()));
            prop_assert!((d.mu_train - mt).abs() <= 1e-9 * mt.abs().max(1.0));
            prop_assert!((d.mu_label - ml).abs() <= 1e-9 * ml.abs().max(1.0));
            prop_assert_eq!(d.delta, d.mu_label - d.mu_train);
        }
    }

    #[test]
    fn raster_reads_back_scaled_values(
        raw in proptest::collection::vec(-40.0f64..40.0, 360),
        lo in -50.0f64..0.0,
        span in 0.1f64..100.0,
    ) {
        let range = ValueRange { min: lo, max: lo + span };
        let grid = MonthYearGrid::new(30, raw.clone()).unwrap().map(|x| scale01(x, range));
        let img = compose_rgb(&[VariableId::Dtr], &[grid], Knockout::None, 30).unwrap();
        for m in 0..12 {
            for y in 0..30 {
                let want = scale01(raw[m * 30 + y], range) as f32;
                for r in 5 * m..5 * m + 5 {
                    for c in 2 * y..2 * y + 2 {
                        prop_assert_eq!(img.pixel(r, c, 0), want);
                    }
                }
            }
        }
        prop_assert!(img.vacant_channels_zero());
        prop_assert!(img.in_unit_range());
    }

    #[test]
    fn knockouts_idempotent_and_commuting(raw in proptest::collection::vec(0.0f64..1.0, 360)) {
        let g = MonthYearGrid::new(30, raw.clone()).unwrap();
        let i1 = knockout_interannual(&g);
        let s1 = knockout_seasonal(&g);
        let close = |a: &MonthYearGrid, b: &MonthYearGrid| {
            a.values().iter().zip(b.values()).all(|(x, y)| (x - y).abs() < 1e-12)
        };
        prop_assert!(close(&knockout_interannual(&i1), &i1));
        prop_assert!(close(&knockout_seasonal(&s1), &s1));
        let mean = raw.iter().sum::<f64>() / 360.0;
        for both in [knockout_seasonal(&i1), knockout_interannual(&s1)] {
            prop_assert!(both.values().iter().all(|v| (v - mean).abs() < 1e-12));
        }
        let h = compose_rgb(&[VariableId::Tmp], &[i1], Knockout::SeasonalOnly, 30).unwrap();
        let v = compose_rgb(&[VariableId::Tmp], &[s1], Knockout::InterannualOnly, 30).unwrap();
        prop_assert!(h.is_horizontally_striped());
        prop_assert!(v.is_vertically_striped());
        prop_assert_eq!(rasterize(&g).unwrap(), rasterize(&g).unwrap());
    }

    #[test]
    fn kappa_scale_invariant(counts in proptest::collection::vec(0u64..20, 25), factor in 2u64..6) {
        let rows: Vec<Vec<u64>> = counts.chunks(5).map(|r| r.to_vec()).collect();
        let scaled: Vec<Vec<u64>> = rows.iter().map(|r| r.iter().map(|c| c * factor).collect()).collect();
        let a = ConfusionMatrix::from_rows(&rows).unwrap();
        let b = ConfusionMatrix::from_rows(&scaled).unwrap();
        for w in [KappaWeights::Quadratic, KappaWeights::Linear] {
            match (weighted_kappa(&a, w), weighted_kappa(&b, w)) {
                (Ok(x), Ok(y)) => prop_assert!((x - y).abs() < 1e-12),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "scaling changed definedness"),
            }
        }
    }

    #[test]
    fn kappa_independence_is_zero(rows in proptest::collection::vec(1u64..6, 5), cols in proptest::collection::vec(1u64..6, 5)) {
        let m: Vec<Vec<u64>> = rows.iter().map(|r| cols.iter().map(|c| r * c).collect()).collect();
        let k = weighted_kappa(&ConfusionMatrix::from_rows(&m).unwrap(), KappaWeights::Quadratic).unwrap();
        prop_assert!(k.abs() < 1e-12);
        let diag: Vec<Vec<u64>> = (0..5).map(|i| (0..5).map(|j| if i == j { rows[i] } else { 0 }).collect()).collect();
        let k = weighted_kappa(&ConfusionMatrix::from_rows(&diag).unwrap(), KappaWeights::Linear).unwrap();
        prop_assert!((k - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_tests_ignore_monotone_transforms(
        a in proptest::collection::vec(-5i32..5, 1..7),
        b in proptest::collection::vec(-5i32..5, 1..7),
        c in proptest::collection::vec(-5i32..5, 1..30),
    ) {
        let f = |v: &Vec<i32>| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
        let g = |v: &Vec<i32>| v.iter().map(|&x| (x as f64 / 3.0).exp() * 2.0 + 1.0).collect::<Vec<_>>();
        let kw1 = kruskal_wallis(&[f(&a), f(&b), f(&c)]).unwrap();
        let kw2 = kruskal_wallis(&[g(&a), g(&b), g(&c)]).unwrap();
        prop_assert!((kw1.statistic - kw2.statistic).abs() < 1e-9);
        prop_assert!((kw1.p_value - kw2.p_value).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&kw1.p_value));
        let m1 = mann_whitney_u(&f(&a), &f(&c), 1).unwrap();
        let m2 = mann_whitney_u(&g(&a), &g(&c), 1).unwrap();
        prop_assert_eq!(m1.statistic, m2.statistic);
        prop_assert!((m1.p_value - m2.p_value).abs() < 1e-12);
        let adj = mann_whitney_u(&f(&a), &f(&c), 3).unwrap();
        prop_assert!(adj.p_value >= m1.p_value && adj.p_value <= 1.0);
    }

    #[test]
    fn bonferroni_bounds(p in 0.0f64..=1.0, m in 1usize..100) {
        let q = bonferroni(p, m);
        prop_assert!(q >= p && q <= 1.0);
    }
}

#[test]
fn combinations_are_all_small_subsets() {
    let mut brute: Vec<Vec<VariableId>> = (1u32..256)
        .filter(|m| m.count_ones() <= 3)
        .map(|m| {
            VariableId::ALL
                .iter()
                .enumerate()
                .filter(|(i, _)| m >> i & 1 == 1)
                .map(|(_, &v)| v)
                .collect()
        })
        .collect();
    let mut got = combinations();
    assert_eq!(got.len(), 92);
    brute.sort();
    got.sort();
    assert_eq!(got, brute);
}
