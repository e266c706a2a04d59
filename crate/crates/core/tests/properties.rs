use proptest::prelude::*;
use stochheat::besov::{default_t_grid, thermic_norm, DriftCombination};
use stochheat::coupling::{pointwise_moments, sup_moment_error};
use stochheat::drift::{mollify, Drift, DriftEvaluator};
use stochheat::experiment::fit_rate;
use stochheat::grid::{GridConfig, Ratio};
use stochheat::heat::{discrete_semigroup_apply, discrete_spectrum, stencil_step, variance_qn};
use stochheat::noise::{coarsen_noise, sample_noise};
use stochheat::scheme::{simulate_with, Psi0};

fn ratio() -> impl Strategy<Value = Ratio> {
    (1u64..50, 2u64..101).prop_filter_map("c must lie in (0, 1/2)", |(p, q)| {
        let r = Ratio::new(p, q).ok()?;
        (r.to_f64() < 0.5).then_some(r)
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn multipliers_stay_in_stability_band(n in 1u32..80, c in ratio()) {
        let grid = GridConfig::new(n, c).unwrap();
        let s = discrete_spectrum(&grid);
        let cf = c.to_f64();
        prop_assert_eq!(s.multipliers[0], 1.0);
        for &m in &s.multipliers {
            prop_assert!(m > 1.0 - 4.0 * cf - 1e-12 && m <= 1.0 + 1e-12, "m = {}", m);
        }
    }

    #[test]
    fn qn_is_linear_below_one_step(n in 1u32..200, c in ratio(), frac in 0.0f64..1.0) {
        let grid = GridConfig::new(n, c).unwrap();
        let t = frac * grid.h();
        prop_assert_eq!(variance_qn(&grid, t).unwrap(), 2.0 * n as f64 * t);
    }

    #[test]
    fn spectral_and_stencil_powers_agree(n in 1u32..24, steps in 0usize..40, seed in any::<u64>()) {
        let grid = GridConfig::new(n, Ratio::new(1, 4).unwrap()).unwrap();
        let f: Vec<f64> = sample_noise(&grid, seed).row(0).to_vec();
        let mut g = f.clone();
        for _ in 0..steps {
            g = stencil_step(&grid, &g);
        }
        let s = discrete_semigroup_apply(&grid, steps, &f);
        let scale = f.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (a, b) in g.iter().zip(&s) {
            prop_assert!((a - b).abs() <= 1e-12 * scale.max(1e-300));
        }
    }

    #[test]
    fn coarsening_conserves_mass(n in 1u32..6, depth in 1u32..3, seed in any::<u64>()) {
        let c = Ratio::new(1, 4).unwrap();
        let coarse = GridConfig::new(n, c).unwrap();
        let fine = GridConfig::new(n << depth, c).unwrap();
        let field = sample_noise(&fine, seed);
        let agg = coarsen_noise(&field, &coarse).unwrap();
        let total_fine: f64 = field.increments().iter().sum();
        let total_coarse: f64 = agg.increments().iter().sum();
        let tail: f64 = (4usize.pow(depth) * coarse.num_time()..fine.num_time())
            .flat_map(|i| field.row(i).to_vec())
            .sum();
        prop_assert!((total_fine - tail - total_coarse).abs() < 1e-9);
    }

    #[test]
    fn zero_drift_scheme_is_affine_in_initial_data(seed in any::<u64>(), a in -3.0f64..3.0) {
        let grid = GridConfig::new(4, Ratio::new(1, 4).unwrap()).unwrap();
        let field = sample_noise(&grid, seed);
        let last = grid.num_time();
        let psi = Psi0::Weierstrass.sample(&grid);
        let run = |init: Vec<f64>, f: &stochheat::noise::NoiseField| {
            simulate_with(&grid, DriftEvaluator::Zero, f, init, &[last], None, "zero".into()).unwrap().snapshots[&last].clone()
        };
        let zero = vec![0.0; psi.len()];
        let noise_only = run(zero.clone(), &field);
        let scaled: Vec<f64> = psi.iter().map(|v| a * v).collect();
        let full = run(scaled, &field);
        let free = run(psi, &field.scaled(0.0));
        for ((u, o), d) in full.iter().zip(&noise_only).zip(&free) {
            prop_assert!((u - o - a * d).abs() < 1e-10);
        }
    }

    #[test]
    fn thermic_estimate_is_homogeneous(k in 2u32..64, lambda in 0.01f64..100.0) {
        let gap = DriftCombination::mollification_gap(&Drift::dirac(0.0, 1.0), k).unwrap();
        let grid = default_t_grid();
        let a = thermic_norm(&gap, -1.0, 1.0, &grid).unwrap().estimate;
        let b = thermic_norm(&gap.scaled(lambda), -1.0, 1.0, &grid).unwrap().estimate;
        prop_assert!((b - lambda * a).abs() <= 1e-12 * b);
    }

    #[test]
    fn mollified_sup_grows_with_k(k in 1u32..500) {
        let b = Drift::dirac(0.0, 1.0);
        let lo = mollify(&b, k).unwrap().sup_norm();
        let hi = mollify(&b, 2 * k).unwrap().sup_norm();
        prop_assert!((hi / lo - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn fit_recovers_exact_power_laws(rate in 0.05f64..1.5, scale in 0.01f64..100.0, levels in 3usize..7) {
        let pts: Vec<(u32, f64)> = (0..levels).map(|i| {
            let n = 4u32 << i;
            (n, scale * (n as f64).powf(-rate))
        }).collect();
        let f = fit_rate(&pts).unwrap();
        prop_assert!((f.rate - rate).abs() < 1e-9);
        prop_assert!(!f.dropped_coarsest);
    }

    #[test]
    fn moment_errors_ignore_replica_order_and_grow_with_m(
        diffs in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 6), 2..12),
        rot in 0usize..12,
    ) {
        let mut shuffled = diffs.clone();
        let len = shuffled.len();
        shuffled.rotate_left(rot % len);
        let a = sup_moment_error(&diffs, 2.0);
        let b = sup_moment_error(&shuffled, 2.0);
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
        let m2 = pointwise_moments(&diffs, 2.0);
        let m3 = pointwise_moments(&diffs, 3.0);
        for (x, y) in m2.iter().zip(&m3) {
            prop_assert!(x <= &(y * (1.0 + 1e-12)));
        }
    }
}
