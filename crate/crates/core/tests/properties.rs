//! Property tests for the structural invariants: hierarchy coherence,
//! reconciliation projections, bootstrap rank and range preservation, and
//! score arithmetic.

use gts_core::arima::{auto_fit, OrderBounds};
use gts_core::bootstrap::meboot_replicate;
use gts_core::evaluate::{interval_score, point_scores, CellGrid, RollingPlan};
use gts_core::hierarchy::{
    aggregate_panel, build_hierarchy, summing_matrix_rates, GroupedHierarchy,
};
use gts_core::reconcile::{
    bottom_up, gls_combine, ols_combine, BaseForecasts, Method, SProvenance,
};
use nalgebra::DVector;
use proptest::collection::vec as pvec;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn hierarchy_strategy() -> impl Strategy<Value = GroupedHierarchy> {
    (2usize..=4, 0usize..=3).prop_map(|(first, second)| {
        let mut attrs = vec![(
            "a".to_string(),
            (0..first).map(|v| format!("a{v}")).collect::<Vec<_>>(),
        )];
        if second >= 2 {
            attrs.push((
                "b".to_string(),
                (0..second).map(|v| format!("b{v}")).collect::<Vec<_>>(),
            ));
        }
        build_hierarchy(&attrs).unwrap()
    })
}

proptest! {
    #[test]
    fn rates_matrix_rows_sum_to_one_and_reproduce_panel(
        (h, seed) in hierarchy_strategy().prop_flat_map(|h| (Just(h), any::<u64>()))
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let m_k = h.m_k();
        let deaths: Vec<Vec<f64>> =
            (0..m_k).map(|_| vec![rng.random_range(0.0..500.0)]).collect();
        let expos: Vec<Vec<f64>> =
            (0..m_k).map(|_| vec![rng.random_range(1.0e3..1.0e6)]).collect();
        let panel = aggregate_panel(&h, &[2000], &deaths, &expos).unwrap();
        let s = summing_matrix_rates(&h, &panel.bottom_exposures_at(0), 2000).unwrap();
        for i in 0..h.m() {
            let row_sum: f64 = s.matrix.row(i).iter().sum();
            prop_assert!((row_sum - 1.0).abs() <= 1e-9);
        }
        let bottom = DVector::from_fn(m_k, |k, _| panel.rate_series(h.bottom_start() + k)[0]);
        let node_rates = &s.matrix * &bottom;
        for i in 0..h.m() {
            prop_assert!((node_rates[i] - panel.rate_series(i)[0]).abs() <= 1e-12);
        }
    }

    #[test]
    fn every_method_lands_on_a_coherent_vector(
        (h, seed) in hierarchy_strategy().prop_flat_map(|h| (Just(h), any::<u64>()))
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let expo: Vec<f64> = (0..h.m_k()).map(|_| rng.random_range(1.0e3..1.0e6)).collect();
        let s = summing_matrix_rates(&h, &expo, 1999).unwrap();
        let bf = BaseForecasts {
            horizons: vec![DVector::from_fn(h.m(), |_, _| rng.random_range(0.001..0.1))],
            one_step_variances: (0..h.m()).map(|_| rng.random_range(0.1..4.0)).collect(),
        };
        for method in [Method::BottomUp, Method::Ols, Method::Gls] {
            let out = match method {
                Method::BottomUp => bottom_up(&bf, std::slice::from_ref(&s), SProvenance::HoldoutExposures).unwrap(),
                Method::Ols => ols_combine(&bf, std::slice::from_ref(&s), SProvenance::HoldoutExposures).unwrap(),
                Method::Gls => gls_combine(
                    &bf,
                    std::slice::from_ref(&s),
                    &bf.one_step_variances.iter().map(|v| 1.0 / v).collect::<Vec<_>>(),
                    SProvenance::HoldoutExposures,
                )
                .unwrap(),
                Method::Base => unreachable!(),
            };
            let recon = &s.matrix * &out.bottom[0];
            prop_assert!((&out.revised[0] - &recon).amax() <= 1e-8, "{method} incoherent");
        }
    }

    #[test]
    fn least_squares_revision_is_idempotent(
        (h, seed) in hierarchy_strategy().prop_flat_map(|h| (Just(h), any::<u64>()))
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let expo: Vec<f64> = (0..h.m_k()).map(|_| rng.random_range(1.0e3..1.0e6)).collect();
        let s = summing_matrix_rates(&h, &expo, 1999).unwrap();
        let bf = BaseForecasts {
            horizons: vec![DVector::from_fn(h.m(), |_, _| rng.random_range(0.001..0.1))],
            one_step_variances: vec![1.0; h.m()],
        };
        let once = ols_combine(&bf, std::slice::from_ref(&s), SProvenance::HoldoutExposures).unwrap();
        let again = ols_combine(
            &BaseForecasts {
                horizons: once.revised.clone(),
                one_step_variances: bf.one_step_variances.clone(),
            },
            std::slice::from_ref(&s),
            SProvenance::HoldoutExposures,
        )
        .unwrap();
        prop_assert!((&again.revised[0] - &once.revised[0]).amax() <= 1e-8);
    }

    #[test]
    fn uniform_weights_reduce_gls_to_ols(
        (h, seed, w) in hierarchy_strategy().prop_flat_map(|h| (Just(h), any::<u64>(), 0.25..4.0f64))
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let expo: Vec<f64> = (0..h.m_k()).map(|_| rng.random_range(1.0e3..1.0e6)).collect();
        let s = summing_matrix_rates(&h, &expo, 1999).unwrap();
        let bf = BaseForecasts {
            horizons: vec![DVector::from_fn(h.m(), |_, _| rng.random_range(0.001..0.1))],
            one_step_variances: vec![1.0; h.m()],
        };
        let ols = ols_combine(&bf, std::slice::from_ref(&s), SProvenance::HoldoutExposures).unwrap();
        let gls = gls_combine(
            &bf,
            std::slice::from_ref(&s),
            &vec![w; h.m()],
            SProvenance::HoldoutExposures,
        )
        .unwrap();
        prop_assert!((&gls.revised[0] - &ols.revised[0]).amax() <= 1e-8);
    }

    #[test]
    fn bootstrap_replicates_preserve_ranks_and_interlace_range(
        series in pvec(-50.0..50.0f64, 8..40),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rep = meboot_replicate(&series, &mut rng).unwrap();
        prop_assert_eq!(rep.series.len(), series.len());

        // Same ordering: sorting both by original order statistics lines up.
        let mut orig_idx: Vec<usize> = (0..series.len()).collect();
        orig_idx.sort_by(|&a, &b| series[a].partial_cmp(&series[b]).unwrap());
        for w in orig_idx.windows(2) {
            prop_assert!(rep.series[w[0]] <= rep.series[w[1]] + 1e-12);
        }

        // Range control from the trimmed-mean tails.
        let sorted = {
            let mut s = series.clone();
            s.sort_by(|a, b| a.partial_cmp(b).unwrap());
            s
        };
        let mut devs: Vec<f64> = series.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        devs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let cut = devs.len() / 10;
        let kept = &devs[cut..devs.len() - cut];
        let trim = kept.iter().sum::<f64>() / kept.len() as f64;
        let lo = sorted[0] - trim;
        let hi = sorted[series.len() - 1] + trim;
        for &v in &rep.series {
            prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
        }
    }

    #[test]
    fn interval_score_dominates_width(
        a in -10.0..10.0f64,
        b in -10.0..10.0f64,
        y in -20.0..20.0f64,
        alpha in 0.01..0.99f64,
    ) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let score = interval_score(lo, hi, y, alpha).unwrap();
        prop_assert!(score >= hi - lo);
        if y >= lo && y <= hi {
            prop_assert!((score - (hi - lo)).abs() <= 1e-12);
        } else {
            prop_assert!(score > hi - lo);
        }
    }

    #[test]
    fn score_grid_inequalities(
        n0 in 3usize..8,
        extra in 2usize..6,
        seed in any::<u64>(),
    ) {
        let plan = RollingPlan::new(n0, n0 + extra).unwrap();
        let h = build_hierarchy(&[(
            "sex".to_string(),
            vec!["F".to_string(), "M".to_string()],
        )])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let mut grid = || -> CellGrid {
            plan.origins()
                .map(|o| {
                    (0..h.m())
                        .map(|_| {
                            (0..plan.end_index() - o)
                                .map(|_| rng.random_range(-2.0..2.0))
                                .collect()
                        })
                        .collect()
                })
                .collect()
        };
        let forecasts = grid();
        let holdout = grid();
        let scores = point_scores(&forecasts, &holdout, &plan, &h).unwrap();
        for j in 0..h.m() {
            for step in 0..plan.horizon() {
                let mfe = scores.per_series_mfe[j][step];
                let mafe = scores.per_series_mafe[j][step];
                let rmsfe = scores.per_series_rmsfe[j][step];
                prop_assert!(mafe >= mfe.abs() - 1e-12);
                prop_assert!(rmsfe >= mafe - 1e-12);
            }
        }
    }

    #[test]
    fn plan_counts_sum_to_triangle(
        n0 in 1usize..50,
        extra in 1usize..25,
    ) {
        let plan = RollingPlan::new(n0, n0 + extra).unwrap();
        let horizon = plan.horizon();
        prop_assert_eq!(horizon, extra);
        prop_assert_eq!(plan.origins().count(), horizon);
        for h in 1..=horizon {
            prop_assert_eq!(plan.forecast_count(h), horizon - h + 1);
        }
        let total: usize = (1..=horizon).map(|h| plan.forecast_count(h)).sum();
        prop_assert_eq!(total, horizon * (horizon + 1) / 2);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn model_selection_is_shift_and_scale_equivariant(
        seed in any::<u64>(),
        shift in -5.0..5.0f64,
        scale in 0.5..20.0f64,
    ) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = vec![0.0_f64];
        for _ in 1..60 {
            let e: f64 = rng.random_range(-1.0..1.0);
            let prev = *x.last().unwrap();
            x.push(0.6 * prev + e);
        }
        let y: Vec<f64> = x.iter().map(|v| (v + shift) * scale).collect();
        let bounds = OrderBounds { p_max: 1, q_max: 1, d_max: 1 };
        let mx = auto_fit(&x, &bounds).unwrap();
        let my = auto_fit(&y, &bounds).unwrap();
        prop_assert_eq!(mx.order, my.order);
        let fx = gts_core::arima::forecast(&mx, 3);
        let fy = gts_core::arima::forecast(&my, 3);
        for step in 0..3 {
            let mapped = (fx.means[step] + shift) * scale;
            let denom = mapped.abs().max(1.0);
            prop_assert!((fy.means[step] - mapped).abs() / denom <= 1e-5);
        }
    }
}
