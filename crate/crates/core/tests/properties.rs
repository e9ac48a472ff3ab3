mod common;

use common::gaussian_dataset;
use imbalance_lab::learners::adaboost::fit_adaboost;
use imbalance_lab::learners::tuning::tune_cv;
use imbalance_lab::metrics::{brier, calibration_slope, concordance, evaluate, evaluate_recalibrated, recalibrate};
use imbalance_lab::resample::neighbors::nearest;
use imbalance_lab::resample::{ros, rus, smote_traced};
use imbalance_lab::rng::seeded;
use imbalance_lab::{Dataset, FeatureMatrix, Provenance};
use proptest::prelude::*;

fn arb_dataset() -> impl Strategy<Value = Dataset> {
    (4usize..60, 1usize..4, 0.05f64..0.5, any::<u64>()).prop_map(|(n, p, frac, seed)| {
        let events = ((n as f64 * frac).round() as usize).clamp(2, n - 2);
        gaussian_dataset(n, p, events, 0.5, seed)
    })
}

fn arb_scored() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (2usize..120).prop_flat_map(|n| {
        (
            prop::collection::vec(0.001f64..0.999, n),
            prop::collection::vec(0u8..=1, n),
        )
            .prop_map(|(r, mut y)| {
                y[0] = 1;
                y[1] = 0;
                (r, y)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn smote_rows_are_convex_combinations(ds in arb_dataset(), k in 1usize..6, seed in any::<u64>()) {
        let out = smote_traced(&ds, k, 0.5, &mut seeded(seed)).unwrap();
        let n = ds.len();
        prop_assert_eq!(out.dataset.len(), n + out.draws.len());
        let minority = if ds.n_events() <= ds.n_non_events() { 1 } else { 0 };
        let members = ds.indices_of(minority);
        let k_eff = k.min(members.len() - 1);
        for (s, d) in out.draws.iter().enumerate() {
            prop_assert!((0.0..=1.0).contains(&d.u));
            prop_assert_eq!(ds.outcome[d.base], minority);
            prop_assert_eq!(ds.outcome[d.neighbor], minority);
            prop_assert!(nearest(&ds.features, &members, d.base, k_eff).contains(&d.neighbor));
            let row = out.dataset.row(n + s);
            for j in 0..ds.n_features() {
                let a = ds.features.get(d.base, j);
                let b = ds.features.get(d.neighbor, j);
                prop_assert!((row[j] - (a + d.u * (b - a))).abs() < 1e-12);
            }
            prop_assert_eq!(out.dataset.outcome[n + s], minority);
        }
    }

    #[test]
    fn resamplers_balance_classes(ds in arb_dataset(), seed in any::<u64>()) {
        for out in [rus(&ds, 0.5, &mut seeded(seed)).unwrap(), ros(&ds, 0.5, &mut seeded(seed)).unwrap()] {
            let diff = out.n_events().abs_diff(out.n_non_events());
            prop_assert!(diff <= 1, "{} vs {}", out.n_events(), out.n_non_events());
        }
        let s = smote_traced(&ds, 5, 0.5, &mut seeded(seed)).unwrap().dataset;
        prop_assert!(s.n_events().abs_diff(s.n_non_events()) <= 1);
    }

    #[test]
    fn concordance_invariant_under_monotone_maps((r, y) in arb_scored()) {
        let c = concordance(&r, &y).unwrap();
        let logit: Vec<f64> = r.iter().map(|p| (p / (1.0 - p)).ln()).collect();
        let cubed: Vec<f64> = r.iter().map(|p| 3.0 * p * p * p - 7.0).collect();
        prop_assert_eq!(concordance(&logit, &y).unwrap(), c);
        prop_assert_eq!(concordance(&cubed, &y).unwrap(), c);
        let reversed: Vec<f64> = r.iter().map(|p| -p).collect();
        prop_assert!((concordance(&reversed, &y).unwrap() - (1.0 - c)).abs() < 1e-12);
    }

    #[test]
    fn brier_symmetric_under_label_flip((r, y) in arb_scored()) {
        let flipped_r: Vec<f64> = r.iter().map(|p| 1.0 - p).collect();
        let flipped_y: Vec<u8> = y.iter().map(|v| 1 - v).collect();
        let a = brier(&r, &y).unwrap();
        let b = brier(&flipped_r, &flipped_y).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn constant_zero_brier_is_event_fraction(y in prop::collection::vec(0u8..=1, 1..300)) {
        let zeros = vec![0.0; y.len()];
        let events = y.iter().filter(|&&v| v == 1).count();
        prop_assert_eq!(brier(&zeros, &y).unwrap(), events as f64 / y.len() as f64);
    }

    #[test]
    fn recalibration_zeroes_intercept_and_keeps_slope((r, y) in arb_scored()) {
        prop_assume!(y.iter().filter(|&&v| v == 1).count() >= 2 && y.iter().filter(|&&v| v == 0).count() >= 2);
        let Ok(rec) = recalibrate(&r, &y) else { return Ok(()) };
        let (Ok(before), Ok(after)) = (evaluate(&r, &y), evaluate_recalibrated(&rec, &y)) else { return Ok(()) };
        prop_assert!(after.cal_intercept.unwrap().abs() < 1e-6);
        if let (Some(b0), Some(b1)) = (before.cal_slope, after.cal_slope) {
            prop_assert!((b0 - b1).abs() < 1e-9 * b0.abs().max(1.0), "{b0} vs {b1}");
        }
        prop_assert_eq!(before.c, after.c);
    }

    #[test]
    fn adaboost_weights_are_positive(ds in arb_dataset(), depth in 1usize..3, seed in any::<u64>()) {
        let (ens, trace) = fit_adaboost(&ds.features, &ds.outcome, 8, depth, &mut seeded(seed));
        for l in &ens.learners {
            prop_assert!(l.alpha > 0.0);
        }
        for w in &trace.weights {
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(w.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn tuning_picks_trace_minimum(ds in arb_dataset(), shifts in prop::collection::vec(-2.0f64..2.0, 2..8), seed in any::<u64>()) {
        let out = tune_cv(&ds, &shifts, 5, &mut seeded(seed), |_, test, _| {
            shifts
                .iter()
                .map(|s| Some(test.rows().map(|x| 1.0 / (1.0 + (-(x[0] + s)).exp())).collect()))
                .collect()
        });
        let best = out
            .trace
            .iter()
            .map(|(_, d)| d.unwrap())
            .fold(f64::INFINITY, f64::min);
        let first = out.trace.iter().position(|(_, d)| d.unwrap() == best).unwrap();
        prop_assert_eq!(out.chosen_index, first);
        prop_assert_eq!(out.chosen, shifts[first]);
    }
}

#[test]
fn dominated_grid_point_never_chosen() {
    // Feature 0 carries the label; grid point 1 ignores it.
    for seed in 0..100 {
        let mut ds = gaussian_dataset(120, 2, 40, 0.0, seed);
        let data: Vec<f64> = (0..ds.len())
            .flat_map(|i| [f64::from(ds.outcome[i]) + 0.3 * ds.features.get(i, 0), ds.features.get(i, 1)])
            .collect();
        ds = Dataset::new(FeatureMatrix::new(data, 2).unwrap(), ds.outcome.clone(), Provenance::Generated).unwrap();
        let grid = [0usize, 1, 2];
        let out = tune_cv(&ds, &grid, 5, &mut seeded(seed), |train, test, _| {
            let phi = train.event_fraction();
            vec![
                Some(test.rows().map(|x| if x[0] > 0.5 { 0.9 } else { 0.1 }).collect()),
                Some(vec![phi; test.n_rows()]),
                Some(vec![0.5; test.n_rows()]),
            ]
        });
        assert_ne!(out.chosen, 1, "seed {seed}");
        assert_ne!(out.chosen, 2, "seed {seed}");
    }
}

#[test]
fn ensemble_averaging_reduces_variance() {
    use imbalance_lab::learners::adaboost::fit_easyensemble;
    let ds = gaussian_dataset(150, 3, 25, 0.8, 77);
    let probe = gaussian_dataset(40, 3, 20, 0.8, 78);
    let spread = |subsets: usize| -> f64 {
        let preds: Vec<Vec<f64>> = (0..30)
            .map(|s| {
                let (m, _) = fit_easyensemble(&ds.features, &ds.outcome, subsets, 10, 1, &mut seeded(s));
                probe.features.rows().map(|x| m.predict_row(x)).collect()
            })
            .collect();
        (0..probe.len())
            .map(|i| {
                let col: Vec<f64> = preds.iter().map(|p| p[i]).collect();
                let m = col.iter().sum::<f64>() / col.len() as f64;
                col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (col.len() - 1) as f64
            })
            .sum::<f64>()
            / probe.len() as f64
    };
    let single = spread(1);
    let ten = spread(10);
    assert!(ten < single, "{ten} !< {single}");
}

#[test]
fn calibration_slope_scales_with_logit_stretch() {
    let ds = gaussian_dataset(400, 1, 150, 1.0, 3);
    let risks: Vec<f64> = ds.features.rows().map(|x| 1.0 / (1.0 + (-(x[0] - 0.5)).exp())).collect();
    let stretched: Vec<f64> = ds.features.rows().map(|x| 1.0 / (1.0 + (-2.0 * (x[0] - 0.5)).exp())).collect();
    let b1 = calibration_slope(&risks, &ds.outcome).unwrap();
    let b2 = calibration_slope(&stretched, &ds.outcome).unwrap();
    assert!((b1 - 2.0 * b2).abs() < 1e-8, "{b1} {b2}");
}
