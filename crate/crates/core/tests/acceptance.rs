//! Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use imbalance_lab::datagen::{bundled_scenario, sample_scenario, solve_delta_mu};
use imbalance_lab::harness::{aggregate, read_results, run_iteration, run_plan, AggregateRow, Phase, RunOptions, RunPlan};
use imbalance_lab::learners::forest::fit_forest;
use imbalance_lab::learners::logistic::fit_logistic;
use imbalance_lab::learners::tree::SortedColumns;
use imbalance_lab::learners::{LearnerKind, LearnerSpec};
use imbalance_lab::metrics::{brier, concordance, evaluate, evaluate_recalibrated, flexible_curve, recalibrate};
use imbalance_lab::resample::{enn_flags, ros, rus, smote_traced, CorrectionKind};
use imbalance_lab::rng::seeded;
use imbalance_lab::stats::sigmoid;
use rand::Rng;

const SEED: u64 = 20260101;
/// Iterations for the all-learner run; the forest's tuning grid dominates
/// its cost.
const ALL_LEARNER_ITERATIONS: u32 = 20;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: String, failures: &mut Vec<String>) {
    if !cond {
        failures.push(msg);
    }
}

fn finish(details: String, failures: Vec<String>) -> Outcome {
    if failures.is_empty() {
        Ok(details)
    } else {
        Err(format!("{details}; {}", failures.join("; ")))
    }
}

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn run_and_aggregate(plan: &RunPlan) -> Vec<AggregateRow> {
    run_plan(plan, &RunOptions { jobs: jobs(), ..Default::default() }).expect("run completes");
    let mut rows = Vec::new();
    for s in &plan.scenarios {
        rows.extend(read_results(&plan.output_dir.join(format!("results_{}.csv", s.id))).unwrap());
    }
    aggregate(&rows, plan.base_seed)
}

fn median_of(agg: &[AggregateRow], c: CorrectionKind, l: LearnerKind, metric: &str) -> f64 {
    agg.iter()
        .find(|a| a.correction == c && a.learner == l && a.phase == Phase::Raw && a.metric == metric)
        .and_then(|a| a.median)
        .unwrap_or(f64::NAN)
}

fn lr_plan(scenario: u32, iterations: u32, dir: &Path) -> RunPlan {
    let mut plan = RunPlan::new(vec![bundled_scenario(scenario).unwrap()], SEED);
    plan.learners = vec![LearnerSpec::Lr];
    plan.iterations = iterations;
    plan.output_dir = dir.to_path_buf();
    plan
}

fn delta_solver() -> Outcome {
    let t = Instant::now();
    let d8 = solve_delta_mu(8, 6, 0.2, 0.3, 0.85).map_err(|e| e.to_string())?;
    let d16 = solve_delta_mu(16, 12, 0.2, 0.3, 0.85).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    let mut f = Vec::new();
    check((d8 - 0.6043).abs() <= 5e-4, format!("p=8 gives {d8}"), &mut f);
    check((d16 - 0.4854).abs() <= 5e-4, format!("p=16 gives {d16}"), &mut f);
    check(elapsed < Duration::from_secs(1), format!("took {elapsed:?}"), &mut f);
    finish(format!("p=8 {d8:.6}, p=16 {d16:.6}, {elapsed:?}"), f)
}

fn generator_fidelity() -> Outcome {
    let t = Instant::now();
    let s = bundled_scenario(1).unwrap();
    let model = s.model().map_err(|e| e.to_string())?;
    let w = model.oracle_weights().map_err(|e| e.to_string())?;
    let ds = sample_scenario(&model, 200_000, s.event_fraction, &mut seeded(SEED)).map_err(|e| e.to_string())?;
    let score: Vec<f64> = ds.features.rows().map(|x| x.iter().zip(w.iter()).map(|(a, b)| a * b).sum()).collect();
    let c = concordance(&score, &ds.outcome).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    let mut f = Vec::new();
    check((c - 0.85).abs() <= 0.005, format!("AUC {c}"), &mut f);
    check(elapsed < Duration::from_secs(10), format!("took {elapsed:?}"), &mut f);
    finish(format!("oracle AUC {c:.4} on 200000 points, {elapsed:?}"), f)
}

fn scenario5_lr(dir: &Path) -> Outcome {
    let t = Instant::now();
    let agg = run_and_aggregate(&lr_plan(5, 200, dir));
    let slope_c = median_of(&agg, CorrectionKind::Control, LearnerKind::Lr, "cal_slope");
    let slope_r = median_of(&agg, CorrectionKind::Rus, LearnerKind::Lr, "cal_slope");
    let brier_c = median_of(&agg, CorrectionKind::Control, LearnerKind::Lr, "brier");
    let brier_r = median_of(&agg, CorrectionKind::Rus, LearnerKind::Lr, "brier");
    let mut f = Vec::new();
    check((slope_c - 0.85).abs() <= 0.15, format!("Control slope {slope_c}"), &mut f);
    check((slope_r - 0.67).abs() <= 0.15, format!("RUS slope {slope_r}"), &mut f);
    check((brier_c - 0.12).abs() <= 0.01, format!("Control Brier {brier_c}"), &mut f);
    check((0.17..=0.21).contains(&brier_r), format!("RUS Brier {brier_r}"), &mut f);
    finish(
        format!(
            "slope Control {slope_c:.3} RUS {slope_r:.3}; Brier Control {brier_c:.4} RUS {brier_r:.4}; {:?}",
            t.elapsed()
        ),
        f,
    )
}

fn scenario6_ladder(dir: &Path) -> Outcome {
    let agg = run_and_aggregate(&lr_plan(6, 100, dir));
    let targets = [
        (CorrectionKind::Control, 0.02, 0.005),
        (CorrectionKind::Rus, 0.19, 0.03),
        (CorrectionKind::Ros, 0.16, 0.03),
        (CorrectionKind::Smote, 0.15, 0.03),
        (CorrectionKind::Senn, 0.16, 0.03),
    ];
    let mut f = Vec::new();
    let mut parts = Vec::new();
    for (c, target, tol) in targets {
        let m = median_of(&agg, c, LearnerKind::Lr, "brier");
        parts.push(format!("{c} {m:.4}"));
        check((m - target).abs() <= tol, format!("{c} Brier {m} outside {target} ± {tol}"), &mut f);
    }
    finish(format!("median Brier {}", parts.join(", ")), f)
}

fn over_estimation(dir: &Path) -> Outcome {
    let t = Instant::now();
    let mut plan = RunPlan::new(vec![bundled_scenario(5).unwrap()], SEED);
    plan.iterations = ALL_LEARNER_ITERATIONS;
    plan.output_dir = dir.to_path_buf();
    let agg = run_and_aggregate(&plan);
    let mut f = Vec::new();
    let mut negative = 0;
    for c in CorrectionKind::ALL {
        for l in LearnerKind::ALL {
            let m = median_of(&agg, c, l, "cal_intercept");
            let must_be_negative = c != CorrectionKind::Control
                || matches!(l, LearnerKind::RUSBoost | LearnerKind::EasyEnsemble);
            if must_be_negative {
                check(m < 0.0, format!("{c}-{l} intercept {m} not below 0"), &mut f);
                negative += usize::from(m < 0.0);
            }
        }
    }
    let lr = median_of(&agg, CorrectionKind::Control, LearnerKind::Lr, "cal_intercept");
    let rf = median_of(&agg, CorrectionKind::Control, LearnerKind::Rf, "cal_intercept");
    let rb = median_of(&agg, CorrectionKind::Control, LearnerKind::RUSBoost, "cal_intercept");
    let ee = median_of(&agg, CorrectionKind::Control, LearnerKind::EasyEnsemble, "cal_intercept");
    check(lr.abs() <= 0.15, format!("Control-LR intercept {lr}"), &mut f);
    check(rf.abs() <= 0.15, format!("Control-RF intercept {rf}"), &mut f);
    finish(
        format!(
            "{negative}/22 required cells below 0; Control LR {lr:.3} RF {rf:.3} RB {rb:.3} EE {ee:.3}; {} iterations, {:?}",
            ALL_LEARNER_ITERATIONS,
            t.elapsed()
        ),
        f,
    )
}

fn recalibration_fixtures() -> Outcome {
    let mut fixtures: Vec<(String, Vec<f64>, Vec<u8>)> = Vec::new();
    let mut rng = seeded(SEED);
    for (name, n, scale, shift, phi) in [
        ("balanced", 500, 2.0, 0.0, 0.5),
        ("rare events", 2000, 1.5, -3.0, 0.03),
        ("over-confident", 300, 6.0, 1.0, 0.3),
        ("near-saturated", 400, 12.0, 0.0, 0.5),
        ("small", 25, 1.0, 0.5, 0.4),
    ] {
        let risks: Vec<f64> = (0..n).map(|_| sigmoid(scale * (rng.random::<f64>() - 0.5) + shift)).collect();
        let y: Vec<u8> = risks.iter().map(|&p| u8::from(rng.random::<f64>() < (p + phi) / 2.0)).collect();
        fixtures.push((name.to_string(), risks, y));
    }
    // Validation predictions of every learner on one scenario iteration.
    let mut plan = RunPlan::new(vec![bundled_scenario(2).unwrap()], SEED);
    plan.save_predictions = true;
    let out = run_iteration(&plan.scenarios[0], 0, &plan);
    for p in out.predictions {
        if let Some(r) = p.risks_raw {
            fixtures.push((format!("{}-{}", p.correction, p.learner), r, p.outcomes));
        }
    }
    let mut f = Vec::new();
    let mut worst_int = 0.0f64;
    let mut worst_slope = 0.0f64;
    for (name, r, y) in &fixtures {
        let before = evaluate(r, y).map_err(|e| format!("{name}: {e}"))?;
        let rec = recalibrate(r, y).map_err(|e| format!("{name}: {e}"))?;
        let after = evaluate_recalibrated(&rec, y).map_err(|e| format!("{name}: {e}"))?;
        let a = after.cal_intercept.unwrap_or(f64::NAN);
        worst_int = worst_int.max(a.abs());
        check(a.abs() <= 1e-6, format!("{name}: intercept after {a}"), &mut f);
        match (before.cal_slope, after.cal_slope) {
            (Some(b0), Some(b1)) => {
                worst_slope = worst_slope.max((b0 - b1).abs());
                check((b0 - b1).abs() <= 1e-9, format!("{name}: slope {b0} -> {b1}"), &mut f);
            }
            (None, None) => {}
            (b0, b1) => f.push(format!("{name}: slope defined only on one side ({b0:?}, {b1:?})")),
        }
    }
    finish(
        format!(
            "{} fixtures; max |intercept| {worst_int:.2e}, max slope change {worst_slope:.2e}",
            fixtures.len()
        ),
        f,
    )
}

fn oracle_suite() -> Outcome {
    let mut f = Vec::new();
    let mut rng = seeded(SEED);
    let mut auc_mismatch = 0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=200);
        let levels = rng.random_range(2..60) as f64;
        let r: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * levels).floor() / levels).collect();
        let mut y: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<f64>() < 0.35)).collect();
        y[0] = 1;
        y[1] = 0;
        if concordance(&r, &y).unwrap() != brute_concordance(&r, &y) {
            auc_mismatch += 1;
        }
    }
    check(auc_mismatch == 0, format!("{auc_mismatch} concordance mismatches"), &mut f);

    let mut enn_mismatch = 0;
    for seed in 0..30 {
        let ds = gaussian_dataset(80, 3, 25, 1.0, seed);
        for k in [1, 3, 5] {
            if enn_flags(&ds, k, None).unwrap() != brute_enn_flags(&ds, k) {
                enn_mismatch += 1;
            }
        }
    }
    check(enn_mismatch == 0, format!("{enn_mismatch} ENN mismatches"), &mut f);

    let ds = gaussian_dataset(500, 4, 150, 0.7, 3);
    let fit = fit_logistic(&ds.features, &ds.outcome).unwrap();
    let oracle = newton_logistic(&ds);
    let lr_err = std::iter::once((fit.model.intercept - oracle[0]).abs())
        .chain(fit.model.coefficients.iter().zip(&oracle[1..]).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    check(lr_err < 1e-6, format!("LR coefficient error {lr_err}"), &mut f);

    let ds = gaussian_dataset(150, 3, 50, 0.8, 4);
    let sorted = SortedColumns::new(&ds.features);
    let forest = fit_forest(&ds.features, &sorted, &ds.outcome, 20, 2, 3, &mut seeded(5));
    let boots = forest_bootstrap(ds.len(), 20, 5);
    let mut rf_err = 0.0f64;
    for (tree, counts) in forest.trees.iter().zip(&boots) {
        match check_forest_tree(tree, &ds.features, &ds.outcome, counts, 3.0) {
            Ok(e) => rf_err = rf_err.max(e),
            Err(e) => f.push(format!("RF tree: {e}")),
        }
    }
    for row in ds.features.rows().take(40) {
        let o = forest_risk_oracle(&forest, &ds.features, &ds.outcome, &boots, row);
        rf_err = rf_err.max((forest.predict_row(row) - o).abs());
    }
    check(rf_err < 1e-12, format!("RF error {rf_err}"), &mut f);

    let r: Vec<f64> = (0..300).map(|_| rng.random::<f64>()).collect();
    let y: Vec<u8> = r.iter().map(|&p| u8::from(rng.random::<f64>() < p)).collect();
    let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    let curve = flexible_curve(&r, &y, 0.75, 2, 100).unwrap();
    let loess_err = curve
        .grid
        .iter()
        .zip(&curve.fitted)
        .map(|(g, v)| (v - loess_point(&r, &yf, *g, 0.75, 2).clamp(0.0, 1.0)).abs())
        .fold(0.0, f64::max);
    check(loess_err < 1e-10, format!("loess error {loess_err}"), &mut f);

    finish(
        format!(
            "1000 concordance instances, 90 ENN cases exact; LR {lr_err:.1e}, RF {rf_err:.1e}, loess {loess_err:.1e}"
        ),
        f,
    )
}

fn property_suite(dir: &Path) -> Outcome {
    let mut f = Vec::new();
    let mut rng = seeded(SEED + 1);
    for _ in 0..200 {
        let n = rng.random_range(1..400);
        let y: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<f64>() < 0.3)).collect();
        let events = y.iter().filter(|&&v| v == 1).count();
        let b = brier(&vec![0.0; n], &y).unwrap();
        if b != events as f64 / n as f64 {
            f.push(format!("constant-0 Brier {b} for {events}/{n}"));
            break;
        }
    }

    let mut smote_err = 0.0f64;
    let mut imbalance = 0usize;
    let mut auc_fail = 0;
    for seed in 0..100 {
        let n = 20 + (seed as usize * 7) % 80;
        let ds = gaussian_dataset(n, 3, 3 + n / 6, 0.6, seed);
        let out = smote_traced(&ds, 5, 0.5, &mut seeded(seed)).unwrap();
        for (s, d) in out.draws.iter().enumerate() {
            let row = out.dataset.row(ds.len() + s);
            for j in 0..3 {
                let a = ds.features.get(d.base, j);
                let b = ds.features.get(d.neighbor, j);
                smote_err = smote_err.max((row[j] - (a + d.u * (b - a))).abs());
            }
        }
        for bal in [rus(&ds, 0.5, &mut seeded(seed)).unwrap(), ros(&ds, 0.5, &mut seeded(seed)).unwrap(), out.dataset] {
            imbalance = imbalance.max(bal.n_events().abs_diff(bal.n_non_events()));
        }
        let r: Vec<f64> = ds.features.rows().map(|x| sigmoid(x[0] + 0.5 * x[1])).collect();
        let mapped: Vec<f64> = r.iter().map(|p| (p / (1.0 - p)).ln().powi(3)).collect();
        if concordance(&r, &ds.outcome).unwrap() != concordance(&mapped, &ds.outcome).unwrap() {
            auc_fail += 1;
        }
    }
    check(smote_err < 1e-12, format!("SMOTE reconstruction error {smote_err}"), &mut f);
    check(imbalance <= 1, format!("class counts differ by {imbalance}"), &mut f);
    check(auc_fail == 0, format!("{auc_fail} AUC changes under monotone maps"), &mut f);

    let mut one = RunPlan::new(vec![bundled_scenario(2).unwrap()], SEED);
    one.iterations = 2;
    one.save_predictions = true;
    one.output_dir = dir.join("jobs1");
    let mut eight = one.clone();
    eight.output_dir = dir.join("jobs8");
    run_plan(&one, &RunOptions { jobs: 1, ..Default::default() }).map_err(|e| e.to_string())?;
    run_plan(&eight, &RunOptions { jobs: 8, ..Default::default() }).map_err(|e| e.to_string())?;
    let a = dir_digest(&one.output_dir);
    let b = dir_digest(&eight.output_dir);
    check(a == b, "outputs differ between 1 and 8 workers".into(), &mut f);

    finish(
        format!(
            "SMOTE error {smote_err:.1e}, max class gap {imbalance}, {} files hash-equal under 1 vs 8 workers",
            a.len()
        ),
        f,
    )
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let root = tmp.path().to_path_buf();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("1 delta-mu solver", Box::new(delta_solver)),
        ("2 generator fidelity", Box::new(generator_fidelity)),
        ("3 scenario 5 LR replication", Box::new({
            let d = root.join("c3");
            move || scenario5_lr(&d)
        })),
        ("4 scenario 6 LR Brier ladder", Box::new({
            let d = root.join("c4");
            move || scenario6_ladder(&d)
        })),
        ("5 over-estimation direction", Box::new({
            let d = root.join("c5");
            move || over_estimation(&d)
        })),
        ("6 recalibration algebra", Box::new(recalibration_fixtures)),
        ("7 oracle equivalence", Box::new(oracle_suite)),
        ("8 property suite", Box::new({
            let d = root.join("c8");
            move || property_suite(&d)
        })),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(d) => println!("PASS criterion {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {name}: {d}");
            }
        }
    }
    if failed == 0 {
        println!("all {} criteria passed", criteria.len());
        ExitCode::SUCCESS
    } else {
        println!("{failed} of {} criteria failed", criteria.len());
        ExitCode::FAILURE
    }
}
