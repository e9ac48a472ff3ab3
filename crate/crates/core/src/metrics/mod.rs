//! Validation performance measures: concordance, Brier score, calibration
//! intercept and slope, intercept-only recalibration and loess calibration
//! curves.
//!
//! Calibration fits work on `logit(p)` with risks clamped to
//! `[1e-10, 1 − 1e-10]`, so exact 0/1 tree predictions stay finite.

pub mod loess;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::LearnerKind;
use crate::resample::CorrectionKind;
use crate::stats::{clamp_prob, logit, sigmoid};

pub use loess::{flexible_curve, CurvePoints};

/// Calibration slopes above this are reported as the cap.
pub const SLOPE_REPORT_CAP: f64 = 10.0;

const NEWTON_TOL: f64 = 1e-13;
const NEWTON_MAX_ITER: usize = 100;

/// Log-likelihood decrease tolerated as rounding noise before a Newton step
/// is halved.
fn ll_slack(ll: f64) -> f64 {
    1e-12 * ll.abs().max(1.0)
}

fn check_lengths(risks: &[f64], outcomes: &[u8]) -> Result<()> {
    if risks.len() != outcomes.len() {
        return Err(Error::Interface(format!(
            "{} risks but {} outcomes",
            risks.len(),
            outcomes.len()
        )));
    }
    if risks.is_empty() {
        return Err(Error::Undefined("no predictions to score".into()));
    }
    Ok(())
}

fn both_classes(outcomes: &[u8]) -> Result<()> {
    let events = outcomes.iter().filter(|&&y| y == 1).count();
    if events == 0 || events == outcomes.len() {
        return Err(Error::Undefined("validation outcomes contain one class".into()));
    }
    Ok(())
}

/// `logit` of every risk after clamping.
pub fn clamped_logits(risks: &[f64]) -> Vec<f64> {
    risks.iter().map(|&p| logit(clamp_prob(p))).collect()
}

/// Mann–Whitney concordance: the share of event/non-event pairs in which the
/// event has the higher risk, counting ties as one half.
pub fn concordance(risks: &[f64], outcomes: &[u8]) -> Result<f64> {
    check_lengths(risks, outcomes)?;
    both_classes(outcomes)?;
    let n = risks.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| risks[a].total_cmp(&risks[b]));

    // Sum of midranks (1-based) of the events.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && risks[order[j]] == risks[order[i]] {
            j += 1;
        }
        let midrank = (i + j + 1) as f64 / 2.0;
        let events = order[i..j].iter().filter(|&&k| outcomes[k] == 1).count();
        rank_sum += midrank * events as f64;
        i = j;
    }
    let n1 = outcomes.iter().filter(|&&y| y == 1).count() as f64;
    let n0 = n as f64 - n1;
    let u = rank_sum - n1 * (n1 + 1.0) / 2.0;
    Ok(u / (n1 * n0))
}

pub fn brier(risks: &[f64], outcomes: &[u8]) -> Result<f64> {
    check_lengths(risks, outcomes)?;
    let s: f64 = risks
        .iter()
        .zip(outcomes)
        .map(|(&p, &y)| (p - f64::from(y)).powi(2))
        .sum();
    Ok(s / risks.len() as f64)
}

fn offset_log_likelihood(alpha: f64, offset: &[f64], outcomes: &[u8]) -> f64 {
    offset
        .iter()
        .zip(outcomes)
        .map(|(&o, &y)| {
            let e = alpha + o;
            let log1pexp = if e > 0.0 {
                e + (-e).exp().ln_1p()
            } else {
                e.exp().ln_1p()
            };
            f64::from(y) * e - log1pexp
        })
        .sum()
}

/// Intercept `α` of `logit P(Y = 1) = α + offset`, by Newton's method with
/// step halving.
pub fn intercept_with_offset(offset: &[f64], outcomes: &[u8]) -> Result<f64> {
    if offset.len() != outcomes.len() {
        return Err(Error::Interface("offset and outcome lengths differ".into()));
    }
    both_classes(outcomes)?;
    let mut alpha = 0.0;
    let mut ll = offset_log_likelihood(alpha, offset, outcomes);
    for _ in 0..NEWTON_MAX_ITER {
        let (mut score, mut info) = (0.0, 0.0);
        for (&o, &y) in offset.iter().zip(outcomes) {
            let p = sigmoid(alpha + o);
            score += f64::from(y) - p;
            info += p * (1.0 - p);
        }
        if info <= 0.0 {
            break;
        }
        let mut step = score / info;
        let mut cand = alpha + step;
        let mut cand_ll = offset_log_likelihood(cand, offset, outcomes);
        let mut halvings = 0;
        while !(cand_ll >= ll - ll_slack(ll)) && halvings < 30 {
            step *= 0.5;
            cand = alpha + step;
            cand_ll = offset_log_likelihood(cand, offset, outcomes);
            halvings += 1;
        }
        alpha = cand;
        ll = cand_ll;
        if step.abs() < NEWTON_TOL * alpha.abs().max(1.0) {
            return Ok(alpha);
        }
    }
    // Near the optimum the step can stall at rounding level; accept if the
    // score equation holds.
    let score: f64 = offset
        .iter()
        .zip(outcomes)
        .map(|(&o, &y)| f64::from(y) - sigmoid(alpha + o))
        .sum();
    if alpha.is_finite() && score.abs() < 1e-8 * offset.len() as f64 {
        Ok(alpha)
    } else {
        Err(Error::Numeric("calibration intercept fit did not converge".into()))
    }
}

/// Calibration-in-the-large: the offset-model intercept on `logit(p)`.
/// Negative values mean risks are too high on average.
pub fn calibration_intercept(risks: &[f64], outcomes: &[u8]) -> Result<f64> {
    check_lengths(risks, outcomes)?;
    intercept_with_offset(&clamped_logits(risks), outcomes)
}

/// Two-parameter logistic fit `logit P(Y = 1) = a + b·x`; returns `(a, b)`.
pub fn logistic_on_score(score: &[f64], outcomes: &[u8]) -> Result<(f64, f64)> {
    if score.len() != outcomes.len() {
        return Err(Error::Interface("score and outcome lengths differ".into()));
    }
    both_classes(outcomes)?;
    let first = score[0];
    if score.iter().all(|&s| s == first) {
        return Err(Error::Undefined("constant risks: calibration slope undefined".into()));
    }
    // Centre the score for conditioning, then map back.
    let centre = score.iter().sum::<f64>() / score.len() as f64;
    let ll = |a: f64, b: f64| -> f64 {
        score
            .iter()
            .zip(outcomes)
            .map(|(&s, &y)| {
                let e = a + b * (s - centre);
                let log1pexp = if e > 0.0 {
                    e + (-e).exp().ln_1p()
                } else {
                    e.exp().ln_1p()
                };
                f64::from(y) * e - log1pexp
            })
            .sum()
    };
    let (mut a, mut b) = (0.0, 0.0);
    let mut cur = ll(a, b);
    for _ in 0..NEWTON_MAX_ITER {
        let (mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&s, &y) in score.iter().zip(outcomes) {
            let x = s - centre;
            let p = sigmoid(a + b * x);
            let r = f64::from(y) - p;
            let w = p * (1.0 - p);
            g0 += r;
            g1 += r * x;
            h00 += w;
            h01 += w * x;
            h11 += w * x * x;
        }
        let det = h00 * h11 - h01 * h01;
        if !(det > 0.0) {
            return Err(Error::Numeric("singular information in slope fit".into()));
        }
        let mut da = (h11 * g0 - h01 * g1) / det;
        let mut db = (h00 * g1 - h01 * g0) / det;
        let mut cand = ll(a + da, b + db);
        let mut halvings = 0;
        while !(cand >= cur - ll_slack(cur)) && halvings < 30 {
            da *= 0.5;
            db *= 0.5;
            cand = ll(a + da, b + db);
            halvings += 1;
        }
        a += da;
        b += db;
        cur = cand;
        if da.abs().max(db.abs()) < NEWTON_TOL * a.abs().max(b.abs()).max(1.0) {
            return Ok((a - b * centre, b));
        }
        if b.abs() > 1e6 {
            break;
        }
    }
    let (mut g0, mut g1) = (0.0, 0.0);
    for (&s, &y) in score.iter().zip(outcomes) {
        let x = s - centre;
        let r = f64::from(y) - sigmoid(a + b * x);
        g0 += r;
        g1 += r * x;
    }
    let n = score.len() as f64;
    if b.is_finite() && g0.abs().max(g1.abs()) < 1e-8 * n {
        Ok((a - b * centre, b))
    } else {
        Err(Error::Numeric("calibration slope fit did not converge".into()))
    }
}

/// Slope of the two-parameter logistic fit of outcomes on `logit(p)`.
/// Values above 1 mean risks are too moderate, below 1 too extreme.
pub fn calibration_slope(risks: &[f64], outcomes: &[u8]) -> Result<f64> {
    check_lengths(risks, outcomes)?;
    Ok(logistic_on_score(&clamped_logits(risks), outcomes)?.1)
}

pub fn capped_slope(slope: f64) -> f64 {
    slope.min(SLOPE_REPORT_CAP)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecalibrationResult {
    pub beta0: f64,
    pub risks: Vec<f64>,
    /// `beta0 + logit(clamped raw risk)`, kept so downstream calibration fits
    /// do not re-clamp saturated risks.
    pub logits: Vec<f64>,
}

/// Shift every logit by the calibration intercept so the mean calibration
/// error vanishes.
pub fn recalibrate(risks: &[f64], outcomes: &[u8]) -> Result<RecalibrationResult> {
    check_lengths(risks, outcomes)?;
    let raw = clamped_logits(risks);
    let beta0 = intercept_with_offset(&raw, outcomes)?;
    let logits: Vec<f64> = raw.iter().map(|&l| beta0 + l).collect();
    Ok(RecalibrationResult {
        beta0,
        risks: logits.iter().map(|&l| sigmoid(l)).collect(),
        logits,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegenerateFlag {
    OneClassOutcomes,
    ConstantRisks,
    InterceptFailed,
    SlopeFailed,
}

/// One row of performance measures. A field is `None` where the measure is
/// undefined for the input; the reason is in `flags`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub c: Option<f64>,
    pub brier: Option<f64>,
    pub cal_intercept: Option<f64>,
    pub cal_slope: Option<f64>,
    pub flags: Vec<DegenerateFlag>,
}

fn metric_set(risks: &[f64], logits: &[f64], outcomes: &[u8]) -> Result<MetricSet> {
    check_lengths(risks, outcomes)?;
    let mut flags = Vec::new();
    let one_class = both_classes(outcomes).is_err();
    if one_class {
        flags.push(DegenerateFlag::OneClassOutcomes);
    }
    let constant = risks.iter().all(|&p| p == risks[0]);
    if constant {
        flags.push(DegenerateFlag::ConstantRisks);
    }
    let c = if one_class { None } else { concordance(risks, outcomes).ok() };
    let cal_intercept = if one_class {
        None
    } else {
        let v = intercept_with_offset(logits, outcomes).ok();
        if v.is_none() {
            flags.push(DegenerateFlag::InterceptFailed);
        }
        v
    };
    let cal_slope = if one_class || constant {
        None
    } else {
        let v = logistic_on_score(logits, outcomes).ok().map(|(_, b)| b);
        if v.is_none() {
            flags.push(DegenerateFlag::SlopeFailed);
        }
        v
    };
    Ok(MetricSet {
        c,
        brier: Some(brier(risks, outcomes)?),
        cal_intercept,
        cal_slope,
        flags,
    })
}

/// All measures for raw risks.
pub fn evaluate(risks: &[f64], outcomes: &[u8]) -> Result<MetricSet> {
    metric_set(risks, &clamped_logits(risks), outcomes)
}

/// All measures for recalibrated risks, with calibration fitted on the
/// shifted logits.
pub fn evaluate_recalibrated(rec: &RecalibrationResult, outcomes: &[u8]) -> Result<MetricSet> {
    metric_set(&rec.risks, &rec.logits, outcomes)
}

/// Stored validation predictions for one (scenario, iteration, correction,
/// learner) cell. Risk vectors are absent when the learner failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub scenario: u32,
    pub iteration: u32,
    pub correction: CorrectionKind,
    pub learner: LearnerKind,
    pub outcomes: Vec<u8>,
    pub risks_raw: Option<Vec<f64>>,
    pub risks_recalibrated: Option<Vec<f64>>,
    pub missing: bool,
}
