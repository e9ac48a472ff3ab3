//! Flexible calibration curves by local polynomial (loess) regression of
//! outcomes on predicted risk.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fewer distinct risks than this cannot support a smooth curve.
pub const MIN_DISTINCT_RISKS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoints {
    pub grid: Vec<f64>,
    pub fitted: Vec<f64>,
    pub span: f64,
    pub degree: usize,
    pub notes: Vec<String>,
}

impl CurvePoints {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["grid", "fitted"])?;
        for (g, f) in self.grid.iter().zip(&self.fitted) {
            w.write_record([g.to_string(), f.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }
}

fn tricube(u: f64) -> f64 {
    if u >= 1.0 {
        0.0
    } else {
        let t = 1.0 - u * u * u;
        t * t * t
    }
}

/// Local neighbourhood weights at `x0`: the `q` nearest risks get tricube
/// weights scaled by the `q`-th nearest distance.
pub(crate) fn local_weights(x: &[f64], x0: f64, q: usize) -> Vec<f64> {
    let mut d: Vec<f64> = x.iter().map(|&v| (v - x0).abs()).collect();
    let h = {
        let mut tmp = d.clone();
        let (_, hq, _) = tmp.select_nth_unstable_by(q - 1, |a, b| a.total_cmp(b));
        *hq
    };
    for v in d.iter_mut() {
        *v = if h > 0.0 {
            tricube(*v / h)
        } else if *v == 0.0 {
            1.0
        } else {
            0.0
        };
    }
    d
}

/// Weighted least-squares local polynomial value at `x0`. Returns the value
/// and the degree actually used.
fn local_fit(x: &[f64], y: &[f64], w: &[f64], x0: f64, degree: usize) -> (f64, usize) {
    let mut deg = degree;
    loop {
        let q = deg + 1;
        let mut xtwx = DMatrix::<f64>::zeros(q, q);
        let mut xtwy = DVector::<f64>::zeros(q);
        for i in 0..x.len() {
            if w[i] == 0.0 {
                continue;
            }
            let t = x[i] - x0;
            let mut powers = [1.0; 4];
            for k in 1..q {
                powers[k] = powers[k - 1] * t;
            }
            for a in 0..q {
                xtwy[a] += w[i] * powers[a] * y[i];
                for b in 0..q {
                    xtwx[(a, b)] += w[i] * powers[a] * powers[b];
                }
            }
        }
        let scale = xtwx.amax().max(f64::MIN_POSITIVE);
        let rank = xtwx.clone().svd(false, false).rank(1e-12 * scale);
        if rank == q || deg == 0 {
            if let Some(beta) = xtwx.clone().cholesky().map(|c| c.solve(&xtwy)) {
                return (beta[0], deg);
            }
            if deg == 0 {
                let tw: f64 = w.iter().sum();
                let twy: f64 = w.iter().zip(y).map(|(a, b)| a * b).sum();
                return (twy / tw, 0);
            }
        }
        deg -= 1;
    }
}

/// Loess curve of outcome on risk over an evenly spaced grid from the
/// smallest to the largest risk. Fitted values are clipped to `[0, 1]`.
pub fn flexible_curve(
    risks: &[f64],
    outcomes: &[u8],
    span: f64,
    degree: usize,
    grid_size: usize,
) -> Result<CurvePoints> {
    if risks.len() != outcomes.len() {
        return Err(Error::Interface("risk and outcome lengths differ".into()));
    }
    if !(span > 0.0 && span <= 1.0) {
        return Err(Error::Construction(format!("span {span} must lie in (0, 1]")));
    }
    if degree > 2 {
        return Err(Error::Construction("loess degree must be 0, 1 or 2".into()));
    }
    if grid_size < 2 {
        return Err(Error::Construction("grid needs at least two points".into()));
    }
    let mut distinct = risks.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < MIN_DISTINCT_RISKS {
        return Err(Error::Undefined(format!(
            "{} distinct risks; a loess curve needs at least {MIN_DISTINCT_RISKS}",
            distinct.len()
        )));
    }
    let n = risks.len();
    let q = ((n as f64 * span).floor() as usize).clamp(degree + 1, n);
    let y: Vec<f64> = outcomes.iter().map(|&v| f64::from(v)).collect();
    let lo = distinct[0];
    let hi = distinct[distinct.len() - 1];
    let step = (hi - lo) / (grid_size - 1) as f64;
    let grid: Vec<f64> = (0..grid_size)
        .map(|i| if i + 1 == grid_size { hi } else { lo + step * i as f64 })
        .collect();

    let mut reduced = 0;
    let fitted = grid
        .iter()
        .map(|&x0| {
            let w = local_weights(risks, x0, q);
            let (v, used) = local_fit(risks, &y, &w, x0, degree);
            if used < degree {
                reduced += 1;
            }
            v.clamp(0.0, 1.0)
        })
        .collect();
    let mut notes = Vec::new();
    if reduced > 0 {
        notes.push(format!(
            "local degree reduced at {reduced} of {grid_size} grid points (rank-deficient fit)"
        ));
    }
    Ok(CurvePoints {
        grid,
        fitted,
        span,
        degree,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    #[test]
    fn constant_outcome_gives_flat_curve() {
        let r: Vec<f64> = (0..50).map(|i| 0.1 + i as f64 / 100.0).collect();
        let c = flexible_curve(&r, &[1; 50], 0.75, 2, 20).unwrap();
        assert!(c.fitted.iter().all(|&f| (f - 1.0).abs() < 1e-9));
        assert_eq!(c.grid.len(), 20);
        assert_eq!(c.grid[0], 0.1);
        assert_eq!(*c.grid.last().unwrap(), r[49]);
    }

    #[test]
    fn too_few_distinct_risks() {
        let r = [0.2, 0.4, 0.2, 0.4, 0.6, 0.6, 0.2, 0.4, 0.6, 0.2, 0.4, 0.6];
        let y = [0, 1, 0, 1, 1, 0, 0, 1, 1, 0, 0, 1];
        assert!(matches!(flexible_curve(&r, &y, 0.75, 2, 10), Err(Error::Undefined(_))));
    }

    #[test]
    fn calibrated_input_tracks_diagonal() {
        let mut rng = seeded(11);
        let n = 50_000;
        let r: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let y: Vec<u8> = r.iter().map(|&p| u8::from(rng.random::<f64>() < p)).collect();
        let c = flexible_curve(&r, &y, 0.75, 2, 100).unwrap();
        for (g, f) in c.grid.iter().zip(&c.fitted).skip(5).take(90) {
            assert!((g - f).abs() < 0.03, "{g} {f}");
        }
    }

    #[test]
    fn csv_has_two_columns() {
        let r: Vec<f64> = (0..30).map(|i| i as f64 / 30.0).collect();
        let y: Vec<u8> = (0..30).map(|i| u8::from(i % 3 == 0)).collect();
        let c = flexible_curve(&r, &y, 0.75, 2, 5).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("grid,fitted\n"));
        assert_eq!(text.lines().count(), 6);
    }
}
