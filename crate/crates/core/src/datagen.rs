//! Class-conditional Gaussian data generation.
//!
//! Non-events are drawn from `N(0, Σ0)` and events from `N(δμ·1, Σ1)`, where
//! both covariance matrices share one correlation structure: the first
//! `n_covarying` predictors are mutually correlated with coefficient `rho`,
//! the rest are independent. `Σ0` has unit variances and `Σ1` has variances
//! `1 - δΣ`. Under these assumptions the population concordance of the
//! optimal linear score is `Φ(sqrt(Δμᵀ (Σ0 + Σ1)⁻¹ Δμ))`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FeatureMatrix, Provenance};
use crate::error::{Error, Result};
use crate::stats::{normal_cdf, normal_quantile};

const BUNDLED_SCENARIOS: &str = include_str!("../data/scenarios.json");

/// One data-generating scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub id: u32,
    pub p: usize,
    pub n_covarying: usize,
    pub event_fraction: f64,
    pub n_train: usize,
    pub n_validation: usize,
    pub delta_mu: f64,
    pub delta_sigma: f64,
    pub rho: f64,
    pub target_c: f64,
    pub base_seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Domain(format!("scenario {}: {m}", self.id)));
        if !(self.event_fraction > 0.0 && self.event_fraction < 1.0) {
            return fail(format!("event_fraction {} not in (0,1)", self.event_fraction));
        }
        if !(0.0..1.0).contains(&self.delta_sigma) {
            return fail(format!("delta_sigma {} not in [0,1)", self.delta_sigma));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return fail(format!("rho {} not in [0,1)", self.rho));
        }
        if self.n_covarying > self.p {
            return fail(format!("n_covarying {} exceeds p {}", self.n_covarying, self.p));
        }
        if self.n_train == 0 || self.n_validation == 0 {
            return fail("sample sizes must be positive".into());
        }
        Ok(())
    }

    pub fn model(&self) -> Result<GaussianClassModel> {
        self.validate()?;
        GaussianClassModel::structured(
            self.p,
            self.n_covarying,
            self.rho,
            self.delta_sigma,
            self.delta_mu,
        )
    }
}

/// The 18 scenarios of the full factorial grid, with `δμ` solved for a
/// concordance of 0.85 at `δΣ = 0.3`.
pub fn reference_scenarios() -> Vec<ScenarioConfig> {
    // (p, event fraction, n_train), in scenario order.
    const ROWS: [(usize, f64, usize); 18] = [
        (8, 0.50, 193),
        (8, 0.20, 124),
        (8, 0.02, 899),
        (8, 0.50, 385),
        (8, 0.20, 247),
        (8, 0.02, 1797),
        (8, 0.50, 770),
        (8, 0.20, 494),
        (8, 0.02, 3594),
        (16, 0.50, 193),
        (16, 0.20, 247),
        (16, 0.02, 1797),
        (16, 0.50, 385),
        (16, 0.20, 493),
        (16, 0.02, 3593),
        (16, 0.50, 770),
        (16, 0.20, 986),
        (16, 0.02, 7186),
    ];
    ROWS.iter()
        .enumerate()
        .map(|(i, &(p, phi, n_train))| {
            let n_covarying = p * 3 / 4;
            let delta_mu = solve_delta_mu(p, n_covarying, 0.2, 0.3, 0.85)
                .expect("structured family is well posed");
            ScenarioConfig {
                id: i as u32 + 1,
                p,
                n_covarying,
                event_fraction: phi,
                n_train,
                n_validation: 10 * n_train,
                delta_mu,
                delta_sigma: 0.3,
                rho: 0.2,
                target_c: 0.85,
                base_seed: i as u64 + 1,
            }
        })
        .collect()
}

/// Scenarios shipped in `data/scenarios.json`.
pub fn bundled_scenarios() -> Vec<ScenarioConfig> {
    serde_json::from_str(BUNDLED_SCENARIOS).expect("bundled scenarios.json is valid")
}

pub fn bundled_scenario(id: u32) -> Option<ScenarioConfig> {
    bundled_scenarios().into_iter().find(|s| s.id == id)
}

/// Means and covariances of both classes.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianClassModel {
    pub mu0: DVector<f64>,
    pub mu1: DVector<f64>,
    pub sigma0: DMatrix<f64>,
    pub sigma1: DMatrix<f64>,
}

impl GaussianClassModel {
    /// Model with equal mean shift `delta_mu` on every predictor and class-1
    /// variances reduced by `delta_sigma`.
    pub fn structured(
        p: usize,
        n_covarying: usize,
        rho: f64,
        delta_sigma: f64,
        delta_mu: f64,
    ) -> Result<Self> {
        let sigma0 = build_covariance(p, n_covarying, 1.0, rho)?;
        let sigma1 = build_covariance(p, n_covarying, 1.0 - delta_sigma, rho)?;
        Ok(Self {
            mu0: DVector::zeros(p),
            mu1: DVector::from_element(p, delta_mu),
            sigma0,
            sigma1,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu0.len()
    }

    /// Coefficients of the concordance-optimal linear score, `(Σ0 + Σ1)⁻¹ Δμ`.
    pub fn oracle_weights(&self) -> Result<DVector<f64>> {
        let sum = &self.sigma0 + &self.sigma1;
        let chol = sum
            .cholesky()
            .ok_or_else(|| Error::Numeric("Σ0 + Σ1 is not positive definite".into()))?;
        Ok(chol.solve(&(&self.mu1 - &self.mu0)))
    }
}

/// Covariance with constant diagonal `diag` and off-diagonal `diag * rho`
/// inside the leading `n_covarying` block; zero elsewhere.
pub fn build_covariance(p: usize, n_covarying: usize, diag: f64, rho: f64) -> Result<DMatrix<f64>> {
    if n_covarying > p {
        return Err(Error::Construction(format!(
            "n_covarying {n_covarying} exceeds p {p}"
        )));
    }
    if diag <= 0.0 {
        return Err(Error::Construction(format!("diagonal {diag} must be positive")));
    }
    let off = diag * rho;
    let m = DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            diag
        } else if i < n_covarying && j < n_covarying {
            off
        } else {
            0.0
        }
    });
    if m.clone().cholesky().is_none() {
        return Err(Error::Construction(format!(
            "covariance (p={p}, block={n_covarying}, rho={rho}) is not positive definite"
        )));
    }
    Ok(m)
}

/// Mean shift `δμ` that gives the structured model concordance `target_c`.
///
/// With `Δμ = δμ·1` the quadratic form factorises, so
/// `δμ = Φ⁻¹(C) / sqrt(1ᵀ (Σ0 + Σ1)⁻¹ 1)`.
pub fn solve_delta_mu(
    p: usize,
    n_covarying: usize,
    rho: f64,
    delta_sigma: f64,
    target_c: f64,
) -> Result<f64> {
    if !(target_c > 0.5 && target_c < 1.0) {
        return Err(Error::Domain(format!(
            "target concordance {target_c} must lie in (0.5, 1)"
        )));
    }
    let sum = build_covariance(p, n_covarying, 1.0, rho)?
        + build_covariance(p, n_covarying, 1.0 - delta_sigma, rho)?;
    let chol = sum
        .cholesky()
        .ok_or_else(|| Error::Numeric("Σ0 + Σ1 is singular".into()))?;
    let ones = DVector::from_element(p, 1.0);
    let quad = ones.dot(&chol.solve(&ones));
    if !(quad > 0.0 && quad.is_finite()) {
        return Err(Error::Numeric(format!("degenerate quadratic form {quad}")));
    }
    Ok(normal_quantile(target_c) / quad.sqrt())
}

/// Population concordance of the model.
pub fn theoretical_c(model: &GaussianClassModel) -> Result<f64> {
    let w = model.oracle_weights()?;
    let delta = &model.mu1 - &model.mu0;
    let quad = delta.dot(&w);
    Ok(normal_cdf(quad.max(0.0).sqrt()))
}

/// Number of events among `n` draws, `n1 ~ Binomial(n, phi)`.
pub fn sample_event_count<R: Rng + ?Sized>(n: usize, phi: f64, rng: &mut R) -> Result<usize> {
    let dist = Binomial::new(n as u64, phi)
        .map_err(|e| Error::Domain(format!("binomial({n}, {phi}): {e}")))?;
    Ok(dist.sample(rng) as usize)
}

fn lower_cholesky(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    sigma
        .clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::Construction("covariance is not positive definite".into()))
}

/// `n0` non-events followed by `n1` events, rows then shuffled.
///
/// Each row consumes `p` standard normals `z` and is emitted as `μ + L z`
/// with `L` the lower Cholesky factor of the class covariance. All class-0
/// rows are drawn before any class-1 row; the final permutation is a
/// Fisher-Yates shuffle drawn from the same stream.
pub fn sample_dataset<R: Rng + ?Sized>(
    model: &GaussianClassModel,
    n1: usize,
    n0: usize,
    rng: &mut R,
) -> Result<Dataset> {
    let n = n0 + n1;
    if n == 0 {
        return Err(Error::Domain("cannot sample an empty dataset".into()));
    }
    let p = model.dim();
    let l0 = lower_cholesky(&model.sigma0)?;
    let l1 = lower_cholesky(&model.sigma1)?;

    let mut raw = Vec::with_capacity(n * p);
    let mut z = vec![0.0; p];
    for (count, mu, l) in [(n0, &model.mu0, &l0), (n1, &model.mu1, &l1)] {
        for _ in 0..count {
            for zi in z.iter_mut() {
                *zi = rng.sample(StandardNormal);
            }
            for i in 0..p {
                let mut v = mu[i];
                for (j, zj) in z.iter().enumerate().take(i + 1) {
                    v += l[(i, j)] * zj;
                }
                raw.push(v);
            }
        }
    }
    let mut labels = vec![0u8; n0];
    labels.resize(n, 1);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);

    let mut data = Vec::with_capacity(n * p);
    let mut outcome = Vec::with_capacity(n);
    for &i in &order {
        data.extend_from_slice(&raw[i * p..(i + 1) * p]);
        outcome.push(labels[i]);
    }
    let features = if p == 0 {
        FeatureMatrix::zero_width(n)
    } else {
        FeatureMatrix::new(data, p)?
    };
    Dataset::new(features, outcome, Provenance::Generated)
}

/// Draw `n1 ~ Binomial(n, φ)` and then a dataset of that composition.
pub fn sample_scenario<R: Rng + ?Sized>(
    model: &GaussianClassModel,
    n: usize,
    phi: f64,
    rng: &mut R,
) -> Result<Dataset> {
    let n1 = sample_event_count(n, phi, rng)?;
    sample_dataset(model, n1, n - n1, rng)
}
