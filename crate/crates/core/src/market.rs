//! The location-scale outcome model shared by every other module.
//!
//! `n` agents deploy linear predictors over the probability simplex. The
//! outcome an agent tries to predict is itself shifted by the deployed
//! models: with features `x` and noise `x0`, the realized outcome is
//!
//! ```text
//! y = <theta0 - sum_i lambda_i * theta_i, x> + x0
//! ```
//!
//! Only the second moments of the data enter the analytic quantities:
//! `A = E[x x']`, the cross moment `c = E[x0 x]`, and `E[x0^2]`. The
//! derived vector `b = A theta0 + c` makes the mean-squared-error gradient
//! of the decoupled loss affine:
//!
//! ```text
//! g(deployed, predictive) = 2 A (predictive + sum_i lambda_i theta_i) - 2 b
//! ```
//!
//! All functions here are pure; every value is immutable after construction
//! and safe to share across threads.

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// Absolute tolerance on simplex coordinate sums.
pub const SIMPLEX_SUM_TOL: f64 = 1e-12;
/// Absolute tolerance on symmetry of the second-moment matrix.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// A point of the probability simplex: nonnegative coordinates summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexPoint {
    coords: Vec<f64>,
}

impl SimplexPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::Dimension {
                context: "simplex point",
                expected: 2,
                found: coords.len(),
            });
        }
        let mut sum = 0.0;
        for &v in &coords {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: "simplex point",
                    step: None,
                });
            }
            if v < 0.0 {
                return Err(Error::InvalidParameter {
                    name: "coords",
                    reason: format!("negative coordinate {v}"),
                });
            }
            sum += v;
        }
        if (sum - 1.0).abs() > SIMPLEX_SUM_TOL {
            return Err(Error::InvalidParameter {
                name: "coords",
                reason: format!("coordinates sum to {sum}, not 1"),
            });
        }
        Ok(SimplexPoint { coords })
    }

    /// Normalizes a nonnegative vector to sum exactly to the computed total.
    pub fn normalized(mut raw: Vec<f64>) -> Result<Self> {
        let sum: f64 = raw.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(Error::InvalidParameter {
                name: "raw",
                reason: format!("cannot normalize a vector with sum {sum}"),
            });
        }
        for v in &mut raw {
            *v /= sum;
        }
        SimplexPoint::new(raw)
    }

    pub fn uniform(d: usize) -> Self {
        SimplexPoint {
            coords: vec![1.0 / d as f64; d],
        }
    }

    pub fn vertex(d: usize, k: usize) -> Self {
        let mut coords = vec![0.0; d];
        coords[k] = 1.0;
        SimplexPoint { coords }
    }

    /// Two-dimensional point `(p, 1 - p)`.
    pub fn binary(p: f64) -> Result<Self> {
        SimplexPoint::new(vec![p, 1.0 - p])
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    #[inline]
    pub fn get(&self, k: usize) -> f64 {
        self.coords[k]
    }

    /// True when some coordinate is exactly zero (a boundary face point).
    pub fn on_boundary(&self) -> bool {
        self.coords.contains(&0.0)
    }
}

/// The models deployed by all agents.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelProfile {
    models: Vec<SimplexPoint>,
}

impl ModelProfile {
    pub fn new(models: Vec<SimplexPoint>) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::Dimension {
                context: "model profile",
                expected: 1,
                found: 0,
            });
        }
        let d = models[0].dim();
        for m in &models {
            if m.dim() != d {
                return Err(Error::Dimension {
                    context: "model profile",
                    expected: d,
                    found: m.dim(),
                });
            }
        }
        Ok(ModelProfile { models })
    }

    /// All agents deploy the same model.
    pub fn replicated(model: SimplexPoint, n: usize) -> Result<Self> {
        ModelProfile::new(vec![model; n.max(1)])
    }

    pub fn from_flat(n: usize, d: usize, flat: &[f64]) -> Result<Self> {
        if flat.len() != n * d {
            return Err(Error::Dimension {
                context: "flat profile",
                expected: n * d,
                found: flat.len(),
            });
        }
        let models = flat
            .chunks_exact(d)
            .map(|row| SimplexPoint::new(row.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        ModelProfile::new(models)
    }

    pub fn n_agents(&self) -> usize {
        self.models.len()
    }

    pub fn dim(&self) -> usize {
        self.models[0].dim()
    }

    pub fn agent(&self, i: usize) -> &SimplexPoint {
        &self.models[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &SimplexPoint> {
        self.models.iter()
    }

    /// Row-major `n * d` copy of all coordinates.
    pub fn flatten(&self) -> Vec<f64> {
        self.models
            .iter()
            .flat_map(|m| m.coords().iter().copied())
            .collect()
    }

    pub fn on_boundary(&self) -> bool {
        self.models.iter().any(SimplexPoint::on_boundary)
    }
}

/// The immutable description of one market instance.
///
/// `b` and the Cholesky factor of `A` are derived once at construction;
/// construction fails unless `A` is symmetric and positive definite and all
/// influence parameters are strictly positive.
#[derive(Debug, Clone)]
pub struct MarketSpec {
    d: usize,
    lambda: Vec<f64>,
    theta0: Vec<f64>,
    a: Matrix,
    c: Vec<f64>,
    sigma0_sq: f64,
    b: Vec<f64>,
    chol: Matrix,
}

impl MarketSpec {
    pub fn new(
        lambda: Vec<f64>,
        theta0: Vec<f64>,
        a: Matrix,
        c: Vec<f64>,
        sigma0_sq: f64,
    ) -> Result<Self> {
        let d = a.rows();
        if a.cols() != d {
            return Err(Error::Dimension {
                context: "second-moment matrix",
                expected: d,
                found: a.cols(),
            });
        }
        if d < 2 {
            return Err(Error::InvalidParameter {
                name: "d",
                reason: format!("feature dimension must be at least 2, got {d}"),
            });
        }
        if theta0.len() != d {
            return Err(Error::Dimension {
                context: "theta0",
                expected: d,
                found: theta0.len(),
            });
        }
        if c.len() != d {
            return Err(Error::Dimension {
                context: "cross moment c",
                expected: d,
                found: c.len(),
            });
        }
        if lambda.is_empty() {
            return Err(Error::InvalidParameter {
                name: "lambda",
                reason: "at least one agent is required".into(),
            });
        }
        for &l in &lambda {
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "lambda",
                    reason: format!("influence parameters must be positive, got {l}"),
                });
            }
        }
        if !(sigma0_sq >= 0.0) || !sigma0_sq.is_finite() {
            return Err(Error::InvalidParameter {
                name: "sigma0_sq",
                reason: format!("noise second moment must be nonnegative, got {sigma0_sq}"),
            });
        }
        for &v in theta0.iter().chain(&c).chain(a.data()) {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: "market spec",
                    step: None,
                });
            }
        }
        let dev = a.asymmetry();
        if dev > SYMMETRY_TOL {
            return Err(Error::NotSymmetric {
                context: "second-moment matrix",
                max_dev: dev,
            });
        }
        let chol = a.cholesky().ok_or(Error::NotPositiveDefinite {
            context: "second-moment matrix",
        })?;
        let mut b = a.matvec(&theta0);
        for (bk, ck) in b.iter_mut().zip(&c) {
            *bk += ck;
        }
        Ok(MarketSpec {
            d,
            lambda,
            theta0,
            a,
            c,
            sigma0_sq,
            b,
            chol,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.lambda.len()
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn theta0(&self) -> &[f64] {
        &self.theta0
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn sigma0_sq(&self) -> f64 {
        self.sigma0_sq
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// Sum of the influence parameters.
    pub fn collective_influence(&self) -> f64 {
        self.lambda.iter().sum()
    }

    /// Lower Cholesky factor of `A`, used by the Gaussian sampler.
    pub fn chol_lower(&self) -> &Matrix {
        &self.chol
    }

    /// Recomputes `b = A theta0 + c` from scratch.
    pub fn derived_b(&self) -> Vec<f64> {
        let mut b = self.a.matvec(&self.theta0);
        for (bk, ck) in b.iter_mut().zip(&self.c) {
            *bk += ck;
        }
        b
    }

    /// Swaps two feature coordinates everywhere (A rows/columns, theta0, c).
    pub fn permuted(&self, i: usize, j: usize) -> Result<MarketSpec> {
        let d = self.d;
        let mut a = Matrix::zeros(d, d);
        let swap = |k: usize| {
            if k == i {
                j
            } else if k == j {
                i
            } else {
                k
            }
        };
        for r in 0..d {
            for s in 0..d {
                a.set(r, s, self.a.at(swap(r), swap(s)));
            }
        }
        let mut theta0 = self.theta0.clone();
        theta0.swap(i, j);
        let mut c = self.c.clone();
        c.swap(i, j);
        MarketSpec::new(self.lambda.clone(), theta0, a, c, self.sigma0_sq)
    }

    pub fn validate_profile(&self, profile: &ModelProfile) -> Result<()> {
        if profile.n_agents() != self.n() {
            return Err(Error::Dimension {
                context: "profile agents",
                expected: self.n(),
                found: profile.n_agents(),
            });
        }
        if profile.dim() != self.d {
            return Err(Error::Dimension {
                context: "profile coordinates",
                expected: self.d,
                found: profile.dim(),
            });
        }
        Ok(())
    }

    pub fn validate_point(&self, point: &SimplexPoint) -> Result<()> {
        if point.dim() != self.d {
            return Err(Error::Dimension {
                context: "predictive model",
                expected: self.d,
                found: point.dim(),
            });
        }
        Ok(())
    }
}

/// Gradients of every agent's decoupled loss at a deployed profile,
/// together with the per-agent average gradient over the agent's own model.
#[derive(Debug, Clone)]
pub struct GradProfile {
    grads: Vec<Vec<f64>>,
    averages: Vec<f64>,
}

impl GradProfile {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.grads[i]
    }

    pub fn average(&self, i: usize) -> f64 {
        self.averages[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.grads
    }
}

/// `theta0 - sum_i lambda_i theta_i`: the weights that actually generate
/// outcomes once the profile is deployed.
pub fn effective_outcome_weights(spec: &MarketSpec, profile: &ModelProfile) -> Result<Vec<f64>> {
    spec.validate_profile(profile)?;
    Ok(effective_outcome_weights_raw(spec, &profile.flatten()))
}

pub(crate) fn effective_outcome_weights_raw(spec: &MarketSpec, flat: &[f64]) -> Vec<f64> {
    let d = spec.d();
    let mut w = spec.theta0().to_vec();
    for (i, &li) in spec.lambda().iter().enumerate() {
        for k in 0..d {
            w[k] -= li * flat[i * d + k];
        }
    }
    w
}

/// Expected squared error of `predictive` on the distribution induced by
/// `deployed`: `u' A u + 2 c . u + sigma0_sq` with
/// `u = effective_outcome_weights - predictive`. Always nonnegative.
pub fn decoupled_loss(
    spec: &MarketSpec,
    deployed: &ModelProfile,
    predictive: &SimplexPoint,
) -> Result<f64> {
    spec.validate_profile(deployed)?;
    spec.validate_point(predictive)?;
    Ok(decoupled_loss_raw(
        spec,
        &deployed.flatten(),
        predictive.coords(),
    ))
}

pub(crate) fn decoupled_loss_raw(spec: &MarketSpec, deployed: &[f64], predictive: &[f64]) -> f64 {
    let w = effective_outcome_weights_raw(spec, deployed);
    let u: Vec<f64> = w.iter().zip(predictive).map(|(wk, pk)| wk - pk).collect();
    spec.a().quadratic_form(&u, &u) + 2.0 * linalg::dot(spec.c(), &u) + spec.sigma0_sq()
}

/// Exact gradient of [`decoupled_loss`] in the predictive model:
/// `2 A (predictive + sum_i lambda_i theta_i) - 2 b`.
pub fn gradient(
    spec: &MarketSpec,
    deployed: &ModelProfile,
    predictive: &SimplexPoint,
) -> Result<Vec<f64>> {
    spec.validate_profile(deployed)?;
    spec.validate_point(predictive)?;
    Ok(gradient_raw(spec, &deployed.flatten(), predictive.coords()))
}

pub(crate) fn gradient_raw(spec: &MarketSpec, deployed: &[f64], predictive: &[f64]) -> Vec<f64> {
    let d = spec.d();
    let mut v = predictive.to_vec();
    for (i, &li) in spec.lambda().iter().enumerate() {
        for k in 0..d {
            v[k] += li * deployed[i * d + k];
        }
    }
    let av = spec.a().matvec(&v);
    av.iter()
        .zip(spec.b())
        .map(|(avk, bk)| 2.0 * (avk - bk))
        .collect()
}

/// Per-agent gradients at the profile itself (predictive model = own model).
pub fn grad_profile(spec: &MarketSpec, profile: &ModelProfile) -> Result<GradProfile> {
    spec.validate_profile(profile)?;
    Ok(grad_profile_raw(spec, &profile.flatten()))
}

pub(crate) fn grad_profile_raw(spec: &MarketSpec, flat: &[f64]) -> GradProfile {
    let d = spec.d();
    let n = spec.n();
    let mut grads = Vec::with_capacity(n);
    let mut averages = Vec::with_capacity(n);
    for i in 0..n {
        let own = &flat[i * d..(i + 1) * d];
        let g = gradient_raw(spec, flat, own);
        averages.push(linalg::dot(own, &g));
        grads.push(g);
    }
    GradProfile { grads, averages }
}

/// The multiplicative-weights drift field:
/// `drift[i][k] = theta_i_k * (avg_grad_i - g_i_k)`.
///
/// Each row sums to zero; the field vanishes exactly at fixed points of the
/// exponentiated-gradient update.
pub fn replicator_drift(spec: &MarketSpec, profile: &ModelProfile) -> Result<Vec<Vec<f64>>> {
    spec.validate_profile(profile)?;
    Ok(replicator_drift_raw(spec, &profile.flatten()))
}

pub(crate) fn replicator_drift_raw(spec: &MarketSpec, flat: &[f64]) -> Vec<Vec<f64>> {
    let d = spec.d();
    let gp = grad_profile_raw(spec, flat);
    (0..spec.n())
        .map(|i| {
            let own = &flat[i * d..(i + 1) * d];
            let gi = gp.row(i);
            let avg = gp.average(i);
            (0..d).map(|k| own[k] * (avg - gi[k])).collect()
        })
        .collect()
}

/// Total drift magnitude `sum_{i,k} |drift[i][k]|`.
pub fn drift_l1(drift: &[Vec<f64>]) -> f64 {
    drift.iter().map(|row| linalg::l1_norm(row)).sum()
}
