//! Stable points of the performative market and their certificates.
//!
//! The market admits a convex potential
//!
//! ```text
//! Phi(profile) = s' A s + sum_i lambda_i theta_i' A theta_i - 2 b . s,
//! s = sum_i lambda_i theta_i,
//! ```
//!
//! whose block gradient is `lambda_i * g_i`. With `A` positive definite the
//! potential is strictly convex (its Hessian is a Kronecker product of two
//! positive-definite matrices), so the performative stable point exists, is
//! unique, and is the minimizer of `Phi` over the product of simplices.
//! [`find_stable_point`] minimizes `Phi` by projected gradient descent and
//! certifies the result through the first-order residual rather than any
//! solver internals.
//!
//! [`safe_learning_rate`] computes the conservative constants `C1..C4` and
//! the largest step size satisfying the three smallness conditions under
//! which the discrete dynamics provably descend the potential. The returned
//! rate is sufficient, not necessary.

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::market::{self, MarketSpec, ModelProfile, SimplexPoint};

/// Coordinates above this threshold count as support of a stable point.
pub const SUPPORT_EPS: f64 = 1e-9;
/// Off-support gradients must exceed the average by this margin for the
/// point to be reported as proper.
pub const PROPERNESS_MARGIN: f64 = 1e-8;

/// Solver output: the stable point plus everything needed to check it.
#[derive(Debug, Clone)]
pub struct StablePointResult {
    pub theta_star: ModelProfile,
    /// max over supported coordinates of |g - avg| plus max over
    /// off-support coordinates of max(0, avg - g).
    pub kkt_residual: f64,
    /// Support sets per agent (indices with coordinate > [`SUPPORT_EPS`]).
    pub supports: Vec<Vec<usize>>,
    /// True when every off-support gradient strictly exceeds the average.
    pub proper: bool,
    pub potential_value: f64,
    pub iterations: usize,
}

/// Conservative learning-rate budget derived from market constants.
#[derive(Debug, Clone)]
pub struct SafeRateReport {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    /// Largest rate satisfying all three smallness conditions.
    pub eta_star: f64,
    /// The asserted bound on max rate / min rate across agents.
    pub r_eta: f64,
    /// Upper bound on |g| over all profiles (vertex enumeration or interval).
    pub max_grad: f64,
    /// Analytic bound on the l1 norm of the drift field: 2 n d max|g|.
    pub drift_l1_bound: f64,
    pub eta_bound_grad: f64,
    pub eta_bound_drift: f64,
    pub eta_bound_ratio: f64,
}

/// Exact quadratic potential of the market.
pub fn potential(spec: &MarketSpec, profile: &ModelProfile) -> Result<f64> {
    spec.validate_profile(profile)?;
    Ok(potential_raw(spec, &profile.flatten()))
}

pub(crate) fn potential_raw(spec: &MarketSpec, flat: &[f64]) -> f64 {
    let d = spec.d();
    let mut s = vec![0.0; d];
    for (i, &li) in spec.lambda().iter().enumerate() {
        for k in 0..d {
            s[k] += li * flat[i * d + k];
        }
    }
    let mut value = spec.a().quadratic_form(&s, &s) - 2.0 * linalg::dot(spec.b(), &s);
    for (i, &li) in spec.lambda().iter().enumerate() {
        let own = &flat[i * d..(i + 1) * d];
        value += li * spec.a().quadratic_form(own, own);
    }
    value
}

/// Block gradient of the potential: row `i` is `lambda_i * g_i`.
pub fn potential_gradient(spec: &MarketSpec, profile: &ModelProfile) -> Result<Vec<Vec<f64>>> {
    spec.validate_profile(profile)?;
    Ok(potential_gradient_raw(spec, &profile.flatten()))
}

pub(crate) fn potential_gradient_raw(spec: &MarketSpec, flat: &[f64]) -> Vec<Vec<f64>> {
    let gp = market::grad_profile_raw(spec, flat);
    spec.lambda()
        .iter()
        .enumerate()
        .map(|(i, &li)| gp.row(i).iter().map(|g| li * g).collect())
        .collect()
}

/// Constant Hessian of the potential with its definiteness report.
#[derive(Debug, Clone)]
pub struct HessianReport {
    pub matrix: Matrix,
    pub positive_definite: bool,
}

/// Builds the (n d) x (n d) Hessian explicitly: blocks `2 lambda_i lambda_j A`
/// off the diagonal and `2 lambda_i (1 + lambda_i) A` on it.
pub fn potential_hessian(spec: &MarketSpec) -> HessianReport {
    let d = spec.d();
    let n = spec.n();
    let mut h = Matrix::zeros(n * d, n * d);
    for i in 0..n {
        for j in 0..n {
            let li = spec.lambda()[i];
            let lj = spec.lambda()[j];
            let factor = if i == j {
                2.0 * li * (1.0 + li)
            } else {
                2.0 * li * lj
            };
            for k in 0..d {
                for l in 0..d {
                    h.set(i * d + k, j * d + l, factor * spec.a().at(k, l));
                }
            }
        }
    }
    let positive_definite = h.cholesky().is_some();
    HessianReport {
        matrix: h,
        positive_definite,
    }
}

struct KktData {
    residual: f64,
    supports: Vec<Vec<usize>>,
    proper: bool,
}

/// First-order residual of the (possibly rescaled) gradients at a profile.
/// `scale(i)` multiplies agent i's gradient; positive scales leave the
/// comparisons unchanged.
fn kkt_data(spec: &MarketSpec, flat: &[f64], scale: impl Fn(usize) -> f64) -> KktData {
    let d = spec.d();
    let gp = market::grad_profile_raw(spec, flat);
    let mut on_support_dev = 0.0f64;
    let mut off_support_dev = 0.0f64;
    let mut proper = true;
    let mut supports = Vec::with_capacity(spec.n());
    for i in 0..spec.n() {
        let si = scale(i);
        let own = &flat[i * d..(i + 1) * d];
        let g = gp.row(i);
        let avg = gp.average(i);
        let mut support = Vec::new();
        for k in 0..d {
            if own[k] > SUPPORT_EPS {
                support.push(k);
                on_support_dev = on_support_dev.max((si * (g[k] - avg)).abs());
            } else {
                off_support_dev = off_support_dev.max((si * (avg - g[k])).max(0.0));
                if g[k] - avg <= PROPERNESS_MARGIN {
                    proper = false;
                }
            }
        }
        supports.push(support);
    }
    KktData {
        residual: on_support_dev + off_support_dev,
        supports,
        proper,
    }
}

/// Tests performative stability: supported gradient coordinates equal the
/// average and off-support coordinates do not fall below it, within `tol`.
pub fn check_stable(spec: &MarketSpec, profile: &ModelProfile, tol: f64) -> Result<(bool, f64)> {
    spec.validate_profile(profile)?;
    let data = kkt_data(spec, &profile.flatten(), |_| 1.0);
    Ok((data.residual <= tol, data.residual))
}

/// Tests performative optimality via the total-loss first-order condition,
/// whose agent-`i` gradient is the loss gradient scaled by
/// `1 + n * lambda_i`. Each agent's deviations are normalized back by its
/// own (positive) scale before the tolerance comparison, keeping them in
/// loss-gradient units; that positive rescaling leaves every first-order
/// comparison unchanged, which is exactly why optimality and stability
/// coincide, so this agrees with [`check_stable`] on every input.
pub fn check_optimal(spec: &MarketSpec, profile: &ModelProfile, tol: f64) -> Result<bool> {
    spec.validate_profile(profile)?;
    let d = spec.d();
    let n = spec.n() as f64;
    let flat = profile.flatten();
    let gp = market::grad_profile_raw(spec, &flat);
    let mut on_support_dev = 0.0f64;
    let mut off_support_dev = 0.0f64;
    for i in 0..spec.n() {
        let scale = 1.0 + n * spec.lambda()[i];
        let own = &flat[i * d..(i + 1) * d];
        let g = gp.row(i);
        let avg = gp.average(i);
        for k in 0..d {
            if own[k] > SUPPORT_EPS {
                on_support_dev = on_support_dev.max((scale * (g[k] - avg)).abs() / scale);
            } else {
                off_support_dev = off_support_dev.max((scale * (avg - g[k])).max(0.0) / scale);
            }
        }
    }
    Ok(on_support_dev + off_support_dev <= tol)
}

/// Euclidean projection onto the probability simplex.
pub(crate) fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite coordinates"));
    let mut cumulative = 0.0;
    let mut shift = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            shift = candidate;
        }
    }
    v.iter().map(|&x| (x - shift).max(0.0)).collect()
}

/// Minimizes the potential over the product of simplices by projected
/// gradient descent with fixed step `1 / (2 ||H||_inf)`, starting from the
/// uniform profile and stopping when the first-order residual drops to
/// `tol`.
pub fn find_stable_point(
    spec: &MarketSpec,
    tol: f64,
    max_iters: usize,
) -> Result<StablePointResult> {
    let start = ModelProfile::replicated(SimplexPoint::uniform(spec.d()), spec.n())
        .expect("n >= 1");
    find_stable_point_from(spec, &start, tol, max_iters)
}

/// [`find_stable_point`] from a caller-chosen initialization; the potential
/// is strictly convex, so every start reaches the same minimizer.
pub fn find_stable_point_from(
    spec: &MarketSpec,
    initial: &ModelProfile,
    tol: f64,
    max_iters: usize,
) -> Result<StablePointResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tol",
            reason: format!("tolerance must be positive, got {tol}"),
        });
    }
    spec.validate_profile(initial)?;
    let d = spec.d();
    let n = spec.n();
    let hessian = potential_hessian(spec);
    let step = 1.0 / (2.0 * hessian.matrix.inf_norm());
    let mut flat: Vec<f64> = initial.flatten();
    let mut residual = f64::INFINITY;
    for iter in 0..max_iters {
        let data = kkt_data(spec, &flat, |_| 1.0);
        residual = data.residual;
        if residual <= tol {
            let theta_star = ModelProfile::from_flat(n, d, &flat)?;
            let potential_value = potential_raw(spec, &flat);
            return Ok(StablePointResult {
                theta_star,
                kkt_residual: residual,
                supports: data.supports,
                proper: data.proper,
                potential_value,
                iterations: iter,
            });
        }
        let grad = potential_gradient_raw(spec, &flat);
        for i in 0..n {
            let block: Vec<f64> = (0..d)
                .map(|k| flat[i * d + k] - step * grad[i][k])
                .collect();
            let projected = project_simplex(&block);
            flat[i * d..(i + 1) * d].copy_from_slice(&projected);
        }
    }
    Err(Error::NonConvergence {
        iters: max_iters,
        residual,
        last_iterate: Box::new(ModelProfile::from_flat(n, d, &flat)?),
    })
}

/// Upper bound on |g| over all profiles and predictive models.
///
/// The gradient is affine in (predictive, profile), so its extrema over the
/// product of simplices sit on vertex assignments; those are enumerated when
/// `d^(n+1)` stays small, otherwise a coordinate-wise interval bound is used.
fn max_abs_gradient(spec: &MarketSpec) -> f64 {
    let d = spec.d();
    let n = spec.n();
    let combos = (d as f64).powi(n as i32 + 1);
    if combos <= 1e6 {
        let mut assignment = vec![0usize; n + 1];
        let mut best = 0.0f64;
        loop {
            // assignment[0] picks the predictive vertex, the rest deployment.
            for k in 0..d {
                let mut v = spec.a().at(k, assignment[0]);
                for (i, &li) in spec.lambda().iter().enumerate() {
                    v += li * spec.a().at(k, assignment[i + 1]);
                }
                best = best.max((2.0 * v - 2.0 * spec.b()[k]).abs());
            }
            let mut pos = 0;
            loop {
                assignment[pos] += 1;
                if assignment[pos] < d {
                    break;
                }
                assignment[pos] = 0;
                pos += 1;
                if pos > n {
                    return best;
                }
            }
        }
    } else {
        let l_n = spec.collective_influence();
        (0..d)
            .map(|k| {
                let row_sum: f64 = spec.a().row(k).iter().map(|v| v.abs()).sum();
                2.0 * row_sum * (1.0 + l_n) + 2.0 * spec.b()[k].abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Computes `C1..C4` and the largest learning rate passing the three
/// descent conditions at ratio bound `r_eta`.
pub fn safe_learning_rate(
    spec: &MarketSpec,
    theta_star: &ModelProfile,
    r_eta: f64,
) -> Result<SafeRateReport> {
    spec.validate_profile(theta_star)?;
    if !(r_eta >= 1.0) {
        return Err(Error::InvalidParameter {
            name: "r_eta",
            reason: format!("rate ratio bound must be at least 1, got {r_eta}"),
        });
    }
    let d = spec.d();
    let n = spec.n();
    let mut min_support = f64::INFINITY;
    for model in theta_star.iter() {
        for &v in model.coords() {
            if v > SUPPORT_EPS {
                min_support = min_support.min(v);
            }
        }
    }
    if !min_support.is_finite() {
        return Err(Error::InvalidParameter {
            name: "theta_star",
            reason: "empty support".into(),
        });
    }

    let max_grad = max_abs_gradient(spec);
    let c1 = 0.25 * max_grad;
    let c2 = 2.0 / min_support;
    let c3 = std::f64::consts::E * d as f64 * c1.max(c2);
    let max_lambda = spec.lambda().iter().cloned().fold(0.0, f64::max);
    let min_lambda = spec.lambda().iter().cloned().fold(f64::INFINITY, f64::min);
    let sum_lambda = spec.collective_influence();
    let c4 = max_lambda * (max_lambda + 1.0) * spec.a().max_entry();

    let drift_l1_bound = 2.0 * (n * d) as f64 * max_grad;
    let grad_l1_bound = (n * d) as f64 * max_grad;

    // Condition 1: eta * max|g| <= 1/2.
    let eta_bound_grad = 0.5 / max_grad;
    // Condition 2: eta * n d C3 * max||drift||_1 <= 1.
    let eta_bound_drift = 1.0 / ((n * d) as f64 * c3 * drift_l1_bound);
    // Condition 3 (strict): r_eta^2 eta^3 < min_lambda^2 / (16 sum_lambda)
    //   * min( 4 / (C3 max_lambda ||g||_1), 1 / (d^2 C4) ).
    let rhs = (min_lambda * min_lambda / (16.0 * sum_lambda))
        * (4.0 / (c3 * max_lambda * grad_l1_bound)).min(1.0 / ((d * d) as f64 * c4));
    let eta_bound_ratio = (rhs / (r_eta * r_eta)).cbrt() * (1.0 - 1e-9);

    let eta_star = eta_bound_grad.min(eta_bound_drift).min(eta_bound_ratio);
    Ok(SafeRateReport {
        c1,
        c2,
        c3,
        c4,
        eta_star,
        r_eta,
        max_grad,
        drift_l1_bound,
        eta_bound_grad,
        eta_bound_drift,
        eta_bound_ratio,
    })
}

impl SafeRateReport {
    /// Substitutes a rate back into the three conditions.
    pub fn satisfied_by(&self, eta: f64) -> bool {
        let cond1 = eta * self.max_grad <= 0.5;
        let cond2 = eta <= self.eta_bound_drift;
        let cond3 = eta < self.eta_bound_ratio / (1.0 - 1e-9);
        cond1 && cond2 && cond3
    }
}
