//! The reduced one-dimensional map and its chaos certificates.
//!
//! When all agents share one learning rate and one starting model in a
//! two-feature market, the whole system collapses to a scalar recursion on
//! the first coordinate:
//!
//! ```text
//! f_{u,v}(x) = x / (x + (1 - x) exp(u (x - v)))
//! ```
//!
//! Here `v` is the interior fixed point (the stable point's first
//! coordinate) and `u` grows linearly with both the common learning rate
//! and the collective influence. Small `u` contracts toward `v`; large `u`
//! folds the interval hard enough that a period-3 orbit appears, which by
//! the classical period-three results implies Li-Yorke chaos.
//!
//! The certificate construction follows the constructive existence proof:
//! take `x1 = 1 - 1/u`, push it forward twice, then bisect on the bracket
//! `[v/2, v]` for a preimage `x0` of `x1`. Certified means the computed
//! orbit satisfies `x3 < x0 < x1` strictly with residuals at most 1e-10.
//! Lyapunov exponents and pair scans are diagnostics, not certificates.

use crate::error::{Error, Result};
use crate::linalg::log_add_exp;
use crate::market::MarketSpec;

/// Exponents beyond this magnitude are clamped; past it the map value is
/// indistinguishable from its limit in double precision.
const EXP_CLAMP: f64 = 700.0;
/// Residual target for the certificate bisection.
const BISECT_TOL: f64 = 1e-12;
/// Residual allowed when re-verifying a certificate orbit.
pub const CERT_RESIDUAL_TOL: f64 = 1e-10;

/// Parameters of the reduced map, optionally with the market quantities
/// they were derived from.
#[derive(Debug, Clone)]
pub struct ReducedMap {
    steepness: f64,
    fixed_point: f64,
    origin: Option<MapOrigin>,
}

/// How a reduced map was obtained from a market.
#[derive(Debug, Clone)]
pub struct MapOrigin {
    pub eta: f64,
    pub influence: f64,
    /// Limit of the fixed point as the influence grows.
    pub beta_inf: f64,
    /// Finite-influence offset `beta(L) - beta_inf`.
    pub delta: f64,
}

impl ReducedMap {
    pub fn new(steepness: f64, fixed_point: f64) -> Result<Self> {
        if !(steepness > 0.0) || !steepness.is_finite() {
            return Err(Error::InvalidParameter {
                name: "steepness",
                reason: format!("must be positive and finite, got {steepness}"),
            });
        }
        if !(fixed_point > 0.0 && fixed_point < 1.0) {
            return Err(Error::InvalidParameter {
                name: "fixed_point",
                reason: format!("must lie in (0, 1), got {fixed_point}"),
            });
        }
        Ok(ReducedMap {
            steepness,
            fixed_point,
            origin: None,
        })
    }

    /// Steepness parameter (written `alpha` in market-derived maps).
    pub fn steepness(&self) -> f64 {
        self.steepness
    }

    /// Interior fixed point (written `beta` in market-derived maps).
    pub fn fixed_point(&self) -> f64 {
        self.fixed_point
    }

    pub fn origin(&self) -> Option<&MapOrigin> {
        self.origin.as_ref()
    }

    /// Overflow-safe evaluation: `x E / (x E + (1 - x))` with
    /// `E = exp(-u (x - v))` and the exponent clamped to +-700.
    pub fn apply(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::InvalidParameter {
                name: "x",
                reason: format!("map input must lie in [0, 1], got {x}"),
            });
        }
        Ok(self.apply_unchecked(x))
    }

    #[inline]
    fn apply_unchecked(&self, x: f64) -> f64 {
        let q = (-self.steepness * (x - self.fixed_point)).clamp(-EXP_CLAMP, EXP_CLAMP);
        let e_inv = q.exp();
        let num = x * e_inv;
        num / (num + (1.0 - x))
    }

    /// Analytic derivative `E (1 - u x (1 - x)) / D^2`, evaluated through
    /// logs so the chaotic regime cannot overflow.
    pub fn derivative(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::InvalidParameter {
                name: "x",
                reason: format!("map input must lie in [0, 1], got {x}"),
            });
        }
        Ok(self.log_derivative_parts(x).0)
    }

    /// Returns (f'(x), ln |f'(x)|); the log form feeds the Lyapunov sum.
    fn log_derivative_parts(&self, x: f64) -> (f64, f64) {
        let u = self.steepness;
        let v = self.fixed_point;
        let p = (u * (x - v)).clamp(-EXP_CLAMP, EXP_CLAMP);
        // ln D with D = x + (1 - x) e^p, via log-sum-exp.
        let ln_d = log_add_exp(x.ln(), (1.0 - x).ln() + p);
        let curvature = 1.0 - u * x * (1.0 - x);
        let ln_abs = p - 2.0 * ln_d + curvature.abs().ln();
        let value = (p - 2.0 * ln_d).exp() * curvature;
        (value, ln_abs)
    }
}

/// Derives the reduced-map parameters of a two-feature market at a common
/// learning rate `eta` and collective influence `influence`:
///
/// ```text
/// alpha = 2 eta (1 + L) (A11 - A12 - A21 + A22)
/// beta  = ((1 + L)(A22 - A21) + (b1 - b2)) / ((1 + L)(A11 - A12 - A21 + A22))
/// ```
///
/// Requires a strictly diagonally dominant `A`, which makes `alpha`
/// positive and increasing in `L`.
pub fn reduced_map_params(spec: &MarketSpec, eta: f64, influence: f64) -> Result<ReducedMap> {
    if spec.d() != 2 {
        return Err(Error::Dimension {
            context: "reduced map",
            expected: 2,
            found: spec.d(),
        });
    }
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::InvalidParameter {
            name: "eta",
            reason: format!("learning rate must be positive, got {eta}"),
        });
    }
    if !(influence >= 0.0) || !influence.is_finite() {
        return Err(Error::InvalidParameter {
            name: "influence",
            reason: format!("collective influence must be nonnegative, got {influence}"),
        });
    }
    let a = spec.a();
    let (a11, a12, a21, a22) = (a.at(0, 0), a.at(0, 1), a.at(1, 0), a.at(1, 1));
    if !(a11 > a12.abs() && a22 > a21.abs()) {
        return Err(Error::InvalidParameter {
            name: "A",
            reason: "second-moment matrix must be strictly diagonally dominant".into(),
        });
    }
    let s = a11 - a12 - a21 + a22;
    let one_plus_l = 1.0 + influence;
    let alpha = 2.0 * eta * s * one_plus_l;
    let b = spec.b();
    let beta = (one_plus_l * (a22 - a21) + (b[0] - b[1])) / (one_plus_l * s);
    let beta_inf = (a22 - a21) / s;
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidParameter {
            name: "beta",
            reason: format!("derived fixed point {beta} falls outside (0, 1)"),
        });
    }
    Ok(ReducedMap {
        steepness: alpha,
        fixed_point: beta,
        origin: Some(MapOrigin {
            eta,
            influence,
            beta_inf,
            delta: beta - beta_inf,
        }),
    })
}

/// A verified orbit segment witnessing a period-3 point.
#[derive(Debug, Clone)]
pub struct Period3Certificate {
    pub x0: f64,
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    pub steepness: f64,
    pub fixed_point: f64,
    /// (x0 - x3, x1 - x0, |f(x0) - x1|).
    pub margins: (f64, f64, f64),
}

/// The inequality that stopped a certificate attempt.
#[derive(Debug, Clone, PartialEq)]
pub enum Period3Failure {
    /// The left bracket endpoint does not map above x1: f(v/2) <= x1.
    LeftBracket { f_y: f64, x1: f64 },
    /// The fixed point is not below x1: v >= x1.
    FixedPoint { v: f64, x1: f64 },
    /// The pushed-forward orbit does not come back low enough: x3 >= x0.
    Ordering { x0: f64, x3: f64 },
}

impl std::fmt::Display for Period3Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Period3Failure::LeftBracket { f_y, x1 } => write!(
                f,
                "bracket endpoint inequality failed: f(v/2) = {f_y} must exceed x1 = {x1}"
            ),
            Period3Failure::FixedPoint { v, x1 } => write!(
                f,
                "fixed-point inequality failed: v = {v} must lie below x1 = {x1}"
            ),
            Period3Failure::Ordering { x0, x3 } => write!(
                f,
                "orbit ordering failed: x3 = {x3} must lie strictly below x0 = {x0}"
            ),
        }
    }
}

/// Outcome of a certificate attempt; a failed bracket is a normal result,
/// not an error.
#[derive(Debug, Clone)]
pub enum Period3Outcome {
    Certified(Period3Certificate),
    Failed(Period3Failure),
}

impl Period3Outcome {
    pub fn certificate(&self) -> Option<&Period3Certificate> {
        match self {
            Period3Outcome::Certified(c) => Some(c),
            Period3Outcome::Failed(_) => None,
        }
    }

    pub fn is_certified(&self) -> bool {
        matches!(self, Period3Outcome::Certified(_))
    }
}

/// Attempts the constructive period-3 certificate.
///
/// Takes `x1 = 1 - 1/u` (so `u > 1` is required), pushes it forward to
/// `x2, x3`, verifies the intermediate-value bracket `f(v/2) > x1 > v`, and
/// bisects in `(v/2, v)` for `x0` with `f(x0) = x1` to residual 1e-12.
/// Succeeds iff `x3 < x0 < x1` strictly.
pub fn period3_certificate(map: &ReducedMap) -> Result<Period3Outcome> {
    let u = map.steepness();
    let v = map.fixed_point();
    if u <= 1.0 {
        return Err(Error::InvalidParameter {
            name: "steepness",
            reason: format!("certificate needs steepness > 1 so x1 = 1 - 1/u is interior, got {u}"),
        });
    }
    let x1 = 1.0 - 1.0 / u;
    let x2 = map.apply_unchecked(x1);
    let x3 = map.apply_unchecked(x2);
    let y = v / 2.0;
    let f_y = map.apply_unchecked(y);
    if !(f_y > x1) {
        return Ok(Period3Outcome::Failed(Period3Failure::LeftBracket {
            f_y,
            x1,
        }));
    }
    if !(v < x1) {
        return Ok(Period3Outcome::Failed(Period3Failure::FixedPoint { v, x1 }));
    }
    // f(y) - x1 > 0 and f(v) - x1 = v - x1 < 0: bisect for the preimage.
    let mut lo = y;
    let mut hi = v;
    let mut x0 = 0.5 * (lo + hi);
    let mut residual = f64::INFINITY;
    for _ in 0..200 {
        x0 = 0.5 * (lo + hi);
        let r = map.apply_unchecked(x0) - x1;
        residual = r.abs();
        if residual <= BISECT_TOL {
            break;
        }
        if r > 0.0 {
            lo = x0;
        } else {
            hi = x0;
        }
    }
    if residual > BISECT_TOL {
        return Err(Error::Numerical {
            context: "period3_certificate",
            detail: format!("bisection stalled at residual {residual:e}"),
        });
    }
    if !(x3 < x0) {
        return Ok(Period3Outcome::Failed(Period3Failure::Ordering { x0, x3 }));
    }
    Ok(Period3Outcome::Certified(Period3Certificate {
        x0,
        x1,
        x2,
        x3,
        steepness: u,
        fixed_point: v,
        margins: (x0 - x3, x1 - x0, residual),
    }))
}

/// Result of the carrying-capacity search.
#[derive(Debug, Clone)]
pub struct CarryingCapacity {
    /// Smallest grid-certified collective influence.
    pub influence: f64,
    pub certificate: Period3Certificate,
    /// Whether the two feature coordinates were swapped first.
    pub permuted: bool,
    /// Asymptotic fixed point after any permutation.
    pub beta_inf: f64,
    /// True when the certificate also succeeded on a 32-point grid between
    /// the returned influence and the upper search bound.
    pub certified_above: bool,
}

/// Searches for the smallest influence in `[l_min, l_max]` at which the
/// period-3 certificate succeeds, to bracket width `tol`.
///
/// The coordinates are swapped automatically when the asymptotic fixed
/// point exceeds one half (the map family is symmetric under that swap);
/// an asymptotic fixed point of exactly one half is outside the certified
/// family and is rejected. The returned level is the certified end of the
/// final bracket; success at every grid point above it is checked and
/// reported, not assumed.
pub fn carrying_capacity(
    spec: &MarketSpec,
    eta: f64,
    l_min: f64,
    l_max: f64,
    tol: f64,
) -> Result<CarryingCapacity> {
    if spec.d() != 2 {
        return Err(Error::Dimension {
            context: "carrying capacity",
            expected: 2,
            found: spec.d(),
        });
    }
    if !(l_min >= 0.0 && l_max > l_min) {
        return Err(Error::InvalidParameter {
            name: "l_range",
            reason: format!("need 0 <= l_min < l_max, got [{l_min}, {l_max}]"),
        });
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tol",
            reason: format!("bracket width must be positive, got {tol}"),
        });
    }
    // Probe the asymptotic fixed point; permute the coordinates when it
    // exceeds one half.
    let probe = reduced_map_params(spec, eta, l_min.max(1.0))?;
    let beta_inf_raw = probe.origin().expect("derived map").beta_inf;
    let permuted = beta_inf_raw > 0.5;
    let working;
    let spec = if permuted {
        working = spec.permuted(0, 1)?;
        &working
    } else {
        spec
    };
    let beta_inf = if permuted {
        1.0 - beta_inf_raw
    } else {
        beta_inf_raw
    };
    if beta_inf == 0.5 {
        return Err(Error::InvalidParameter {
            name: "A",
            reason: "the asymptotic fixed point is exactly one half; the period-3 construction needs it strictly below".into(),
        });
    }

    let try_at = |l: f64| -> Result<Option<Period3Certificate>> {
        let map = reduced_map_params(spec, eta, l)?;
        if map.steepness() <= 1.0 {
            return Ok(None);
        }
        Ok(match period3_certificate(&map)? {
            Period3Outcome::Certified(cert) => Some(cert),
            Period3Outcome::Failed(_) => None,
        })
    };

    let top = try_at(l_max)?;
    let Some(top_cert) = top else {
        return Err(Error::NoCertifiedInfluence { l_max });
    };

    let (mut influence, mut certificate) = (l_max, top_cert);
    match try_at(l_min)? {
        Some(cert) => {
            influence = l_min;
            certificate = cert;
        }
        None => {
            let mut lo = l_min;
            let mut hi = l_max;
            while hi - lo > tol {
                let mid = 0.5 * (lo + hi);
                match try_at(mid)? {
                    Some(cert) => {
                        hi = mid;
                        influence = mid;
                        certificate = cert;
                    }
                    None => lo = mid,
                }
            }
        }
    }

    // The construction guarantees success for all large influence, not
    // monotonicity; verify on a grid and report.
    let mut certified_above = true;
    for j in 0..32 {
        let l = influence + (l_max - influence) * j as f64 / 31.0;
        if try_at(l)?.is_none() {
            certified_above = false;
            break;
        }
    }
    Ok(CarryingCapacity {
        influence,
        certificate,
        permuted,
        beta_inf,
        certified_above,
    })
}

/// Orbit-averaged log derivative after a burn-in.
///
/// Deterministic given its inputs. Errors when the orbit collapses onto an
/// interval endpoint (within 1e-300) or the derivative vanishes exactly.
pub fn lyapunov_exponent(map: &ReducedMap, x0: f64, burn_in: usize, iters: usize) -> Result<f64> {
    if !(x0 > 0.0 && x0 < 1.0) {
        return Err(Error::InvalidParameter {
            name: "x0",
            reason: format!("orbit start must be interior, got {x0}"),
        });
    }
    if iters < 1000 {
        return Err(Error::InvalidParameter {
            name: "iters",
            reason: format!("at least 1000 iterates are required, got {iters}"),
        });
    }
    let mut x = x0;
    for t in 0..burn_in {
        x = map.apply_unchecked(x);
        check_interior(x, t)?;
    }
    let mut sum = 0.0;
    for t in 0..iters {
        let (_, ln_abs) = map.log_derivative_parts(x);
        if !ln_abs.is_finite() {
            return Err(Error::Numerical {
                context: "lyapunov_exponent",
                detail: format!("log-derivative {ln_abs} at x = {x}"),
            });
        }
        sum += ln_abs;
        x = map.apply_unchecked(x);
        check_interior(x, burn_in + t)?;
    }
    Ok(sum / iters as f64)
}

fn check_interior(x: f64, iterate: usize) -> Result<()> {
    if x <= 1e-300 || 1.0 - x <= 1e-300 {
        return Err(Error::DegenerateOrbit { iterate });
    }
    Ok(())
}

/// One row of a bifurcation scan.
#[derive(Debug, Clone)]
pub struct BifurcationRow {
    pub influence: f64,
    pub alpha: f64,
    pub beta: f64,
    pub sample_index: usize,
    pub x: f64,
    /// Log-derivative average over the recorded window.
    pub lyapunov: f64,
}

/// For each influence level: burn in, then record `samples` successive
/// states of the reduced map together with the window-averaged Lyapunov
/// diagnostic.
pub fn bifurcation_scan(
    spec: &MarketSpec,
    eta: f64,
    l_grid: &[f64],
    x0: f64,
    burn_in: usize,
    samples: usize,
) -> Result<Vec<BifurcationRow>> {
    if !(x0 > 0.0 && x0 < 1.0) {
        return Err(Error::InvalidParameter {
            name: "x0",
            reason: format!("orbit start must be interior, got {x0}"),
        });
    }
    if samples == 0 {
        return Err(Error::InvalidParameter {
            name: "samples",
            reason: "at least one sample per level is required".into(),
        });
    }
    let mut rows = Vec::with_capacity(l_grid.len() * samples);
    for &l in l_grid {
        let map = reduced_map_params(spec, eta, l)?;
        let mut x = x0;
        for _ in 0..burn_in {
            x = map.apply_unchecked(x);
        }
        let mut recorded = Vec::with_capacity(samples);
        let mut ln_sum = 0.0;
        for _ in 0..samples {
            x = map.apply_unchecked(x);
            recorded.push(x);
            let (_, ln_abs) = map.log_derivative_parts(x);
            ln_sum += ln_abs;
        }
        let lyapunov = ln_sum / samples as f64;
        for (j, &xv) in recorded.iter().enumerate() {
            rows.push(BifurcationRow {
                influence: l,
                alpha: map.steepness(),
                beta: map.fixed_point(),
                sample_index: j,
                x: xv,
                lyapunov,
            });
        }
    }
    Ok(rows)
}

/// Finite-horizon pair diagnostic: the smallest and largest distance the
/// two orbits attain up to the horizon. A proxy for the liminf/limsup pair
/// condition, not a proof.
pub fn li_yorke_pair_scan(
    map: &ReducedMap,
    x: f64,
    x_prime: f64,
    horizon: usize,
) -> Result<(f64, f64)> {
    if !(x > 0.0 && x < 1.0 && x_prime > 0.0 && x_prime < 1.0) {
        return Err(Error::InvalidParameter {
            name: "x",
            reason: "both orbit starts must be interior".into(),
        });
    }
    if x == x_prime {
        return Err(Error::InvalidParameter {
            name: "x_prime",
            reason: "the two starts must differ".into(),
        });
    }
    if horizon < 1000 {
        return Err(Error::InvalidParameter {
            name: "horizon",
            reason: format!("at least 1000 iterates are required, got {horizon}"),
        });
    }
    let mut a = x;
    let mut b = x_prime;
    let mut min_gap = (a - b).abs();
    let mut max_gap = min_gap;
    for _ in 0..horizon {
        a = map.apply_unchecked(a);
        b = map.apply_unchecked(b);
        let gap = (a - b).abs();
        min_gap = min_gap.min(gap);
        max_gap = max_gap.max(gap);
    }
    Ok((min_gap, max_gap))
}
