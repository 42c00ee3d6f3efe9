//! C ABI over the market simulator.
//!
//! Conventions:
//! - Markets are opaque handles created by `pd_market_new` /
//!   `pd_market_from_file` and released with `pd_market_free`.
//! - Every fallible call returns a [`PdStatus`]; on anything other than
//!   `Ok`, `pd_last_error_message` retrieves a description for the calling
//!   thread.
//! - Profiles cross the boundary as row-major `n * d` double buffers; the
//!   caller owns all buffers and passes their lengths for checking.
//!
//! The header `include/perfdyn.h` is regenerated by the build script.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;

use perfdyn_core::chaos::{
    carrying_capacity, lyapunov_exponent, period3_certificate, reduced_map_params,
    Period3Outcome, ReducedMap,
};
use perfdyn_core::config::ExperimentConfig;
use perfdyn_core::dynamics::{integrate_ode, simulate, LearningRates};
use perfdyn_core::equilibrium::{find_stable_point, potential, safe_learning_rate};
use perfdyn_core::error::Error;
use perfdyn_core::linalg::Matrix;
use perfdyn_core::market::{MarketSpec, ModelProfile};
use perfdyn_core::stochastic::{stochastic_simulate, BatchMode};

/// Status code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdStatus {
    Ok = 0,
    /// Bad arguments or configuration.
    InvalidArgument = 1,
    /// The computation ran but failed numerically.
    NumericalFailure = 2,
    /// A required pointer was null.
    NullPointer = 3,
    /// An output buffer has the wrong length.
    BadBufferLength = 4,
}

/// Opaque market handle.
pub struct PdMarket {
    spec: MarketSpec,
}

/// Result of a period-3 certificate attempt.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PdPeriod3 {
    /// 1 when the orbit was certified, 0 otherwise (see the last error
    /// message for the failed inequality).
    pub certified: i32,
    pub x0: f64,
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    /// x0 - x3.
    pub margin_low: f64,
    /// x1 - x0.
    pub margin_high: f64,
    /// |f(x0) - x1| after bisection.
    pub residual: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).expect("nul-free message");
    });
}

fn status_of(err: &Error) -> PdStatus {
    set_error(&err.to_string());
    if err.is_validation() {
        PdStatus::InvalidArgument
    } else {
        PdStatus::NumericalFailure
    }
}

fn null_pointer(what: &str) -> PdStatus {
    set_error(&format!("null pointer: {what}"));
    PdStatus::NullPointer
}

fn bad_length(what: &str, expected: usize, found: usize) -> PdStatus {
    set_error(&format!("{what}: expected length {expected}, got {found}"));
    PdStatus::BadBufferLength
}

/// Copies the last error message of this thread into `buf` (truncating if
/// needed, always nul-terminated when `cap > 0`) and returns the full
/// length of the message including the terminator.
///
/// # Safety
/// `buf` must point to at least `cap` writable bytes (or be null).
#[no_mangle]
pub unsafe extern "C" fn pd_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let message = slot.borrow();
        let bytes = message.as_bytes_with_nul();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            unsafe {
                std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                *buf.add(n) = 0;
            }
        }
        bytes.len()
    })
}

unsafe fn slice_arg<'a>(ptr: *const f64, len: usize) -> Option<&'a [f64]> {
    if ptr.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(ptr, len))
    }
}

/// Builds a market from raw arrays (`a` is row-major `d*d`).
///
/// # Safety
/// `lambda`, `theta0`, `a`, `c` must point to arrays of the stated lengths
/// and `out` must be a valid pointer to receive the handle.
#[no_mangle]
pub unsafe extern "C" fn pd_market_new(
    d: usize,
    n: usize,
    lambda: *const f64,
    theta0: *const f64,
    a: *const f64,
    c: *const f64,
    sigma0_sq: f64,
    out: *mut *mut PdMarket,
) -> PdStatus {
    if out.is_null() {
        return null_pointer("out");
    }
    let (Some(lambda), Some(theta0), Some(a), Some(c)) = (
        slice_arg(lambda, n),
        slice_arg(theta0, d),
        slice_arg(a, d * d),
        slice_arg(c, d),
    ) else {
        return null_pointer("market arrays");
    };
    let matrix = match Matrix::from_row_major(d, d, a.to_vec()) {
        Ok(m) => m,
        Err(e) => return status_of(&e),
    };
    match MarketSpec::new(lambda.to_vec(), theta0.to_vec(), matrix, c.to_vec(), sigma0_sq) {
        Ok(spec) => {
            *out = Box::into_raw(Box::new(PdMarket { spec }));
            PdStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Loads the market keys of a TOML experiment file.
///
/// # Safety
/// `path` must be a nul-terminated UTF-8 string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pd_market_from_file(
    path: *const c_char,
    out: *mut *mut PdMarket,
) -> PdStatus {
    if path.is_null() || out.is_null() {
        return null_pointer("path/out");
    }
    let Ok(path) = CStr::from_ptr(path).to_str() else {
        set_error("path is not valid UTF-8");
        return PdStatus::InvalidArgument;
    };
    match ExperimentConfig::load(Path::new(path)).and_then(|cfg| cfg.spec()) {
        Ok(spec) => {
            *out = Box::into_raw(Box::new(PdMarket { spec }));
            PdStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Releases a market handle. Null is ignored.
///
/// # Safety
/// `market` must have come from `pd_market_new`/`pd_market_from_file` and
/// must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pd_market_free(market: *mut PdMarket) {
    if !market.is_null() {
        drop(Box::from_raw(market));
    }
}

/// Reports the feature dimension and agent count.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pd_market_dims(
    market: *const PdMarket,
    out_d: *mut usize,
    out_n: *mut usize,
) -> PdStatus {
    if market.is_null() || out_d.is_null() || out_n.is_null() {
        return null_pointer("market/out_d/out_n");
    }
    *out_d = (*market).spec.d();
    *out_n = (*market).spec.n();
    PdStatus::Ok
}

unsafe fn profile_arg(spec: &MarketSpec, theta: *const f64, len: usize) -> Result<ModelProfile, PdStatus> {
    let expected = spec.n() * spec.d();
    if theta.is_null() {
        return Err(null_pointer("theta"));
    }
    if len != expected {
        return Err(bad_length("theta", expected, len));
    }
    let flat = std::slice::from_raw_parts(theta, len);
    ModelProfile::from_flat(spec.n(), spec.d(), flat).map_err(|e| status_of(&e))
}

unsafe fn rates_arg(spec: &MarketSpec, eta: *const f64, len: usize) -> Result<LearningRates, PdStatus> {
    if eta.is_null() {
        return Err(null_pointer("eta"));
    }
    if len != spec.n() {
        return Err(bad_length("eta", spec.n(), len));
    }
    LearningRates::new(std::slice::from_raw_parts(eta, len).to_vec()).map_err(|e| status_of(&e))
}

/// Solves for the performative stable point; writes the `n*d` profile into
/// `out_theta` and the first-order residual into `out_residual`.
/// `out_proper` receives 1 when the point is proper.
///
/// # Safety
/// Buffers must match the market dimensions.
#[no_mangle]
pub unsafe extern "C" fn pd_stable_point(
    market: *const PdMarket,
    tol: f64,
    max_iters: usize,
    out_theta: *mut f64,
    out_theta_len: usize,
    out_residual: *mut f64,
    out_proper: *mut i32,
) -> PdStatus {
    if market.is_null() || out_theta.is_null() || out_residual.is_null() || out_proper.is_null() {
        return null_pointer("market/out");
    }
    let spec = &(*market).spec;
    let expected = spec.n() * spec.d();
    if out_theta_len != expected {
        return bad_length("out_theta", expected, out_theta_len);
    }
    match find_stable_point(spec, tol, max_iters) {
        Ok(result) => {
            let flat = result.theta_star.flatten();
            std::ptr::copy_nonoverlapping(flat.as_ptr(), out_theta, expected);
            *out_residual = result.kkt_residual;
            *out_proper = result.proper as i32;
            PdStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Evaluates the convex potential at a profile.
///
/// # Safety
/// Buffers must match the market dimensions.
#[no_mangle]
pub unsafe extern "C" fn pd_potential(
    market: *const PdMarket,
    theta: *const f64,
    theta_len: usize,
    out: *mut f64,
) -> PdStatus {
    if market.is_null() || out.is_null() {
        return null_pointer("market/out");
    }
    let spec = &(*market).spec;
    let profile = match profile_arg(spec, theta, theta_len) {
        Ok(p) => p,
        Err(s) => return s,
    };
    match potential(spec, &profile) {
        Ok(v) => {
            *out = v;
            PdStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Largest learning rate passing the conservative descent conditions for
/// the supplied stable point.
///
/// # Safety
/// Buffers must match the market dimensions.
#[no_mangle]
pub unsafe extern "C" fn pd_safe_learning_rate(
    market: *const PdMarket,
    theta_star: *const f64,
    theta_len: usize,
    r_eta: f64,
    out_eta: *mut f64,
) -> PdStatus {
    if market.is_null() || out_eta.is_null() {
        return null_pointer("market/out_eta");
    }
    let spec = &(*market).spec;
    let profile = match profile_arg(spec, theta_star, theta_len) {
        Ok(p) => p,
        Err(s) => return s,
    };
    match safe_learning_rate(spec, &profile, r_eta) {
        Ok(report) => {
            *out_eta = report.eta_star;
            PdStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Runs `steps` exact update rounds and writes all `steps + 1` states
/// (row-major by round, then agent, then coordinate) into `out_states`.
///
/// # Safety
/// `out_states_len` must equal `(steps + 1) * n * d`.
#[no_mangle]
pub unsafe extern "C" fn pd_simulate(
    market: *const PdMarket,
    initial: *const f64,
    initial_len: usize,
    eta: *const f64,
    eta_len: usize,
    steps: usize,
    out_states: *mut f64,
    out_states_len: usize,
) -> PdStatus {
    if market.is_null() || out_states.is_null() {
        return null_pointer("market/out_states");
    }
    let spec = &(*market).spec;
    let profile = match profile_arg(spec, initial, initial_len) {
        Ok(p) => p,
        Err(s) => return s,
    };
    let rates = match rates_arg(spec, eta, eta_len) {
        Ok(r) => r,
        Err(s) => return s,
    };
    let expected = (steps + 1) * spec.n() * spec.d();
    if out_states_len != expected {
        return bad_length("out_states", expected, out_states_len);
    }
    match simulate(spec, &profile, &rates, steps) {
        Ok(traj) => {
            let mut offset = 0;
            for state in &traj.states {
                let flat = state.flatten();
                std::ptr::copy_nonoverlapping(flat.as_ptr(), out_states.add(offset), flat.len());
                offset += flat.len();
            }
            PdStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Stochastic counterpart of `pd_simulate` with batch size `m` and master
/// seed `seed`; `shared_batches != 0` makes all agents share one batch per
/// round.
///
/// # Safety
/// `out_states_len` must equal `(steps + 1) * n * d`.
#[no_mangle]
pub unsafe extern "C" fn pd_stochastic_simulate(
    market: *const PdMarket,
    initial: *const f64,
    initial_len: usize,
    eta: *const f64,
    eta_len: usize,
    steps: usize,
    m: usize,
    seed: u64,
    shared_batches: i32,
    out_states: *mut f64,
    out_states_len: usize,
) -> PdStatus {
    if market.is_null() || out_states.is_null() {
        return null_pointer("market/out_states");
    }
    let spec = &(*market).spec;
    let profile = match profile_arg(spec, initial, initial_len) {
        Ok(p) => p,
        Err(s) => return s,
    };
    let rates = match rates_arg(spec, eta, eta_len) {
        Ok(r) => r,
        Err(s) => return s,
    };
    let expected = (steps + 1) * spec.n() * spec.d();
    if out_states_len != expected {
        return bad_length("out_states", expected, out_states_len);
    }
    let mode = if shared_batches != 0 {
        BatchMode::Shared
    } else {
        BatchMode::Independent
    };
    match stochastic_simulate(spec, &profile, &rates, steps, m, seed, mode) {
        Ok(traj) => {
            let mut offset = 0;
            for state in &traj.states {
                let flat = state.flatten();
                std::ptr::copy_nonoverlapping(flat.as_ptr(), out_states.add(offset), flat.len());
                offset += flat.len();
            }
            PdStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Integrates the continuous-time flow to `t_end` with fixed step `dt` and
/// writes the final profile into `out_theta`.
///
/// # Safety
/// Buffers must match the market dimensions.
#[no_mangle]
pub unsafe extern "C" fn pd_integrate_ode(
    market: *const PdMarket,
    initial: *const f64,
    initial_len: usize,
    eta: *const f64,
    eta_len: usize,
    t_end: f64,
    dt: f64,
    out_theta: *mut f64,
    out_theta_len: usize,
) -> PdStatus {
    if market.is_null() || out_theta.is_null() {
        return null_pointer("market/out_theta");
    }
    let spec = &(*market).spec;
    let profile = match profile_arg(spec, initial, initial_len) {
        Ok(p) => p,
        Err(s) => return s,
    };
    let rates = match rates_arg(spec, eta, eta_len) {
        Ok(r) => r,
        Err(s) => return s,
    };
    let expected = spec.n() * spec.d();
    if out_theta_len != expected {
        return bad_length("out_theta", expected, out_theta_len);
    }
    match integrate_ode(spec, &profile, &rates, t_end, dt) {
        Ok(traj) => {
            let flat = traj.final_state().flatten();
            std::ptr::copy_nonoverlapping(flat.as_ptr(), out_theta, expected);
            PdStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Reduced-map parameters of a two-feature market at a common rate and a
/// collective influence.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pd_reduced_map_params(
    market: *const PdMarket,
    eta: f64,
    influence: f64,
    out_alpha: *mut f64,
    out_beta: *mut f64,
) -> PdStatus {
    if market.is_null() || out_alpha.is_null() || out_beta.is_null() {
        return null_pointer("market/out");
    }
    match reduced_map_params(&(*market).spec, eta, influence) {
        Ok(map) => {
            *out_alpha = map.steepness();
            *out_beta = map.fixed_point();
            PdStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// One application of the scalar map with parameters (`alpha`, `beta`).
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pd_reduced_map_apply(
    alpha: f64,
    beta: f64,
    x: f64,
    out: *mut f64,
) -> PdStatus {
    if out.is_null() {
        return null_pointer("out");
    }
    let map = match ReducedMap::new(alpha, beta) {
        Ok(m) => m,
        Err(e) => return status_of(&e),
    };
    match map.apply(x) {
        Ok(v) => {
            *out = v;
            PdStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Orbit-averaged Lyapunov exponent of the scalar map.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pd_lyapunov_exponent(
    alpha: f64,
    beta: f64,
    x0: f64,
    burn_in: usize,
    iters: usize,
    out: *mut f64,
) -> PdStatus {
    if out.is_null() {
        return null_pointer("out");
    }
    let map = match ReducedMap::new(alpha, beta) {
        Ok(m) => m,
        Err(e) => return status_of(&e),
    };
    match lyapunov_exponent(&map, x0, burn_in, iters) {
        Ok(v) => {
            *out = v;
            PdStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Attempts the period-3 certificate at (`alpha`, `beta`). A failed bracket
/// is reported through `certified = 0` with status `Ok`; the violated
/// inequality is available from `pd_last_error_message`.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pd_period3_certificate(
    alpha: f64,
    beta: f64,
    out: *mut PdPeriod3,
) -> PdStatus {
    if out.is_null() {
        return null_pointer("out");
    }
    let map = match ReducedMap::new(alpha, beta) {
        Ok(m) => m,
        Err(e) => return status_of(&e),
    };
    match period3_certificate(&map) {
        Ok(Period3Outcome::Certified(cert)) => {
            *out = PdPeriod3 {
                certified: 1,
                x0: cert.x0,
                x1: cert.x1,
                x2: cert.x2,
                x3: cert.x3,
                margin_low: cert.margins.0,
                margin_high: cert.margins.1,
                residual: cert.margins.2,
            };
            PdStatus::Ok
        }
        Ok(Period3Outcome::Failed(reason)) => {
            set_error(&reason.to_string());
            *out = PdPeriod3 {
                certified: 0,
                x0: f64::NAN,
                x1: f64::NAN,
                x2: f64::NAN,
                x3: f64::NAN,
                margin_low: f64::NAN,
                margin_high: f64::NAN,
                residual: f64::NAN,
            };
            PdStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Smallest certified collective influence in `[l_min, l_max]`.
/// `out_permuted` reports whether the feature coordinates were swapped.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pd_carrying_capacity(
    market: *const PdMarket,
    eta: f64,
    l_min: f64,
    l_max: f64,
    tol: f64,
    out_influence: *mut f64,
    out_permuted: *mut i32,
) -> PdStatus {
    if market.is_null() || out_influence.is_null() || out_permuted.is_null() {
        return null_pointer("market/out");
    }
    match carrying_capacity(&(*market).spec, eta, l_min, l_max, tol) {
        Ok(result) => {
            *out_influence = result.influence;
            *out_permuted = result.permuted as i32;
            PdStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}
