//! Sampling from the Gaussian market and stochastic-gradient dynamics.
//!
//! Sampling commits to the Gaussian instantiation: zero-mean features with
//! covariance `A` (drawn through the Cholesky factor) and independent
//! zero-mean noise with variance `sigma0_sq`, which forces a zero cross
//! moment `c`. Analytic-mode computations elsewhere accept arbitrary `c`;
//! the sampler rejects it.
//!
//! Each agent estimates its gradient from per-sample squared-error
//! gradients, `g_hat_k = (2/m) sum_j (theta . x_j - y_j) x_{j,k}`, which is
//! identical to substituting empirical moments for `A` and `b`. Batches are
//! reproducible: the batch for (seed, step, agent) is a pure function of
//! the counter RNG stream derived via [`rng::child_seed`].

use crate::dynamics::{self, LearningRates, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::market::{self, MarketSpec, ModelProfile};
use crate::rng::{self, CounterRng};

/// One batch of feature/outcome draws.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    /// Row-major m x d feature matrix.
    pub features: Vec<f64>,
    pub outcomes: Vec<f64>,
    pub seed: u64,
    pub m: usize,
    pub d: usize,
}

impl SampleBatch {
    pub fn feature_row(&self, j: usize) -> &[f64] {
        &self.features[j * self.d..(j + 1) * self.d]
    }
}

fn require_sampling_mode(spec: &MarketSpec) -> Result<()> {
    let max_abs = spec.c().iter().cloned().map(f64::abs).fold(0.0, f64::max);
    if max_abs > 0.0 {
        return Err(Error::NonZeroCrossMoment { max_abs });
    }
    Ok(())
}

/// Draws `m` samples from the distribution the deployed profile induces.
pub fn sample_batch(
    spec: &MarketSpec,
    profile: &ModelProfile,
    m: usize,
    seed: u64,
) -> Result<SampleBatch> {
    require_sampling_mode(spec)?;
    spec.validate_profile(profile)?;
    if m == 0 {
        return Err(Error::InvalidParameter {
            name: "m",
            reason: "batch size must be at least 1".into(),
        });
    }
    let d = spec.d();
    let chol = spec.chol_lower();
    let sigma0 = spec.sigma0_sq().sqrt();
    let w = market::effective_outcome_weights(spec, profile)?;
    let mut rng = CounterRng::new(seed);
    let mut features = Vec::with_capacity(m * d);
    let mut outcomes = Vec::with_capacity(m);
    let mut z = vec![0.0; d];
    for _ in 0..m {
        for zk in z.iter_mut() {
            *zk = rng.next_normal();
        }
        let start = features.len();
        for k in 0..d {
            // Lower-triangular product: x_k = sum_{l<=k} L_kl z_l.
            let xk = z[..=k]
                .iter()
                .enumerate()
                .map(|(l, zl)| chol.at(k, l) * zl)
                .sum();
            features.push(xk);
        }
        let noise = sigma0 * rng.next_normal();
        let y = linalg::dot(&w, &features[start..start + d]) + noise;
        outcomes.push(y);
    }
    Ok(SampleBatch {
        features,
        outcomes,
        seed,
        m,
        d,
    })
}

/// Empirical second moments of a batch: `A_hat = (1/m) sum x x'` plus the
/// outcome cross term `(1/m) sum y x` that plays the role of `b` in the
/// empirical gradient.
#[derive(Debug, Clone)]
pub struct EmpiricalMoments {
    pub a_hat: Matrix,
    pub yx_mean: Vec<f64>,
    pub m: usize,
}

pub fn empirical_moments(batch: &SampleBatch) -> Result<EmpiricalMoments> {
    if batch.m == 0 {
        return Err(Error::InvalidParameter {
            name: "m",
            reason: "cannot form moments of an empty batch".into(),
        });
    }
    let d = batch.d;
    let inv_m = 1.0 / batch.m as f64;
    let mut a_hat = Matrix::zeros(d, d);
    let mut yx_mean = vec![0.0; d];
    for j in 0..batch.m {
        let x = batch.feature_row(j);
        let y = batch.outcomes[j];
        for k in 0..d {
            yx_mean[k] += y * x[k];
            for l in k..d {
                let v = a_hat.at(k, l) + x[k] * x[l];
                a_hat.set(k, l, v);
            }
        }
    }
    for (k, yx) in yx_mean.iter_mut().enumerate() {
        *yx *= inv_m;
        for l in k..d {
            let v = a_hat.at(k, l) * inv_m;
            a_hat.set(k, l, v);
            a_hat.set(l, k, v);
        }
    }
    Ok(EmpiricalMoments { a_hat, yx_mean, m: batch.m })
}

/// Per-sample gradient estimate `(2/m) sum_j (theta . x_j - y_j) x_j`.
pub fn empirical_gradient(batch: &SampleBatch, predictive: &[f64]) -> Vec<f64> {
    let d = batch.d;
    let mut g = vec![0.0; d];
    for j in 0..batch.m {
        let x = batch.feature_row(j);
        let residual = linalg::dot(predictive, x) - batch.outcomes[j];
        for k in 0..d {
            g[k] += residual * x[k];
        }
    }
    let scale = 2.0 / batch.m as f64;
    for gk in &mut g {
        *gk *= scale;
    }
    g
}

/// Whether agents draw their own batches or share one per step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchMode {
    Independent,
    Shared,
}

/// One stochastic exponentiated-gradient round. The batch for agent `i` is
/// seeded with `child_seed(seed, step, i)` (agent index 0 for everyone in
/// shared mode).
pub fn stochastic_eg_step(
    spec: &MarketSpec,
    profile: &ModelProfile,
    rates: &LearningRates,
    m: usize,
    seed: u64,
    step: u64,
    mode: BatchMode,
) -> Result<ModelProfile> {
    require_sampling_mode(spec)?;
    spec.validate_profile(profile)?;
    if rates.n() != spec.n() {
        return Err(Error::Dimension {
            context: "learning rates",
            expected: spec.n(),
            found: rates.n(),
        });
    }
    let d = spec.d();
    let flat = profile.flatten();
    let mut grads = Vec::with_capacity(spec.n());
    let mut shared_batch: Option<SampleBatch> = None;
    for i in 0..spec.n() {
        let g = match mode {
            BatchMode::Independent => {
                let batch = sample_batch(spec, profile, m, rng::child_seed(seed, step, i as u64))?;
                empirical_gradient(&batch, &flat[i * d..(i + 1) * d])
            }
            BatchMode::Shared => {
                if shared_batch.is_none() {
                    shared_batch =
                        Some(sample_batch(spec, profile, m, rng::child_seed(seed, step, 0))?);
                }
                empirical_gradient(
                    shared_batch.as_ref().expect("just filled"),
                    &flat[i * d..(i + 1) * d],
                )
            }
        };
        for &v in &g {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: "stochastic gradient",
                    step: Some(step as usize),
                });
            }
        }
        grads.push(g);
    }
    let next = dynamics::eg_reweight_raw(&flat, d, rates, &grads);
    ModelProfile::from_flat(spec.n(), d, &next)
}

/// Iterates [`stochastic_eg_step`] with per-step derived seeds, recording
/// the same diagnostics as the exact dynamics.
pub fn stochastic_simulate(
    spec: &MarketSpec,
    initial: &ModelProfile,
    rates: &LearningRates,
    steps: usize,
    m: usize,
    seed: u64,
    mode: BatchMode,
) -> Result<Trajectory> {
    if steps == 0 {
        return Err(Error::InvalidParameter {
            name: "steps",
            reason: "at least one round is required".into(),
        });
    }
    require_sampling_mode(spec)?;
    spec.validate_profile(initial)?;
    let mut states = vec![initial.clone()];
    let mut diagnostics = vec![dynamics::diagnostics_at(spec, &initial.flatten())];
    let mut current = initial.clone();
    for t in 0..steps {
        current = stochastic_eg_step(spec, &current, rates, m, seed, t as u64, mode)?;
        diagnostics.push(dynamics::diagnostics_at(spec, &current.flatten()));
        states.push(current.clone());
    }
    Ok(Trajectory {
        states,
        diagnostics,
        step_dt: 1.0,
        boundary_start: initial.on_boundary(),
        states_truncated: false,
    })
}
