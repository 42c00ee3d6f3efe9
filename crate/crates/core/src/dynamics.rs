//! Exponentiated-gradient dynamics and their continuous-time limit.
//!
//! Each round, every agent reweights its model multiplicatively by the
//! exponentiated negative gradient of its decoupled loss and renormalizes:
//!
//! ```text
//! theta'_k = theta_k exp(-eta_i g_k) / sum_l theta_l exp(-eta_i g_l)
//! ```
//!
//! The per-agent maximum of the exponents is subtracted before
//! exponentiation; the update is mathematically invariant to that shift and
//! it keeps the chaotic large-rate regime (exponents of order 30) inside
//! floating-point range.
//!
//! As the rates shrink, the iterates track the replicator-style flow
//! `d theta_i_k / dt = (eta_i / ||eta||_1) * drift_i_k`, integrated here by
//! classical fixed-step RK4 with exact renormalization after each step.

use crate::error::{Error, Result};
use crate::market::{self, MarketSpec, ModelProfile};

/// Per-agent step sizes.
#[derive(Debug, Clone)]
pub struct LearningRates {
    eta: Vec<f64>,
}

impl LearningRates {
    pub fn new(eta: Vec<f64>) -> Result<Self> {
        if eta.is_empty() {
            return Err(Error::InvalidParameter {
                name: "eta",
                reason: "at least one rate is required".into(),
            });
        }
        for &e in &eta {
            if !(e > 0.0) || !e.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "eta",
                    reason: format!("rates must be positive, got {e}"),
                });
            }
        }
        Ok(LearningRates { eta })
    }

    pub fn uniform(n: usize, eta: f64) -> Result<Self> {
        LearningRates::new(vec![eta; n.max(1)])
    }

    pub fn n(&self) -> usize {
        self.eta.len()
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.eta[i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.eta
    }

    pub fn l1(&self) -> f64 {
        self.eta.iter().sum()
    }

    /// max rate / min rate.
    pub fn ratio(&self) -> f64 {
        let max = self.eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = self.eta.iter().cloned().fold(f64::INFINITY, f64::min);
        max / min
    }

    fn check_against(&self, spec: &MarketSpec) -> Result<()> {
        if self.eta.len() != spec.n() {
            return Err(Error::Dimension {
                context: "learning rates",
                expected: spec.n(),
                found: self.eta.len(),
            });
        }
        Ok(())
    }
}

/// Diagnostics recorded at every stored state.
#[derive(Debug, Clone)]
pub struct StepDiagnostics {
    pub potential: f64,
    pub drift_l1: f64,
    pub agent_losses: Vec<f64>,
    pub total_loss: f64,
}

/// Beyond this many stored scalars, trajectories keep diagnostics only.
pub const MAX_STORED_SCALARS: usize = 10_000_000;

/// A time-indexed run of the dynamics with per-step diagnostics.
///
/// `step_dt` is 1 for discrete rounds and the integrator step for flows, so
/// the time of state `j` is `j * step_dt`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<ModelProfile>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub step_dt: f64,
    /// Initial state touched the simplex boundary; zero coordinates stay
    /// zero forever under both dynamics.
    pub boundary_start: bool,
    /// True when the state history exceeded [`MAX_STORED_SCALARS`] and only
    /// the initial and final states were kept.
    pub states_truncated: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.diagnostics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diagnostics.is_empty()
    }

    pub fn final_state(&self) -> &ModelProfile {
        self.states.last().expect("non-empty trajectory")
    }

    /// Time series of one coordinate of one agent (needs stored states).
    pub fn coord_series(&self, agent: usize, coord: usize) -> Vec<f64> {
        self.states
            .iter()
            .map(|s| s.agent(agent).get(coord))
            .collect()
    }
}

pub(crate) fn diagnostics_at(spec: &MarketSpec, flat: &[f64]) -> StepDiagnostics {
    let d = spec.d();
    let drift = market::replicator_drift_raw(spec, flat);
    let drift_l1 = market::drift_l1(&drift);
    let potential = crate::equilibrium::potential_raw(spec, flat);
    let agent_losses: Vec<f64> = (0..spec.n())
        .map(|i| market::decoupled_loss_raw(spec, flat, &flat[i * d..(i + 1) * d]))
        .collect();
    let total_loss = agent_losses.iter().sum();
    StepDiagnostics {
        potential,
        drift_l1,
        agent_losses,
        total_loss,
    }
}

fn check_finite_grad(grads: &market::GradProfile, step: Option<usize>) -> Result<()> {
    for row in grads.rows() {
        for &g in row {
            if !g.is_finite() {
                return Err(Error::NonFinite {
                    context: "gradient",
                    step,
                });
            }
        }
    }
    Ok(())
}

/// One multiplicative-weights reweighting of every agent by the supplied
/// per-agent gradient rows. Shared by the exact and stochastic dynamics.
pub(crate) fn eg_reweight_raw(
    flat: &[f64],
    d: usize,
    rates: &LearningRates,
    grads: &[Vec<f64>],
) -> Vec<f64> {
    let n = rates.n();
    let mut out = vec![0.0; n * d];
    for i in 0..n {
        let own = &flat[i * d..(i + 1) * d];
        let eta = rates.get(i);
        // Shift so the largest exponent is zero before exponentiating.
        let shift = grads[i]
            .iter()
            .map(|g| -eta * g)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut weights: Vec<f64> = (0..d)
            .map(|k| own[k] * (-eta * grads[i][k] - shift).exp())
            .collect();
        let denom: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= denom;
        }
        out[i * d..(i + 1) * d].copy_from_slice(&weights);
    }
    out
}

/// One exact exponentiated-gradient round.
pub fn eg_step(
    spec: &MarketSpec,
    profile: &ModelProfile,
    rates: &LearningRates,
) -> Result<ModelProfile> {
    spec.validate_profile(profile)?;
    rates.check_against(spec)?;
    let flat = profile.flatten();
    let next = eg_step_raw(spec, &flat, rates, None)?;
    ModelProfile::from_flat(spec.n(), spec.d(), &next)
}

fn eg_step_raw(
    spec: &MarketSpec,
    flat: &[f64],
    rates: &LearningRates,
    step: Option<usize>,
) -> Result<Vec<f64>> {
    let gp = market::grad_profile_raw(spec, flat);
    check_finite_grad(&gp, step)?;
    Ok(eg_reweight_raw(flat, spec.d(), rates, gp.rows()))
}

/// Iterates [`eg_step`] for `steps` rounds, pushing every state and its
/// diagnostics to `sink` as they are produced. This is the memory-free
/// path for long runs; [`simulate`] wraps it and collects.
pub fn simulate_streamed(
    spec: &MarketSpec,
    initial: &ModelProfile,
    rates: &LearningRates,
    steps: usize,
    mut sink: impl FnMut(usize, &ModelProfile, &StepDiagnostics) -> Result<()>,
) -> Result<()> {
    if steps == 0 {
        return Err(Error::InvalidParameter {
            name: "steps",
            reason: "at least one round is required".into(),
        });
    }
    spec.validate_profile(initial)?;
    rates.check_against(spec)?;
    let mut flat = initial.flatten();
    sink(0, initial, &diagnostics_at(spec, &flat))?;
    for t in 0..steps {
        flat = eg_step_raw(spec, &flat, rates, Some(t))?;
        for &v in &flat {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: "simulate",
                    step: Some(t + 1),
                });
            }
        }
        let state = ModelProfile::from_flat(spec.n(), spec.d(), &flat)?;
        sink(t + 1, &state, &diagnostics_at(spec, &flat))?;
    }
    Ok(())
}

/// Iterates [`eg_step`] for `steps` rounds, recording diagnostics at every
/// state (including the initial one). State history beyond
/// [`MAX_STORED_SCALARS`] keeps only the first and last states; use
/// [`simulate_streamed`] to receive every state of such runs.
pub fn simulate(
    spec: &MarketSpec,
    initial: &ModelProfile,
    rates: &LearningRates,
    steps: usize,
) -> Result<Trajectory> {
    let keep_states = (steps + 1) * spec.n() * spec.d() <= MAX_STORED_SCALARS;
    let mut states = Vec::new();
    let mut diagnostics = Vec::with_capacity(steps + 1);
    simulate_streamed(spec, initial, rates, steps, |step, state, diag| {
        if keep_states || step == 0 || step == steps {
            states.push(state.clone());
        }
        diagnostics.push(diag.clone());
        Ok(())
    })?;
    Ok(Trajectory {
        states,
        diagnostics,
        step_dt: 1.0,
        boundary_start: initial.on_boundary(),
        states_truncated: !keep_states,
    })
}

/// Right-hand side of the continuous-time dynamics:
/// `(eta_i / ||eta||_1) * drift_i_k`. Rows sum to zero.
pub fn ode_rhs(
    spec: &MarketSpec,
    profile: &ModelProfile,
    rates: &LearningRates,
) -> Result<Vec<Vec<f64>>> {
    spec.validate_profile(profile)?;
    rates.check_against(spec)?;
    let flat = profile.flatten();
    let mut rhs_flat = vec![0.0; flat.len()];
    ode_rhs_raw(spec, &flat, rates, &mut rhs_flat);
    Ok(rhs_flat
        .chunks_exact(spec.d())
        .map(|row| row.to_vec())
        .collect())
}

fn ode_rhs_raw(spec: &MarketSpec, flat: &[f64], rates: &LearningRates, out: &mut [f64]) {
    let d = spec.d();
    let gp = market::grad_profile_raw(spec, flat);
    let eta_l1 = rates.l1();
    for i in 0..spec.n() {
        let own = &flat[i * d..(i + 1) * d];
        let weight = rates.get(i) / eta_l1;
        let g = gp.row(i);
        let avg = gp.average(i);
        for k in 0..d {
            out[i * d + k] = weight * own[k] * (avg - g[k]);
        }
    }
}

/// Classical fixed-step RK4 on the replicator flow. Each accepted step is
/// renormalized exactly (divide each agent row by its sum) to cancel
/// integrator drift; a pre-renormalization row sum off by more than 1e-6
/// aborts with an error, which signals that `dt` is too large.
pub fn integrate_ode(
    spec: &MarketSpec,
    initial: &ModelProfile,
    rates: &LearningRates,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter {
            name: "dt",
            reason: format!("step must be positive, got {dt}"),
        });
    }
    if !(t_end >= dt) {
        return Err(Error::InvalidParameter {
            name: "t_end",
            reason: format!("horizon {t_end} must be at least one step {dt}"),
        });
    }
    spec.validate_profile(initial)?;
    rates.check_against(spec)?;
    let n = spec.n();
    let d = spec.d();
    let dim = n * d;
    let n_steps = (t_end / dt).round().max(1.0) as usize;
    let keep_states = (n_steps + 1) * dim <= MAX_STORED_SCALARS;

    let mut flat = initial.flatten();
    let mut states = Vec::new();
    if keep_states {
        states.push(initial.clone());
    }
    let mut diagnostics = Vec::with_capacity(n_steps + 1);
    diagnostics.push(diagnostics_at(spec, &flat));

    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut stage = vec![0.0; dim];

    for step in 0..n_steps {
        ode_rhs_raw(spec, &flat, rates, &mut k1);
        for j in 0..dim {
            stage[j] = flat[j] + 0.5 * dt * k1[j];
        }
        ode_rhs_raw(spec, &stage, rates, &mut k2);
        for j in 0..dim {
            stage[j] = flat[j] + 0.5 * dt * k2[j];
        }
        ode_rhs_raw(spec, &stage, rates, &mut k3);
        for j in 0..dim {
            stage[j] = flat[j] + dt * k3[j];
        }
        ode_rhs_raw(spec, &stage, rates, &mut k4);
        for j in 0..dim {
            flat[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        // Renormalize each agent row exactly.
        for i in 0..n {
            let row = &mut flat[i * d..(i + 1) * d];
            let sum: f64 = row.iter().sum();
            if !sum.is_finite() {
                return Err(Error::NonFinite {
                    context: "integrate_ode",
                    step: Some(step + 1),
                });
            }
            let deviation = (sum - 1.0).abs();
            if deviation > 1e-6 {
                return Err(Error::SimplexDrift {
                    step: step + 1,
                    deviation,
                });
            }
            for v in row.iter_mut() {
                if *v < 0.0 {
                    if *v < -1e-12 {
                        return Err(Error::SimplexDrift {
                            step: step + 1,
                            deviation: v.abs(),
                        });
                    }
                    *v = 0.0;
                }
                *v /= sum;
            }
        }
        if keep_states {
            states.push(ModelProfile::from_flat(n, d, &flat)?);
        }
        diagnostics.push(diagnostics_at(spec, &flat));
    }
    if !keep_states {
        states = vec![initial.clone(), ModelProfile::from_flat(n, d, &flat)?];
    }
    Ok(Trajectory {
        states,
        diagnostics,
        step_dt: dt,
        boundary_start: initial.on_boundary(),
        states_truncated: !keep_states,
    })
}

/// Second-order discretization error of one round:
/// `e = (eg_step(theta) - theta - eta .* drift) / eta^2`, evaluated from the
/// average-shifted form of the update.
pub fn discretization_error(
    spec: &MarketSpec,
    profile: &ModelProfile,
    rates: &LearningRates,
) -> Result<Vec<Vec<f64>>> {
    spec.validate_profile(profile)?;
    rates.check_against(spec)?;
    let d = spec.d();
    let flat = profile.flatten();
    let gp = market::grad_profile_raw(spec, &flat);
    check_finite_grad(&gp, None)?;
    let mut out = Vec::with_capacity(spec.n());
    for i in 0..spec.n() {
        let own = &flat[i * d..(i + 1) * d];
        let eta = rates.get(i);
        let g = gp.row(i);
        let avg = gp.average(i);
        // Average-shifted exponents eta * (avg - g_k), shifted again by the
        // maximum for range safety.
        let exps: Vec<f64> = (0..d).map(|k| eta * (avg - g[k])).collect();
        let shift = exps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = (0..d).map(|k| own[k] * (exps[k] - shift).exp()).collect();
        let denom: f64 = weights.iter().sum();
        let row: Vec<f64> = (0..d)
            .map(|k| {
                let stepped = weights[k] / denom;
                let drift = own[k] * (avg - g[k]);
                (stepped - own[k] - eta * drift) / (eta * eta)
            })
            .collect();
        out.push(row);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::{find_stable_point, safe_learning_rate};
    use crate::linalg;
    use crate::market::SimplexPoint;
    use crate::rng::CounterRng;
    use crate::testutil::{market_diag37, random_interior_profile, random_spec};

    #[test]
    fn uniform_gradient_leaves_profile_unchanged() {
        // b = A (theta + lambda * theta) makes the gradient zero, hence
        // constant; any constant gradient cancels in the update.
        let point = SimplexPoint::new(vec![0.3, 0.7]).unwrap();
        let theta0 = vec![0.3 * 3.0, 0.7 * 3.0];
        let spec = MarketSpec::new(
            vec![2.0],
            theta0,
            crate::linalg::Matrix::identity(2),
            vec![0.0, 0.0],
            1.0,
        )
        .unwrap();
        let profile = ModelProfile::new(vec![point]).unwrap();
        let rates = LearningRates::uniform(1, 0.1).unwrap();
        let next = eg_step(&spec, &profile, &rates).unwrap();
        for (a, b) in next.flatten().iter().zip(profile.flatten()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn stable_point_is_fixed() {
        let spec = market_diag37(14.0);
        let theta_star = find_stable_point(&spec, 1e-12, 400_000).unwrap().theta_star;
        let rates = LearningRates::uniform(1, 0.05).unwrap();
        let next = eg_step(&spec, &theta_star, &rates).unwrap();
        for (a, b) in next.flatten().iter().zip(theta_star.flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn eg_step_matches_reduced_map_form() {
        // One agent, p = 0.2, eta = 0.05 on the reference market: the next
        // state must match x / (x + (1-x) exp(15 (x - 0.7))) at x = 0.2.
        let spec = market_diag37(14.0);
        let profile = ModelProfile::new(vec![SimplexPoint::new(vec![0.2, 0.8]).unwrap()]).unwrap();
        let rates = LearningRates::uniform(1, 0.05).unwrap();
        let next = eg_step(&spec, &profile, &rates).unwrap();
        let x = 0.2f64;
        let expected = x / (x + (1.0 - x) * (15.0 * (x - 0.7)).exp());
        assert!(
            (next.agent(0).get(0) - expected).abs() < 1e-14,
            "{} vs {expected}",
            next.agent(0).get(0)
        );
    }

    #[test]
    fn simulate_reference_market_convergent_and_chaotic() {
        let spec = market_diag37(14.0);
        let initial = ModelProfile::new(vec![SimplexPoint::new(vec![0.2, 0.8]).unwrap()]).unwrap();

        // Small rate: converges to 0.7 within 0.01 after 100 rounds.
        let rates = LearningRates::uniform(1, 0.001).unwrap();
        let traj = simulate(&spec, &initial, &rates, 100).unwrap();
        let p100 = traj.final_state().agent(0).get(0);
        assert!((p100 - 0.7).abs() <= 0.01, "p100 {p100}");

        // Moderate influence, moderate rate: tight convergence.
        let spec_low = market_diag37(1.4);
        let rates = LearningRates::uniform(1, 0.05).unwrap();
        let traj = simulate(&spec_low, &initial, &rates, 100).unwrap();
        let p100 = traj.final_state().agent(0).get(0);
        assert!((p100 - 0.7).abs() <= 1e-4, "p100 {p100}");

        // Large influence and rate: no convergence; some late state is far
        // from the fixed point.
        let rates = LearningRates::uniform(1, 0.05).unwrap();
        let traj = simulate(&spec, &initial, &rates, 100).unwrap();
        let series = traj.coord_series(0, 0);
        let escaped = (90..=100).any(|t| (series[t] - 0.7).abs() > 0.05);
        assert!(escaped, "late states {:?}", &series[90..=100]);
    }

    #[test]
    fn simulate_preserves_boundary_and_flags_it() {
        let spec = market_diag37(2.0);
        let initial = ModelProfile::new(vec![SimplexPoint::vertex(2, 0)]).unwrap();
        let rates = LearningRates::uniform(1, 0.01).unwrap();
        let traj = simulate(&spec, &initial, &rates, 10).unwrap();
        assert!(traj.boundary_start);
        for state in &traj.states {
            assert_eq!(state.agent(0).get(1), 0.0);
        }
    }

    #[test]
    fn ode_rhs_properties() {
        let spec = market_diag37(14.0);
        let theta_star = find_stable_point(&spec, 1e-12, 400_000).unwrap().theta_star;
        let rates = LearningRates::uniform(1, 0.01).unwrap();
        let rhs = ode_rhs(&spec, &theta_star, &rates).unwrap();
        assert!(rhs[0].iter().all(|v| v.abs() < 1e-10));

        let mut rng = CounterRng::new(5);
        for _ in 0..50 {
            let spec = random_spec(&mut rng, 3, 3);
            let profile = random_interior_profile(&mut rng, &spec, 0.0);
            let equal_rates = LearningRates::uniform(3, 0.2).unwrap();
            let rhs = ode_rhs(&spec, &profile, &equal_rates).unwrap();
            let drift = market::replicator_drift(&spec, &profile).unwrap();
            for (row, drow) in rhs.iter().zip(&drift) {
                let sum: f64 = row.iter().sum();
                assert!(sum.abs() < 1e-10);
                for (r, dr) in row.iter().zip(drow) {
                    assert!((r - dr / 3.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn ode_converges_to_stable_point_with_richardson_check() {
        let spec = market_diag37(14.0);
        let initial = ModelProfile::new(vec![SimplexPoint::new(vec![0.2, 0.8]).unwrap()]).unwrap();
        let rates = LearningRates::uniform(1, 1.0).unwrap();
        let traj = integrate_ode(&spec, &initial, &rates, 50.0, 1e-3).unwrap();
        let end = traj.final_state().agent(0);
        assert!((end.get(0) - 0.7).abs() < 1e-4);
        assert!((end.get(1) - 0.3).abs() < 1e-4);

        // Potential non-increasing along the flow.
        for w in traj.diagnostics.windows(2) {
            assert!(w[1].potential <= w[0].potential + 1e-12);
        }

        // Step halving moves the endpoint by at most 1e-8 (4th order).
        let traj_half = integrate_ode(&spec, &initial, &rates, 50.0, 5e-4).unwrap();
        let end_half = traj_half.final_state().agent(0);
        assert!((end.get(0) - end_half.get(0)).abs() <= 1e-8);
    }

    #[test]
    fn ode_rejects_oversized_steps() {
        let spec = market_diag37(14.0);
        let initial = ModelProfile::new(vec![SimplexPoint::new(vec![0.2, 0.8]).unwrap()]).unwrap();
        let rates = LearningRates::uniform(1, 1.0).unwrap();
        // Enormous step: the row sum drifts and the integrator reports it.
        let result = integrate_ode(&spec, &initial, &rates, 10.0, 0.5);
        assert!(
            matches!(
                result,
                Err(Error::SimplexDrift { .. }) | Err(Error::NonFinite { .. })
            ),
            "{result:?}"
        );
    }

    #[test]
    fn discretization_error_reconstruction() {
        let mut rng = CounterRng::new(17);
        for _ in 0..50 {
            let spec = random_spec(&mut rng, 3, 2);
            let profile = random_interior_profile(&mut rng, &spec, 1e-3);
            let rates = LearningRates::new(vec![0.05, 0.02]).unwrap();
            let err = discretization_error(&spec, &profile, &rates).unwrap();
            let next = eg_step(&spec, &profile, &rates).unwrap();
            let drift = market::replicator_drift(&spec, &profile).unwrap();
            let flat = profile.flatten();
            let next_flat = next.flatten();
            for i in 0..2 {
                let eta = rates.get(i);
                for k in 0..3 {
                    let reconstructed =
                        flat[i * 3 + k] + eta * drift[i][k] + eta * eta * err[i][k];
                    assert!(
                        (reconstructed - next_flat[i * 3 + k]).abs() < 1e-12,
                        "reconstruction off by {}",
                        (reconstructed - next_flat[i * 3 + k]).abs()
                    );
                }
            }
        }
    }

    #[test]
    fn discretization_error_vanishes_at_stable_point() {
        let spec = market_diag37(2.0);
        let theta_star = find_stable_point(&spec, 1e-13, 400_000).unwrap().theta_star;
        let rates = LearningRates::uniform(1, 0.1).unwrap();
        let err = discretization_error(&spec, &theta_star, &rates).unwrap();
        assert!(err[0].iter().all(|v| v.abs() < 1e-8), "{err:?}");
    }

    #[test]
    fn discretization_error_pointwise_bound_at_safe_rates() {
        // |e_i_k| <= e * sum_l theta_l (avg - g_l)^2 whenever the rate
        // satisfies the gradient smallness condition.
        let mut rng = CounterRng::new(23);
        let spec = market_diag37(2.0);
        let theta_star = find_stable_point(&spec, 1e-10, 400_000).unwrap().theta_star;
        let report = safe_learning_rate(&spec, &theta_star, 1.0).unwrap();
        let rates = LearningRates::uniform(1, report.eta_bound_grad).unwrap();
        let mut global = 0.0f64;
        let mut samples = Vec::new();
        for _ in 0..10_000 {
            let profile = random_interior_profile(&mut rng, &spec, 0.0);
            let flat = profile.flatten();
            let gp = market::grad_profile_raw(&spec, &flat);
            let avg = gp.average(0);
            let second_moment: f64 = (0..2)
                .map(|k| flat[k] * (avg - gp.row(0)[k]).powi(2))
                .sum();
            global = global.max(second_moment);
            samples.push(profile);
        }
        let cap = std::f64::consts::E * global;
        for profile in samples.iter().take(500) {
            let err = discretization_error(&spec, profile, &rates).unwrap();
            for v in &err[0] {
                assert!(v.abs() <= cap + 1e-9, "|e| = {} > {cap}", v.abs());
            }
        }
    }

    #[test]
    fn drift_zero_iff_fixed_point() {
        let mut rng = CounterRng::new(29);
        for _ in 0..25 {
            let spec = random_spec(&mut rng, 2, 2);
            let rates = LearningRates::uniform(2, 0.05).unwrap();
            // Interior stable point: drift ~ 0 and the step fixes it.
            let theta_star = find_stable_point(&spec, 1e-12, 400_000).unwrap().theta_star;
            let next = eg_step(&spec, &theta_star, &rates).unwrap();
            assert!(
                linalg::l1_distance(&next.flatten(), &theta_star.flatten()) < 1e-12
            );
            // Vertex profiles satisfy the fixed-point condition on their
            // (singleton) support: the step cannot move them.
            let vertex = ModelProfile::new(vec![
                SimplexPoint::vertex(2, 0),
                SimplexPoint::vertex(2, 1),
            ])
            .unwrap();
            let drift = market::replicator_drift(&spec, &vertex).unwrap();
            assert!(drift.iter().flatten().all(|v| *v == 0.0));
            let next = eg_step(&spec, &vertex, &rates).unwrap();
            assert_eq!(next.flatten(), vertex.flatten());
            // A random non-fixed interior point must move.
            let interior = random_interior_profile(&mut rng, &spec, 0.05);
            let drift_norm =
                market::drift_l1(&market::replicator_drift(&spec, &interior).unwrap());
            if drift_norm > 1e-6 {
                let next = eg_step(&spec, &interior, &rates).unwrap();
                assert!(
                    linalg::l1_distance(&next.flatten(), &interior.flatten()) > 1e-12
                );
            }
        }
    }

    #[test]
    fn face_restricted_fixed_points_are_fixed() {
        // Embed a two-coordinate stable point into a three-coordinate
        // market as a boundary face point: it satisfies the fixed-point
        // condition on its support, so drift vanishes and the step holds.
        let mut rng = CounterRng::new(37);
        for _ in 0..10 {
            let sub = random_spec(&mut rng, 2, 1);
            let face_star = find_stable_point(&sub, 1e-12, 400_000).unwrap().theta_star;
            // Full market: extend A by an independent third coordinate.
            let mut a = crate::linalg::Matrix::zeros(3, 3);
            for i in 0..2 {
                for j in 0..2 {
                    a.set(i, j, sub.a().at(i, j));
                }
            }
            a.set(2, 2, 1.0 + rng.next_uniform());
            let mut theta0 = sub.theta0().to_vec();
            theta0.push(0.0);
            let mut c = sub.c().to_vec();
            c.push(0.0);
            let spec =
                MarketSpec::new(sub.lambda().to_vec(), theta0, a, c, sub.sigma0_sq()).unwrap();
            let embedded = ModelProfile::new(vec![SimplexPoint::new(vec![
                face_star.agent(0).get(0),
                face_star.agent(0).get(1),
                0.0,
            ])
            .unwrap()])
            .unwrap();
            let drift = market::replicator_drift(&spec, &embedded).unwrap();
            assert!(market::drift_l1(&drift) < 1e-9);
            let rates = LearningRates::uniform(1, 0.01).unwrap();
            let next = eg_step(&spec, &embedded, &rates).unwrap();
            assert!(linalg::l1_distance(&next.flatten(), &embedded.flatten()) < 1e-11);
            assert_eq!(next.agent(0).get(2), 0.0);
        }
    }

    #[test]
    fn streaming_matches_collected_trajectory() {
        let spec = market_diag37(14.0);
        let initial = ModelProfile::new(vec![SimplexPoint::new(vec![0.2, 0.8]).unwrap()]).unwrap();
        let rates = LearningRates::uniform(1, 0.05).unwrap();
        let traj = simulate(&spec, &initial, &rates, 20).unwrap();
        let mut streamed = Vec::new();
        simulate_streamed(&spec, &initial, &rates, 20, |step, state, diag| {
            streamed.push((step, state.flatten(), diag.potential));
            Ok(())
        })
        .unwrap();
        assert_eq!(streamed.len(), traj.len());
        for (step, flat, phi) in &streamed {
            assert_eq!(*flat, traj.states[*step].flatten());
            assert_eq!(*phi, traj.diagnostics[*step].potential);
        }
    }

    #[test]
    fn independent_runs_parallelize() {
        let spec = market_diag37(14.0);
        let rates = LearningRates::uniform(1, 0.001).unwrap();
        let finals: Vec<f64> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..4)
                .map(|j| {
                    let spec = &spec;
                    let rates = &rates;
                    scope.spawn(move || {
                        let p0 = 0.1 + 0.2 * j as f64;
                        let start =
                            ModelProfile::new(vec![SimplexPoint::binary(p0).unwrap()]).unwrap();
                        simulate(spec, &start, rates, 200)
                            .unwrap()
                            .final_state()
                            .agent(0)
                            .get(0)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        // All runs head toward the shared fixed point.
        for p in finals {
            assert!((p - 0.7).abs() < 0.2);
        }
    }

    #[test]
    fn potential_descends_at_safe_rates() {
        let mut rng = CounterRng::new(31);
        for _ in 0..5 {
            let spec = random_spec(&mut rng, 2, 2);
            let theta_star = find_stable_point(&spec, 1e-10, 400_000).unwrap().theta_star;
            let report = safe_learning_rate(&spec, &theta_star, 1.0).unwrap();
            let rates = LearningRates::uniform(2, report.eta_star).unwrap();
            let initial = random_interior_profile(&mut rng, &spec, 0.05);
            let traj = simulate(&spec, &initial, &rates, 500).unwrap();
            for w in traj.diagnostics.windows(2) {
                assert!(w[1].potential <= w[0].potential + 1e-10);
            }
        }
    }
}
