//! CSV and flat key-value report emission.
//!
//! Floating values are printed with 17 significant digits so every file
//! parses back to the identical doubles; rerunning a command reproduces
//! its outputs byte for byte.

use std::fmt::Write as _;

use crate::chaos::{BifurcationRow, CarryingCapacity, Period3Outcome, ReducedMap};
use crate::dynamics::Trajectory;
use crate::equilibrium::{SafeRateReport, StablePointResult};
use crate::error::{Error, Result};

/// 17 significant digits: enough to round-trip any finite double.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Trajectory CSV with one row per (t, agent, coord). The `extra` pair
/// appends the `seed, m` columns of stochastic runs.
pub fn trajectory_csv(traj: &Trajectory, extra: Option<(u64, usize)>) -> Result<String> {
    if traj.states_truncated {
        return Err(Error::Numerical {
            context: "trajectory_csv",
            detail: "state history was truncated; rerun with fewer steps to export states".into(),
        });
    }
    let mut out = String::new();
    out.push_str("t,agent,coord,theta,phi,xi_l1,loss_agent,loss_total");
    if extra.is_some() {
        out.push_str(",seed,m");
    }
    out.push('\n');
    for (step, (state, diag)) in traj.states.iter().zip(&traj.diagnostics).enumerate() {
        let t_label = if traj.step_dt == 1.0 {
            step.to_string()
        } else {
            fmt_f64(step as f64 * traj.step_dt)
        };
        for agent in 0..state.n_agents() {
            for coord in 0..state.dim() {
                write!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    t_label,
                    agent,
                    coord,
                    fmt_f64(state.agent(agent).get(coord)),
                    fmt_f64(diag.potential),
                    fmt_f64(diag.drift_l1),
                    fmt_f64(diag.agent_losses[agent]),
                    fmt_f64(diag.total_loss),
                )
                .expect("string write");
                if let Some((seed, m)) = extra {
                    write!(out, ",{seed},{m}").expect("string write");
                }
                out.push('\n');
            }
        }
    }
    Ok(out)
}

/// Stable point as `agent,coord,value` rows.
pub fn stable_point_csv(result: &StablePointResult) -> String {
    let mut out = String::from("agent,coord,value\n");
    for (i, model) in result.theta_star.iter().enumerate() {
        for (k, &v) in model.coords().iter().enumerate() {
            writeln!(out, "{i},{k},{}", fmt_f64(v)).expect("string write");
        }
    }
    out
}

/// Flat key-value report for a stable point and an optional rate budget.
pub fn stable_point_report(result: &StablePointResult, safe: Option<&SafeRateReport>) -> String {
    let mut out = String::new();
    writeln!(out, "kkt_residual = {}", fmt_f64(result.kkt_residual)).unwrap();
    writeln!(out, "proper = {}", result.proper).unwrap();
    writeln!(out, "potential = {}", fmt_f64(result.potential_value)).unwrap();
    writeln!(out, "iterations = {}", result.iterations).unwrap();
    for (i, support) in result.supports.iter().enumerate() {
        let joined: Vec<String> = support.iter().map(|k| k.to_string()).collect();
        writeln!(out, "support.{i} = {}", joined.join(",")).unwrap();
    }
    for (i, model) in result.theta_star.iter().enumerate() {
        for (k, &v) in model.coords().iter().enumerate() {
            writeln!(out, "theta.{i}.{k} = {}", fmt_f64(v)).unwrap();
        }
    }
    if let Some(report) = safe {
        writeln!(out, "safe_rate.c1 = {}", fmt_f64(report.c1)).unwrap();
        writeln!(out, "safe_rate.c2 = {}", fmt_f64(report.c2)).unwrap();
        writeln!(out, "safe_rate.c3 = {}", fmt_f64(report.c3)).unwrap();
        writeln!(out, "safe_rate.c4 = {}", fmt_f64(report.c4)).unwrap();
        writeln!(out, "safe_rate.eta_star = {}", fmt_f64(report.eta_star)).unwrap();
        writeln!(out, "safe_rate.r_eta = {}", fmt_f64(report.r_eta)).unwrap();
        writeln!(out, "safe_rate.max_grad = {}", fmt_f64(report.max_grad)).unwrap();
        writeln!(
            out,
            "safe_rate.drift_l1_bound = {}",
            fmt_f64(report.drift_l1_bound)
        )
        .unwrap();
        writeln!(
            out,
            "safe_rate.eta_bound_grad = {}",
            fmt_f64(report.eta_bound_grad)
        )
        .unwrap();
        writeln!(
            out,
            "safe_rate.eta_bound_drift = {}",
            fmt_f64(report.eta_bound_drift)
        )
        .unwrap();
        writeln!(
            out,
            "safe_rate.eta_bound_ratio = {}",
            fmt_f64(report.eta_bound_ratio)
        )
        .unwrap();
    }
    out
}

/// Bifurcation CSV: `L,alpha,beta,sample_index,x,lyapunov`.
pub fn bifurcation_csv(rows: &[BifurcationRow]) -> String {
    let mut out = String::from("L,alpha,beta,sample_index,x,lyapunov\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_f64(r.influence),
            fmt_f64(r.alpha),
            fmt_f64(r.beta),
            r.sample_index,
            fmt_f64(r.x),
            fmt_f64(r.lyapunov),
        )
        .expect("string write");
    }
    out
}

/// Flat key-value report for the certificate outcome at one map.
pub fn certificate_report(
    map: &ReducedMap,
    outcome: Option<&Period3Outcome>,
    lyapunov: Option<f64>,
) -> String {
    let mut out = String::new();
    writeln!(out, "alpha = {}", fmt_f64(map.steepness())).unwrap();
    writeln!(out, "beta = {}", fmt_f64(map.fixed_point())).unwrap();
    if let Some(origin) = map.origin() {
        writeln!(out, "eta = {}", fmt_f64(origin.eta)).unwrap();
        writeln!(out, "L = {}", fmt_f64(origin.influence)).unwrap();
        writeln!(out, "beta_inf = {}", fmt_f64(origin.beta_inf)).unwrap();
        writeln!(out, "delta = {}", fmt_f64(origin.delta)).unwrap();
    }
    match outcome {
        Some(Period3Outcome::Certified(cert)) => {
            writeln!(out, "certified = true").unwrap();
            writeln!(out, "x0 = {}", fmt_f64(cert.x0)).unwrap();
            writeln!(out, "x1 = {}", fmt_f64(cert.x1)).unwrap();
            writeln!(out, "x2 = {}", fmt_f64(cert.x2)).unwrap();
            writeln!(out, "x3 = {}", fmt_f64(cert.x3)).unwrap();
            writeln!(out, "margin.low = {}", fmt_f64(cert.margins.0)).unwrap();
            writeln!(out, "margin.high = {}", fmt_f64(cert.margins.1)).unwrap();
            writeln!(out, "margin.residual = {}", fmt_f64(cert.margins.2)).unwrap();
        }
        Some(Period3Outcome::Failed(reason)) => {
            writeln!(out, "certified = false").unwrap();
            writeln!(out, "failure = {reason}").unwrap();
        }
        None => {
            writeln!(out, "certified = not_attempted").unwrap();
        }
    }
    if let Some(exp) = lyapunov {
        writeln!(out, "lyapunov = {}", fmt_f64(exp)).unwrap();
    }
    out
}

/// Flat key-value report for a carrying-capacity search.
pub fn carrying_capacity_report(result: &CarryingCapacity) -> String {
    let mut out = String::new();
    writeln!(out, "certified_influence = {}", fmt_f64(result.influence)).unwrap();
    writeln!(out, "permuted = {}", result.permuted).unwrap();
    writeln!(out, "beta_inf = {}", fmt_f64(result.beta_inf)).unwrap();
    writeln!(out, "certified_above = {}", result.certified_above).unwrap();
    writeln!(out, "x0 = {}", fmt_f64(result.certificate.x0)).unwrap();
    writeln!(out, "x1 = {}", fmt_f64(result.certificate.x1)).unwrap();
    writeln!(out, "x2 = {}", fmt_f64(result.certificate.x2)).unwrap();
    writeln!(out, "x3 = {}", fmt_f64(result.certificate.x3)).unwrap();
    out
}
