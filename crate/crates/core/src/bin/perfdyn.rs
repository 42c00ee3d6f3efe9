//! Command-line surface for market experiments.
//!
//! Every command reads one TOML config (market keys at the top level plus
//! a per-command section), writes its CSV to `--out` (or stdout), and
//! prints a short key-value report unless `--quiet`. Outputs are
//! deterministic given the config and seed. Exit codes: 0 success
//! (including a failed-but-well-formed certificate), 1 validation error,
//! 2 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use perfdyn_core::chaos;
use perfdyn_core::config::{broadcast_eta, broadcast_initial, ExperimentConfig};
use perfdyn_core::dynamics::{self, LearningRates, Trajectory};
use perfdyn_core::equilibrium;
use perfdyn_core::error::{Error, Result};
use perfdyn_core::market::ModelProfile;
use perfdyn_core::output;
use perfdyn_core::stochastic::{self, BatchMode};

#[derive(Parser)]
#[command(name = "perfdyn", version, about = "Multi-agent performative prediction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the CSV payload here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the seed of stochastic commands.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress the human-readable report.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the performative stable point and its certificates.
    StablePoint,
    /// Run the exact exponentiated-gradient dynamics.
    Simulate,
    /// Integrate the continuous-time dynamics.
    Ode,
    /// Reduced-map analysis: certificate, Lyapunov exponent, carrying capacity.
    Chaos,
    /// Orbit samples and Lyapunov diagnostics over an influence grid.
    Bifurcation,
    /// Run the stochastic-gradient dynamics.
    Stochastic,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config <path> is required".into()))?;
    let config = ExperimentConfig::load(config_path)?;
    match cli.command {
        Command::StablePoint => cmd_stable_point(cli, &config),
        Command::Simulate => cmd_simulate(cli, &config),
        Command::Ode => cmd_ode(cli, &config),
        Command::Chaos => cmd_chaos(cli, &config),
        Command::Bifurcation => cmd_bifurcation(cli, &config),
        Command::Stochastic => cmd_stochastic(cli, &config),
    }
}

fn emit(cli: &Cli, csv: &str, report: &str) -> Result<()> {
    match &cli.out {
        Some(path) => {
            std::fs::write(path, csv)?;
            if !cli.quiet {
                print!("{report}");
            }
        }
        None => {
            print!("{csv}");
            if !cli.quiet {
                eprint!("{report}");
            }
        }
    }
    Ok(())
}

fn profile_from_rows(
    spec: &perfdyn_core::market::MarketSpec,
    rows: &[Vec<f64>],
) -> Result<ModelProfile> {
    let rows = broadcast_initial(rows, spec.n())?;
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    ModelProfile::from_flat(spec.n(), spec.d(), &flat)
}

fn rates_from(spec: &perfdyn_core::market::MarketSpec, eta: &[f64]) -> Result<LearningRates> {
    LearningRates::new(broadcast_eta(eta, spec.n())?)
}

fn warn_boundary(cli: &Cli, traj: &Trajectory) {
    if traj.boundary_start && !cli.quiet {
        eprintln!("warning: initial state touches the simplex boundary; zero coordinates stay zero");
    }
}

fn cmd_stable_point(cli: &Cli, config: &ExperimentConfig) -> Result<()> {
    let spec = config.spec()?;
    let section = config.stable_point.clone().unwrap_or_default();
    let result = equilibrium::find_stable_point(&spec, section.tol, section.max_iters)?;
    let (stable, _) = equilibrium::check_stable(&spec, &result.theta_star, section.tol)?;
    let optimal = equilibrium::check_optimal(&spec, &result.theta_star, section.tol)?;
    let safe = equilibrium::safe_learning_rate(&spec, &result.theta_star, section.r_eta)?;
    let mut report = output::stable_point_report(&result, Some(&safe));
    report.push_str(&format!("stable = {stable}\noptimal = {optimal}\n"));
    let csv = output::stable_point_csv(&result);
    emit(cli, &csv, &report)
}

fn cmd_simulate(cli: &Cli, config: &ExperimentConfig) -> Result<()> {
    let spec = config.spec()?;
    let section = config.require_simulate()?;
    let initial = profile_from_rows(&spec, &section.initial)?;
    let rates = rates_from(&spec, &section.eta)?;
    let traj = dynamics::simulate(&spec, &initial, &rates, section.steps)?;
    warn_boundary(cli, &traj);
    let csv = output::trajectory_csv(&traj, None)?;
    let report = format!(
        "steps = {}\nfinal_potential = {}\nfinal_drift_l1 = {}\n",
        section.steps,
        output::fmt_f64(traj.diagnostics.last().unwrap().potential),
        output::fmt_f64(traj.diagnostics.last().unwrap().drift_l1),
    );
    emit(cli, &csv, &report)
}

fn cmd_ode(cli: &Cli, config: &ExperimentConfig) -> Result<()> {
    let spec = config.spec()?;
    let section = config.require_ode()?;
    let initial = profile_from_rows(&spec, &section.initial)?;
    let rates = rates_from(&spec, &section.eta)?;
    let traj = dynamics::integrate_ode(&spec, &initial, &rates, section.t_end, section.dt)?;
    warn_boundary(cli, &traj);
    let csv = output::trajectory_csv(&traj, None)?;
    let report = format!(
        "t_end = {}\ndt = {}\nfinal_potential = {}\n",
        output::fmt_f64(section.t_end),
        output::fmt_f64(section.dt),
        output::fmt_f64(traj.diagnostics.last().unwrap().potential),
    );
    emit(cli, &csv, &report)
}

fn cmd_chaos(cli: &Cli, config: &ExperimentConfig) -> Result<()> {
    let spec = config.spec()?;
    let section = config.require_chaos()?;
    let mut report = String::new();
    let mut csv = String::from("L,alpha,beta,certified\n");

    if let Some(l) = section.l {
        let map = chaos::reduced_map_params(&spec, section.eta, l)?;
        // The certificate needs steepness above 1; below that it is not
        // attempted and only the Lyapunov diagnostic is reported.
        let outcome = if map.steepness() > 1.0 {
            Some(chaos::period3_certificate(&map)?)
        } else {
            None
        };
        let lyapunov = chaos::lyapunov_exponent(&map, section.x0, section.burn_in, section.iters)?;
        report.push_str(&output::certificate_report(&map, outcome.as_ref(), Some(lyapunov)));
        let certified = outcome.as_ref().map(|o| o.is_certified()).unwrap_or(false);
        csv.push_str(&format!(
            "{},{},{},{}\n",
            output::fmt_f64(l),
            output::fmt_f64(map.steepness()),
            output::fmt_f64(map.fixed_point()),
            certified,
        ));
    }

    if let (Some(l_min), Some(l_max)) = (section.l_min, section.l_max) {
        let result = chaos::carrying_capacity(&spec, section.eta, l_min, l_max, section.cap_tol)?;
        report.push_str(&output::carrying_capacity_report(&result));
        let map = chaos::reduced_map_params(&spec, section.eta, result.influence)?;
        csv.push_str(&format!(
            "{},{},{},true\n",
            output::fmt_f64(result.influence),
            output::fmt_f64(map.steepness()),
            output::fmt_f64(map.fixed_point()),
        ));
    }

    if report.is_empty() {
        return Err(Error::Config(
            "[chaos] needs `l` for point analysis or `l_min`/`l_max` for a capacity search".into(),
        ));
    }
    emit(cli, &csv, &report)
}

fn cmd_bifurcation(cli: &Cli, config: &ExperimentConfig) -> Result<()> {
    let spec = config.spec()?;
    let section = config.require_bifurcation()?;
    if section.points < 2 {
        return Err(Error::Config("bifurcation grid needs at least 2 points".into()));
    }
    let grid: Vec<f64> = (0..section.points)
        .map(|j| {
            section.l_min
                + (section.l_max - section.l_min) * j as f64 / (section.points - 1) as f64
        })
        .collect();
    let rows = chaos::bifurcation_scan(
        &spec,
        section.eta,
        &grid,
        section.x0,
        section.burn_in,
        section.samples,
    )?;
    let csv = output::bifurcation_csv(&rows);
    let report = format!(
        "levels = {}\nsamples_per_level = {}\n",
        section.points, section.samples
    );
    emit(cli, &csv, &report)
}

fn cmd_stochastic(cli: &Cli, config: &ExperimentConfig) -> Result<()> {
    let spec = config.spec()?;
    let section = config.require_stochastic()?;
    let initial = profile_from_rows(&spec, &section.initial)?;
    let rates = rates_from(&spec, &section.eta)?;
    let seed = cli.seed.unwrap_or(section.seed);
    let mode = if section.shared_batch {
        BatchMode::Shared
    } else {
        BatchMode::Independent
    };
    let traj = stochastic::stochastic_simulate(
        &spec,
        &initial,
        &rates,
        section.steps,
        section.m,
        seed,
        mode,
    )?;
    warn_boundary(cli, &traj);
    let csv = output::trajectory_csv(&traj, Some((seed, section.m)))?;
    let report = format!(
        "steps = {}\nm = {}\nseed = {seed}\nfinal_potential = {}\n",
        section.steps,
        section.m,
        output::fmt_f64(traj.diagnostics.last().unwrap().potential),
    );
    emit(cli, &csv, &report)
}
