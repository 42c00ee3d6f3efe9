//! TOML config ingestion for markets and experiments.
//!
//! A market file carries the keys `d, n, lambda, theta0, A, c, sigma0_sq`
//! at the top level (`A` row-major, `sigma0_sq` defaulting to 1). An
//! experiment file is a market file plus optional per-command sections:
//! `[stable_point]`, `[simulate]`, `[ode]`, `[chaos]`, `[bifurcation]`,
//! `[stochastic]`. Unknown keys are rejected with the offending key named.
//!
//! Serialization uses the shortest decimal representation that parses back
//! to the identical double, so write/read round-trips are bit-stable.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::market::MarketSpec;

fn default_sigma0_sq() -> f64 {
    1.0
}

/// Market keys of a config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketConfig {
    pub d: usize,
    pub n: usize,
    pub lambda: Vec<f64>,
    pub theta0: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    pub c: Vec<f64>,
    #[serde(default = "default_sigma0_sq")]
    pub sigma0_sq: f64,
}

impl MarketConfig {
    pub fn from_spec(spec: &MarketSpec) -> Self {
        MarketConfig {
            d: spec.d(),
            n: spec.n(),
            lambda: spec.lambda().to_vec(),
            theta0: spec.theta0().to_vec(),
            a: spec.a().data().to_vec(),
            c: spec.c().to_vec(),
            sigma0_sq: spec.sigma0_sq(),
        }
    }

    pub fn to_spec(&self) -> Result<MarketSpec> {
        if self.lambda.len() != self.n {
            return Err(Error::Config(format!(
                "lambda has {} entries but n = {}",
                self.lambda.len(),
                self.n
            )));
        }
        if self.a.len() != self.d * self.d {
            return Err(Error::Config(format!(
                "A has {} entries but d*d = {}",
                self.a.len(),
                self.d * self.d
            )));
        }
        let a = Matrix::from_row_major(self.d, self.d, self.a.clone())?;
        MarketSpec::new(
            self.lambda.clone(),
            self.theta0.clone(),
            a,
            self.c.clone(),
            self.sigma0_sq,
        )
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("market config serializes")
    }
}

fn default_tol() -> f64 {
    1e-10
}

fn default_max_iters() -> usize {
    400_000
}

fn default_r_eta() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StablePointSection {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_r_eta")]
    pub r_eta: f64,
}

impl Default for StablePointSection {
    fn default() -> Self {
        StablePointSection {
            tol: default_tol(),
            max_iters: default_max_iters(),
            r_eta: default_r_eta(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    /// One row per agent; a single row is replicated to all agents.
    pub initial: Vec<Vec<f64>>,
    /// One rate per agent; a single entry is replicated.
    pub eta: Vec<f64>,
    pub steps: usize,
}

fn default_dt() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdeSection {
    pub initial: Vec<Vec<f64>>,
    pub eta: Vec<f64>,
    pub t_end: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_x0() -> f64 {
    0.2
}

fn default_burn_in() -> usize {
    1000
}

fn default_lyapunov_iters() -> usize {
    10_000
}

fn default_cap_tol() -> f64 {
    0.25
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChaosSection {
    pub eta: f64,
    /// Collective influence for point analysis (map parameters, certificate,
    /// Lyapunov exponent).
    pub l: Option<f64>,
    /// Search range for the carrying capacity; both ends must be present.
    pub l_min: Option<f64>,
    pub l_max: Option<f64>,
    #[serde(default = "default_cap_tol")]
    pub cap_tol: f64,
    #[serde(default = "default_x0")]
    pub x0: f64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_lyapunov_iters")]
    pub iters: usize,
}

fn default_grid_points() -> usize {
    201
}

fn default_samples() -> usize {
    100
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BifurcationSection {
    pub eta: f64,
    pub l_min: f64,
    pub l_max: f64,
    #[serde(default = "default_grid_points")]
    pub points: usize,
    #[serde(default = "default_x0")]
    pub x0: f64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StochasticSection {
    pub initial: Vec<Vec<f64>>,
    pub eta: Vec<f64>,
    pub steps: usize,
    pub m: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub shared_batch: bool,
}

/// A parsed experiment file: the market plus whichever command sections
/// are present.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub market: MarketConfig,
    pub stable_point: Option<StablePointSection>,
    pub simulate: Option<SimulateSection>,
    pub ode: Option<OdeSection>,
    pub chaos: Option<ChaosSection>,
    pub bifurcation: Option<BifurcationSection>,
    pub stochastic: Option<StochasticSection>,
}

fn take_section<T: serde::de::DeserializeOwned>(
    table: &mut toml::Table,
    key: &str,
) -> Result<Option<T>> {
    match table.remove(key) {
        None => Ok(None),
        Some(value) => value
            .try_into()
            .map(Some)
            .map_err(|e| Error::Config(format!("[{key}]: {e}"))),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let stable_point = take_section(&mut table, "stable_point")?;
        let simulate = take_section(&mut table, "simulate")?;
        let ode = take_section(&mut table, "ode")?;
        let chaos = take_section(&mut table, "chaos")?;
        let bifurcation = take_section(&mut table, "bifurcation")?;
        let stochastic = take_section(&mut table, "stochastic")?;
        // Remaining top-level keys must form the market config; unknown
        // keys surface here by name.
        let market: MarketConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(ExperimentConfig {
            market,
            stable_point,
            simulate,
            ode,
            chaos,
            bifurcation,
            stochastic,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        ExperimentConfig::parse(&text)
    }

    pub fn spec(&self) -> Result<MarketSpec> {
        self.market.to_spec()
    }

    pub fn require_simulate(&self) -> Result<&SimulateSection> {
        self.simulate
            .as_ref()
            .ok_or_else(|| Error::Config("missing [simulate] section".into()))
    }

    pub fn require_ode(&self) -> Result<&OdeSection> {
        self.ode
            .as_ref()
            .ok_or_else(|| Error::Config("missing [ode] section".into()))
    }

    pub fn require_chaos(&self) -> Result<&ChaosSection> {
        self.chaos
            .as_ref()
            .ok_or_else(|| Error::Config("missing [chaos] section".into()))
    }

    pub fn require_bifurcation(&self) -> Result<&BifurcationSection> {
        self.bifurcation
            .as_ref()
            .ok_or_else(|| Error::Config("missing [bifurcation] section".into()))
    }

    pub fn require_stochastic(&self) -> Result<&StochasticSection> {
        self.stochastic
            .as_ref()
            .ok_or_else(|| Error::Config("missing [stochastic] section".into()))
    }
}

/// Expands a possibly single-row initial profile to `n` agent rows.
pub fn broadcast_initial(rows: &[Vec<f64>], n: usize) -> Result<Vec<Vec<f64>>> {
    if rows.len() == n {
        Ok(rows.to_vec())
    } else if rows.len() == 1 {
        Ok(vec![rows[0].clone(); n])
    } else {
        Err(Error::Config(format!(
            "initial has {} rows but the market has {} agents",
            rows.len(),
            n
        )))
    }
}

/// Expands a possibly scalar rate list to `n` per-agent rates.
pub fn broadcast_eta(eta: &[f64], n: usize) -> Result<Vec<f64>> {
    if eta.len() == n {
        Ok(eta.to_vec())
    } else if eta.len() == 1 {
        Ok(vec![eta[0]; n])
    } else {
        Err(Error::Config(format!(
            "eta has {} entries but the market has {} agents",
            eta.len(),
            n
        )))
    }
}
