//! Multi-agent performative prediction: equilibria, learning dynamics, and
//! the transition to chaos.
//!
//! Several agents fit linear predictors on the simplex while their deployed
//! models shift the outcome distribution they are all trying to predict.
//! This crate provides:
//!
//! - the location-scale market model and its exact losses and gradients
//!   ([`market`]);
//! - the convex potential, the performative stable point, optimality
//!   certificates, and conservative safe learning rates ([`equilibrium`]);
//! - discrete exponentiated-gradient dynamics and the continuous-time
//!   replicator limit with a fixed-step integrator ([`dynamics`]);
//! - the reduced one-dimensional map, period-3 certificates, carrying
//!   capacity search, Lyapunov exponents, and bifurcation scans ([`chaos`]);
//! - reproducible Gaussian sampling and stochastic-gradient dynamics
//!   ([`stochastic`]);
//! - config-file ingestion and CSV/report emission for the `perfdyn`
//!   command-line tool ([`config`], [`output`]).

// `!(x > 0.0)` is used throughout to reject NaN along with the sign check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chaos;
pub mod config;
pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod linalg;
pub mod market;
pub mod output;
pub mod rng;
pub mod stochastic;

#[doc(hidden)]
pub mod testutil;

pub use error::{Error, Result};
