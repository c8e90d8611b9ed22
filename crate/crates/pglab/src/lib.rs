//! Policy-gradient estimation lab.
//!
//! A small, self-contained library for studying Monte Carlo policy-gradient
//! estimators on analytic control problems where exact values, rewards, and
//! reward gradients are available in closed form:
//!
//! * [`nn`] — minimal differentiable approximators (linear / diagonal-linear /
//!   tanh MLP) with exact reverse-mode gradients and an Adam optimizer.
//! * [`policy`] — reparameterized Gaussian policies (sampling, score function,
//!   parameter-Jacobian products).
//! * [`envs`] — the analytic environments: an LQG regulator, two continuous
//!   bandits (Peaks / Holes), and Mountain Climbing.
//! * [`lqg`] — Riccati-form exact values, exact objective, and ground-truth
//!   gradients for the LQG task.
//! * [`returns`] — discounted returns, TD residuals, GAE, lambda-returns.
//! * [`estimators`] — the single-batch gradient estimators (likelihood-ratio,
//!   reward-gradient, full reparameterization, and variants).
//! * [`algorithms`] — practical PPO / reward-gradient training loops.
//! * [`analysis`] — bias/variance/MSE measurement with bootstrap CIs.
//! * [`config`] / [`commands`] — experiment configuration and the CLI entry
//!   points (also driven by the `pglab` binary).

pub mod algorithms;
pub mod analysis;
pub mod commands;
pub mod config;
pub mod envs;
pub mod error;
pub mod estimators;
pub mod lqg;
pub mod nn;
pub mod policy;
pub mod returns;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
