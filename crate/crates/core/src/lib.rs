//! Volatility-adjusted factor investing toolkit.
//!
//! The crate is `no_std` (with `alloc`) and contains every numerical piece:
//!
//! * [`filter`]: Butterworth (maximally flat) low-pass design and bilinear
//!   discretization.
//! * [`state_space`]: controller canonical realization and lag weights
//!   `C·A^(k-1)·B`.
//! * [`vol`]: MAXFLAT, EWMA, PWMA and rolling realized volatility.
//! * [`factors`]: winsorize / rank / composite scoring and volatility adjustment.
//! * [`market`]: point-in-time market panel and eligibility screens.
//! * [`synth`]: seeded synthetic panels with regime-switching variance.
//! * [`backtest`]: long-only monthly rebalance simulation with costs.
//! * [`metrics`]: total return, Sharpe, CAPM alpha/beta, drawdown.
//! * [`pipeline`]: glue that turns a panel plus a volatility method into a
//!   look-ahead-safe score stream.
//!
//! File formats, configuration and the command line live in the companion
//! `flatvol` crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod backtest;
pub mod error;
pub mod factors;
pub mod filter;
pub mod market;
pub mod metrics;
pub mod pipeline;
pub mod state_space;
pub mod synth;
pub mod vol;

pub use error::{Error, Result};

/// Calendar date used throughout the crate.
pub type Date = chrono::NaiveDate;
