use crate::{backtest, factors, filter, market, metrics, state_space, synth, vol};

/// Crate-wide error. Each variant carries the module that failed; the inner
/// error names the rule.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("filter_design: {0}")]
    Filter(#[from] filter::FilterError),
    #[error("state_space: {0}")]
    StateSpace(#[from] state_space::StateSpaceError),
    #[error("vol_estimators: {0}")]
    Vol(#[from] vol::VolError),
    #[error("factor_pipeline: {0}")]
    Factor(#[from] factors::FactorError),
    #[error("market_data: {0}")]
    Market(#[from] market::MarketError),
    #[error("market_data: {0}")]
    Synth(#[from] synth::SynthError),
    #[error("backtest_engine: {0}")]
    Backtest(#[from] backtest::BacktestError),
    #[error("performance_metrics: {0}")]
    Metrics(#[from] metrics::MetricsError),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
