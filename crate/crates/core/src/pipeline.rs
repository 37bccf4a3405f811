//! From panel and method to score stream and backtest.
//!
//! Volatility is estimated once per ticker over its full price history. At a
//! rebalance on `d` the signal date is the previous trading day `p`: factor
//! values come from the latest factor date on or before `p`, and σ is the
//! forecast for the first date after `p`, which only uses returns through `p`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::backtest::{run_backtest, BacktestResult, PortfolioSpec, ScoreStream};
use crate::factors::{composite_score, no_adjust, vol_adjust, FactorPanel, ScoreVector, ScoringOptions};
use crate::filter::FilterSpec;
use crate::market::{month_ends, MarketPanel};
use crate::state_space::{design_weights, Truncation, WeightMode};
use crate::vol::{
    demean_log_returns, pwma_lag_weights, Demean, Estimator, VolError, VolMethod, VolOptions, VolSeries,
    DEFAULT_EWMA_LAMBDA, DEFAULT_EWMA_SEED_WINDOW, DEFAULT_PWMA_ALPHA, DEFAULT_PWMA_LAGS,
};
use crate::Date;

/// Every knob that turns a [`VolMethod`] into an [`Estimator`].
#[derive(Debug, Clone, PartialEq)]
pub struct VolSettings {
    pub filter: FilterSpec,
    pub weight_mode: WeightMode,
    pub truncation: Truncation,
    pub ewma_lambda: f64,
    pub ewma_seed_window: usize,
    pub pwma_alpha: f64,
    pub pwma_lags: usize,
    pub options: VolOptions,
    pub demean: Demean,
}

impl Default for VolSettings {
    fn default() -> Self {
        Self {
            filter: FilterSpec::default(),
            weight_mode: WeightMode::default(),
            truncation: Truncation::default(),
            ewma_lambda: DEFAULT_EWMA_LAMBDA,
            ewma_seed_window: DEFAULT_EWMA_SEED_WINDOW,
            pwma_alpha: DEFAULT_PWMA_ALPHA,
            pwma_lags: DEFAULT_PWMA_LAGS,
            options: VolOptions::default(),
            demean: Demean::default(),
        }
    }
}

impl VolSettings {
    pub fn estimator(&self, method: VolMethod) -> crate::Result<Estimator> {
        Ok(match method {
            VolMethod::Maxflat => {
                Estimator::Weighted(design_weights(&self.filter, self.weight_mode, &self.truncation)?)
            }
            VolMethod::Pwma => Estimator::Weighted(pwma_lag_weights(self.pwma_alpha, self.pwma_lags)?),
            VolMethod::Ewma => Estimator::Ewma {
                lambda: self.ewma_lambda,
                seed_window: self.ewma_seed_window,
            },
            VolMethod::Rolling250 => Estimator::Rolling(250),
            VolMethod::Rolling500 => Estimator::Rolling(500),
            VolMethod::NoVol => Estimator::Constant,
        })
    }

    /// Return observations needed before `estimator` produces a value.
    pub fn warm_up(&self, estimator: &Estimator) -> usize {
        estimator.required_history().max(self.options.min_history)
    }
}

/// Volatility series per ticker. Tickers whose history is too short are
/// left out; other errors abort.
pub fn panel_vols(
    panel: &MarketPanel,
    estimator: &Estimator,
    settings: &VolSettings,
) -> crate::Result<BTreeMap<String, VolSeries>> {
    let last = match panel.calendar().last() {
        Some(d) => *d,
        None => return Ok(BTreeMap::new()),
    };
    let mut out = BTreeMap::new();
    for ticker in panel.tickers() {
        let (dates, prices) = panel.price_history(ticker, last);
        if prices.len() < 2 {
            continue;
        }
        let returns = demean_log_returns(ticker, &dates, &prices, settings.demean)?;
        match estimator.estimate(&returns, &settings.options) {
            Ok(v) => {
                out.insert(ticker.into(), v);
            }
            Err(VolError::InsufficientHistory { .. }) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

/// Adjusted scores built from data available at the close of `signal`, or
/// `None` when no factor date precedes it. Without `vols` the raw composite
/// is used as the adjusted score.
pub fn score_vector(
    factors: &FactorPanel,
    signal: Date,
    vols: Option<(&BTreeMap<String, VolSeries>, VolMethod)>,
    scoring: &ScoringOptions,
) -> crate::Result<Option<ScoreVector>> {
    let Some(factor_date) = factors.latest_at_or_before(signal) else {
        return Ok(None);
    };
    let composite = composite_score(factors, factor_date, scoring)?;
    Ok(Some(match vols {
        None => no_adjust(&composite),
        Some((series, method)) => {
            let sigma: BTreeMap<String, f64> = series
                .iter()
                .filter_map(|(t, v)| v.forecast_after(signal).map(|s| (t.clone(), s)))
                .collect();
            vol_adjust(&composite, &sigma, method)
        }
    }))
}

/// Score vectors for each month end of `dates`, each built from the previous
/// trading day.
pub fn score_stream(
    panel: &MarketPanel,
    factors: &FactorPanel,
    dates: &[Date],
    vols: Option<(&BTreeMap<String, VolSeries>, VolMethod)>,
    scoring: &ScoringOptions,
) -> crate::Result<ScoreStream> {
    let mut stream = ScoreStream::new();
    for rebalance in month_ends(dates) {
        let Some(signal) = panel.previous_date(rebalance) else {
            continue;
        };
        if let Some(scores) = score_vector(factors, signal, vols, scoring)? {
            stream.insert(rebalance, scores);
        }
    }
    Ok(stream)
}

/// Output of one method's end-to-end run.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodRun {
    pub method: VolMethod,
    pub scores: ScoreStream,
    pub result: BacktestResult,
}

/// Backtest dates for `spec` on this panel.
pub fn backtest_dates(panel: &MarketPanel, spec: &PortfolioSpec) -> Vec<Date> {
    panel
        .calendar()
        .iter()
        .copied()
        .filter(|d| spec.start.is_none_or(|s| *d >= s) && spec.end.is_none_or(|e| *d <= e))
        .collect()
}

/// Estimates volatility with `estimator`, scores, and backtests.
pub fn run_with_estimator(
    panel: &MarketPanel,
    factors: &FactorPanel,
    method: VolMethod,
    estimator: &Estimator,
    settings: &VolSettings,
    scoring: &ScoringOptions,
    spec: &PortfolioSpec,
) -> crate::Result<MethodRun> {
    let dates = backtest_dates(panel, spec);
    let scores = if method == VolMethod::NoVol {
        score_stream(panel, factors, &dates, None, scoring)?
    } else {
        let vols = panel_vols(panel, estimator, settings)?;
        score_stream(panel, factors, &dates, Some((&vols, method)), scoring)?
    };
    let result = run_backtest(panel, &scores, spec)?;
    Ok(MethodRun { method, scores, result })
}

pub fn run_method(
    panel: &MarketPanel,
    factors: &FactorPanel,
    method: VolMethod,
    settings: &VolSettings,
    scoring: &ScoringOptions,
    spec: &PortfolioSpec,
) -> crate::Result<MethodRun> {
    let estimator = settings.estimator(method)?;
    run_with_estimator(panel, factors, method, &estimator, settings, scoring, spec)
}

/// First date on which every method in `methods` has a forecast, so that all
/// runs of a comparison share a start date.
pub fn common_start(panel: &MarketPanel, methods: &[VolMethod], settings: &VolSettings) -> crate::Result<Option<Date>> {
    let mut warm_up = 0;
    for m in methods {
        let estimator = settings.estimator(*m)?;
        if *m != VolMethod::NoVol {
            warm_up = warm_up.max(settings.warm_up(&estimator));
        }
    }
    // Prices at index 0..=warm_up give warm_up returns; the first forecast
    // is dated one price later.
    Ok(panel.calendar().get(warm_up + 1).copied())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synth_panel, SynthConfig};
    use alloc::vec;

    fn small() -> crate::synth::SynthPanel {
        synth_panel(&SynthConfig {
            n_tickers: 30,
            n_dates: 400,
            seed: 11,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn every_method_builds_an_estimator() {
        let s = VolSettings::default();
        for m in VolMethod::ALL {
            let e = s.estimator(m).unwrap();
            match m {
                VolMethod::Maxflat => assert_eq!(e.required_history(), 750),
                VolMethod::Pwma => assert_eq!(e.required_history(), 750),
                VolMethod::Rolling500 => assert_eq!(e.required_history(), 500),
                VolMethod::NoVol => assert_eq!(e, Estimator::Constant),
                _ => {}
            }
        }
    }

    #[test]
    fn scores_only_use_prior_data() {
        let p = small();
        let settings = VolSettings {
            options: VolOptions {
                min_history: 60,
                ..VolOptions::default()
            },
            ..VolSettings::default()
        };
        let vols = panel_vols(&p.market, &Estimator::Rolling(60), &settings).unwrap();
        let stream = score_stream(
            &p.market,
            &p.factors,
            p.market.calendar(),
            Some((&vols, VolMethod::Rolling250)),
            &ScoringOptions::default(),
        )
        .unwrap();
        assert!(!stream.is_empty());
        for (rebalance, v) in &stream {
            assert!(v.as_of < *rebalance);
            assert!(v.as_of <= p.market.previous_date(*rebalance).unwrap());
        }
    }

    #[test]
    fn common_start_covers_the_longest_warm_up() {
        let p = small();
        let settings = VolSettings {
            options: VolOptions {
                min_history: 10,
                ..VolOptions::default()
            },
            ..VolSettings::default()
        };
        let start = common_start(&p.market, &[VolMethod::Ewma, VolMethod::NoVol], &settings).unwrap();
        assert_eq!(start, Some(p.market.calendar()[31]));
        let none = common_start(&p.market, &[VolMethod::Rolling500], &settings).unwrap();
        assert_eq!(none, None);
        let _ = vec![0];
    }
}
