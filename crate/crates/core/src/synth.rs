//! Seeded synthetic market and factor panels.
//!
//! Log returns are `drift + β·m_t + σ_{i,t}·ε_{i,t}` where `m_t` is a common
//! market shock and `σ_{i,t}` switches between a calm and a turbulent level
//! through a per-ticker two-state Markov chain. The single factor `SIGNAL`
//! is published the trading day before each month end and is built from the
//! following month's realized return, so its rank correlation with that
//! return is controlled by `information_coefficient`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use chrono::{Datelike, Days, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::factors::{Category, Direction, FactorDef, FactorPanel};
use crate::market::{month_ends, Bar, MarketPanel, PanelBuilder};
use crate::Date;

/// Name of the synthetic factor.
pub const SIGNAL: &str = "SIGNAL";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("degenerate synthetic panel parameter: {0}")]
    Degenerate(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SynthConfig {
    pub seed: u64,
    pub n_tickers: usize,
    /// Number of business days.
    pub n_dates: usize,
    pub start: Date,
    /// Per-day idiosyncratic volatility in the calm regime.
    pub calm_vol: f64,
    /// Turbulent-to-calm variance ratio.
    pub regime_variance_ratio: f64,
    /// Daily probability of switching regime.
    pub switch_prob: f64,
    /// Per-day volatility of the common market shock.
    pub market_vol: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    /// Per-day log drift shared by all tickers.
    pub drift: f64,
    /// Target correlation between the factor and next-period returns.
    pub information_coefficient: f64,
    /// Daily turnover, yuan.
    pub turnover: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            n_tickers: 300,
            n_dates: 1500,
            start: Date::from_ymd_opt(2015, 1, 5).expect("valid date"),
            calm_vol: 0.015,
            regime_variance_ratio: 4.0,
            switch_prob: 0.01,
            market_vol: 0.01,
            beta_min: 0.8,
            beta_max: 1.2,
            drift: 0.0002,
            information_coefficient: 0.2,
            turnover: 5e7,
        }
    }
}

/// Output of [`synth_panel`].
#[derive(Debug, Clone)]
pub struct SynthPanel {
    pub market: MarketPanel,
    pub factors: FactorPanel,
    pub tickers: Vec<String>,
    pub betas: Vec<f64>,
    /// `turbulent[i][t]`: ticker `i` is in the high-variance regime on date `t`.
    pub turbulent: Vec<Vec<bool>>,
    /// `log_returns[i][t]` for `t ≥ 1` (index 0 is 0).
    pub log_returns: Vec<Vec<f64>>,
}

fn business_days(start: Date, n: usize) -> Vec<Date> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

pub fn synth_panel(cfg: &SynthConfig) -> Result<SynthPanel, SynthError> {
    if cfg.n_tickers == 0 {
        return Err(SynthError::Degenerate("n_tickers must be positive"));
    }
    if cfg.n_dates < 2 {
        return Err(SynthError::Degenerate("n_dates must be at least 2"));
    }
    if !(cfg.regime_variance_ratio >= 1.0) || !(cfg.calm_vol > 0.0) {
        return Err(SynthError::Degenerate("volatility parameters"));
    }
    if !(-1.0..=1.0).contains(&cfg.information_coefficient) {
        return Err(SynthError::Degenerate("information coefficient outside [-1, 1]"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dates = business_days(cfg.start, cfg.n_dates);
    let n = cfg.n_tickers;
    let tickers: Vec<String> = (0..n).map(|i| format!("S{i:04}")).collect();
    let betas: Vec<f64> = (0..n)
        .map(|_| cfg.beta_min + (cfg.beta_max - cfg.beta_min) * rng.random::<f64>())
        .collect();
    let turbulent_vol = cfg.calm_vol * libm::sqrt(cfg.regime_variance_ratio);

    let mut market = vec![0.0; cfg.n_dates];
    let mut turbulent = vec![vec![false; cfg.n_dates]; n];
    let mut log_returns = vec![vec![0.0; cfg.n_dates]; n];
    let mut state: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.5).collect();
    for t in 0..cfg.n_dates {
        let m: f64 = StandardNormal.sample(&mut rng);
        market[t] = cfg.market_vol * m;
        for i in 0..n {
            if rng.random::<f64>() < cfg.switch_prob {
                state[i] = !state[i];
            }
            turbulent[i][t] = state[i];
            let eps: f64 = StandardNormal.sample(&mut rng);
            if t > 0 {
                let vol = if state[i] { turbulent_vol } else { cfg.calm_vol };
                log_returns[i][t] = cfg.drift + betas[i] * market[t] + vol * eps;
            }
        }
    }

    let mut builder = PanelBuilder::new();
    let list_date = cfg.start - Days::new(365);
    let mut level = 1000.0;
    for (t, date) in dates.iter().enumerate() {
        if t > 0 {
            level *= libm::exp(market[t] + cfg.drift);
        }
        builder.set_benchmark(*date, level).expect("positive level");
    }
    let mut closes = vec![vec![0.0; cfg.n_dates]; n];
    for i in 0..n {
        let mut price = 5.0 + 45.0 * rng.random::<f64>();
        for (t, date) in dates.iter().enumerate() {
            price *= libm::exp(log_returns[i][t]);
            closes[i][t] = price;
            let bar = Bar {
                close: price,
                adj_factor: 1.0,
                turnover: cfg.turnover,
                suspended: false,
                is_st: false,
            };
            builder.add_bar(*date, &tickers[i], list_date, bar).expect("valid bar");
        }
    }
    for ticker in &tickers {
        builder.add_member(dates[0], ticker).expect("unique member");
    }

    let defs = vec![FactorDef::new(SIGNAL, Direction::Positive, Category::Tech)];
    let mut factors = FactorPanel::new(defs).expect("single factor");
    let schedule = month_ends(&dates);
    let ic = cfg.information_coefficient;
    let noise_weight = libm::sqrt(1.0 - ic * ic);
    for (j, rebalance) in schedule.iter().enumerate() {
        let from = dates.binary_search(rebalance).expect("calendar date");
        if from == 0 {
            continue;
        }
        let to = schedule
            .get(j + 1)
            .map(|d| dates.binary_search(d).expect("calendar date"))
            .unwrap_or(cfg.n_dates - 1);
        let forward: Vec<f64> = (0..n).map(|i| libm::log(closes[i][to] / closes[i][from])).collect();
        let mean = forward.iter().sum::<f64>() / n as f64;
        let sd = libm::sqrt(forward.iter().map(|f| (f - mean) * (f - mean)).sum::<f64>() / n as f64);
        let sd = if sd > 0.0 { sd } else { 1.0 };
        for i in 0..n {
            let z = (forward[i] - mean) / sd;
            let eta: f64 = StandardNormal.sample(&mut rng);
            let value = if noise_weight == 0.0 { z } else { ic * z + noise_weight * eta };
            factors
                .insert(dates[from - 1], &tickers[i], SIGNAL, value)
                .expect("unique value");
        }
    }

    Ok(SynthPanel {
        market: builder.build(),
        factors,
        tickers,
        betas,
        turbulent,
        log_returns,
    })
}
