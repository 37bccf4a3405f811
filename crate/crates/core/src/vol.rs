//! Per-asset volatility estimators on demeaned log returns.
//!
//! Every estimator produces `σ(t)` from returns strictly before `t`, aligned
//! one-to-one with the return dates. Values before `valid_from` are undefined.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::state_space::{LagWeights, StateSpaceModel};
use crate::Date;

/// Default EWMA decay (daily RiskMetrics convention).
pub const DEFAULT_EWMA_LAMBDA: f64 = 0.94;
/// Observations used to seed the EWMA recursion.
pub const DEFAULT_EWMA_SEED_WINDOW: usize = 30;
pub const DEFAULT_PWMA_ALPHA: f64 = 1.2;
pub const DEFAULT_PWMA_LAGS: usize = 750;
/// Minimum number of observations before any estimate is reported.
pub const DEFAULT_MIN_HISTORY: usize = 250;
/// Per-period volatility floor.
pub const SIGMA_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VolError {
    #[error("nonpositive price {price} for {ticker} on {date}")]
    NonPositivePrice {
        ticker: String,
        date: Date,
        price: f64,
    },
    #[error("need at least {needed} observations, got {got}")]
    InsufficientHistory { needed: usize, got: usize },
    #[error("dates must be strictly increasing (index {0})")]
    UnorderedDates(usize),
    #[error("length mismatch: {0} dates vs {1} values")]
    LengthMismatch(usize, usize),
    #[error("return and volatility series are not aligned")]
    Misaligned,
    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
}

/// How log returns are centered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Demean {
    /// Subtract the mean over the whole sample.
    #[default]
    Full,
    /// Subtract the mean of returns up to and including `t` (causal).
    Expanding,
}

/// Demeaned log returns.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    dates: Vec<Date>,
    values: Vec<f64>,
}

impl ReturnSeries {
    pub fn new(dates: Vec<Date>, values: Vec<f64>) -> Result<Self, VolError> {
        if dates.len() != values.len() {
            return Err(VolError::LengthMismatch(dates.len(), values.len()));
        }
        if let Some(i) = dates.windows(2).position(|w| w[0] >= w[1]) {
            return Err(VolError::UnorderedDates(i + 1));
        }
        Ok(Self { dates, values })
    }

    /// Labels values with consecutive calendar days; handy when only the
    /// numbers matter.
    pub fn undated(values: Vec<f64>) -> Self {
        let start = Date::from_ymd_opt(2000, 1, 3).expect("valid date");
        let dates = (0..values.len())
            .map(|i| start + chrono::Days::new(i as u64))
            .collect();
        Self { dates, values }
    }

    pub fn dates(&self) -> &[Date] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same dates, every value multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            dates: self.dates.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }
}

/// `y(t) = log(p_t / p_{t−1}) − mean`. `dates` label the prices; the
/// returned series starts at `dates[1]`.
pub fn demean_log_returns(
    ticker: &str,
    dates: &[Date],
    prices: &[f64],
    demean: Demean,
) -> Result<ReturnSeries, VolError> {
    if dates.len() != prices.len() {
        return Err(VolError::LengthMismatch(dates.len(), prices.len()));
    }
    if prices.len() < 2 {
        return Err(VolError::InsufficientHistory {
            needed: 2,
            got: prices.len(),
        });
    }
    if let Some(i) = prices.iter().position(|p| !(*p > 0.0)) {
        return Err(VolError::NonPositivePrice {
            ticker: ticker.into(),
            date: dates[i],
            price: prices[i],
        });
    }
    let raw: Vec<f64> = prices.windows(2).map(|w| libm::log(w[1] / w[0])).collect();
    let values = match demean {
        Demean::Full => {
            let mean = raw.iter().sum::<f64>() / raw.len() as f64;
            raw.iter().map(|r| r - mean).collect()
        }
        Demean::Expanding => {
            let mut sum = 0.0;
            raw.iter()
                .enumerate()
                .map(|(i, r)| {
                    sum += r;
                    r - sum / (i + 1) as f64
                })
                .collect()
        }
    };
    ReturnSeries::new(dates[1..].to_vec(), values)
}

/// Per-date volatility aligned with a [`ReturnSeries`], plus the forecast
/// for the step after the last observation.
#[derive(Debug, Clone, PartialEq)]
pub struct VolSeries {
    dates: Vec<Date>,
    sigma: Vec<f64>,
    valid_from: usize,
    next: Option<f64>,
}

impl VolSeries {
    /// `variance[t]` for each date; an extra trailing entry is the
    /// one-step-ahead forecast.
    fn from_variance(dates: &[Date], variance: &[f64], valid_from: usize, floor: f64) -> Self {
        let to_sigma = |v: f64| libm::sqrt(v.max(0.0)).max(floor);
        let sigma = variance
            .iter()
            .take(dates.len())
            .enumerate()
            .map(|(t, v)| if t < valid_from { f64::NAN } else { to_sigma(*v) })
            .collect();
        let next = variance
            .get(dates.len())
            .filter(|_| valid_from <= dates.len())
            .map(|v| to_sigma(*v));
        Self {
            dates: dates.to_vec(),
            sigma,
            valid_from,
            next,
        }
    }

    pub fn dates(&self) -> &[Date] {
        &self.dates
    }

    /// Index of the first defined estimate.
    pub fn valid_from(&self) -> usize {
        self.valid_from
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    pub fn sigma(&self, t: usize) -> Option<f64> {
        (t >= self.valid_from).then(|| self.sigma.get(t).copied()).flatten()
    }

    /// All `(date, σ)` pairs from `valid_from` on.
    pub fn defined(&self) -> impl Iterator<Item = (Date, f64)> + '_ {
        self.dates
            .iter()
            .zip(&self.sigma)
            .skip(self.valid_from)
            .map(|(d, s)| (*d, *s))
    }

    /// Estimate for `date`, if it is a series date at or after `valid_from`.
    pub fn at_date(&self, date: Date) -> Option<f64> {
        self.dates.binary_search(&date).ok().and_then(|t| self.sigma(t))
    }

    /// First estimate dated strictly after `date`: the one-step forecast built
    /// from returns up to and including `date`. Past the last observation
    /// this is [`VolSeries::next`].
    pub fn forecast_after(&self, date: Date) -> Option<f64> {
        let t = self.dates.partition_point(|d| *d <= date);
        if t == self.dates.len() {
            self.next
        } else {
            self.sigma(t)
        }
    }

    /// Forecast for the step after the last observation.
    pub fn next(&self) -> Option<f64> {
        self.next
    }
}

/// Options shared by all estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VolOptions {
    /// Burn-in floor: no estimate before this many observations.
    pub min_history: usize,
    /// Lower bound applied to every σ.
    pub floor: f64,
}

impl Default for VolOptions {
    fn default() -> Self {
        Self {
            min_history: DEFAULT_MIN_HISTORY,
            floor: SIGMA_FLOOR,
        }
    }
}

impl VolOptions {
    /// No burn-in beyond what the estimator itself needs.
    pub fn no_burn_in() -> Self {
        Self {
            min_history: 0,
            floor: SIGMA_FLOOR,
        }
    }
}

fn burn_in(needed: usize, opts: &VolOptions, len: usize) -> Result<usize, VolError> {
    let valid_from = needed.max(opts.min_history);
    if len <= valid_from {
        return Err(VolError::InsufficientHistory {
            needed: valid_from + 1,
            got: len,
        });
    }
    Ok(valid_from)
}

/// `σ²(t) = Σ_{k=1..L} h_k y²(t−k)` by explicit convolution.
pub fn maxflat_vol(
    r: &ReturnSeries,
    weights: &LagWeights,
    opts: &VolOptions,
) -> Result<VolSeries, VolError> {
    let h = weights.weights();
    let valid_from = burn_in(h.len(), opts, r.len())?;
    let sq: Vec<f64> = r.values.iter().map(|y| y * y).collect();
    let mut variance = vec![0.0; sq.len() + 1];
    for (t, slot) in variance.iter_mut().enumerate().skip(valid_from) {
        let mut acc = 0.0;
        for (k, w) in h.iter().enumerate().take(t) {
            acc += w * sq[t - 1 - k];
        }
        *slot = acc;
    }
    Ok(VolSeries::from_variance(&r.dates, &variance, valid_from, opts.floor))
}

/// Same estimator driven by the state recursion `Z(t+1) = A Z(t) + B y²(t)`,
/// `σ²(t) = C Z(t)`, started from `Z = 0`. Uses the untruncated filter, so it
/// matches [`maxflat_vol`] with unclipped weights of full length.
pub fn maxflat_vol_recursive(
    r: &ReturnSeries,
    model: &StateSpaceModel,
    history: usize,
    opts: &VolOptions,
) -> Result<VolSeries, VolError> {
    let valid_from = burn_in(history, opts, r.len())?;
    let mut state = vec![0.0; model.dim()];
    let mut variance = Vec::with_capacity(r.len());
    for y in &r.values {
        let c_z: f64 = model.c().iter().zip(&state).map(|(c, z)| c * z).sum();
        variance.push(c_z);
        model.step(&mut state, y * y);
    }
    variance.push(model.c().iter().zip(&state).map(|(c, z)| c * z).sum());
    Ok(VolSeries::from_variance(&r.dates, &variance, valid_from, opts.floor))
}

/// Normalized EWMA lag weights `(1−λ) λ^(k−1)` over `len` lags.
pub fn ewma_lag_weights(lambda: f64, len: usize) -> Result<LagWeights, VolError> {
    check_lambda(lambda)?;
    let raw: Vec<f64> = (0..len)
        .map(|k| (1.0 - lambda) * libm::pow(lambda, k as f64))
        .collect();
    Ok(normalized(raw))
}

/// Normalized power-law lag weights `k^(−α)`, `k = 1..=len`.
pub fn pwma_lag_weights(alpha: f64, len: usize) -> Result<LagWeights, VolError> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(VolError::InvalidParameter {
            name: "pwma alpha",
            value: alpha,
        });
    }
    if len == 0 {
        return Err(VolError::InvalidParameter {
            name: "pwma lags",
            value: 0.0,
        });
    }
    let raw: Vec<f64> = (1..=len).map(|k| libm::pow(k as f64, -alpha)).collect();
    Ok(normalized(raw))
}

fn normalized(raw: Vec<f64>) -> LagWeights {
    let total: f64 = raw.iter().sum();
    LagWeights::from_raw(raw.into_iter().map(|w| w / total).collect())
}

fn check_lambda(lambda: f64) -> Result<(), VolError> {
    if lambda > 0.0 && lambda < 1.0 {
        Ok(())
    } else {
        Err(VolError::InvalidParameter {
            name: "ewma lambda",
            value: lambda,
        })
    }
}

/// Variance path of `σ²(t) = λσ²(t−1) + (1−λ)y²(t−1)` seeded with
/// `σ²(seed_index) = seed_variance`. Entries before the seed are NaN.
pub fn ewma_variance_path(
    y: &[f64],
    lambda: f64,
    seed_index: usize,
    seed_variance: f64,
) -> Result<Vec<f64>, VolError> {
    check_lambda(lambda)?;
    let mut out = vec![f64::NAN; y.len()];
    if seed_index >= y.len() {
        return Ok(out);
    }
    out[seed_index] = seed_variance;
    for t in seed_index + 1..y.len() {
        out[t] = lambda * out[t - 1] + (1.0 - lambda) * y[t - 1] * y[t - 1];
    }
    Ok(out)
}

/// EWMA variance recursion seeded with the sample variance of the first
/// `seed_window` observations.
pub fn ewma_vol(
    r: &ReturnSeries,
    lambda: f64,
    seed_window: usize,
    opts: &VolOptions,
) -> Result<VolSeries, VolError> {
    check_lambda(lambda)?;
    if seed_window < 2 {
        return Err(VolError::InvalidParameter {
            name: "ewma seed window",
            value: seed_window as f64,
        });
    }
    let valid_from = burn_in(seed_window, opts, r.len())?;
    let seed = sample_variance(&r.values[..seed_window]);
    let mut variance = ewma_variance_path(&r.values, lambda, seed_window, seed)?;
    let (last_var, last_y) = (variance[r.len() - 1], r.values[r.len() - 1]);
    variance.push(lambda * last_var + (1.0 - lambda) * last_y * last_y);
    Ok(VolSeries::from_variance(&r.dates, &variance, valid_from, opts.floor))
}

fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
}

/// Power-law weighted moving average of squared returns.
pub fn pwma_vol(
    r: &ReturnSeries,
    alpha: f64,
    lags: usize,
    opts: &VolOptions,
) -> Result<VolSeries, VolError> {
    let weights = pwma_lag_weights(alpha, lags)?;
    maxflat_vol(r, &weights, opts)
}

/// Trailing realized volatility `σ²(t) = (1/W) Σ_{k=1..W} y²(t−k)`.
pub fn rolling_vol(r: &ReturnSeries, window: usize, opts: &VolOptions) -> Result<VolSeries, VolError> {
    if window < 2 {
        return Err(VolError::InvalidParameter {
            name: "rolling window",
            value: window as f64,
        });
    }
    let valid_from = burn_in(window, opts, r.len())?;
    let mut variance = vec![0.0; r.len() + 1];
    for (t, slot) in variance.iter_mut().enumerate().skip(valid_from) {
        let sum: f64 = r.values[t - window..t].iter().map(|y| y * y).sum();
        *slot = sum / window as f64;
    }
    Ok(VolSeries::from_variance(&r.dates, &variance, valid_from, opts.floor))
}

/// The unadjusted baseline: `σ ≡ 1` on every date.
pub fn no_vol(r: &ReturnSeries) -> VolSeries {
    VolSeries {
        dates: r.dates.clone(),
        sigma: vec![1.0; r.len()],
        valid_from: 0,
        next: Some(1.0),
    }
}

/// Whitened returns `x(t) = y(t)/σ(t)` from `valid_from` on.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    pub dates: Vec<Date>,
    pub values: Vec<f64>,
}

pub fn residuals(r: &ReturnSeries, v: &VolSeries) -> Result<Residuals, VolError> {
    if r.dates != v.dates {
        return Err(VolError::Misaligned);
    }
    let start = v.valid_from;
    Ok(Residuals {
        dates: r.dates[start..].to_vec(),
        values: r.values[start..]
            .iter()
            .zip(&v.sigma[start..])
            .map(|(y, s)| y / s)
            .collect(),
    })
}

/// The six estimators compared in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum VolMethod {
    Ewma,
    Rolling250,
    Rolling500,
    Pwma,
    #[cfg_attr(feature = "serde", serde(rename = "none"))]
    NoVol,
    Maxflat,
}

impl VolMethod {
    /// Report order.
    pub const ALL: [VolMethod; 6] = [
        VolMethod::Ewma,
        VolMethod::Rolling250,
        VolMethod::Rolling500,
        VolMethod::Pwma,
        VolMethod::NoVol,
        VolMethod::Maxflat,
    ];

    /// Identifier used in files and configuration.
    pub fn key(&self) -> &'static str {
        match self {
            VolMethod::Ewma => "ewma",
            VolMethod::Rolling250 => "rolling250",
            VolMethod::Rolling500 => "rolling500",
            VolMethod::Pwma => "pwma",
            VolMethod::NoVol => "none",
            VolMethod::Maxflat => "maxflat",
        }
    }

    /// Row label in comparison reports.
    pub fn label(&self) -> &'static str {
        match self {
            VolMethod::Ewma => "EWMA",
            VolMethod::Rolling250 => "250VOL",
            VolMethod::Rolling500 => "500VOL",
            VolMethod::Pwma => "PWMA",
            VolMethod::NoVol => "NoVOL",
            VolMethod::Maxflat => "MAXFLAT",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.key() == key)
    }
}

impl fmt::Display for VolMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// A fully parameterized estimator.
#[derive(Debug, Clone, PartialEq)]
pub enum Estimator {
    /// Convolution with fixed lag weights (MAXFLAT, PWMA or injected weights).
    Weighted(LagWeights),
    Ewma { lambda: f64, seed_window: usize },
    Rolling(usize),
    /// `σ ≡ 1`.
    Constant,
}

impl Estimator {
    pub fn estimate(&self, r: &ReturnSeries, opts: &VolOptions) -> Result<VolSeries, VolError> {
        match self {
            Estimator::Weighted(w) => maxflat_vol(r, w, opts),
            Estimator::Ewma { lambda, seed_window } => ewma_vol(r, *lambda, *seed_window, opts),
            Estimator::Rolling(window) => rolling_vol(r, *window, opts),
            Estimator::Constant => Ok(no_vol(r)),
        }
    }

    /// Observations needed before the first estimate (ignoring `min_history`).
    pub fn required_history(&self) -> usize {
        match self {
            Estimator::Weighted(w) => w.truncation_length(),
            Estimator::Ewma { seed_window, .. } => *seed_window,
            Estimator::Rolling(window) => *window,
            Estimator::Constant => 0,
        }
    }
}
