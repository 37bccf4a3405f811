//! Long-only monthly rebalance simulation.
//!
//! Cash and share counts form a [`Book`]. At every scheduled rebalance the
//! engine screens the universe, selects targets from the score vector
//! computed through the prior trading day, trades to lot-rounded equal (or
//! rank-proportional) weights, and charges commission and per-share
//! slippage. NAV is marked daily at the adjusted close, carrying the last
//! traded price through suspensions.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::factors::{ranked, ScoreVector};
use crate::market::{eligibility_filter, month_ends, EligibilityRules, MarketPanel};
use crate::Date;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BacktestError {
    #[error("look-ahead: scores for the {rebalance} rebalance are dated {as_of}, must be on or before {limit}")]
    LookAhead { rebalance: Date, as_of: Date, limit: Date },
    #[error("no usable price for {ticker} on {date}")]
    MissingPrice { date: Date, ticker: String },
    #[error("invalid portfolio spec: {0}")]
    InvalidSpec(&'static str),
    #[error("quantile boundaries must start at 0 and be strictly increasing")]
    InvalidBoundaries,
    #[error("no trading dates in the requested range")]
    EmptyRange,
}

/// Which slice of the ranked eligible list to hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    TopN(usize),
    /// Ranks `lo..hi` (0-based, descending score).
    Bucket { lo: usize, hi: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Weighting {
    #[default]
    Equal,
    /// Weight proportional to `N − position`: the top name gets `N`, the last 1.
    RankProportional,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct CostModel {
    pub buy_commission_bps: f64,
    pub sell_commission_bps: f64,
    /// Yuan per share, added to buys and subtracted from sells.
    pub slippage_per_share: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            buy_commission_bps: 5.0,
            sell_commission_bps: 1.5,
            slippage_per_share: 0.01,
        }
    }
}

impl CostModel {
    pub fn zero() -> Self {
        Self {
            buy_commission_bps: 0.0,
            sell_commission_bps: 0.0,
            slippage_per_share: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioSpec {
    pub selection: Selection,
    pub weighting: Weighting,
    pub costs: CostModel,
    pub lot_size: u64,
    pub initial_capital: f64,
    pub start: Option<Date>,
    pub end: Option<Date>,
    pub eligibility: EligibilityRules,
}

impl Default for PortfolioSpec {
    fn default() -> Self {
        Self {
            selection: Selection::TopN(50),
            weighting: Weighting::Equal,
            costs: CostModel::default(),
            lot_size: 100,
            initial_capital: 10_000_000.0,
            start: None,
            end: None,
            eligibility: EligibilityRules::default(),
        }
    }
}

impl PortfolioSpec {
    fn validate(&self) -> Result<(), BacktestError> {
        match self.selection {
            Selection::TopN(0) => return Err(BacktestError::InvalidSpec("top_n must be at least 1")),
            Selection::Bucket { lo, hi } if lo >= hi => {
                return Err(BacktestError::InvalidSpec("bucket needs lo < hi"))
            }
            _ => {}
        }
        let c = &self.costs;
        if !(c.buy_commission_bps >= 0.0 && c.sell_commission_bps >= 0.0 && c.slippage_per_share >= 0.0) {
            return Err(BacktestError::InvalidSpec("cost parameters must be nonnegative"));
        }
        if self.lot_size == 0 {
            return Err(BacktestError::InvalidSpec("lot size must be positive"));
        }
        if !(self.initial_capital > 0.0) {
            return Err(BacktestError::InvalidSpec("initial capital must be positive"));
        }
        Ok(())
    }
}

/// Something worth knowing about a run that did not stop it.
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// Fewer eligible names than requested.
    Shortfall { date: Date, requested: usize, selected: usize },
    /// Nothing to hold; the portfolio sits in cash.
    EmptySelection { date: Date },
    /// A bucket reached past the end of the ranked list.
    BucketTruncated { date: Date, requested: usize, available: usize },
    /// Buys were scaled down to fit the available cash.
    CashScaled { date: Date, factor: f64 },
    /// No score vector for a scheduled rebalance; holdings were kept.
    NoScores { date: Date },
}

/// Cash plus signed share counts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Book {
    pub cash: f64,
    pub positions: BTreeMap<String, i64>,
}

impl Book {
    pub fn with_cash(cash: f64) -> Self {
        Self {
            cash,
            positions: BTreeMap::new(),
        }
    }

    /// `cash + Σ shares × price`, missing prices counted as zero.
    pub fn value(&self, price: impl Fn(&str) -> Option<f64>) -> f64 {
        self.cash
            + self
                .positions
                .iter()
                .map(|(t, s)| *s as f64 * price(t).unwrap_or(0.0))
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trade {
    pub date: Date,
    pub ticker: String,
    /// Positive for buys, negative for sells.
    pub shares: i64,
    /// Reference (adjusted close) price.
    pub price: f64,
    /// Price after slippage.
    pub exec_price: f64,
    /// `|shares| × exec_price`.
    pub notional: f64,
    pub commission: f64,
    /// `|shares| × slippage_per_share`.
    pub slippage: f64,
}

/// Price used for one ticker at a rebalance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quote {
    pub price: f64,
    pub tradeable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RebalanceOutcome {
    pub book: Book,
    pub trades: Vec<Trade>,
    pub warnings: Vec<Warning>,
    /// Traded notional (both sides) over pre-trade NAV.
    pub turnover: f64,
}

/// Eligible tickers by descending adjusted score, ties by ticker name.
pub fn ranked_eligible(scores: &ScoreVector, eligible: &BTreeSet<String>) -> Vec<String> {
    ranked(scores)
        .into_iter()
        .filter(|(t, _)| eligible.contains(*t))
        .map(|(t, _)| t.into())
        .collect()
}

/// The `n` best eligible names; fewer (with a warning) when not enough exist.
pub fn select_topn(
    scores: &ScoreVector,
    eligible: &BTreeSet<String>,
    n: usize,
    date: Date,
) -> (Vec<String>, Option<Warning>) {
    let mut list = ranked_eligible(scores, eligible);
    let warning = if list.is_empty() {
        Some(Warning::EmptySelection { date })
    } else if list.len() < n {
        Some(Warning::Shortfall {
            date,
            requested: n,
            selected: list.len(),
        })
    } else {
        None
    };
    list.truncate(n);
    (list, warning)
}

/// Slices the ranked eligible list at `boundaries` (e.g. `[0, 50, 100, 200]`
/// gives three buckets).
pub fn quantile_buckets(
    scores: &ScoreVector,
    eligible: &BTreeSet<String>,
    boundaries: &[usize],
    date: Date,
) -> Result<(Vec<Vec<String>>, Vec<Warning>), BacktestError> {
    validate_boundaries(boundaries)?;
    let list = ranked_eligible(scores, eligible);
    let mut warnings = Vec::new();
    let buckets = boundaries
        .windows(2)
        .map(|w| {
            if w[1] > list.len() {
                warnings.push(Warning::BucketTruncated {
                    date,
                    requested: w[1],
                    available: list.len(),
                });
            }
            let lo = w[0].min(list.len());
            let hi = w[1].min(list.len());
            list[lo..hi].to_vec()
        })
        .collect();
    Ok((buckets, warnings))
}

pub fn validate_boundaries(boundaries: &[usize]) -> Result<(), BacktestError> {
    if boundaries.len() < 2 || boundaries[0] != 0 || boundaries.windows(2).any(|w| w[0] >= w[1]) {
        return Err(BacktestError::InvalidBoundaries);
    }
    Ok(())
}

fn target_weights(n: usize, weighting: Weighting) -> Vec<f64> {
    match weighting {
        Weighting::Equal => alloc::vec![1.0 / n as f64; n],
        Weighting::RankProportional => {
            let total = (n * (n + 1) / 2) as f64;
            (0..n).map(|i| (n - i) as f64 / total).collect()
        }
    }
}

/// Trades `book` to the target list at the quoted prices.
///
/// Suspended holdings (non-tradeable quotes) are left untouched and their
/// value is excluded from the capital being allocated. Sells settle before
/// buys; if the buys plus costs exceed the cash, every buy is scaled by the
/// same factor and re-rounded down to whole lots.
pub fn rebalance(
    book: &Book,
    date: Date,
    targets: &[String],
    quotes: &BTreeMap<String, Quote>,
    spec: &PortfolioSpec,
) -> Result<RebalanceOutcome, BacktestError> {
    let quote = |t: &str| {
        quotes
            .get(t)
            .copied()
            .filter(|q| q.price > 0.0)
            .ok_or_else(|| BacktestError::MissingPrice { date, ticker: t.into() })
    };
    let lot = spec.lot_size as i64;
    let costs = &spec.costs;

    let mut nav = book.cash;
    let mut frozen_value = 0.0;
    for (t, shares) in &book.positions {
        let q = quote(t)?;
        nav += *shares as f64 * q.price;
        if !q.tradeable {
            frozen_value += *shares as f64 * q.price;
        }
    }
    let investable = nav - frozen_value;

    let mut desired: BTreeMap<&str, i64> = BTreeMap::new();
    for (t, _) in book.positions.iter().filter(|(t, _)| quote(t).is_ok_and(|q| q.tradeable)) {
        desired.insert(t.as_str(), 0);
    }
    if !targets.is_empty() {
        let weights = target_weights(targets.len(), spec.weighting);
        for (t, w) in targets.iter().zip(weights) {
            let q = quote(t)?;
            if !q.tradeable {
                return Err(BacktestError::MissingPrice { date, ticker: t.clone() });
            }
            let lots = libm::floor(w * investable / q.price / lot as f64) as i64;
            desired.insert(t.as_str(), lots.max(0) * lot);
        }
    }

    let mut next = book.clone();
    let mut trades = Vec::new();
    let mut warnings = Vec::new();
    let mut traded = 0.0;

    for (t, want) in &desired {
        let have = book.positions.get(*t).copied().unwrap_or(0);
        if *want >= have {
            continue;
        }
        let q = quote(t)?;
        let qty = have - want;
        let exec_price = (q.price - costs.slippage_per_share).max(0.0);
        let notional = qty as f64 * exec_price;
        let commission = notional * costs.sell_commission_bps / 10_000.0;
        next.cash += notional - commission;
        traded += notional;
        trades.push(Trade {
            date,
            ticker: (*t).into(),
            shares: -qty,
            price: q.price,
            exec_price,
            notional,
            commission,
            slippage: qty as f64 * costs.slippage_per_share,
        });
        set_position(&mut next, t, *want);
    }

    let buy_cost = |qty: i64, price: f64| {
        let notional = qty as f64 * (price + costs.slippage_per_share);
        notional + notional * costs.buy_commission_bps / 10_000.0
    };
    let mut buys: Vec<(&str, i64, f64)> = Vec::new();
    for (t, want) in &desired {
        let have = book.positions.get(*t).copied().unwrap_or(0);
        if *want > have {
            buys.push((t, want - have, quote(t)?.price));
        }
    }
    let needed: f64 = buys.iter().map(|(_, q, p)| buy_cost(*q, *p)).sum();
    if needed > next.cash {
        let factor = (next.cash / needed).max(0.0);
        for (_, qty, _) in buys.iter_mut() {
            *qty = libm::floor(*qty as f64 * factor / lot as f64) as i64 * lot;
        }
        warnings.push(Warning::CashScaled { date, factor });
    }
    for (t, qty, price) in buys {
        if qty == 0 {
            continue;
        }
        let exec_price = price + costs.slippage_per_share;
        let notional = qty as f64 * exec_price;
        let commission = notional * costs.buy_commission_bps / 10_000.0;
        next.cash -= notional + commission;
        traded += notional;
        trades.push(Trade {
            date,
            ticker: t.into(),
            shares: qty,
            price,
            exec_price,
            notional,
            commission,
            slippage: qty as f64 * costs.slippage_per_share,
        });
        let have = next.positions.get(t).copied().unwrap_or(0);
        set_position(&mut next, t, have + qty);
    }

    Ok(RebalanceOutcome {
        book: next,
        trades,
        warnings,
        turnover: if nav > 0.0 { traded / nav } else { 0.0 },
    })
}

fn set_position(book: &mut Book, ticker: &str, shares: i64) {
    if shares == 0 {
        book.positions.remove(ticker);
    } else {
        book.positions.insert(ticker.into(), shares);
    }
}

/// Score vectors keyed by the rebalance date they are meant for.
pub type ScoreStream = BTreeMap<Date, ScoreVector>;

#[derive(Debug, Clone, PartialEq)]
pub struct HoldingsSnapshot {
    pub date: Date,
    pub book: Book,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestResult {
    pub dates: Vec<Date>,
    pub nav: Vec<f64>,
    pub cash: Vec<f64>,
    /// Benchmark scaled to the initial capital; `None` where no level exists.
    pub benchmark_nav: Vec<Option<f64>>,
    /// Post-trade books at each rebalance.
    pub holdings: Vec<HoldingsSnapshot>,
    pub trades: Vec<Trade>,
    pub turnover: Vec<(Date, f64)>,
    pub total_commission: f64,
    pub total_slippage: f64,
    pub warnings: Vec<Warning>,
}

impl BacktestResult {
    /// Benchmark NAV when every date has a level.
    pub fn complete_benchmark(&self) -> Option<Vec<f64>> {
        self.benchmark_nav.iter().copied().collect()
    }

    pub fn total_costs(&self) -> f64 {
        self.total_commission + self.total_slippage
    }
}

/// Runs the simulation over the panel calendar (restricted to the spec's
/// date range), rebalancing at each month end.
pub fn run_backtest(
    panel: &MarketPanel,
    scores: &ScoreStream,
    spec: &PortfolioSpec,
) -> Result<BacktestResult, BacktestError> {
    spec.validate()?;
    let dates: Vec<Date> = panel
        .calendar()
        .iter()
        .copied()
        .filter(|d| spec.start.is_none_or(|s| *d >= s) && spec.end.is_none_or(|e| *d <= e))
        .collect();
    if dates.is_empty() {
        return Err(BacktestError::EmptyRange);
    }
    let schedule: BTreeSet<Date> = month_ends(&dates).into_iter().collect();
    let base_level = panel.benchmark(dates[0]);

    let mut book = Book::with_cash(spec.initial_capital);
    let mut result = BacktestResult {
        dates: dates.clone(),
        nav: Vec::with_capacity(dates.len()),
        cash: Vec::with_capacity(dates.len()),
        benchmark_nav: Vec::with_capacity(dates.len()),
        holdings: Vec::new(),
        trades: Vec::new(),
        turnover: Vec::new(),
        total_commission: 0.0,
        total_slippage: 0.0,
        warnings: Vec::new(),
    };

    for &date in &dates {
        if schedule.contains(&date) {
            match scores.get(&date) {
                None => result.warnings.push(Warning::NoScores { date }),
                Some(vector) => {
                    let limit = panel.previous_date(date).ok_or(BacktestError::LookAhead {
                        rebalance: date,
                        as_of: vector.as_of,
                        limit: date,
                    })?;
                    if vector.as_of > limit {
                        return Err(BacktestError::LookAhead {
                            rebalance: date,
                            as_of: vector.as_of,
                            limit,
                        });
                    }
                    let outcome = rebalance_on(panel, &book, date, vector, spec)?;
                    for t in &outcome.trades {
                        result.total_commission += t.commission;
                        result.total_slippage += t.slippage;
                    }
                    result.trades.extend(outcome.trades);
                    result.warnings.extend(outcome.warnings);
                    result.turnover.push((date, outcome.turnover));
                    book = outcome.book;
                    result.holdings.push(HoldingsSnapshot {
                        date,
                        book: book.clone(),
                    });
                }
            }
        }
        result.nav.push(book.value(|t| panel.mark_price(t, date)));
        result.cash.push(book.cash);
        result.benchmark_nav.push(
            base_level
                .zip(panel.benchmark(date))
                .map(|(base, level)| spec.initial_capital * level / base),
        );
    }
    Ok(result)
}

fn rebalance_on(
    panel: &MarketPanel,
    book: &Book,
    date: Date,
    scores: &ScoreVector,
    spec: &PortfolioSpec,
) -> Result<RebalanceOutcome, BacktestError> {
    let eligible = eligibility_filter(panel, date, &spec.eligibility).eligible();
    let mut warnings = Vec::new();
    let targets = match spec.selection {
        Selection::TopN(n) => {
            let (targets, warning) = select_topn(scores, &eligible, n, date);
            warnings.extend(warning);
            targets
        }
        Selection::Bucket { lo, hi } => {
            let (mut buckets, w) = quantile_buckets(scores, &eligible, &[0, lo, hi], date)
                .or_else(|_| quantile_buckets(scores, &eligible, &[0, hi], date))?;
            warnings.extend(w);
            let bucket = buckets.pop().unwrap_or_default();
            if bucket.is_empty() {
                warnings.push(Warning::EmptySelection { date });
            }
            bucket
        }
    };
    let mut quotes = BTreeMap::new();
    for t in book.positions.keys().chain(targets.iter()) {
        let price = panel
            .mark_price(t, date)
            .ok_or_else(|| BacktestError::MissingPrice { date, ticker: t.clone() })?;
        let tradeable = panel.tradeable_price(t, date).is_some();
        quotes.insert(t.clone(), Quote { price, tradeable });
    }
    let mut outcome = rebalance(book, date, &targets, &quotes, spec)?;
    warnings.append(&mut outcome.warnings);
    outcome.warnings = warnings;
    Ok(outcome)
}
