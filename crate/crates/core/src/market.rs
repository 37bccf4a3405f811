//! Point-in-time market panel and the tradability screens applied at each
//! rebalance.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use chrono::Datelike;

use crate::Date;

pub const DEFAULT_MIN_LISTING_DAYS: i64 = 91;
/// Minimum trailing mean turnover, in yuan per day.
pub const DEFAULT_LIQUIDITY_THRESHOLD: f64 = 10_000_000.0;
pub const DEFAULT_LIQUIDITY_WINDOW: usize = 20;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MarketError {
    #[error("duplicate price row for {ticker} on {date}")]
    DuplicateRow { date: Date, ticker: String },
    #[error("nonpositive price {price} for {ticker} on {date} (trading row)")]
    NonPositivePrice { date: Date, ticker: String, price: f64 },
    #[error("invalid {field} {value} for {ticker} on {date}")]
    InvalidField {
        date: Date,
        ticker: String,
        field: &'static str,
        value: f64,
    },
    #[error("{ticker} has conflicting list dates {first} and {second}")]
    ConflictingListDate { ticker: String, first: Date, second: Date },
    #[error("duplicate benchmark level on {0}")]
    DuplicateBenchmark(Date),
    #[error("nonpositive benchmark level {level} on {date}")]
    NonPositiveBenchmark { date: Date, level: f64 },
    #[error("duplicate universe row for {ticker} on {date}")]
    DuplicateMember { date: Date, ticker: String },
    #[error("date {0} is not a trading date of the panel")]
    UnknownDate(Date),
}

/// One (date, ticker) observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bar {
    /// Unadjusted close, yuan.
    pub close: f64,
    /// Cumulative adjustment factor; adjusted close = close × factor.
    pub adj_factor: f64,
    /// Traded value, yuan.
    pub turnover: f64,
    pub suspended: bool,
    pub is_st: bool,
}

impl Bar {
    pub fn adjusted_close(&self) -> f64 {
        self.close * self.adj_factor
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Listing {
    list_date: Date,
    bars: BTreeMap<Date, Bar>,
}

/// Validated, immutable market data.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketPanel {
    calendar: Vec<Date>,
    listings: BTreeMap<String, Listing>,
    benchmark: BTreeMap<Date, f64>,
    universe: BTreeMap<Date, BTreeSet<String>>,
}

/// Accumulates rows, validating each as it arrives.
#[derive(Debug, Clone, Default)]
pub struct PanelBuilder {
    listings: BTreeMap<String, Listing>,
    benchmark: BTreeMap<Date, f64>,
    universe: BTreeMap<Date, BTreeSet<String>>,
}

impl PanelBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_bar(&mut self, date: Date, ticker: &str, list_date: Date, bar: Bar) -> Result<(), MarketError> {
        let invalid = |field, value| MarketError::InvalidField {
            date,
            ticker: ticker.into(),
            field,
            value,
        };
        if !bar.suspended && !(bar.close > 0.0) {
            return Err(MarketError::NonPositivePrice {
                date,
                ticker: ticker.into(),
                price: bar.close,
            });
        }
        if !(bar.adj_factor > 0.0) || !bar.adj_factor.is_finite() {
            return Err(invalid("adj_factor", bar.adj_factor));
        }
        if !(bar.turnover >= 0.0) || !bar.turnover.is_finite() {
            return Err(invalid("turnover", bar.turnover));
        }
        if !bar.close.is_finite() {
            return Err(invalid("close", bar.close));
        }
        let listing = self.listings.entry(ticker.to_string()).or_insert_with(|| Listing {
            list_date,
            bars: BTreeMap::new(),
        });
        if listing.list_date != list_date {
            return Err(MarketError::ConflictingListDate {
                ticker: ticker.into(),
                first: listing.list_date,
                second: list_date,
            });
        }
        if listing.bars.insert(date, bar).is_some() {
            return Err(MarketError::DuplicateRow {
                date,
                ticker: ticker.into(),
            });
        }
        Ok(())
    }

    pub fn add_member(&mut self, date: Date, ticker: &str) -> Result<(), MarketError> {
        if !self.universe.entry(date).or_default().insert(ticker.to_string()) {
            return Err(MarketError::DuplicateMember {
                date,
                ticker: ticker.into(),
            });
        }
        Ok(())
    }

    pub fn set_benchmark(&mut self, date: Date, level: f64) -> Result<(), MarketError> {
        if !(level > 0.0) || !level.is_finite() {
            return Err(MarketError::NonPositiveBenchmark { date, level });
        }
        if self.benchmark.insert(date, level).is_some() {
            return Err(MarketError::DuplicateBenchmark(date));
        }
        Ok(())
    }

    pub fn build(self) -> MarketPanel {
        let calendar: BTreeSet<Date> = self
            .listings
            .values()
            .flat_map(|l| l.bars.keys().copied())
            .collect();
        MarketPanel {
            calendar: calendar.into_iter().collect(),
            listings: self.listings,
            benchmark: self.benchmark,
            universe: self.universe,
        }
    }
}

impl MarketPanel {
    /// Every date with at least one price row, ascending.
    pub fn calendar(&self) -> &[Date] {
        &self.calendar
    }

    pub fn date_index(&self, date: Date) -> Option<usize> {
        self.calendar.binary_search(&date).ok()
    }

    /// Trading date immediately before `date`.
    pub fn previous_date(&self, date: Date) -> Option<Date> {
        let i = self.calendar.partition_point(|d| *d < date);
        i.checked_sub(1).map(|i| self.calendar[i])
    }

    pub fn tickers(&self) -> impl Iterator<Item = &str> + '_ {
        self.listings.keys().map(String::as_str)
    }

    pub fn list_date(&self, ticker: &str) -> Option<Date> {
        self.listings.get(ticker).map(|l| l.list_date)
    }

    pub fn bar(&self, ticker: &str, date: Date) -> Option<&Bar> {
        self.listings.get(ticker)?.bars.get(&date)
    }

    /// All rows of one ticker, ascending by date.
    pub fn bars(&self, ticker: &str) -> impl Iterator<Item = (Date, &Bar)> + '_ {
        self.listings
            .get(ticker)
            .into_iter()
            .flat_map(|l| l.bars.iter().map(|(d, b)| (*d, b)))
    }

    /// Adjusted close if the ticker trades on `date`.
    pub fn tradeable_price(&self, ticker: &str, date: Date) -> Option<f64> {
        self.bar(ticker, date)
            .filter(|b| !b.suspended)
            .map(Bar::adjusted_close)
    }

    /// Last traded adjusted close at or before `date` (carried through
    /// suspensions and gaps).
    pub fn mark_price(&self, ticker: &str, date: Date) -> Option<f64> {
        self.listings
            .get(ticker)?
            .bars
            .range(..=date)
            .rev()
            .find(|(_, b)| !b.suspended)
            .map(|(_, b)| b.adjusted_close())
    }

    /// Dates and adjusted closes of traded rows up to and including `through`.
    pub fn price_history(&self, ticker: &str, through: Date) -> (Vec<Date>, Vec<f64>) {
        let mut dates = Vec::new();
        let mut prices = Vec::new();
        if let Some(l) = self.listings.get(ticker) {
            for (d, b) in l.bars.range(..=through).filter(|(_, b)| !b.suspended) {
                dates.push(*d);
                prices.push(b.adjusted_close());
            }
        }
        (dates, prices)
    }

    pub fn benchmark(&self, date: Date) -> Option<f64> {
        self.benchmark.get(&date).copied()
    }

    pub fn benchmark_levels(&self) -> impl Iterator<Item = (Date, f64)> + '_ {
        self.benchmark.iter().map(|(d, l)| (*d, *l))
    }

    pub fn has_benchmark(&self) -> bool {
        !self.benchmark.is_empty()
    }

    /// Universe snapshot in force on `date`: the latest membership list dated
    /// on or before it. With no membership data every listed ticker counts.
    pub fn members(&self, date: Date) -> BTreeSet<String> {
        if self.universe.is_empty() {
            return self.listings.keys().cloned().collect();
        }
        self.universe
            .range(..=date)
            .next_back()
            .map(|(_, m)| m.clone())
            .unwrap_or_default()
    }

    /// Raw membership rows.
    pub fn universe_rows(&self) -> impl Iterator<Item = (Date, &str)> + '_ {
        self.universe
            .iter()
            .flat_map(|(d, m)| m.iter().map(move |t| (*d, t.as_str())))
    }

    /// Copy with every row dated after `date` removed.
    pub fn truncated(&self, date: Date) -> Self {
        let listings = self
            .listings
            .iter()
            .filter_map(|(t, l)| {
                let bars: BTreeMap<Date, Bar> = l.bars.range(..=date).map(|(d, b)| (*d, *b)).collect();
                (!bars.is_empty()).then(|| {
                    (
                        t.clone(),
                        Listing {
                            list_date: l.list_date,
                            bars,
                        },
                    )
                })
            })
            .collect();
        Self {
            calendar: self.calendar.iter().copied().filter(|d| *d <= date).collect(),
            listings,
            benchmark: self.benchmark.range(..=date).map(|(d, l)| (*d, *l)).collect(),
            universe: self.universe.range(..=date).map(|(d, m)| (*d, m.clone())).collect(),
        }
    }

    /// Last trading date of every calendar month, excluding the final date of
    /// the panel.
    pub fn month_ends(&self) -> Vec<Date> {
        month_ends(&self.calendar)
    }
}

/// Last date of each (year, month) in a sorted calendar, excluding the very
/// last calendar date.
pub fn month_ends(calendar: &[Date]) -> Vec<Date> {
    calendar
        .windows(2)
        .filter(|w| (w[0].year(), w[0].month()) != (w[1].year(), w[1].month()))
        .map(|w| w[0])
        .collect()
}

/// Reason a ticker is not tradeable, in rule order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Exclusion {
    NotInUniverse,
    SpecialTreatment,
    Suspended,
    ListingAge,
    Liquidity,
}

impl Exclusion {
    pub fn code(&self) -> &'static str {
        match self {
            Exclusion::NotInUniverse => "universe",
            Exclusion::SpecialTreatment => "st",
            Exclusion::Suspended => "suspended",
            Exclusion::ListingAge => "listing-age",
            Exclusion::Liquidity => "liquidity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EligibilityRules {
    pub min_listing_days: i64,
    pub liquidity_threshold: f64,
    pub liquidity_window: usize,
}

impl Default for EligibilityRules {
    fn default() -> Self {
        Self {
            min_listing_days: DEFAULT_MIN_LISTING_DAYS,
            liquidity_threshold: DEFAULT_LIQUIDITY_THRESHOLD,
            liquidity_window: DEFAULT_LIQUIDITY_WINDOW,
        }
    }
}

/// Per-ticker verdict on one date; `None` means eligible.
#[derive(Debug, Clone, PartialEq)]
pub struct EligibilityReport {
    pub date: Date,
    pub entries: BTreeMap<String, Option<Exclusion>>,
}

impl EligibilityReport {
    pub fn eligible(&self) -> BTreeSet<String> {
        self.entries
            .iter()
            .filter(|(_, r)| r.is_none())
            .map(|(t, _)| t.clone())
            .collect()
    }

    pub fn reason(&self, ticker: &str) -> Option<Exclusion> {
        self.entries.get(ticker).copied().flatten()
    }
}

/// Applies, in order: universe membership, ST flag, suspension, listing age
/// and trailing mean turnover. Uses no data dated after `date`.
pub fn eligibility_filter(panel: &MarketPanel, date: Date, rules: &EligibilityRules) -> EligibilityReport {
    let members = panel.members(date);
    let end = panel.calendar.partition_point(|d| *d <= date);
    let window = &panel.calendar[end.saturating_sub(rules.liquidity_window)..end];

    let entries = panel
        .listings
        .iter()
        .map(|(ticker, listing)| {
            let bar = listing.bars.get(&date);
            let reason = if !members.contains(ticker) {
                Some(Exclusion::NotInUniverse)
            } else if bar.is_some_and(|b| b.is_st) {
                Some(Exclusion::SpecialTreatment)
            } else if bar.is_none_or(|b| b.suspended) {
                Some(Exclusion::Suspended)
            } else if (date - listing.list_date).num_days() < rules.min_listing_days {
                Some(Exclusion::ListingAge)
            } else {
                let total: f64 = window
                    .iter()
                    .filter_map(|d| listing.bars.get(d))
                    .map(|b| b.turnover)
                    .sum();
                let full = window.len() == rules.liquidity_window;
                let mean = total / rules.liquidity_window.max(1) as f64;
                (!full || mean < rules.liquidity_threshold).then_some(Exclusion::Liquidity)
            };
            (ticker.clone(), reason)
        })
        .collect();
    EligibilityReport { date, entries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Days;
    use alloc::vec;

    fn d(offset: u64) -> Date {
        Date::from_ymd_opt(2021, 3, 1).unwrap() + Days::new(offset)
    }

    fn bar(close: f64, turnover: f64) -> Bar {
        Bar {
            close,
            adj_factor: 1.0,
            turnover,
            suspended: false,
            is_st: false,
        }
    }

    fn liquid_panel(list_date: Date, turnover: f64) -> PanelBuilder {
        let mut b = PanelBuilder::new();
        for i in 0..25 {
            b.add_bar(d(i), "A", list_date, bar(10.0, turnover)).unwrap();
        }
        b.add_member(d(0), "A").unwrap();
        b
    }

    #[test]
    fn minimal_fixture() {
        let mut b = PanelBuilder::new();
        for t in ["A", "B"] {
            for i in 0..3 {
                b.add_bar(d(i), t, d(0), bar(10.0 + i as f64, 1e8)).unwrap();
            }
        }
        let p = b.build();
        assert_eq!(p.calendar().len(), 3);
        assert_eq!(p.tickers().count(), 2);
        assert_eq!(p.tradeable_price("B", d(2)), Some(12.0));
    }

    #[test]
    fn duplicate_and_bad_rows() {
        let mut b = PanelBuilder::new();
        b.add_bar(d(0), "A", d(0), bar(1.0, 0.0)).unwrap();
        assert!(matches!(
            b.add_bar(d(0), "A", d(0), bar(1.0, 0.0)),
            Err(MarketError::DuplicateRow { .. })
        ));
        assert!(matches!(
            b.add_bar(d(1), "A", d(0), bar(0.0, 0.0)),
            Err(MarketError::NonPositivePrice { .. })
        ));
        let suspended = Bar { suspended: true, ..bar(0.0, 0.0) };
        assert!(b.add_bar(d(2), "A", d(0), suspended).is_ok());
        assert!(matches!(
            b.add_bar(d(3), "A", d(1), bar(1.0, 0.0)),
            Err(MarketError::ConflictingListDate { .. })
        ));
    }

    #[test]
    fn split_adjusted_return_is_economic() {
        // Close halves at a 2:1 split while the factor doubles.
        let mut b = PanelBuilder::new();
        b.add_bar(d(0), "A", d(0), Bar { adj_factor: 1.0, ..bar(20.0, 0.0) }).unwrap();
        b.add_bar(d(1), "A", d(0), Bar { adj_factor: 2.0, ..bar(11.0, 0.0) }).unwrap();
        let p = b.build();
        let (_, prices) = p.price_history("A", d(1));
        assert!((prices[1] / prices[0] - 1.1).abs() < 1e-15);
    }

    #[test]
    fn listing_age_rule() {
        let p = liquid_panel(d(24) - Days::new(30), 2e7).build();
        let r = eligibility_filter(&p, d(24), &EligibilityRules::default());
        assert_eq!(r.reason("A"), Some(Exclusion::ListingAge));
        assert_eq!(Exclusion::ListingAge.code(), "listing-age");
    }

    #[test]
    fn liquidity_boundary() {
        let long_ago = d(0) - Days::new(400);
        let p = liquid_panel(long_ago, 9_999_999.0).build();
        let r = eligibility_filter(&p, d(24), &EligibilityRules::default());
        assert_eq!(r.reason("A"), Some(Exclusion::Liquidity));
        let p = liquid_panel(long_ago, 10_000_000.0).build();
        let r = eligibility_filter(&p, d(24), &EligibilityRules::default());
        assert_eq!(r.reason("A"), None);
        assert!(r.eligible().contains("A"));
        // Fewer than 20 trading days of history counts as illiquid.
        let r = eligibility_filter(&p, d(10), &EligibilityRules::default());
        assert_eq!(r.reason("A"), Some(Exclusion::Liquidity));
    }

    #[test]
    fn st_suspended_and_membership() {
        let long_ago = d(0) - Days::new(400);
        let mut b = liquid_panel(long_ago, 2e7);
        for i in 0..25 {
            let st = Bar { is_st: i == 24, ..bar(5.0, 2e7) };
            b.add_bar(d(i), "ST", long_ago, st).unwrap();
            let sus = Bar { suspended: i == 24, ..bar(5.0, 2e7) };
            b.add_bar(d(i), "SUS", long_ago, sus).unwrap();
            b.add_bar(d(i), "OUT", long_ago, bar(5.0, 2e7)).unwrap();
        }
        b.add_member(d(0), "ST").unwrap();
        b.add_member(d(0), "SUS").unwrap();
        let p = b.build();
        let r = eligibility_filter(&p, d(24), &EligibilityRules::default());
        assert_eq!(r.reason("ST"), Some(Exclusion::SpecialTreatment));
        assert_eq!(r.reason("SUS"), Some(Exclusion::Suspended));
        assert_eq!(r.reason("OUT"), Some(Exclusion::NotInUniverse));
        assert_eq!(r.eligible().into_iter().collect::<Vec<_>>(), vec!["A".to_string()]);
        // Suspended names are still marked at their last traded price.
        assert_eq!(p.mark_price("SUS", d(24)), Some(5.0));
        assert_eq!(p.tradeable_price("SUS", d(24)), None);
    }

    #[test]
    fn eligibility_ignores_future_rows() {
        let long_ago = d(0) - Days::new(400);
        let p = liquid_panel(long_ago, 1.5e7).build();
        let cut = d(21);
        let full = eligibility_filter(&p, cut, &EligibilityRules::default());
        let trunc = eligibility_filter(&p.truncated(cut), cut, &EligibilityRules::default());
        assert_eq!(full, trunc);
        assert_eq!(p.members(cut), p.truncated(cut).members(cut));
    }

    #[test]
    fn month_end_schedule() {
        let cal: Vec<Date> = [(1, 30), (1, 31), (2, 1), (2, 26), (3, 1), (3, 2)]
            .iter()
            .map(|(m, day)| Date::from_ymd_opt(2021, *m, *day).unwrap())
            .collect();
        assert_eq!(month_ends(&cal), vec![cal[1], cal[3]]);
    }
}
