//! Cross-sectional factor processing: winsorize, rank, average, then divide
//! by a volatility estimate.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::vol::VolMethod;
use crate::Date;

/// Scale turning a median absolute deviation into a normal-consistent σ.
pub const MAD_SCALE: f64 = 1.4826;
pub const DEFAULT_MAD_MULTIPLIER: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FactorError {
    #[error("cross-section has no observed values")]
    EmptyCrossSection,
    #[error("no factor has coverage on {0}")]
    EmptyScores(Date),
    #[error("duplicate factor name {0}")]
    DuplicateFactor(String),
    #[error("unknown factor {0}")]
    UnknownFactor(String),
    #[error("duplicate value for factor {factor}, ticker {ticker} on {date}")]
    DuplicateValue {
        date: Date,
        ticker: String,
        factor: String,
    },
    #[error("non-finite value for factor {factor}, ticker {ticker} on {date}")]
    NonFinite {
        date: Date,
        ticker: String,
        factor: String,
    },
}

/// Whether a higher raw value is better (+1) or worse (−1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Direction {
    Positive,
    Negative,
}

impl Direction {
    pub fn sign(&self) -> f64 {
        match self {
            Direction::Positive => 1.0,
            Direction::Negative => -1.0,
        }
    }

    pub fn from_sign(sign: i64) -> Option<Self> {
        match sign {
            1 => Some(Direction::Positive),
            -1 => Some(Direction::Negative),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Category {
    Value,
    Quality,
    Growth,
    Tech,
}

impl Category {
    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "value" => Some(Category::Value),
            "quality" => Some(Category::Quality),
            "growth" => Some(Category::Growth),
            "tech" => Some(Category::Tech),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorDef {
    pub name: String,
    pub direction: Direction,
    pub category: Category,
}

impl FactorDef {
    pub fn new(name: &str, direction: Direction, category: Category) -> Self {
        Self {
            name: name.into(),
            direction,
            category,
        }
    }

    /// The 18 standard style factors with their categories. Every direction
    /// is +1 except VOL20 and DebtsAssetRatio.
    pub fn standard_set() -> Vec<FactorDef> {
        use Category::*;
        const TABLE: [(&str, Category); 18] = [
            ("EP", Value),
            ("EB", Value),
            ("CFP", Value),
            ("CTOP", Value),
            ("CFO2EV", Quality),
            ("ROE", Quality),
            ("ROA", Quality),
            ("GrossIncomeRatio", Quality),
            ("ARTRate", Quality),
            ("DebtsAssetRatio", Quality),
            ("OperatingRevenueGrowRate", Growth),
            ("NetProfitGrowRate", Growth),
            ("SUE", Growth),
            ("FEARNG", Growth),
            ("FSALESG", Growth),
            ("REVS20", Tech),
            ("VOL20", Tech),
            ("ILLIQUIDITY", Tech),
        ];
        TABLE
            .iter()
            .map(|(name, category)| {
                let direction = match *name {
                    "VOL20" | "DebtsAssetRatio" => Direction::Negative,
                    _ => Direction::Positive,
                };
                FactorDef::new(name, direction, *category)
            })
            .collect()
    }
}

/// Raw factor values per date and ticker. Missing values are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPanel {
    defs: Vec<FactorDef>,
    values: BTreeMap<Date, BTreeMap<String, Vec<Option<f64>>>>,
}

impl FactorPanel {
    pub fn new(defs: Vec<FactorDef>) -> Result<Self, FactorError> {
        for (i, def) in defs.iter().enumerate() {
            if defs[..i].iter().any(|d| d.name == def.name) {
                return Err(FactorError::DuplicateFactor(def.name.clone()));
            }
        }
        Ok(Self {
            defs,
            values: BTreeMap::new(),
        })
    }

    pub fn defs(&self) -> &[FactorDef] {
        &self.defs
    }

    pub fn factor_index(&self, name: &str) -> Option<usize> {
        self.defs.iter().position(|d| d.name == name)
    }

    pub fn insert(&mut self, date: Date, ticker: &str, factor: &str, value: f64) -> Result<(), FactorError> {
        let idx = self
            .factor_index(factor)
            .ok_or_else(|| FactorError::UnknownFactor(factor.into()))?;
        if !value.is_finite() {
            return Err(FactorError::NonFinite {
                date,
                ticker: ticker.into(),
                factor: factor.into(),
            });
        }
        let n = self.defs.len();
        let row = self
            .values
            .entry(date)
            .or_default()
            .entry(ticker.to_string())
            .or_insert_with(|| vec![None; n]);
        if row[idx].is_some() {
            return Err(FactorError::DuplicateValue {
                date,
                ticker: ticker.into(),
                factor: factor.into(),
            });
        }
        row[idx] = Some(value);
        Ok(())
    }

    pub fn dates(&self) -> impl Iterator<Item = Date> + '_ {
        self.values.keys().copied()
    }

    /// Latest factor date on or before `date`.
    pub fn latest_at_or_before(&self, date: Date) -> Option<Date> {
        self.values.range(..=date).next_back().map(|(d, _)| *d)
    }

    pub fn value(&self, date: Date, ticker: &str, factor: &str) -> Option<f64> {
        let idx = self.factor_index(factor)?;
        self.values.get(&date)?.get(ticker)?[idx]
    }

    /// Every observed value as `(date, ticker, factor, value)`, sorted.
    pub fn observations(&self) -> impl Iterator<Item = (Date, &str, &str, f64)> + '_ {
        self.values.iter().flat_map(move |(date, rows)| {
            rows.iter().flat_map(move |(ticker, row)| {
                row.iter().enumerate().filter_map(move |(i, v)| {
                    v.map(|v| (*date, ticker.as_str(), self.defs[i].name.as_str(), v))
                })
            })
        })
    }

    /// Drops every date after `date`.
    pub fn truncated(&self, date: Date) -> Self {
        Self {
            defs: self.defs.clone(),
            values: self
                .values
                .range(..=date)
                .map(|(d, rows)| (*d, rows.clone()))
                .collect(),
        }
    }
}

fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn sorted_observed(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Clamps to `median ± multiplier · 1.4826 · MAD`. A zero MAD leaves the
/// values untouched; missing entries stay missing.
pub fn winsorize(values: &[Option<f64>], multiplier: f64) -> Result<Vec<Option<f64>>, FactorError> {
    let sorted = sorted_observed(values.iter().flatten().copied());
    if sorted.is_empty() {
        return Err(FactorError::EmptyCrossSection);
    }
    let median = median_of_sorted(&sorted);
    let deviations = sorted_observed(sorted.iter().map(|v| libm::fabs(v - median)));
    let mad = MAD_SCALE * median_of_sorted(&deviations);
    if mad == 0.0 {
        return Ok(values.to_vec());
    }
    let (lo, hi) = (median - multiplier * mad, median + multiplier * mad);
    Ok(values.iter().map(|v| v.map(|x| x.clamp(lo, hi))).collect())
}

/// Midrank of each observed value divided by the number observed, after
/// applying the direction sign. Output lies in `(0, 1]`.
pub fn rank_normalize(values: &[Option<f64>], direction: Direction) -> Result<Vec<Option<f64>>, FactorError> {
    let mut observed: Vec<(usize, f64)> = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|x| (i, direction.sign() * x)))
        .collect();
    if observed.is_empty() {
        return Err(FactorError::EmptyCrossSection);
    }
    observed.sort_by(|a, b| a.1.total_cmp(&b.1));
    let m = observed.len() as f64;
    let mut out = vec![None; values.len()];
    let mut start = 0;
    while start < observed.len() {
        let mut end = start + 1;
        while end < observed.len() && observed[end].1 == observed[start].1 {
            end += 1;
        }
        // Ranks start..end are 1-based start+1..=end; their mean is the midrank.
        let midrank = (start + 1 + end) as f64 / 2.0;
        for &(i, _) in &observed[start..end] {
            out[i] = Some(midrank / m);
        }
        start = end;
    }
    Ok(out)
}

/// Composite and (optionally) volatility-adjusted score of one ticker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub composite: f64,
    pub adjusted: Option<f64>,
}

/// Scores for one date.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    /// Date of the data the scores were computed from.
    pub as_of: Date,
    /// Estimator used for the adjustment, once applied.
    pub method: Option<VolMethod>,
    pub entries: BTreeMap<String, Score>,
}

impl ScoreVector {
    /// Builds a vector whose adjusted score equals the given value.
    pub fn from_adjusted(as_of: Date, scores: impl IntoIterator<Item = (String, f64)>) -> Self {
        Self {
            as_of,
            method: None,
            entries: scores
                .into_iter()
                .map(|(t, s)| {
                    (
                        t,
                        Score {
                            composite: s,
                            adjusted: Some(s),
                        },
                    )
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Tickers with an adjusted score.
    pub fn adjusted(&self) -> impl Iterator<Item = (&str, f64)> + '_ {
        self.entries
            .iter()
            .filter_map(|(t, s)| s.adjusted.map(|a| (t.as_str(), a)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScoringOptions {
    pub winsorize: bool,
    pub mad_multiplier: f64,
}

impl Default for ScoringOptions {
    fn default() -> Self {
        Self {
            winsorize: true,
            mad_multiplier: DEFAULT_MAD_MULTIPLIER,
        }
    }
}

/// Equal-weight mean of each ticker's available normalized ranks on `date`.
pub fn composite_score(panel: &FactorPanel, date: Date, opts: &ScoringOptions) -> Result<ScoreVector, FactorError> {
    let rows = panel.values.get(&date).ok_or(FactorError::EmptyScores(date))?;
    let tickers: Vec<&String> = rows.keys().collect();
    let mut sums = vec![0.0; tickers.len()];
    let mut counts = vec![0usize; tickers.len()];
    let mut covered = false;
    for (f, def) in panel.defs.iter().enumerate() {
        let column: Vec<Option<f64>> = tickers.iter().map(|t| rows[*t][f]).collect();
        if column.iter().all(Option::is_none) {
            continue;
        }
        covered = true;
        let column = if opts.winsorize {
            winsorize(&column, opts.mad_multiplier)?
        } else {
            column
        };
        for (i, rank) in rank_normalize(&column, def.direction)?.into_iter().enumerate() {
            if let Some(r) = rank {
                sums[i] += r;
                counts[i] += 1;
            }
        }
    }
    if !covered {
        return Err(FactorError::EmptyScores(date));
    }
    let entries = tickers
        .into_iter()
        .zip(sums.iter().zip(&counts))
        .filter(|(_, (_, c))| **c > 0)
        .map(|(t, (s, c))| {
            (
                t.clone(),
                Score {
                    composite: s / *c as f64,
                    adjusted: None,
                },
            )
        })
        .collect();
    Ok(ScoreVector {
        as_of: date,
        method: None,
        entries,
    })
}

/// `adjusted = composite / σ`. Tickers without a σ keep their composite but
/// get no adjusted score.
pub fn vol_adjust(scores: &ScoreVector, vols: &BTreeMap<String, f64>, method: VolMethod) -> ScoreVector {
    let entries = scores
        .entries
        .iter()
        .map(|(t, s)| {
            let adjusted = vols.get(t).filter(|v| **v > 0.0).map(|v| s.composite / v);
            (
                t.clone(),
                Score {
                    composite: s.composite,
                    adjusted,
                },
            )
        })
        .collect();
    ScoreVector {
        as_of: scores.as_of,
        method: Some(method),
        entries,
    }
}

/// The unadjusted baseline: `adjusted = composite`.
pub fn no_adjust(scores: &ScoreVector) -> ScoreVector {
    ScoreVector {
        as_of: scores.as_of,
        method: Some(VolMethod::NoVol),
        entries: scores
            .entries
            .iter()
            .map(|(t, s)| {
                (
                    t.clone(),
                    Score {
                        composite: s.composite,
                        adjusted: Some(s.composite),
                    },
                )
            })
            .collect(),
    }
}

/// Tickers sorted by descending adjusted score, ties by ticker name.
pub fn ranked(scores: &ScoreVector) -> Vec<(&str, f64)> {
    let mut v: Vec<(&str, f64)> = scores.adjusted().collect();
    v.sort_by(|a, b| match b.1.total_cmp(&a.1) {
        Ordering::Equal => a.0.cmp(b.0),
        o => o,
    });
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn some(v: &[f64]) -> Vec<Option<f64>> {
        v.iter().copied().map(Some).collect()
    }

    fn day(d: u32) -> Date {
        Date::from_ymd_opt(2020, 1, d).unwrap()
    }

    #[test]
    fn winsorize_clamps_outlier() {
        let w = winsorize(&some(&[1.0, 2.0, 3.0, 100.0]), 3.0).unwrap();
        assert_eq!(&w[..3], &some(&[1.0, 2.0, 3.0])[..]);
        assert!((w[3].unwrap() - 6.9478).abs() < 1e-12);
    }

    #[test]
    fn winsorize_zero_mad_and_missing() {
        assert_eq!(winsorize(&some(&[5.0, 5.0, 5.0]), 3.0).unwrap(), some(&[5.0, 5.0, 5.0]));
        let with_gap = vec![Some(1.0), None, Some(2.0), Some(3.0)];
        assert_eq!(winsorize(&with_gap, 3.0).unwrap(), with_gap);
        assert_eq!(winsorize(&[None, None], 3.0), Err(FactorError::EmptyCrossSection));
    }

    #[test]
    fn rank_examples() {
        let r = rank_normalize(&some(&[10.0, 20.0, 30.0]), Direction::Positive).unwrap();
        assert_eq!(r, some(&[1.0 / 3.0, 2.0 / 3.0, 1.0]));
        let r = rank_normalize(&some(&[5.0, 5.0, 7.0]), Direction::Positive).unwrap();
        assert_eq!(r, some(&[0.5, 0.5, 1.0]));
        assert_eq!(rank_normalize(&some(&[42.0]), Direction::Negative).unwrap(), some(&[1.0]));
        let r = rank_normalize(&some(&[10.0, 20.0, 30.0]), Direction::Negative).unwrap();
        assert_eq!(r, some(&[1.0, 2.0 / 3.0, 1.0 / 3.0]));
        let r = rank_normalize(&[Some(1.0), None, Some(0.0)], Direction::Positive).unwrap();
        assert_eq!(r, vec![Some(1.0), None, Some(0.5)]);
    }

    fn two_factor_panel() -> FactorPanel {
        let defs = vec![
            FactorDef::new("F1", Direction::Positive, Category::Value),
            FactorDef::new("F2", Direction::Positive, Category::Tech),
        ];
        let mut p = FactorPanel::new(defs).unwrap();
        for (t, a, b) in [("A", 1.0, 4.0), ("B", 2.0, 3.0), ("C", 3.0, 2.0), ("D", 4.0, 1.0)] {
            p.insert(day(2), t, "F1", a).unwrap();
            p.insert(day(2), t, "F2", b).unwrap();
        }
        p.insert(day(2), "E", "F1", 5.0).unwrap();
        p
    }

    #[test]
    fn composite_is_available_case_mean() {
        let p = two_factor_panel();
        let s = composite_score(&p, day(2), &ScoringOptions::default()).unwrap();
        // F1 ranks over 5 names, F2 over 4.
        assert!((s.entries["A"].composite - (0.2 + 1.0) / 2.0).abs() < 1e-15);
        assert!((s.entries["D"].composite - (0.8 + 0.25) / 2.0).abs() < 1e-15);
        assert_eq!(s.entries["E"].composite, 1.0);
        for score in s.entries.values() {
            assert!(score.composite > 0.0 && score.composite <= 1.0);
        }
    }

    #[test]
    fn composite_errors_without_coverage() {
        let p = two_factor_panel();
        assert_eq!(
            composite_score(&p, day(3), &ScoringOptions::default()),
            Err(FactorError::EmptyScores(day(3)))
        );
    }

    #[test]
    fn composite_symmetric_in_factor_order() {
        let p = two_factor_panel();
        let defs: Vec<FactorDef> = p.defs().iter().rev().cloned().collect();
        let mut q = FactorPanel::new(defs).unwrap();
        for (d, t, f, v) in p.observations() {
            q.insert(d, t, f, v).unwrap();
        }
        let opts = ScoringOptions::default();
        assert_eq!(
            composite_score(&p, day(2), &opts).unwrap(),
            composite_score(&q, day(2), &opts).unwrap()
        );
    }

    #[test]
    fn panel_rejects_bad_input() {
        let mut p = two_factor_panel();
        assert!(matches!(p.insert(day(2), "A", "F1", 1.0), Err(FactorError::DuplicateValue { .. })));
        assert!(matches!(p.insert(day(2), "Z", "F9", 1.0), Err(FactorError::UnknownFactor(_))));
        assert!(matches!(p.insert(day(2), "Z", "F1", f64::NAN), Err(FactorError::NonFinite { .. })));
        let dup = vec![
            FactorDef::new("X", Direction::Positive, Category::Value),
            FactorDef::new("X", Direction::Positive, Category::Value),
        ];
        assert!(FactorPanel::new(dup).is_err());
    }

    #[test]
    fn standard_set_directions() {
        let defs = FactorDef::standard_set();
        assert_eq!(defs.len(), 18);
        let negatives: Vec<&str> = defs
            .iter()
            .filter(|d| d.direction == Direction::Negative)
            .map(|d| d.name.as_str())
            .collect();
        assert_eq!(negatives, vec!["DebtsAssetRatio", "VOL20"]);
    }

    #[test]
    fn vol_adjust_examples() {
        let base = ScoreVector {
            as_of: day(2),
            method: None,
            entries: [
                ("A".to_string(), Score { composite: 0.6, adjusted: None }),
                ("B".to_string(), Score { composite: 0.6, adjusted: None }),
                ("C".to_string(), Score { composite: 0.9, adjusted: None }),
            ]
            .into_iter()
            .collect(),
        };
        let vols: BTreeMap<String, f64> = [("A".to_string(), 0.2), ("B".to_string(), 0.3)].into_iter().collect();
        let adj = vol_adjust(&base, &vols, VolMethod::Maxflat);
        assert!((adj.entries["A"].adjusted.unwrap() - 3.0).abs() < 1e-15);
        assert!(adj.entries["A"].adjusted > adj.entries["B"].adjusted);
        assert_eq!(adj.entries["C"].adjusted, None);
        assert_eq!(ranked(&adj).len(), 2);

        let scaled: BTreeMap<String, f64> = vols.iter().map(|(k, v)| (k.clone(), v * 7.5)).collect();
        let a: Vec<&str> = ranked(&adj).into_iter().map(|x| x.0).collect();
        let scaled_adj = vol_adjust(&base, &scaled, VolMethod::Maxflat);
        let b: Vec<&str> = ranked(&scaled_adj).into_iter().map(|x| x.0).collect();
        assert_eq!(a, b);

        let none = no_adjust(&base);
        assert_eq!(none.entries["C"].adjusted, Some(0.9));
        let ones: BTreeMap<String, f64> = base.entries.keys().map(|k| (k.clone(), 1.0)).collect();
        let unit = vol_adjust(&base, &ones, VolMethod::NoVol);
        assert_eq!(unit, none);
    }

    proptest! {
        #[test]
        fn winsorize_idempotent(v in prop::collection::vec(-1e6f64..1e6, 2..60)) {
            let once = winsorize(&some(&v), 3.0).unwrap();
            let twice = winsorize(&once, 3.0).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn rank_invariant_under_monotone_transform(v in prop::collection::vec(-50f64..50.0, 1..40)) {
            let base = rank_normalize(&some(&v), Direction::Positive).unwrap();
            let transformed: Vec<f64> = v.iter().map(|x| libm::exp(*x / 10.0) * 3.0 + 1.0).collect();
            prop_assert_eq!(base, rank_normalize(&some(&transformed), Direction::Positive).unwrap());
        }

        #[test]
        fn equal_sigma_preserves_composite_order(
            composites in prop::collection::vec(0.01f64..1.0, 2..30),
            sigma in 0.001f64..1.0,
        ) {
            let base = ScoreVector {
                as_of: day(2),
                method: None,
                entries: composites.iter().enumerate()
                    .map(|(i, c)| (alloc::format!("T{i:03}"), Score { composite: *c, adjusted: None }))
                    .collect(),
            };
            let vols = base.entries.keys().map(|k| (k.clone(), sigma)).collect();
            let adj = vol_adjust(&base, &vols, VolMethod::Maxflat);
            for (a, b) in adj.entries.values().zip(adj.entries.values().skip(1)) {
                let ca = a.composite.partial_cmp(&b.composite).unwrap();
                let aa = a.adjusted.unwrap().partial_cmp(&b.adjusted.unwrap()).unwrap();
                prop_assert!(ca == aa || ca == Ordering::Equal || aa == Ordering::Equal);
            }
        }
    }
}
