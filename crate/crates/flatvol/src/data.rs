//! CSV panels: prices, universe membership, benchmark levels and long-form
//! factor values. Dates are ISO-8601 and every file needs a header row.

use std::collections::BTreeSet;
use std::path::Path;

use flatvol_core::factors::FactorPanel;
use flatvol_core::market::{Bar, MarketPanel, PanelBuilder};
use flatvol_core::synth::{synth_panel, SynthPanel};
use flatvol_core::Date;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{FactorConfig, RunConfig};
use crate::error::{AppError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceRow {
    pub date: Date,
    pub ticker: String,
    pub close: f64,
    pub adj_factor: f64,
    pub turnover_cny: f64,
    pub suspended: u8,
    pub is_st: u8,
    pub list_date: Date,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberRow {
    pub date: Date,
    pub ticker: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub date: Date,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorRow {
    pub date: Date,
    pub ticker: String,
    pub factor: String,
    pub value: f64,
}

/// Every row of a headed CSV file, each tagged with its 1-based record number.
pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<(u64, T)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| AppError::csv(path, e))?;
    let mut rows = Vec::new();
    for (i, row) in reader.deserialize().enumerate() {
        let record = i as u64 + 1;
        let row: T = row.map_err(|e| AppError::Format {
            path: path.to_path_buf(),
            record,
            message: e.to_string(),
        })?;
        rows.push((record, row));
    }
    Ok(rows)
}

fn flag(path: &Path, record: u64, name: &str, value: u8) -> Result<bool> {
    match value {
        0 => Ok(false),
        1 => Ok(true),
        other => Err(AppError::Format {
            path: path.to_path_buf(),
            record,
            message: format!("{name} must be 0 or 1, got {other}"),
        }),
    }
}

fn at<E: Into<flatvol_core::Error>>(path: &Path, record: u64) -> impl FnOnce(E) -> AppError + '_ {
    move |e| AppError::Format {
        path: path.to_path_buf(),
        record,
        message: e.into().to_string(),
    }
}

/// Builds a market panel from the price file plus optional membership and
/// benchmark files.
pub fn load_market(prices: &Path, universe: Option<&Path>, benchmark: Option<&Path>) -> Result<MarketPanel> {
    let mut builder = PanelBuilder::new();
    for (record, row) in read_rows::<PriceRow>(prices)? {
        let bar = Bar {
            close: row.close,
            adj_factor: row.adj_factor,
            turnover: row.turnover_cny,
            suspended: flag(prices, record, "suspended", row.suspended)?,
            is_st: flag(prices, record, "is_st", row.is_st)?,
        };
        builder
            .add_bar(row.date, &row.ticker, row.list_date, bar)
            .map_err(at(prices, record))?;
    }
    if let Some(path) = universe {
        for (record, row) in read_rows::<MemberRow>(path)? {
            builder.add_member(row.date, &row.ticker).map_err(at(path, record))?;
        }
    }
    if let Some(path) = benchmark {
        for (record, row) in read_rows::<BenchmarkRow>(path)? {
            builder.set_benchmark(row.date, row.level).map_err(at(path, record))?;
        }
    }
    Ok(builder.build())
}

/// Long-form factor file. Factor definitions come from `config`, in order of
/// first appearance.
pub fn load_factors(path: &Path, config: &FactorConfig) -> Result<FactorPanel> {
    let rows = read_rows::<FactorRow>(path)?;
    let mut seen = BTreeSet::new();
    let mut defs = Vec::new();
    for (_, row) in &rows {
        if seen.insert(row.factor.clone()) {
            defs.push(config.def_for(&row.factor)?);
        }
    }
    let mut panel = FactorPanel::new(defs)?;
    for (record, row) in rows {
        panel
            .insert(row.date, &row.ticker, &row.factor, row.value)
            .map_err(at(path, record))?;
    }
    Ok(panel)
}

/// Market and factor data for a run.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub market: MarketPanel,
    pub factors: FactorPanel,
}

/// Loads the configured files, or generates the synthetic panel when no
/// price file is configured.
pub fn load_dataset(config: &RunConfig) -> Result<Dataset> {
    let u = &config.universe;
    match &u.prices {
        Some(prices) => {
            let market = load_market(prices, u.universe.as_deref(), u.benchmark.as_deref())?;
            let factors_path = u
                .factors
                .as_deref()
                .ok_or_else(|| AppError::Config("[universe] factors is required when prices is set".into()))?;
            let factors = load_factors(factors_path, &config.factors)?;
            Ok(Dataset { market, factors })
        }
        None => {
            let SynthPanel { market, factors, .. } = synth_panel(&config.synthetic)?;
            Ok(Dataset { market, factors })
        }
    }
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| AppError::csv(path, e))
}

/// Writes rows with a header to `path`.
pub fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = writer(path)?;
    for row in rows {
        w.serialize(row).map_err(|e| AppError::csv(path, e))?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

/// Writes `prices.csv`, `universe.csv`, `benchmark.csv` and `factors.csv`
/// into `dir` in the formats [`load_market`] and [`load_factors`] read.
pub fn write_dataset(dir: &Path, data: &Dataset) -> Result<()> {
    let market = &data.market;
    let mut prices = Vec::new();
    for ticker in market.tickers() {
        let list_date = market.list_date(ticker).expect("listed ticker");
        for (date, bar) in market.bars(ticker) {
            prices.push(PriceRow {
                date,
                ticker: ticker.into(),
                close: bar.close,
                adj_factor: bar.adj_factor,
                turnover_cny: bar.turnover,
                suspended: bar.suspended.into(),
                is_st: bar.is_st.into(),
                list_date,
            });
        }
    }
    prices.sort_by(|a, b| (a.date, &a.ticker).cmp(&(b.date, &b.ticker)));
    write_rows(&dir.join("prices.csv"), prices)?;
    write_rows(
        &dir.join("universe.csv"),
        market.universe_rows().map(|(date, ticker)| MemberRow {
            date,
            ticker: ticker.into(),
        }),
    )?;
    write_rows(
        &dir.join("benchmark.csv"),
        market.benchmark_levels().map(|(date, level)| BenchmarkRow { date, level }),
    )?;
    write_rows(
        &dir.join("factors.csv"),
        data.factors.observations().map(|(date, ticker, factor, value)| FactorRow {
            date,
            ticker: ticker.into(),
            factor: factor.into(),
            value,
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn loads_prices_with_flags() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "prices.csv",
            "date,ticker,close,adj_factor,turnover_cny,suspended,is_st,list_date\n\
             2020-01-02,A,10,1.5,2e7,0,0,2019-01-02\n\
             2020-01-03,A,11,1.5,2e7,1,0,2019-01-02\n",
        );
        let m = load_market(&p, None, None).unwrap();
        let d: Date = "2020-01-03".parse().unwrap();
        assert!(m.bar("A", d).unwrap().suspended);
        assert_eq!(m.mark_price("A", d), Some(15.0));
    }

    #[test]
    fn bad_rows_name_the_record() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "prices.csv",
            "date,ticker,close,adj_factor,turnover_cny,suspended,is_st,list_date\n\
             2020-01-02,A,10,1,2e7,0,0,2019-01-02\n\
             2020-01-03,A,11,1,2e7,2,0,2019-01-02\n",
        );
        match load_market(&p, None, None) {
            Err(AppError::Format { record, message, .. }) => {
                assert_eq!(record, 2);
                assert!(message.contains("suspended"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let p = write(
            dir.path(),
            "dup.csv",
            "date,ticker,close,adj_factor,turnover_cny,suspended,is_st,list_date\n\
             2020-01-02,A,10,1,2e7,0,0,2019-01-02\n\
             2020-01-02,A,10,1,2e7,0,0,2019-01-02\n",
        );
        assert!(matches!(load_market(&p, None, None), Err(AppError::Format { record: 2, .. })));
        let p = write(dir.path(), "bad_date.csv", "date,level\n2020-13-01,5\n");
        let prices = write(
            dir.path(),
            "ok.csv",
            "date,ticker,close,adj_factor,turnover_cny,suspended,is_st,list_date\n2020-01-02,A,10,1,2e7,0,0,2019-01-02\n",
        );
        assert!(matches!(load_market(&prices, None, Some(&p)), Err(AppError::Format { record: 1, .. })));
    }

    #[test]
    fn unknown_factor_needs_configuration() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "factors.csv", "date,ticker,factor,value\n2020-01-02,A,Mystery,1.0\n");
        assert!(matches!(load_factors(&p, &FactorConfig::default()), Err(AppError::Config(_))));
        let mut cfg = FactorConfig::default();
        cfg.directions.insert("Mystery".into(), 1);
        cfg.categories.insert("Mystery".into(), "value".into());
        let panel = load_factors(&p, &cfg).unwrap();
        assert_eq!(panel.value("2020-01-02".parse().unwrap(), "A", "Mystery"), Some(1.0));
    }

    #[test]
    fn synthetic_panel_round_trips_through_files() {
        let mut cfg = RunConfig::default();
        cfg.synthetic.n_tickers = 8;
        cfg.synthetic.n_dates = 70;
        let data = load_dataset(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &data).unwrap();
        let market = load_market(
            &dir.path().join("prices.csv"),
            Some(&dir.path().join("universe.csv")),
            Some(&dir.path().join("benchmark.csv")),
        )
        .unwrap();
        assert_eq!(market, data.market);
        let factors = load_factors(&dir.path().join("factors.csv"), &cfg.factors).unwrap();
        assert_eq!(factors, data.factors);
    }
}
