//! The five subcommands. Each writes plain CSV/JSON into the output directory
//! and finishes with the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use flatvol_core::backtest::{run_backtest, validate_boundaries, BacktestResult, Selection};
use flatvol_core::factors::ScoreVector;
use flatvol_core::filter::{discrete_magnitude, discretize, magnitude_response, prewarp};
use flatvol_core::market::MarketPanel;
use flatvol_core::metrics::{max_drawdown, sharpe, total_return, MetricsReport};
use flatvol_core::pipeline::{common_start, panel_vols, run_method, score_stream, MethodRun};
use flatvol_core::state_space::{cascade_realization, design_weights, inspect, impulse_weights};
use flatvol_core::vol::{ewma_lag_weights, pwma_lag_weights, VolMethod};
use flatvol_core::Date;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{LoadedConfig, RunConfig};
use crate::data::{load_dataset, write_rows, Dataset};
use crate::error::{AppError, Result};
use crate::manifest::{input_digests, verify_inputs, Manifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Design,
    Vol,
    Compare,
    Quantile,
    Benchmark,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Design => "design",
            Command::Vol => "vol",
            Command::Compare => "compare",
            Command::Quantile => "quantile",
            Command::Benchmark => "benchmark",
        }
    }
}

/// Runs `command`, writes its outputs and the manifest, and returns the
/// output directory.
pub fn execute(command: Command, loaded: &LoadedConfig) -> Result<PathBuf> {
    let config = &loaded.config;
    let inputs = input_digests(config)?;
    if let Some(expected) = &loaded.expected_inputs {
        verify_inputs(expected, &inputs)?;
    }
    let out = config.report.out_dir.clone();
    fs::create_dir_all(&out).map_err(|e| AppError::io(&out, e))?;
    let mut outputs = match command {
        Command::Design => design(config, &out)?,
        Command::Vol => vol(config, &out)?,
        Command::Compare => compare(config, &out)?,
        Command::Quantile => quantile(config, &out)?,
        Command::Benchmark => benchmark(config, &out)?,
    };
    outputs.sort();
    Manifest {
        command: command.name().into(),
        config: config.clone(),
        inputs,
        outputs,
    }
    .write(&out)?;
    Ok(out)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| AppError::io(path, e))
}

#[derive(Serialize)]
struct WeightRow {
    lag: usize,
    maxflat: f64,
    ewma: f64,
    pwma: f64,
}

#[derive(Serialize)]
struct ResponseRow {
    frequency: f64,
    magnitude: f64,
    analog_magnitude: f64,
}

#[derive(Serialize)]
struct FilterSummary {
    order: usize,
    cutoff: f64,
    b: Vec<f64>,
    a: Vec<f64>,
    feedthrough: f64,
    truncation: usize,
    raw_sum: f64,
    negative_weights: usize,
    first_negative_lag: Option<usize>,
}

/// Lag weights of the three decaying estimators side by side, the
/// frequency response and the filter coefficients.
pub fn design(config: &RunConfig, out: &Path) -> Result<Vec<String>> {
    let spec = config.filter_spec()?;
    let maxflat = design_weights(&spec, config.filter.weight_mode, &config.truncation())?;
    let rows = maxflat.truncation_length().max(config.vol.pwma_lags);
    let ewma = ewma_lag_weights(config.vol.ewma_lambda, rows)?;
    let pwma = pwma_lag_weights(config.vol.pwma_alpha, config.vol.pwma_lags)?;
    write_rows(
        &out.join("weights.csv"),
        (1..=rows).map(|lag| WeightRow {
            lag,
            maxflat: maxflat.lag(lag),
            ewma: ewma.lag(lag),
            pwma: pwma.lag(lag),
        }),
    )?;

    let filter = discretize(&spec)?;
    let warped_cutoff = prewarp(spec.cutoff());
    let points = config.filter.response_points.max(2);
    write_rows(
        &out.join("response.csv"),
        (0..points).map(|i| {
            // Stop just short of Nyquist, where the prewarp map diverges.
            let frequency = 0.5 * i as f64 / (points - 1) as f64;
            let analog_magnitude = if i + 1 == points {
                0.0
            } else {
                magnitude_response(spec.order(), prewarp(frequency) / warped_cutoff)
            };
            ResponseRow {
                frequency,
                magnitude: discrete_magnitude(&filter, frequency),
                analog_magnitude,
            }
        }),
    )?;

    let model = cascade_realization(&filter)?;
    let raw = impulse_weights(&model, maxflat.truncation_length())?;
    let report = inspect(raw.weights());
    write_json(
        &out.join("filter.json"),
        &FilterSummary {
            order: spec.order(),
            cutoff: spec.cutoff(),
            b: filter.b().to_vec(),
            a: filter.a().to_vec(),
            feedthrough: model.d(),
            truncation: maxflat.truncation_length(),
            raw_sum: raw.raw_sum(),
            negative_weights: report.negative_count,
            first_negative_lag: report.first_negative.map(|(lag, _)| lag),
        },
    )?;
    Ok(vec!["filter.json".into(), "response.csv".into(), "weights.csv".into()])
}

#[derive(Serialize)]
struct VolRow<'a> {
    date: Date,
    ticker: &'a str,
    method: &'a str,
    sigma: f64,
}

/// Long-form volatility panel for `[vol] method`.
pub fn vol(config: &RunConfig, out: &Path) -> Result<Vec<String>> {
    let data = load_dataset(config)?;
    let settings = config.vol_settings()?;
    let method = config.vol.method;
    let vols = panel_vols(&data.market, &settings.estimator(method)?, &settings)?;
    let mut rows: Vec<VolRow> = vols
        .iter()
        .flat_map(|(ticker, series)| {
            series.defined().map(move |(date, sigma)| VolRow {
                date,
                ticker,
                method: method.key(),
                sigma,
            })
        })
        .collect();
    rows.sort_by(|a, b| (a.date, a.ticker).cmp(&(b.date, b.ticker)));
    write_rows(&out.join("vol.csv"), rows)?;
    Ok(vec!["vol.csv".into()])
}

#[derive(Serialize)]
struct EquityRow {
    date: Date,
    nav: f64,
    benchmark_nav: Option<f64>,
}

#[derive(Serialize)]
struct TradeRow<'a> {
    date: Date,
    ticker: &'a str,
    shares: i64,
    price: f64,
    exec_price: f64,
    notional: f64,
    commission: f64,
    slippage: f64,
}

#[derive(Serialize)]
struct HoldingRow<'a> {
    date: Date,
    ticker: &'a str,
    shares: i64,
    value: f64,
}

#[derive(Serialize)]
struct ScoreRow<'a> {
    date: Date,
    ticker: &'a str,
    composite: f64,
    adjusted: Option<f64>,
    method: &'a str,
}

/// Ticker written for the cash line of `holdings.csv`.
pub const CASH: &str = "CASH";

fn write_run(dir: &Path, market: &MarketPanel, result: &BacktestResult) -> Result<Vec<&'static str>> {
    fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    write_rows(
        &dir.join("equity_curve.csv"),
        result.dates.iter().zip(&result.nav).zip(&result.benchmark_nav).map(|((date, nav), bench)| EquityRow {
            date: *date,
            nav: *nav,
            benchmark_nav: *bench,
        }),
    )?;
    write_rows(
        &dir.join("trades.csv"),
        result.trades.iter().map(|t| TradeRow {
            date: t.date,
            ticker: &t.ticker,
            shares: t.shares,
            price: t.price,
            exec_price: t.exec_price,
            notional: t.notional,
            commission: t.commission,
            slippage: t.slippage,
        }),
    )?;
    let mut holdings = Vec::new();
    for snap in &result.holdings {
        for (ticker, shares) in &snap.book.positions {
            let price = market.mark_price(ticker, snap.date).unwrap_or(0.0);
            holdings.push(HoldingRow {
                date: snap.date,
                ticker,
                shares: *shares,
                value: *shares as f64 * price,
            });
        }
        holdings.push(HoldingRow {
            date: snap.date,
            ticker: CASH,
            shares: 0,
            value: snap.book.cash,
        });
    }
    write_rows(&dir.join("holdings.csv"), holdings)?;
    Ok(vec!["equity_curve.csv", "holdings.csv", "trades.csv"])
}

fn write_scores(path: &Path, scores: &BTreeMap<Date, ScoreVector>) -> Result<()> {
    write_rows(
        path,
        scores.values().flat_map(|v| {
            let method = v.method.map(|m| m.key()).unwrap_or("");
            v.entries.iter().map(move |(ticker, s)| ScoreRow {
                date: v.as_of,
                ticker,
                composite: s.composite,
                adjusted: s.adjusted,
                method,
            })
        }),
    )
}

fn report(config: &RunConfig, result: &BacktestResult) -> Result<MetricsReport> {
    let benchmark = result.complete_benchmark();
    Ok(MetricsReport::compute(
        &result.dates,
        &result.nav,
        benchmark.as_deref(),
        config.backtest.periodicity,
    )?)
}

fn start_for(config: &RunConfig, data: &Dataset, methods: &[VolMethod]) -> Result<Option<Date>> {
    let configured = config.backtest.start;
    if !config.backtest.common_start {
        return Ok(configured);
    }
    let settings = config.vol_settings()?;
    let warm = common_start(&data.market, methods, &settings)?.ok_or_else(|| {
        AppError::Config("the panel is shorter than the volatility warm-up of the requested methods".into())
    })?;
    Ok(Some(configured.map_or(warm, |s| s.max(warm))))
}

#[derive(Serialize)]
struct CompareRow<'a> {
    method: &'a str,
    total_return: f64,
    sharpe: f64,
    alpha: Option<f64>,
    beta: Option<f64>,
    max_drawdown: f64,
    n_periods: usize,
    periodicity: &'a str,
    total_return_pct: f64,
    alpha_pct: Option<f64>,
}

/// The six-method comparison with identical selection rules. Any failing
/// method aborts the whole comparison.
pub fn compare(config: &RunConfig, out: &Path) -> Result<Vec<String>> {
    let data = load_dataset(config)?;
    let methods: Vec<VolMethod> = VolMethod::ALL
        .into_iter()
        .filter(|m| config.backtest.methods.contains(m))
        .collect();
    if methods.is_empty() {
        return Err(AppError::Config("[backtest] methods is empty".into()));
    }
    let settings = config.vol_settings()?;
    let mut spec = config.portfolio(Selection::TopN(config.backtest.top_n));
    spec.start = start_for(config, &data, &methods)?;
    let scoring = config.factors.scoring();

    let runs: Vec<MethodRun> = methods
        .par_iter()
        .map(|m| run_method(&data.market, &data.factors, *m, &settings, &scoring, &spec).map_err(AppError::from))
        .collect::<Result<_>>()?;
    let reports: Vec<MetricsReport> = runs.iter().map(|r| report(config, &r.result)).collect::<Result<_>>()?;

    let mut outputs = Vec::new();
    for (run, metrics) in runs.iter().zip(&reports) {
        let key = run.method.key();
        let dir = out.join(key);
        for name in write_run(&dir, &data.market, &run.result)? {
            outputs.push(format!("{key}/{name}"));
        }
        write_scores(&dir.join("scores.csv"), &run.scores)?;
        write_json(&dir.join("metrics.json"), metrics)?;
        outputs.push(format!("{key}/scores.csv"));
        outputs.push(format!("{key}/metrics.json"));
    }

    write_rows(
        &out.join("compare.csv"),
        runs.iter().zip(&reports).map(|(run, m)| CompareRow {
            method: run.method.label(),
            total_return: m.total_return,
            sharpe: m.sharpe,
            alpha: m.alpha,
            beta: m.beta,
            max_drawdown: m.max_drawdown,
            n_periods: m.n_periods,
            periodicity: m.periodicity.key(),
            total_return_pct: 100.0 * m.total_return,
            alpha_pct: m.alpha.map(|a| 100.0 * a),
        }),
    )?;
    let labels: Vec<&str> = runs.iter().map(|r| r.method.label()).collect();
    write_curves(&out.join("equity_curves.csv"), &labels, &runs.iter().map(|r| &r.result).collect::<Vec<_>>())?;
    outputs.push("compare.csv".into());
    outputs.push("equity_curves.csv".into());
    Ok(outputs)
}

/// Wide NAV table: one column per run plus the benchmark.
fn write_curves(path: &Path, labels: &[&str], results: &[&BacktestResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| AppError::csv(path, e))?;
    let mut header = vec!["date"];
    header.extend_from_slice(labels);
    header.push("benchmark");
    w.write_record(&header).map_err(|e| AppError::csv(path, e))?;
    let Some(first) = results.first() else {
        return w.flush().map_err(|e| AppError::io(path, e));
    };
    for (i, date) in first.dates.iter().enumerate() {
        let mut record = vec![date.to_string()];
        record.extend(results.iter().map(|r| r.nav[i].to_string()));
        record.push(first.benchmark_nav[i].map(|b| b.to_string()).unwrap_or_default());
        w.write_record(&record).map_err(|e| AppError::csv(path, e))?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

#[derive(Serialize)]
struct BucketRow {
    bucket: String,
    lo: usize,
    hi: usize,
    total_return: f64,
    sharpe: Option<f64>,
    max_drawdown: f64,
}

/// One backtest per rank bucket, all driven by the same score stream.
pub fn quantile(config: &RunConfig, out: &Path) -> Result<Vec<String>> {
    let boundaries = &config.quantile.boundaries;
    validate_boundaries(boundaries)?;
    let data = load_dataset(config)?;
    let method = config.quantile.method.unwrap_or(config.vol.method);
    let settings = config.vol_settings()?;
    let start = start_for(config, &data, &[method])?;
    let scoring = config.factors.scoring();

    let mut base = config.portfolio(Selection::TopN(1));
    base.start = start;
    let dates = flatvol_core::pipeline::backtest_dates(&data.market, &base);
    let scores = if method == VolMethod::NoVol {
        score_stream(&data.market, &data.factors, &dates, None, &scoring)?
    } else {
        let vols = panel_vols(&data.market, &settings.estimator(method)?, &settings)?;
        score_stream(&data.market, &data.factors, &dates, Some((&vols, method)), &scoring)?
    };

    let buckets: Vec<(usize, usize)> = boundaries.windows(2).map(|w| (w[0], w[1])).collect();
    let results: Vec<BacktestResult> = buckets
        .par_iter()
        .map(|&(lo, hi)| {
            let mut spec = base.clone();
            spec.selection = Selection::Bucket { lo, hi };
            run_backtest(&data.market, &scores, &spec).map_err(AppError::from)
        })
        .collect::<Result<_>>()?;

    let labels: Vec<String> = buckets.iter().map(|(lo, hi)| format!("bucket_{lo}_{hi}")).collect();
    let label_refs: Vec<&str> = labels.iter().map(String::as_str).collect();
    write_curves(&out.join("quantile_curves.csv"), &label_refs, &results.iter().collect::<Vec<_>>())?;
    let mut rows = Vec::new();
    for ((label, (lo, hi)), r) in labels.iter().zip(&buckets).zip(&results) {
        let sampled = flatvol_core::metrics::resample(&r.dates, &r.nav, config.backtest.periodicity);
        rows.push(BucketRow {
            bucket: label.clone(),
            lo: *lo,
            hi: *hi,
            total_return: total_return(&r.nav)?,
            sharpe: sharpe(&sampled, config.backtest.periodicity).ok(),
            max_drawdown: max_drawdown(&r.nav)?,
        });
    }
    write_rows(&out.join("quantile_summary.csv"), rows)?;
    Ok(vec!["quantile_curves.csv".into(), "quantile_summary.csv".into()])
}

/// Portfolio against the index: metrics with alpha and beta, and both NAV
/// curves.
pub fn benchmark(config: &RunConfig, out: &Path) -> Result<Vec<String>> {
    let data = load_dataset(config)?;
    if !data.market.has_benchmark() {
        return Err(AppError::Alignment("no benchmark levels were loaded".into()));
    }
    let method = config.vol.method;
    let settings = config.vol_settings()?;
    let mut spec = config.portfolio(Selection::TopN(config.backtest.top_n));
    spec.start = start_for(config, &data, &[method])?;
    let run = run_method(&data.market, &data.factors, method, &settings, &config.factors.scoring(), &spec)?;
    let result = &run.result;
    if let Some(i) = result.benchmark_nav.iter().position(Option::is_none) {
        return Err(AppError::Alignment(format!(
            "benchmark has no level on {} inside the backtest range",
            result.dates[i]
        )));
    }
    let metrics = report(config, result)?;
    let mut outputs: Vec<String> = write_run(out, &data.market, result)?.into_iter().map(String::from).collect();
    write_json(&out.join("metrics.json"), &metrics)?;
    outputs.push("metrics.json".into());
    Ok(outputs)
}
