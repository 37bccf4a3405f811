use flatvol_core::backtest::{run_backtest, Book, CostModel, PortfolioSpec, ScoreStream, Selection, Weighting};
use flatvol_core::factors::{ScoreVector, ScoringOptions};
use flatvol_core::market::{month_ends, Bar, MarketPanel, PanelBuilder};
use flatvol_core::pipeline::score_stream;
use flatvol_core::synth::{synth_panel, SynthConfig};
use flatvol_core::Date;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn book_before(result: &flatvol_core::backtest::BacktestResult, capital: f64, date: Date) -> Book {
    result
        .holdings
        .iter()
        .rev()
        .find(|h| h.date < date)
        .map(|h| h.book.clone())
        .unwrap_or_else(|| Book::with_cash(capital))
}

fn value(book: &Book, panel: &MarketPanel, date: Date) -> f64 {
    book.value(|t| panel.mark_price(t, date))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn books_balance_and_trade_in_lots(
        seed in 0u64..1000,
        top_n in 1usize..12,
        rank_weighted in any::<bool>(),
        capital in 2e5f64..5e6,
    ) {
        let p = synth_panel(&SynthConfig { n_tickers: 20, n_dates: 140, seed, ..SynthConfig::default() }).unwrap();
        let scores = score_stream(&p.market, &p.factors, p.market.calendar(), None, &ScoringOptions::default()).unwrap();
        let spec = PortfolioSpec {
            selection: Selection::TopN(top_n),
            weighting: if rank_weighted { Weighting::RankProportional } else { Weighting::Equal },
            initial_capital: capital,
            ..PortfolioSpec::default()
        };
        let r = run_backtest(&p.market, &scores, &spec).unwrap();
        prop_assert!(!r.holdings.is_empty());
        for h in &r.holdings {
            prop_assert!(h.book.cash >= -1e-9, "cash {} on {}", h.book.cash, h.date);
            prop_assert!(h.book.positions.values().all(|s| *s > 0 && s % spec.lot_size as i64 == 0));
            prop_assert!(h.book.positions.len() <= top_n);
        }
        for (i, d) in r.dates.iter().enumerate() {
            let book = r.holdings.iter().rev().find(|h| h.date <= *d).map(|h| h.book.clone())
                .unwrap_or_else(|| Book::with_cash(capital));
            prop_assert!((value(&book, &p.market, *d) - r.nav[i]).abs() < 1e-6);
        }
        let paid: f64 = r.trades.iter().map(|t| t.commission + t.slippage).sum();
        prop_assert!((paid - r.total_costs()).abs() < 1e-6);

        // Each snapshot is the previous one plus that day's trades.
        for h in &r.holdings {
            let mut book = book_before(&r, capital, h.date);
            for t in r.trades.iter().filter(|t| t.date == h.date) {
                *book.positions.entry(t.ticker.clone()).or_insert(0) += t.shares;
                book.cash -= t.shares.signum() as f64 * t.notional + t.commission;
            }
            book.positions.retain(|_, s| *s != 0);
            prop_assert_eq!(&book.positions, &h.book.positions);
            prop_assert!((book.cash - h.book.cash).abs() < 1e-6);
        }
    }

    #[test]
    fn free_trading_preserves_value(seed in 0u64..1000, top_n in 1usize..12) {
        let p = synth_panel(&SynthConfig { n_tickers: 20, n_dates: 140, seed, ..SynthConfig::default() }).unwrap();
        let scores = score_stream(&p.market, &p.factors, p.market.calendar(), None, &ScoringOptions::default()).unwrap();
        let spec = PortfolioSpec {
            selection: Selection::TopN(top_n),
            costs: CostModel::zero(),
            ..PortfolioSpec::default()
        };
        let r = run_backtest(&p.market, &scores, &spec).unwrap();
        for h in &r.holdings {
            let i = r.dates.iter().position(|d| *d == h.date).unwrap();
            let before = value(&book_before(&r, spec.initial_capital, h.date), &p.market, h.date);
            prop_assert!((before - r.nav[i]).abs() < 1e-6 * before, "{} vs {}", before, r.nav[i]);
        }
    }
}

#[test]
fn costs_only_lower_the_curve() {
    let p = synth_panel(&SynthConfig {
        n_tickers: 30,
        n_dates: 200,
        seed: 3,
        ..SynthConfig::default()
    })
    .unwrap();
    let scores = score_stream(&p.market, &p.factors, p.market.calendar(), None, &ScoringOptions::default()).unwrap();
    let free = PortfolioSpec {
        selection: Selection::TopN(10),
        costs: CostModel::zero(),
        ..PortfolioSpec::default()
    };
    let paid = PortfolioSpec {
        costs: CostModel::default(),
        ..free.clone()
    };
    let a = run_backtest(&p.market, &scores, &free).unwrap();
    let b = run_backtest(&p.market, &scores, &paid).unwrap();
    assert_eq!(a.total_costs(), 0.0);
    assert!(b.total_costs() > 0.0);
    assert!(b.nav.last().unwrap() < a.nav.last().unwrap());
}

#[test]
fn buckets_cover_the_topn_cases() {
    let p = synth_panel(&SynthConfig {
        n_tickers: 30,
        n_dates: 150,
        seed: 5,
        ..SynthConfig::default()
    })
    .unwrap();
    let scores = score_stream(&p.market, &p.factors, p.market.calendar(), None, &ScoringOptions::default()).unwrap();
    let whole = PortfolioSpec {
        selection: Selection::TopN(30),
        ..PortfolioSpec::default()
    };
    let bucket = PortfolioSpec {
        selection: Selection::Bucket { lo: 0, hi: 30 },
        ..whole.clone()
    };
    let a = run_backtest(&p.market, &scores, &whole).unwrap();
    let b = run_backtest(&p.market, &scores, &bucket).unwrap();
    assert_eq!(a.nav, b.nav);
    assert_eq!(a.trades, b.trades);

    let empty = PortfolioSpec {
        selection: Selection::Bucket { lo: 50, hi: 100 },
        ..whole
    };
    let e = run_backtest(&p.market, &scores, &empty).unwrap();
    assert!(e.trades.is_empty());
    assert!(e.nav.iter().all(|v| *v == empty.initial_capital));
}

/// Equal-weight index of `k` random-walk stocks, rebalanced at each month end.
fn index_panel(k: usize, n: usize) -> MarketPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let shock = Normal::new(0.0, 0.02).unwrap();
    let start = Date::from_ymd_opt(2020, 1, 1).unwrap();
    let calendar: Vec<Date> = (0..)
        .map(|i| start + chrono::Days::new(i))
        .filter(|d| !matches!(chrono::Datelike::weekday(d), chrono::Weekday::Sat | chrono::Weekday::Sun))
        .take(n)
        .collect();
    let mut prices = vec![vec![0.0; n]; k];
    for (i, series) in prices.iter_mut().enumerate() {
        series[0] = 10.0 + 5.0 * i as f64;
        for t in 1..n {
            series[t] = series[t - 1] * f64::exp(shock.sample(&mut rng));
        }
    }
    let rebalances = month_ends(&calendar);
    let mut builder = PanelBuilder::new();
    let list_date = Date::from_ymd_opt(2015, 1, 5).unwrap();
    let mut level = 1000.0;
    let mut shares: Vec<f64> = prices.iter().map(|p| level / k as f64 / p[0]).collect();
    for (t, d) in calendar.iter().enumerate() {
        for (i, series) in prices.iter().enumerate() {
            let bar = Bar { close: series[t], adj_factor: 1.0, turnover: 5e7, suspended: false, is_st: false };
            builder.add_bar(*d, &format!("S{i}"), list_date, bar).unwrap();
        }
        level = shares.iter().zip(&prices).map(|(s, p)| s * p[t]).sum();
        builder.set_benchmark(*d, level).unwrap();
        if rebalances.contains(d) {
            shares = prices.iter().map(|p| level / k as f64 / p[t]).collect();
        }
    }
    builder.build()
}

#[test]
fn holding_the_whole_index_tracks_the_benchmark() {
    let k = 8;
    let panel = index_panel(k, 160);
    let schedule = month_ends(panel.calendar());
    let start = schedule[0];
    let scores: ScoreStream = schedule
        .iter()
        .map(|d| {
            let as_of = panel.previous_date(*d).unwrap();
            (*d, ScoreVector::from_adjusted(as_of, (0..k).map(|i| (format!("S{i}"), 1.0))))
        })
        .collect();
    let spec = PortfolioSpec {
        selection: Selection::TopN(k),
        costs: CostModel::zero(),
        initial_capital: 1e10,
        start: Some(start),
        ..PortfolioSpec::default()
    };
    let r = run_backtest(&panel, &scores, &spec).unwrap();
    let bench = r.complete_benchmark().unwrap();
    assert_eq!(r.holdings.len(), schedule.len());
    for (nav, b) in r.nav.iter().zip(&bench) {
        assert!((nav / b - 1.0).abs() < 1e-5, "{nav} vs {b}");
    }
}
