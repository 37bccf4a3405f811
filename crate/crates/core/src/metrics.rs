//! Report statistics for NAV series.

use alloc::vec::Vec;

use chrono::Datelike;

use crate::Date;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("need at least {needed} observations, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("NAV must be positive and finite, got {value} at index {index}")]
    NonPositiveNav { index: usize, value: f64 },
    #[error("undefined Sharpe ratio: period returns have zero variance")]
    UndefinedSharpe,
    #[error("undefined beta: benchmark returns have zero variance")]
    UndefinedBeta,
    #[error("portfolio and benchmark are not aligned ({portfolio} vs {benchmark} observations)")]
    Misaligned { portfolio: usize, benchmark: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Periodicity {
    #[default]
    Daily,
    Monthly,
}

impl Periodicity {
    pub fn periods_per_year(self) -> f64 {
        match self {
            Periodicity::Daily => 252.0,
            Periodicity::Monthly => 12.0,
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Periodicity::Daily => "daily",
            Periodicity::Monthly => "monthly",
        }
    }
}

fn check_nav(nav: &[f64], needed: usize) -> Result<(), MetricsError> {
    if nav.len() < needed {
        return Err(MetricsError::TooShort {
            needed,
            got: nav.len(),
        });
    }
    match nav.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        Some(index) => Err(MetricsError::NonPositiveNav {
            index,
            value: nav[index],
        }),
        None => Ok(()),
    }
}

/// `nav_end / nav_start − 1`.
pub fn total_return(nav: &[f64]) -> Result<f64, MetricsError> {
    check_nav(nav, 2)?;
    Ok(nav[nav.len() - 1] / nav[0] - 1.0)
}

/// Simple returns between consecutive NAV points.
pub fn period_returns(nav: &[f64]) -> Vec<f64> {
    nav.windows(2).map(|w| w[1] / w[0] - 1.0).collect()
}

/// Keeps the first point and the last point of every calendar month.
pub fn resample(dates: &[Date], values: &[f64], periodicity: Periodicity) -> Vec<f64> {
    match periodicity {
        Periodicity::Daily => values.to_vec(),
        Periodicity::Monthly => {
            let mut out = Vec::new();
            for (i, (d, v)) in dates.iter().zip(values).enumerate() {
                let month_end = dates
                    .get(i + 1)
                    .is_none_or(|next| (next.year(), next.month()) != (d.year(), d.month()));
                if i == 0 || month_end {
                    out.push(*v);
                }
            }
            out
        }
    }
}

/// Annualized mean over sample standard deviation of period returns,
/// risk-free rate zero.
pub fn sharpe(nav: &[f64], periodicity: Periodicity) -> Result<f64, MetricsError> {
    check_nav(nav, 4)?;
    let mut count = 0.0;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for r in period_returns(nav) {
        count += 1.0;
        let delta = r - mean;
        mean += delta / count;
        m2 += delta * (r - mean);
    }
    let sd = libm::sqrt(m2 / (count - 1.0));
    if !(sd > 0.0) || sd < 1e-15 * libm::fabs(mean) {
        return Err(MetricsError::UndefinedSharpe);
    }
    Ok(mean / sd * libm::sqrt(periodicity.periods_per_year()))
}

/// OLS of portfolio period returns on benchmark period returns.
/// Returns `(annualized intercept, slope)`.
pub fn capm_alpha_beta(
    portfolio: &[f64],
    benchmark: &[f64],
    periodicity: Periodicity,
) -> Result<(f64, f64), MetricsError> {
    if portfolio.len() != benchmark.len() {
        return Err(MetricsError::Misaligned {
            portfolio: portfolio.len(),
            benchmark: benchmark.len(),
        });
    }
    check_nav(portfolio, 4)?;
    check_nav(benchmark, 4)?;
    let rp = period_returns(portfolio);
    let rb = period_returns(benchmark);
    let n = rp.len() as f64;
    let mean_p = rp.iter().sum::<f64>() / n;
    let mean_b = rb.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (p, b) in rp.iter().zip(&rb) {
        sxy += (b - mean_b) * (p - mean_p);
        sxx += (b - mean_b) * (b - mean_b);
    }
    if !(sxx > 0.0) {
        return Err(MetricsError::UndefinedBeta);
    }
    let beta = sxy / sxx;
    let alpha = mean_p - beta * mean_b;
    Ok((alpha * periodicity.periods_per_year(), beta))
}

/// Largest peak-to-trough loss as a fraction of the peak.
pub fn max_drawdown(nav: &[f64]) -> Result<f64, MetricsError> {
    check_nav(nav, 1)?;
    let mut peak = nav[0];
    let mut worst = 0.0_f64;
    for v in nav {
        peak = peak.max(*v);
        worst = worst.max(1.0 - v / peak);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsReport {
    pub total_return: f64,
    pub sharpe: f64,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub max_drawdown: f64,
    pub n_periods: usize,
    pub periodicity: Periodicity,
}

impl MetricsReport {
    /// Computes every statistic at the requested frequency. Alpha and beta
    /// are left empty without a benchmark.
    pub fn compute(
        dates: &[Date],
        nav: &[f64],
        benchmark: Option<&[f64]>,
        periodicity: Periodicity,
    ) -> Result<Self, MetricsError> {
        if dates.len() != nav.len() {
            return Err(MetricsError::Misaligned {
                portfolio: nav.len(),
                benchmark: dates.len(),
            });
        }
        let sampled = resample(dates, nav, periodicity);
        let (alpha, beta) = match benchmark {
            Some(b) => {
                if b.len() != nav.len() {
                    return Err(MetricsError::Misaligned {
                        portfolio: nav.len(),
                        benchmark: b.len(),
                    });
                }
                let (a, b) = capm_alpha_beta(&sampled, &resample(dates, b, periodicity), periodicity)?;
                (Some(a), Some(b))
            }
            None => (None, None),
        };
        Ok(Self {
            total_return: total_return(nav)?,
            sharpe: sharpe(&sampled, periodicity)?,
            alpha,
            beta,
            max_drawdown: max_drawdown(nav)?,
            n_periods: sampled.len().saturating_sub(1),
            periodicity,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn nav_from(returns: &[f64]) -> Vec<f64> {
        let mut nav = vec![100.0];
        for r in returns {
            let last = *nav.last().unwrap();
            nav.push(last * (1.0 + r));
        }
        nav
    }

    #[test]
    fn total_return_examples() {
        assert!((total_return(&[100.0, 342.86]).unwrap() - 2.4286).abs() < 1e-12);
        assert_eq!(total_return(&[100.0, 100.0]).unwrap(), 0.0);
        assert_eq!(total_return(&[100.0, 50.0]).unwrap(), -0.5);
        assert!(matches!(total_return(&[100.0, 0.0]), Err(MetricsError::NonPositiveNav { index: 1, .. })));
        assert!(total_return(&[100.0]).is_err());
    }

    #[test]
    fn sharpe_examples() {
        let alternating: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 0.01 } else { -0.01 }).collect();
        let s = sharpe(&nav_from(&alternating), Periodicity::Daily).unwrap();
        assert!(s.abs() < 0.05, "{s}");
        let constant = nav_from(&[0.01; 20]);
        assert_eq!(sharpe(&constant, Periodicity::Daily), Err(MetricsError::UndefinedSharpe));
        assert_eq!(sharpe(&[1.0; 10], Periodicity::Daily), Err(MetricsError::UndefinedSharpe));
    }

    #[test]
    fn capm_examples() {
        let rb = [0.01, -0.02, 0.015, 0.003, -0.007, 0.02];
        let bench = nav_from(&rb);
        let (a, b) = capm_alpha_beta(&bench, &bench, Periodicity::Daily).unwrap();
        assert!(a.abs() < 1e-10 && (b - 1.0).abs() < 1e-10);

        let rp: Vec<f64> = rb.iter().map(|r| 0.01 + 1.5 * r).collect();
        let (a, b) = capm_alpha_beta(&nav_from(&rp), &bench, Periodicity::Monthly).unwrap();
        assert!((b - 1.5).abs() < 1e-10);
        assert!((a - 0.12).abs() < 1e-10);

        let cash = vec![100.0; bench.len()];
        assert_eq!(capm_alpha_beta(&cash, &bench, Periodicity::Daily).unwrap(), (0.0, 0.0));
        assert_eq!(
            capm_alpha_beta(&bench, &cash, Periodicity::Daily),
            Err(MetricsError::UndefinedBeta)
        );
        assert!(matches!(
            capm_alpha_beta(&bench[1..], &bench, Periodicity::Daily),
            Err(MetricsError::Misaligned { .. })
        ));
    }

    #[test]
    fn drawdown_examples() {
        assert_eq!(max_drawdown(&[100.0, 110.0, 120.0]).unwrap(), 0.0);
        assert_eq!(max_drawdown(&[100.0, 50.0, 75.0]).unwrap(), 0.5);
        assert_eq!(max_drawdown(&[100.0, 100.0]).unwrap(), 0.0);
    }

    #[test]
    fn monthly_resampling_keeps_month_ends() {
        let dates: Vec<Date> = ["2020-01-30", "2020-01-31", "2020-02-03", "2020-02-28", "2020-03-02"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(resample(&dates, &v, Periodicity::Monthly), vec![1.0, 2.0, 4.0, 5.0]);
        assert_eq!(resample(&dates, &v, Periodicity::Daily), v.to_vec());
    }

    proptest! {
        #[test]
        fn self_regression_is_identity(rs in proptest::collection::vec(-0.05f64..0.05, 5..60)) {
            let nav = nav_from(&rs);
            if let Ok((a, b)) = capm_alpha_beta(&nav, &nav, Periodicity::Daily) {
                prop_assert!(a.abs() < 1e-10);
                prop_assert!((b - 1.0).abs() < 1e-10);
            }
        }

        #[test]
        fn total_return_ignores_the_path(mid in proptest::collection::vec(1.0f64..500.0, 0..20), end in 1.0f64..500.0) {
            let mut nav = vec![100.0];
            nav.extend(&mid);
            nav.push(end);
            prop_assert_eq!(total_return(&nav).unwrap(), end / 100.0 - 1.0);
        }

        #[test]
        fn sharpe_sign_matches_mean(rs in proptest::collection::vec(-0.05f64..0.05, 5..60)) {
            let nav = nav_from(&rs);
            let returns = period_returns(&nav);
            let mean = returns.iter().sum::<f64>() / returns.len() as f64;
            if let Ok(s) = sharpe(&nav, Periodicity::Daily) {
                if mean.abs() > 1e-12 {
                    prop_assert_eq!(s > 0.0, mean > 0.0);
                }
            }
        }

        #[test]
        fn drawdown_in_unit_interval(nav in proptest::collection::vec(0.01f64..1e6, 1..50)) {
            let dd = max_drawdown(&nav).unwrap();
            prop_assert!((0.0..1.0).contains(&dd));
        }
    }
}
