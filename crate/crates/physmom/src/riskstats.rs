//! Summary statistics and risk measures for per-period return series.
//!
//! All inputs are percent per period (0.5 means 0.5%). Conventions, pinned
//! here once so every report row means the same thing:
//!
//! * standard deviation is the sample form (n - 1 denominator);
//! * skewness and kurtosis use biased central moments (divide by n), and
//!   kurtosis is excess (normal = 0);
//! * final wealth is the arithmetic sum of per-period decimal returns, so
//!   `fin_wealth * 100 == mean * n` holds identically;
//! * Sharpe is mean over standard deviation at the series' native frequency
//!   with a zero risk-free rate;
//! * VaR/CVaR use the historical method with the lower order statistic at
//!   1-based index `ceil((1 - level) * n)`, reported as positive loss
//!   magnitudes;
//! * max drawdown compounds the series into an equity curve starting at 1
//!   and reports the worst peak-to-trough decline in percent.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("empty return series")]
    EmptySeries,
    #[error("zero standard deviation")]
    ZeroStdDev,
    #[error("confidence level must be in (0, 1), got {0}")]
    BadLevel(f64),
}

/// Moments block of a report row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryStats {
    /// Mean return, % per period.
    pub mean: f64,
    /// Sample standard deviation, % per period.
    pub std_dev: f64,
    pub skewness: f64,
    /// Excess kurtosis.
    pub kurtosis: f64,
    /// Cumulative arithmetic sum of decimal returns.
    pub fin_wealth: f64,
    pub n: usize,
    /// Set when the series is constant; skewness/kurtosis are reported as 0.
    pub degenerate: bool,
}

/// Reward-risk block of a report row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskMeasures {
    pub sharpe: f64,
    /// 95% historical VaR, positive = loss magnitude.
    pub var95: f64,
    /// 95% historical CVaR; always >= var95.
    pub cvar95: f64,
    /// Maximum drawdown of the compounded equity curve, %.
    pub mdd: f64,
}

fn mean_of(returns: &[f64]) -> f64 {
    returns.iter().sum::<f64>() / returns.len() as f64
}

/// Mean, sample std, biased-moment skewness/excess kurtosis, final wealth.
pub fn summary(returns: &[f64]) -> Result<SummaryStats, StatsError> {
    let n = returns.len();
    if n < 2 {
        return Err(StatsError::TooFewObservations { needed: 2, got: n });
    }
    let nf = n as f64;
    let mean = mean_of(returns);
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    let mut m4 = 0.0;
    for &r in returns {
        let dev = r - mean;
        let dev2 = dev * dev;
        m2 += dev2;
        m3 += dev2 * dev;
        m4 += dev2 * dev2;
    }
    let sample_var = m2 / (nf - 1.0);
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    let degenerate = m2 == 0.0;
    let (skewness, kurtosis) = if degenerate {
        (0.0, 0.0)
    } else {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    };
    let fin_wealth = returns.iter().map(|r| r / 100.0).sum();
    Ok(SummaryStats {
        mean,
        std_dev: sample_var.sqrt(),
        skewness,
        kurtosis,
        fin_wealth,
        n,
        degenerate,
    })
}

/// Mean over sample standard deviation at native frequency, zero risk-free.
pub fn sharpe(returns: &[f64]) -> Result<f64, StatsError> {
    let stats = summary(returns)?;
    if stats.std_dev == 0.0 {
        return Err(StatsError::ZeroStdDev);
    }
    Ok(stats.mean / stats.std_dev)
}

/// Historical VaR and CVaR at `level` (e.g. 0.95).
///
/// The quantile is the lower order statistic: with the sample sorted
/// ascending, the 1-based index `ceil((1 - level) * n)`. VaR is its negation;
/// CVaR negates the mean of every return at or below it. Gains show up as
/// negative "losses"; `cvar >= var` holds on every input.
pub fn var_cvar(returns: &[f64], level: f64) -> Result<(f64, f64), StatsError> {
    if returns.is_empty() {
        return Err(StatsError::EmptySeries);
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::BadLevel(level));
    }
    let n = returns.len();
    if n < 20 {
        log::warn!("historical VaR on only {n} observations is unreliable");
    }
    let mut sorted = returns.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((1.0 - level) * n as f64).ceil() as usize;
    let idx = rank.max(1).min(n) - 1;
    let quantile = sorted[idx];
    let tail = &sorted[..=idx];
    // Extend through ties of the quantile value.
    let mut t_end = idx + 1;
    while t_end < n && sorted[t_end] == quantile {
        t_end += 1;
    }
    let tail = if t_end > idx + 1 { &sorted[..t_end] } else { tail };
    let cvar = -mean_of(tail);
    Ok((-quantile, cvar))
}

/// Convenience wrapper at the 95% level.
pub fn var_cvar95(returns: &[f64]) -> Result<(f64, f64), StatsError> {
    var_cvar(returns, 0.95)
}

/// Maximum peak-to-trough decline (%) of the compounded equity curve
/// `E_t = prod(1 + r_i / 100)` starting at 1.
pub fn max_drawdown(returns: &[f64]) -> f64 {
    let mut equity = 1.0f64;
    let mut peak = 1.0f64;
    let mut worst = 0.0f64;
    for &r in returns {
        equity *= 1.0 + r / 100.0;
        if equity > peak {
            peak = equity;
        }
        let dd = (peak - equity) / peak;
        if dd > worst {
            worst = dd;
        }
    }
    100.0 * worst
}

/// Bundles the four reward-risk numbers for one series. A degenerate series
/// (zero variance) reports Sharpe 0 instead of failing the whole run.
pub fn risk_measures(returns: &[f64]) -> Result<RiskMeasures, StatsError> {
    let sharpe = match sharpe(returns) {
        Ok(s) => s,
        Err(StatsError::ZeroStdDev) => {
            log::warn!("degenerate series: reporting Sharpe 0");
            0.0
        }
        Err(e) => return Err(e),
    };
    let (var95, cvar95) = var_cvar95(returns)?;
    Ok(RiskMeasures {
        sharpe,
        var95,
        cvar95,
        mdd: max_drawdown(returns),
    })
}
