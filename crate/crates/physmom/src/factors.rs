//! Three-factor regression of portfolio returns on MKT, SMB, and HML.
//!
//! The fit is ordinary least squares with an intercept, computed from first
//! principles via Householder QR on the n x 4 design matrix (numerically
//! safer than forming the normal equations). Standard errors are classical
//! (homoskedastic); no autocorrelation correction is applied even though
//! overlapping-cohort series are autocorrelated by construction, so treat
//! significance stars on long-short rows as indicative.
//!
//! Units follow the rest of the engine: returns and factors in percent per
//! period, so the intercept is percent per period too.

use chrono::NaiveDate;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::marketdata::FactorRow;

const N_COEFS: usize = 4;

#[derive(Debug, Error)]
pub enum RegressionError {
    #[error("need more than {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("series lengths differ")]
    LengthMismatch,
    #[error("fewer than {needed} overlapping dates between returns and factors")]
    DisjointDates { needed: usize },
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("response has zero variance")]
    ZeroVarianceResponse,
}

/// Two-sided significance of a coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigFlag {
    None,
    FivePct,
    OnePct,
}

impl SigFlag {
    /// Star notation used in the regression report: `**` 1%, `*` 5%.
    pub fn stars(self) -> &'static str {
        match self {
            SigFlag::None => "",
            SigFlag::FivePct => "*",
            SigFlag::OnePct => "**",
        }
    }
}

/// OLS fit of `y = alpha + b_mkt MKT + b_smb SMB + b_hml HML + e`.
#[derive(Debug, Clone)]
pub struct RegressionResult {
    /// Intercept, % per period.
    pub alpha: f64,
    pub beta_mkt: f64,
    pub beta_smb: f64,
    pub beta_hml: f64,
    /// Classical standard errors, order [alpha, mkt, smb, hml].
    pub std_errors: [f64; N_COEFS],
    pub t_stats: [f64; N_COEFS],
    pub sig_flags: [SigFlag; N_COEFS],
    pub r2: f64,
    pub n: usize,
}

impl RegressionResult {
    pub fn coefficients(&self) -> [f64; N_COEFS] {
        [self.alpha, self.beta_mkt, self.beta_smb, self.beta_hml]
    }
}

/// How a return series enters the regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    /// Long-only basket: regressed in excess of the risk-free rate.
    LongOnly,
    /// Self-financing long-short: regressed raw, rf ignored.
    LongShort,
}

/// Date-aligned regression sample.
#[derive(Debug, Clone)]
pub struct AlignedSample {
    pub dates: Vec<NaiveDate>,
    pub y: Vec<f64>,
    pub mkt: Vec<f64>,
    pub smb: Vec<f64>,
    pub hml: Vec<f64>,
}

const MIN_OVERLAP: usize = 8;

/// Inner join of a return series with the factor table on date.
pub fn align(
    dates: &[NaiveDate],
    returns: &[f64],
    kind: SeriesKind,
    factors: &[FactorRow],
) -> Result<AlignedSample, RegressionError> {
    if dates.len() != returns.len() {
        return Err(RegressionError::LengthMismatch);
    }
    let mut out = AlignedSample {
        dates: Vec::new(),
        y: Vec::new(),
        mkt: Vec::new(),
        smb: Vec::new(),
        hml: Vec::new(),
    };
    // Both sides are date-ascending; walk them together.
    let mut fi = 0;
    for (i, &date) in dates.iter().enumerate() {
        while fi < factors.len() && factors[fi].date < date {
            fi += 1;
        }
        if fi == factors.len() {
            break;
        }
        if factors[fi].date == date {
            let f = factors[fi];
            let y = match kind {
                SeriesKind::LongOnly => returns[i] - f.rf,
                SeriesKind::LongShort => returns[i],
            };
            out.dates.push(date);
            out.y.push(y);
            out.mkt.push(f.mkt);
            out.smb.push(f.smb);
            out.hml.push(f.hml);
        }
    }
    if out.dates.len() < MIN_OVERLAP {
        return Err(RegressionError::DisjointDates {
            needed: MIN_OVERLAP,
        });
    }
    Ok(out)
}

/// OLS of `y` on an intercept plus the three factor columns.
pub fn ols3(
    y: &[f64],
    mkt: &[f64],
    smb: &[f64],
    hml: &[f64],
) -> Result<RegressionResult, RegressionError> {
    let n = y.len();
    if mkt.len() != n || smb.len() != n || hml.len() != n {
        return Err(RegressionError::LengthMismatch);
    }
    if n <= N_COEFS {
        return Err(RegressionError::TooFewObservations {
            needed: N_COEFS,
            got: n,
        });
    }

    let y_mean = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum();
    if sst == 0.0 {
        return Err(RegressionError::ZeroVarianceResponse);
    }

    // Design matrix, row major.
    let mut a: Vec<[f64; N_COEFS]> = (0..n)
        .map(|i| [1.0, mkt[i], smb[i], hml[i]])
        .collect();
    let mut qty = y.to_vec();

    // Householder QR, overwriting `a` with R and `qty` with Q^T y.
    let col_scale: f64 = a
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    for k in 0..N_COEFS {
        let mut norm2 = 0.0;
        for row in a.iter().skip(k) {
            norm2 += row[k] * row[k];
        }
        let norm = norm2.sqrt();
        if norm <= 1e-12 * col_scale.max(1.0) {
            return Err(RegressionError::RankDeficient);
        }
        let alpha = if a[k][k] >= 0.0 { -norm } else { norm };
        let mut v = vec![0.0; n - k];
        v[0] = a[k][k] - alpha;
        for i in k + 1..n {
            v[i - k] = a[i][k];
        }
        let vtv: f64 = v.iter().map(|x| x * x).sum();
        if vtv > 0.0 {
            let beta = 2.0 / vtv;
            for col in k..N_COEFS {
                let mut dot = 0.0;
                for i in k..n {
                    dot += v[i - k] * a[i][col];
                }
                let scale = beta * dot;
                for i in k..n {
                    a[i][col] -= scale * v[i - k];
                }
            }
            let mut dot = 0.0;
            for i in k..n {
                dot += v[i - k] * qty[i];
            }
            let scale = beta * dot;
            for i in k..n {
                qty[i] -= scale * v[i - k];
            }
        }
        a[k][k] = alpha;
        for i in k + 1..n {
            a[i][k] = 0.0;
        }
    }

    // Solve R b = (Q^T y)[..4] by back substitution.
    let mut coefs = [0.0f64; N_COEFS];
    for k in (0..N_COEFS).rev() {
        let mut rhs = qty[k];
        for j in k + 1..N_COEFS {
            rhs -= a[k][j] * coefs[j];
        }
        if a[k][k].abs() <= 1e-12 * col_scale.max(1.0) {
            return Err(RegressionError::RankDeficient);
        }
        coefs[k] = rhs / a[k][k];
    }

    // Residual sum of squares is the tail of Q^T y.
    let ssr: f64 = qty[N_COEFS..].iter().map(|v| v * v).sum();
    let r2 = 1.0 - ssr / sst;

    // (X^T X)^-1 = R^-1 R^-T from the triangular factor.
    let mut rinv = [[0.0f64; N_COEFS]; N_COEFS];
    for col in 0..N_COEFS {
        let mut e = [0.0f64; N_COEFS];
        e[col] = 1.0;
        for k in (0..=col).rev() {
            let mut rhs = e[k];
            for j in k + 1..N_COEFS {
                rhs -= a[k][j] * rinv[j][col];
            }
            rinv[k][col] = rhs / a[k][k];
        }
    }
    let dof = (n - N_COEFS) as f64;
    let sigma2 = ssr / dof;
    let mut std_errors = [0.0f64; N_COEFS];
    for i in 0..N_COEFS {
        let mut xtx_inv_ii = 0.0;
        for k in 0..N_COEFS {
            xtx_inv_ii += rinv[i][k] * rinv[i][k];
        }
        std_errors[i] = (sigma2 * xtx_inv_ii).sqrt();
    }

    let t_dist = StudentsT::new(0.0, 1.0, dof).expect("dof > 0");
    let mut t_stats = [0.0f64; N_COEFS];
    let mut sig_flags = [SigFlag::None; N_COEFS];
    for i in 0..N_COEFS {
        let t = if std_errors[i] > 0.0 {
            coefs[i] / std_errors[i]
        } else {
            0.0
        };
        t_stats[i] = t;
        let p = 2.0 * (1.0 - t_dist.cdf(t.abs()));
        sig_flags[i] = if p < 0.01 {
            SigFlag::OnePct
        } else if p < 0.05 {
            SigFlag::FivePct
        } else {
            SigFlag::None
        };
    }

    Ok(RegressionResult {
        alpha: coefs[0],
        beta_mkt: coefs[1],
        beta_smb: coefs[2],
        beta_hml: coefs[3],
        std_errors,
        t_stats,
        sig_flags,
        r2,
        n,
    })
}
