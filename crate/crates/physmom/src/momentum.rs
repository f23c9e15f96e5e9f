//! Velocity, mass, and momentum scores.
//!
//! A security's price history is treated as a particle trajectory: the
//! per-day return is its velocity (log or raw form) and a liquidity or
//! volatility proxy acts as its mass. Four score classes combine them:
//!
//! * `p0` — plain cumulative return over the window,
//! * `p1` — sum of mass-weighted velocities,
//! * `p2` — mass-weighted mean velocity (center-of-mass form),
//! * `p3` — mean velocity over its sample standard deviation.
//!
//! With turnover and value-fraction masses for `p1`/`p2`, inverse volatility
//! for `p3`, and both velocity forms, the canonical criterion set has eleven
//! members (see [`CriterionSpec::all_eleven`]).
//!
//! Everything here is a pure function over immutable data. Summation always
//! runs in ascending date order, so results are bitwise independent of how
//! callers parallelize.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use thiserror::Error;

use crate::marketdata::{DailyBar, Panel, SecurityId};

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("mass/velocity length mismatch ({masses} vs {velocities})")]
    LengthMismatch { masses: usize, velocities: usize },
    #[error("undefined score: mass sum is zero")]
    ZeroMassSum,
    #[error("undefined score: velocity standard deviation is zero")]
    ZeroVolatility,
    #[error("inverse volatility is a window statistic, not a daily mass")]
    NotADailyMass,
    #[error("invalid criterion: {0}")]
    InvalidCriterion(String),
    #[error("no scorable securities at formation {formation}")]
    EmptyRanking { formation: NaiveDate },
}

/// Per-day return form used as velocity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VelocityKind {
    /// Raw return `S_t / S_{t-1} - 1` (written `r`).
    Raw,
    /// Log return `ln(S_t / S_{t-1})` (written `R`).
    Log,
}

impl VelocityKind {
    fn token(self) -> &'static str {
        match self {
            VelocityKind::Raw => "r",
            VelocityKind::Log => "R",
        }
    }
}

/// Financial mass proxy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MassKind {
    /// Identical mass 1 for every security-day.
    Unit,
    /// Share turnover: volume over shares outstanding (written `ups`).
    Turnover,
    /// Value fraction: traded value over market cap (written `tau`).
    ValueFraction,
    /// Inverse volatility; only meaningful for the `p3` class (written `isig`).
    InvSigma,
}

impl MassKind {
    fn token(self) -> &'static str {
        match self {
            MassKind::Unit => "1",
            MassKind::Turnover => "ups",
            MassKind::ValueFraction => "tau",
            MassKind::InvSigma => "isig",
        }
    }
}

/// Score class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MomentumClass {
    P0,
    P1,
    P2,
    P3,
}

/// One ranking criterion: class x velocity x mass.
///
/// Specs parsed via [`FromStr`] are always legal; hand-built ones can be
/// checked with [`CriterionSpec::validate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CriterionSpec {
    pub class: MomentumClass,
    pub velocity: VelocityKind,
    pub mass: MassKind,
}

impl CriterionSpec {
    /// Cumulative return criterion (the traditional ranking rule).
    pub fn p0() -> Self {
        CriterionSpec {
            class: MomentumClass::P0,
            velocity: VelocityKind::Log,
            mass: MassKind::Unit,
        }
    }

    pub fn p1(mass: MassKind, velocity: VelocityKind) -> Self {
        CriterionSpec {
            class: MomentumClass::P1,
            velocity,
            mass,
        }
    }

    pub fn p2(mass: MassKind, velocity: VelocityKind) -> Self {
        CriterionSpec {
            class: MomentumClass::P2,
            velocity,
            mass,
        }
    }

    pub fn p3(velocity: VelocityKind) -> Self {
        CriterionSpec {
            class: MomentumClass::P3,
            velocity,
            mass: MassKind::InvSigma,
        }
    }

    /// The canonical eleven criteria, in report order.
    pub fn all_eleven() -> Vec<CriterionSpec> {
        use MassKind::*;
        use VelocityKind::*;
        vec![
            CriterionSpec::p0(),
            CriterionSpec::p1(Turnover, Raw),
            CriterionSpec::p1(ValueFraction, Raw),
            CriterionSpec::p1(Turnover, Log),
            CriterionSpec::p1(ValueFraction, Log),
            CriterionSpec::p2(Turnover, Raw),
            CriterionSpec::p2(ValueFraction, Raw),
            CriterionSpec::p2(Turnover, Log),
            CriterionSpec::p2(ValueFraction, Log),
            CriterionSpec::p3(Raw),
            CriterionSpec::p3(Log),
        ]
    }

    /// Checks the class/mass combination is meaningful.
    ///
    /// Unit mass is accepted for `p1`/`p2` (the rank-equivalence variants of
    /// `p0`) even though the canonical eleven use turnover or value fraction.
    pub fn validate(&self) -> Result<(), ScoreError> {
        let ok = match self.class {
            MomentumClass::P0 => self.mass == MassKind::Unit,
            MomentumClass::P1 | MomentumClass::P2 => self.mass != MassKind::InvSigma,
            MomentumClass::P3 => self.mass == MassKind::InvSigma,
        };
        if ok {
            Ok(())
        } else {
            Err(ScoreError::InvalidCriterion(format!(
                "mass `{}` is not legal for class {:?}",
                self.mass.token(),
                self.class
            )))
        }
    }

    /// Display form, e.g. `p0`, `p1(ups,R)`, `p3(isig,r)`.
    pub fn label(&self) -> String {
        match self.class {
            MomentumClass::P0 => "p0".to_owned(),
            MomentumClass::P1 => format!("p1({},{})", self.mass.token(), self.velocity.token()),
            MomentumClass::P2 => format!("p2({},{})", self.mass.token(), self.velocity.token()),
            MomentumClass::P3 => format!("p3(isig,{})", self.velocity.token()),
        }
    }

    /// Filesystem-safe form, e.g. `p1_ups_R`.
    pub fn file_stem(&self) -> String {
        match self.class {
            MomentumClass::P0 => "p0".to_owned(),
            MomentumClass::P1 => format!("p1_{}_{}", self.mass.token(), self.velocity.token()),
            MomentumClass::P2 => format!("p2_{}_{}", self.mass.token(), self.velocity.token()),
            MomentumClass::P3 => format!("p3_isig_{}", self.velocity.token()),
        }
    }
}

impl fmt::Display for CriterionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

fn parse_velocity(tok: &str) -> Result<VelocityKind, String> {
    match tok {
        "r" => Ok(VelocityKind::Raw),
        "R" => Ok(VelocityKind::Log),
        other => Err(format!("unknown velocity `{other}` (r = raw, R = log)")),
    }
}

fn parse_mass(tok: &str) -> Result<MassKind, String> {
    match tok {
        "1" | "unit" => Ok(MassKind::Unit),
        "ups" => Ok(MassKind::Turnover),
        "tau" => Ok(MassKind::ValueFraction),
        "isig" => Ok(MassKind::InvSigma),
        other => Err(format!("unknown mass `{other}` (1|ups|tau|isig)")),
    }
}

impl FromStr for CriterionSpec {
    type Err = String;

    /// Parses `p0`, `p1(<mass>,<vel>)`, `p2(<mass>,<vel>)`, `p3(<vel>)`, or
    /// `p3(isig,<vel>)`. Velocity is case-sensitive: lowercase `r` is the raw
    /// return, uppercase `R` the log return.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "p0" {
            return Ok(CriterionSpec::p0());
        }
        let (head, rest) = s
            .split_once('(')
            .ok_or_else(|| format!("cannot parse criterion `{s}`"))?;
        let inner = rest
            .strip_suffix(')')
            .ok_or_else(|| format!("missing `)` in criterion `{s}`"))?;
        let args: Vec<&str> = inner.split(',').map(str::trim).collect();
        let spec = match (head, args.as_slice()) {
            ("p1", [mass, vel]) => CriterionSpec::p1(parse_mass(mass)?, parse_velocity(vel)?),
            ("p2", [mass, vel]) => CriterionSpec::p2(parse_mass(mass)?, parse_velocity(vel)?),
            ("p3", [vel]) => CriterionSpec::p3(parse_velocity(vel)?),
            ("p3", [mass, vel]) => {
                if parse_mass(mass)? != MassKind::InvSigma {
                    return Err(format!("criterion `{s}`: p3 only takes the isig mass"));
                }
                CriterionSpec::p3(parse_velocity(vel)?)
            }
            _ => return Err(format!("cannot parse criterion `{s}`")),
        };
        spec.validate().map_err(|e| e.to_string())?;
        Ok(spec)
    }
}

/// One scored security at one formation date.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub security: SecurityId,
    pub formation: NaiveDate,
    pub score: f64,
    /// Count of daily bars the score was computed from.
    pub n_obs: usize,
}

/// Per-day velocities from an ordered close series; output has length
/// `closes.len() - 1`, entry `i` being the move ending at close `i + 1`.
pub fn daily_velocity(closes: &[f64], kind: VelocityKind) -> Result<Vec<f64>, ScoreError> {
    if closes.len() < 2 {
        return Err(ScoreError::TooFewObservations {
            needed: 2,
            got: closes.len(),
        });
    }
    Ok(closes
        .windows(2)
        .map(|w| match kind {
            VelocityKind::Raw => w[1] / w[0] - 1.0,
            VelocityKind::Log => (w[1] / w[0]).ln(),
        })
        .collect())
}

/// Financial mass of a single bar.
pub fn daily_mass(bar: &DailyBar, kind: MassKind) -> Result<f64, ScoreError> {
    match kind {
        MassKind::Unit => Ok(1.0),
        MassKind::Turnover => Ok(bar.volume / bar.shares_outstanding),
        MassKind::ValueFraction => Ok(bar.traded_value / bar.market_cap),
        MassKind::InvSigma => Err(ScoreError::NotADailyMass),
    }
}

/// Cumulative return over the window: last close over first, minus one.
pub fn score_p0(closes: &[f64]) -> Result<f64, ScoreError> {
    if closes.len() < 2 {
        return Err(ScoreError::TooFewObservations {
            needed: 2,
            got: closes.len(),
        });
    }
    Ok(closes[closes.len() - 1] / closes[0] - 1.0)
}

/// Sum of mass-weighted velocities. The mass at index `i` belongs to the same
/// day the velocity at index `i` ends on.
pub fn score_p1(masses: &[f64], velocities: &[f64]) -> Result<f64, ScoreError> {
    if masses.len() != velocities.len() {
        return Err(ScoreError::LengthMismatch {
            masses: masses.len(),
            velocities: velocities.len(),
        });
    }
    if velocities.is_empty() {
        return Err(ScoreError::TooFewObservations { needed: 1, got: 0 });
    }
    Ok(masses.iter().zip(velocities).map(|(m, v)| m * v).sum())
}

/// Mass-weighted mean velocity. Fails with [`ScoreError::ZeroMassSum`] when
/// the weights vanish, which excludes the security from that formation only.
pub fn score_p2(masses: &[f64], velocities: &[f64]) -> Result<f64, ScoreError> {
    let weighted = score_p1(masses, velocities)?;
    let total_mass: f64 = masses.iter().sum();
    if total_mass <= 0.0 {
        return Err(ScoreError::ZeroMassSum);
    }
    Ok(weighted / total_mass)
}

/// Mean velocity over its sample standard deviation (n - 1 denominator).
pub fn score_p3(velocities: &[f64]) -> Result<f64, ScoreError> {
    if velocities.len() < 2 {
        return Err(ScoreError::TooFewObservations {
            needed: 2,
            got: velocities.len(),
        });
    }
    let n = velocities.len() as f64;
    let mean = velocities.iter().sum::<f64>() / n;
    let ss: f64 = velocities.iter().map(|v| (v - mean) * (v - mean)).sum();
    let sigma = (ss / (n - 1.0)).sqrt();
    if sigma == 0.0 {
        return Err(ScoreError::ZeroVolatility);
    }
    Ok(mean / sigma)
}

/// Half-open lookback window `[start, formation)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LookbackWindow {
    pub start: NaiveDate,
    pub formation: NaiveDate,
}

/// Scores every universe member over its own bars inside the window.
///
/// Securities whose score is undefined there (zero mass sum, zero or
/// undefined volatility) are omitted from the result rather than failing the
/// formation. An entirely empty result is an error: nothing can be ranked.
pub fn compute_scores(
    panel: &Panel,
    universe: &BTreeSet<SecurityId>,
    window: LookbackWindow,
    criterion: &CriterionSpec,
) -> Result<Vec<ScoreRow>, ScoreError> {
    criterion.validate()?;
    let mut rows = Vec::with_capacity(universe.len());
    for sec in universe {
        let bars: Vec<&DailyBar> = panel.bars_in(sec, window.start, window.formation).collect();
        if bars.len() < 2 {
            continue;
        }
        let closes: Vec<f64> = bars.iter().map(|b| b.close).collect();
        let score = match criterion.class {
            MomentumClass::P0 => Some(score_p0(&closes)?),
            MomentumClass::P1 | MomentumClass::P2 => {
                let velocities = daily_velocity(&closes, criterion.velocity)?;
                // Velocity i ends on bar i+1; use that bar's mass.
                let masses = bars[1..]
                    .iter()
                    .map(|b| daily_mass(b, criterion.mass))
                    .collect::<Result<Vec<f64>, _>>()?;
                if criterion.class == MomentumClass::P1 {
                    Some(score_p1(&masses, &velocities)?)
                } else {
                    match score_p2(&masses, &velocities) {
                        Ok(s) => Some(s),
                        Err(ScoreError::ZeroMassSum) => None,
                        Err(e) => return Err(e),
                    }
                }
            }
            MomentumClass::P3 => {
                let velocities = daily_velocity(&closes, criterion.velocity)?;
                match score_p3(&velocities) {
                    Ok(s) => Some(s),
                    Err(ScoreError::ZeroVolatility)
                    | Err(ScoreError::TooFewObservations { .. }) => None,
                    Err(e) => return Err(e),
                }
            }
        };
        if let Some(score) = score {
            if score.is_finite() {
                rows.push(ScoreRow {
                    security: sec.clone(),
                    formation: window.formation,
                    score,
                    n_obs: bars.len(),
                });
            }
        }
    }
    if rows.is_empty() {
        return Err(ScoreError::EmptyRanking {
            formation: window.formation,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn bar_with(date: NaiveDate, close: f64, volume: f64, value: f64) -> DailyBar {
        DailyBar {
            date,
            close,
            volume,
            shares_outstanding: 1.0e8,
            traded_value: value,
            market_cap: 1.0e9,
        }
    }

    #[test]
    fn velocity_constant_price_is_zero() {
        assert_eq!(
            daily_velocity(&[100.0, 100.0], VelocityKind::Raw).unwrap(),
            vec![0.0]
        );
        assert_eq!(
            daily_velocity(&[100.0, 100.0], VelocityKind::Log).unwrap(),
            vec![0.0]
        );
    }

    #[test]
    fn velocity_log_matches_ln_ratio() {
        let v = daily_velocity(&[100.0, 110.0], VelocityKind::Log).unwrap();
        // ln(1.1), evaluated directly.
        assert!((v[0] - 0.09531017980432486).abs() < 1e-15);
    }

    #[test]
    fn velocity_raw_is_fractional_change() {
        let v = daily_velocity(&[100.0, 110.0], VelocityKind::Raw).unwrap();
        assert!((v[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn velocity_needs_two_closes() {
        assert!(matches!(
            daily_velocity(&[100.0], VelocityKind::Raw),
            Err(ScoreError::TooFewObservations { .. })
        ));
    }

    #[test]
    fn mass_ratios() {
        let bar = DailyBar {
            date: d("2003-01-02"),
            close: 10.0,
            volume: 1.0e6,
            shares_outstanding: 1.0e8,
            traded_value: 5.0e6,
            market_cap: 1.0e9,
        };
        assert_eq!(daily_mass(&bar, MassKind::Unit).unwrap(), 1.0);
        assert!((daily_mass(&bar, MassKind::Turnover).unwrap() - 0.01).abs() < 1e-15);
        assert!((daily_mass(&bar, MassKind::ValueFraction).unwrap() - 0.005).abs() < 1e-15);
        assert!(matches!(
            daily_mass(&bar, MassKind::InvSigma),
            Err(ScoreError::NotADailyMass)
        ));
    }

    #[test]
    fn p1_is_plain_sum_under_unit_mass() {
        let s = score_p1(&[1.0, 1.0], &[0.01, 0.02]).unwrap();
        assert!((s - 0.03).abs() < 1e-15);
    }

    #[test]
    fn p1_zero_mass_annihilates() {
        let s = score_p1(&[2.0, 0.0], &[0.01, 5.0]).unwrap();
        assert!((s - 0.02).abs() < 1e-15);
    }

    #[test]
    fn p1_length_mismatch() {
        assert!(matches!(
            score_p1(&[1.0], &[0.01, 0.02]),
            Err(ScoreError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn p2_weighted_mean() {
        let s = score_p2(&[1.0, 3.0], &[0.0, 0.04]).unwrap();
        assert!((s - 0.03).abs() < 1e-15);
    }

    #[test]
    fn p2_zero_mass_sum_is_undefined() {
        assert!(matches!(
            score_p2(&[0.0, 0.0], &[0.01, 0.02]),
            Err(ScoreError::ZeroMassSum)
        ));
    }

    #[test]
    fn p3_two_point_sample() {
        // mean 0.01, sample std sqrt(0.0008).
        let s = score_p3(&[-0.01, 0.03]).unwrap();
        assert!((s - 0.35355339059327373).abs() < 1e-12);
    }

    #[test]
    fn p3_degenerate_series() {
        assert!(matches!(
            score_p3(&[0.01, 0.01, 0.01]),
            Err(ScoreError::ZeroVolatility)
        ));
    }

    #[test]
    fn p0_examples() {
        assert_eq!(score_p0(&[100.0, 100.0, 100.0]).unwrap(), 0.0);
        assert!((score_p0(&[100.0, 121.0]).unwrap() - 0.21).abs() < 1e-15);
    }

    #[test]
    fn criterion_parsing_round_trips() {
        for spec in CriterionSpec::all_eleven() {
            let parsed: CriterionSpec = spec.label().parse().unwrap();
            assert_eq!(parsed, spec);
        }
        let unit: CriterionSpec = "p1(1,R)".parse().unwrap();
        assert_eq!(unit, CriterionSpec::p1(MassKind::Unit, VelocityKind::Log));
        let short: CriterionSpec = "p3(r)".parse().unwrap();
        assert_eq!(short, CriterionSpec::p3(VelocityKind::Raw));
    }

    #[test]
    fn criterion_legality() {
        assert!("p3(ups,r)".parse::<CriterionSpec>().is_err());
        assert!("p1(isig,r)".parse::<CriterionSpec>().is_err());
        assert!("p4(ups,r)".parse::<CriterionSpec>().is_err());
        assert!(CriterionSpec {
            class: MomentumClass::P3,
            velocity: VelocityKind::Raw,
            mass: MassKind::Turnover,
        }
        .validate()
        .is_err());
        assert_eq!(CriterionSpec::all_eleven().len(), 11);
    }

    fn panel_of_paths(paths: &[(&str, Vec<f64>)]) -> (Panel, BTreeSet<SecurityId>) {
        let start = d("2003-01-06");
        let mut rows = Vec::new();
        let mut universe = BTreeSet::new();
        for (name, closes) in paths {
            let sec = SecurityId::from(*name);
            universe.insert(sec.clone());
            for (i, &close) in closes.iter().enumerate() {
                let date = start + chrono::Days::new(i as u64);
                rows.push((sec.clone(), bar_with(date, close, 1.0e6, close * 1.0e6)));
            }
        }
        (Panel::from_rows(rows).unwrap(), universe)
    }

    fn window_all() -> LookbackWindow {
        LookbackWindow {
            start: d("2003-01-06"),
            formation: d("2003-12-31"),
        }
    }

    fn ranking(rows: &mut Vec<ScoreRow>) -> Vec<SecurityId> {
        rows.sort_by(|a, b| {
            a.score
                .total_cmp(&b.score)
                .then_with(|| a.security.cmp(&b.security))
        });
        rows.iter().map(|r| r.security.clone()).collect()
    }

    #[test]
    fn p0_and_unit_log_p1_rank_identically() {
        let (panel, universe) = panel_of_paths(&[
            ("AAA", vec![100.0, 104.0, 99.0, 103.0]),
            ("BBB", vec![50.0, 51.0, 53.0, 52.0]),
            ("CCC", vec![80.0, 78.0, 77.0, 79.0]),
        ]);
        let mut by_p0 =
            compute_scores(&panel, &universe, window_all(), &CriterionSpec::p0()).unwrap();
        let unit_log = CriterionSpec::p1(MassKind::Unit, VelocityKind::Log);
        let mut by_p1 = compute_scores(&panel, &universe, window_all(), &unit_log).unwrap();
        assert_eq!(ranking(&mut by_p0), ranking(&mut by_p1));
        // p0 equals exp(p1(1,R)) - 1 security by security.
        for (a, b) in by_p0.iter().zip(by_p1.iter()) {
            assert!((a.score - (b.score.exp() - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_universe_under_p3_is_empty_ranking() {
        let (panel, universe) = panel_of_paths(&[("AAA", vec![10.0, 10.0, 10.0, 10.0])]);
        let err = compute_scores(
            &panel,
            &universe,
            window_all(),
            &CriterionSpec::p3(VelocityKind::Log),
        )
        .unwrap_err();
        assert!(matches!(err, ScoreError::EmptyRanking { .. }));
    }

    #[test]
    fn scores_ignore_post_formation_bars() {
        let (panel_a, universe) = panel_of_paths(&[("AAA", vec![100.0, 105.0, 103.0])]);
        // Same history plus extra bars dated after the formation cut.
        let sec = SecurityId::from("AAA");
        let mut rows: Vec<(SecurityId, DailyBar)> = panel_a
            .bars_in(&sec, d("2000-01-01"), d("2999-01-01"))
            .map(|b| (sec.clone(), b.clone()))
            .collect();
        rows.push((sec.clone(), bar_with(d("2004-02-02"), 500.0, 1.0e6, 5.0e8)));
        let panel_b = Panel::from_rows(rows).unwrap();

        let w = LookbackWindow {
            start: d("2003-01-06"),
            formation: d("2003-06-30"),
        };
        for spec in CriterionSpec::all_eleven() {
            let a = compute_scores(&panel_a, &universe, w, &spec).unwrap();
            let b = compute_scores(&panel_b, &universe, w, &spec).unwrap();
            assert_eq!(a.len(), b.len());
            for (ra, rb) in a.iter().zip(b.iter()) {
                assert_eq!(ra.score.to_bits(), rb.score.to_bits());
                assert_eq!(ra.n_obs, rb.n_obs);
            }
        }
    }

    proptest! {
        #[test]
        fn prop_p0_p1_rank_equivalence(
            paths in proptest::collection::vec(
                proptest::collection::vec(10.0f64..500.0, 4..40),
                3..12,
            )
        ) {
            let named: Vec<(String, Vec<f64>)> = paths
                .into_iter()
                .enumerate()
                .map(|(i, p)| (format!("S{i:03}"), p))
                .collect();
            let borrowed: Vec<(&str, Vec<f64>)> =
                named.iter().map(|(n, p)| (n.as_str(), p.clone())).collect();
            let (panel, universe) = panel_of_paths(&borrowed);
            let mut by_p0 =
                compute_scores(&panel, &universe, window_all(), &CriterionSpec::p0()).unwrap();
            let unit_log = CriterionSpec::p1(MassKind::Unit, VelocityKind::Log);
            let mut by_p1 = compute_scores(&panel, &universe, window_all(), &unit_log).unwrap();
            prop_assert_eq!(ranking(&mut by_p0), ranking(&mut by_p1));
        }

        #[test]
        fn prop_p2_constant_mass_is_mean_velocity(
            velocities in proptest::collection::vec(-0.2f64..0.2, 1..50),
            c in 0.01f64..100.0,
        ) {
            let masses = vec![c; velocities.len()];
            let p2 = score_p2(&masses, &velocities).unwrap();
            let mean = velocities.iter().sum::<f64>() / velocities.len() as f64;
            prop_assert!((p2 - mean).abs() < 1e-9);
        }

        #[test]
        fn prop_p3_scale_invariant(
            velocities in proptest::collection::vec(-0.2f64..0.2, 3..50),
            c in 0.01f64..100.0,
        ) {
            let base = match score_p3(&velocities) {
                Ok(s) => s,
                Err(_) => return Ok(()), // degenerate draw
            };
            let scaled: Vec<f64> = velocities.iter().map(|v| v * c).collect();
            let s = score_p3(&scaled).unwrap();
            prop_assert!((s - base).abs() < 1e-9 * base.abs().max(1.0));
        }

        #[test]
        fn prop_row_order_is_input_order_independent(
            paths in proptest::collection::vec(
                proptest::collection::vec(10.0f64..500.0, 4..20),
                2..8,
            ),
            seed in 0u64..1000,
        ) {
            let named: Vec<(String, Vec<f64>)> = paths
                .into_iter()
                .enumerate()
                .map(|(i, p)| (format!("S{i:03}"), p))
                .collect();
            let mut shuffled = named.clone();
            // Cheap deterministic shuffle.
            let n = shuffled.len();
            for i in 0..n {
                let j = ((seed as usize).wrapping_mul(31).wrapping_add(i * 17)) % n;
                shuffled.swap(i, j);
            }
            let as_ref = |v: &[(String, Vec<f64>)]| -> Vec<(&str, Vec<f64>)> {
                v.iter().map(|(n, p)| (n.as_str(), p.clone())).collect()
            };
            let (panel_a, universe) = panel_of_paths(&as_ref(&named));
            let (panel_b, _) = panel_of_paths(&as_ref(&shuffled));
            let spec = CriterionSpec::p1(MassKind::Turnover, VelocityKind::Log);
            let a = compute_scores(&panel_a, &universe, window_all(), &spec).unwrap();
            let b = compute_scores(&panel_b, &universe, window_all(), &spec).unwrap();
            prop_assert_eq!(a.len(), b.len());
            for (ra, rb) in a.iter().zip(b.iter()) {
                prop_assert_eq!(&ra.security, &rb.security);
                prop_assert_eq!(ra.score.to_bits(), rb.score.to_bits());
            }
        }
    }
}
