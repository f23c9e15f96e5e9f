//! Basket ranking, cohort construction, and strategy return series.
//!
//! At every formation date the scored universe is sorted ascending and cut
//! into groups R1 (worst scores) through Rn (best). A cohort goes long one
//! extreme group and short the other with equal cash weight per member, then
//! holds for K periods. Consecutive formations overlap, so after warm-up K
//! cohorts are live at once; the strategy's per-period return is the equal
//! weight average over live cohorts.
//!
//! Cohort evaluation is parallelized over formation dates; every reduction
//! runs in fixed date order, so results are bitwise identical across thread
//! counts.

use std::collections::BTreeSet;

use chrono::NaiveDate;
use rayon::prelude::*;
use thiserror::Error;

use crate::marketdata::{
    eligible_in_window, rebalance_dates, DataError, Frequency, Panel, SecurityId, UniverseCalendar,
};
use crate::momentum::{compute_scores, CriterionSpec, LookbackWindow, ScoreError, ScoreRow};

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error("invalid strategy: {0}")]
    InvalidSpec(String),
    #[error("cannot rank {have} securities into {groups} groups")]
    TooFewSecurities { have: usize, groups: usize },
    #[error("basket is empty")]
    EmptyBasket,
    #[error("no cohort could be formed on any formation date")]
    NoCohorts,
}

/// Long the winners or long the losers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Momentum,
    Contrarian,
}

impl Mode {
    /// Sign applied to the winner-minus-loser leg.
    fn direction(self) -> f64 {
        match self {
            Mode::Momentum => 1.0,
            Mode::Contrarian => -1.0,
        }
    }

    /// Report label of the long-short row.
    pub fn long_short_label(self) -> &'static str {
        match self {
            Mode::Momentum => "W-L",
            Mode::Contrarian => "L-W",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "momentum" => Ok(Mode::Momentum),
            "contrarian" => Ok(Mode::Contrarian),
            other => Err(format!("unknown mode `{other}` (momentum|contrarian)")),
        }
    }
}

/// Full description of one backtest: lookback J, holding K (both in
/// formation-frequency units), ranking criterion, direction, group count,
/// and one-time transaction costs in percent per leg.
#[derive(Debug, Clone)]
pub struct StrategySpec {
    pub lookback: usize,
    pub holding: usize,
    pub frequency: Frequency,
    pub criterion: CriterionSpec,
    pub mode: Mode,
    pub n_groups: usize,
    pub cost_winner: f64,
    pub cost_loser: f64,
}

impl StrategySpec {
    pub fn validate(&self) -> Result<(), StrategyError> {
        if self.lookback < 1 {
            return Err(StrategyError::InvalidSpec("lookback must be >= 1".into()));
        }
        if self.holding < 1 {
            return Err(StrategyError::InvalidSpec("holding must be >= 1".into()));
        }
        if self.n_groups < 2 {
            return Err(StrategyError::InvalidSpec("need at least 2 groups".into()));
        }
        for (name, c) in [("cost_winner", self.cost_winner), ("cost_loser", self.cost_loser)] {
            if !c.is_finite() || c < 0.0 {
                return Err(StrategyError::InvalidSpec(format!(
                    "{name} must be a finite non-negative percent, got {c}"
                )));
            }
        }
        self.criterion
            .validate()
            .map_err(StrategyError::Score)?;
        Ok(())
    }
}

/// Score-sorted groups R1..Rn at one formation date. R1 holds the lowest
/// scores (losers), Rn the highest (winners).
#[derive(Debug, Clone)]
pub struct RankedBaskets {
    pub formation: NaiveDate,
    pub groups: Vec<BTreeSet<SecurityId>>,
}

impl RankedBaskets {
    pub fn losers(&self) -> &BTreeSet<SecurityId> {
        self.groups.first().expect("groups are non-empty")
    }

    pub fn winners(&self) -> &BTreeSet<SecurityId> {
        self.groups.last().expect("groups are non-empty")
    }
}

/// Sorts ascending by score (ties broken by security id, smaller id ranked
/// lower) and cuts into `n_groups` groups whose sizes differ by at most one,
/// the larger groups taken from R1 upward.
pub fn rank_baskets(scores: &[ScoreRow], n_groups: usize) -> Result<RankedBaskets, StrategyError> {
    if n_groups < 2 {
        return Err(StrategyError::InvalidSpec("need at least 2 groups".into()));
    }
    if scores.len() < n_groups {
        return Err(StrategyError::TooFewSecurities {
            have: scores.len(),
            groups: n_groups,
        });
    }
    let formation = scores[0].formation;
    let mut ordered: Vec<&ScoreRow> = scores.iter().collect();
    ordered.sort_by(|a, b| {
        a.score
            .total_cmp(&b.score)
            .then_with(|| a.security.cmp(&b.security))
    });

    let n = ordered.len();
    let base = n / n_groups;
    let remainder = n % n_groups;
    let mut groups = Vec::with_capacity(n_groups);
    let mut cursor = 0;
    for g in 0..n_groups {
        let size = base + usize::from(g < remainder);
        let members: BTreeSet<SecurityId> = ordered[cursor..cursor + size]
            .iter()
            .map(|r| r.security.clone())
            .collect();
        cursor += size;
        groups.push(members);
    }
    Ok(RankedBaskets { formation, groups })
}

/// One member's fill inside one holding period.
#[derive(Debug, Clone)]
pub struct MemberFill {
    pub security: SecurityId,
    /// Close on the first trading day >= period start, if any.
    pub entry: Option<f64>,
    /// Close on the last trading day <= period end on which it traded.
    pub exit: Option<f64>,
    /// Percent return; 0 when the member never traded in the period.
    pub return_pct: f64,
}

/// Per-member buy-and-hold fills over `[period_start, period_end]`.
///
/// A member with no bar in the period contributes 0% (position never
/// filled); a member delisted mid-period realizes its last traded price.
pub fn basket_period_fills(
    basket: &BTreeSet<SecurityId>,
    panel: &Panel,
    period_start: NaiveDate,
    period_end: NaiveDate,
) -> Vec<MemberFill> {
    basket
        .iter()
        .map(|sec| {
            let mut bars = panel.bars_through(sec, period_start, period_end);
            match bars.next() {
                Some(first) => {
                    let last = bars.next_back().unwrap_or(first);
                    let ret = (last.close / first.close - 1.0) * 100.0;
                    MemberFill {
                        security: sec.clone(),
                        entry: Some(first.close),
                        exit: Some(last.close),
                        return_pct: ret,
                    }
                }
                None => {
                    log::debug!(
                        "{sec} has no bar in [{period_start}, {period_end}]: unfilled, 0%"
                    );
                    MemberFill {
                        security: sec.clone(),
                        entry: None,
                        exit: None,
                        return_pct: 0.0,
                    }
                }
            }
        })
        .collect()
}

/// Equal-weight basket return (%) over one holding period.
pub fn basket_period_return(
    basket: &BTreeSet<SecurityId>,
    panel: &Panel,
    period_start: NaiveDate,
    period_end: NaiveDate,
) -> Result<f64, StrategyError> {
    if basket.is_empty() {
        return Err(StrategyError::EmptyBasket);
    }
    let fills = basket_period_fills(basket, panel, period_start, period_end);
    Ok(fills.iter().map(|f| f.return_pct).sum::<f64>() / fills.len() as f64)
}

/// Transaction-cost-adjusted return: gross minus the combined one-time
/// charge for both legs, all in percent.
pub fn cost_adjust(r_gross: f64, cost_winner: f64, cost_loser: f64) -> f64 {
    r_gross - (cost_winner + cost_loser)
}

/// Which leg of the cohort a fill belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Winner,
    Loser,
}

impl Side {
    pub fn label(self) -> &'static str {
        match self {
            Side::Winner => "W",
            Side::Loser => "L",
        }
    }
}

/// Audit record: one member, one side, one holding period.
#[derive(Debug, Clone)]
pub struct FillRecord {
    pub side: Side,
    pub period: usize,
    pub fill: MemberFill,
}

/// Winner/loser leg returns for one holding period of a cohort.
#[derive(Debug, Clone, Copy)]
pub struct CohortPeriod {
    /// 1-based period index within the cohort.
    pub index: usize,
    pub r_winner: f64,
    pub r_loser: f64,
}

/// One formation date's portfolio tracked through its holding periods.
#[derive(Debug, Clone)]
pub struct CohortLedger {
    pub formation: NaiveDate,
    pub winner: BTreeSet<SecurityId>,
    pub loser: BTreeSet<SecurityId>,
    /// Exactly K periods unless the sample ended first.
    pub periods: Vec<CohortPeriod>,
    pub liquidation: NaiveDate,
    pub truncated: bool,
    pub fills: Vec<FillRecord>,
}

/// Per-period strategy output. All return columns are percent per period;
/// element `t` covers the period ending at `dates[t]`.
#[derive(Debug, Clone, Default)]
pub struct StrategySeries {
    pub dates: Vec<NaiveDate>,
    /// Long-short return before costs (winner-minus-loser for momentum,
    /// loser-minus-winner for contrarian).
    pub r_pi: Vec<f64>,
    /// Cost-adjusted return: the one-time charge spread evenly over each
    /// cohort's K periods.
    pub r_impl: Vec<f64>,
    /// Absolute implemented return `|r_W - r_L| - (c_W + c_L) / K`.
    pub r_abs: Vec<f64>,
    /// Equal-weight average winner-basket return over live cohorts.
    pub r_winner: Vec<f64>,
    /// Equal-weight average loser-basket return over live cohorts.
    pub r_loser: Vec<f64>,
    pub live_cohorts: Vec<usize>,
}

impl StrategySeries {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

fn build_cohort(
    spec: &StrategySpec,
    panel: &Panel,
    cal: &UniverseCalendar,
    rebal: &[NaiveDate],
    idx: usize,
) -> Result<Option<CohortLedger>, StrategyError> {
    let formation = rebal[idx];
    let window = LookbackWindow {
        start: rebal[idx - spec.lookback],
        formation,
    };
    let universe = eligible_in_window(cal, panel, formation, window.start);
    if universe.len() < spec.n_groups {
        log::warn!(
            "{formation}: only {} eligible securities for {} groups, skipping formation",
            universe.len(),
            spec.n_groups
        );
        return Ok(None);
    }
    let scores = match compute_scores(panel, &universe, window, &spec.criterion) {
        Ok(s) => s,
        Err(ScoreError::EmptyRanking { .. }) => {
            log::warn!("{formation}: all scores undefined, skipping formation");
            return Ok(None);
        }
        Err(e) => return Err(e.into()),
    };
    if scores.len() < spec.n_groups {
        log::warn!(
            "{formation}: only {} scorable securities for {} groups, skipping formation",
            scores.len(),
            spec.n_groups
        );
        return Ok(None);
    }
    let baskets = rank_baskets(&scores, spec.n_groups)?;
    let winner = baskets.winners().clone();
    let loser = baskets.losers().clone();

    let available = rebal.len() - 1 - idx;
    let n_periods = spec.holding.min(available);
    let mut periods = Vec::with_capacity(n_periods);
    let mut fills = Vec::new();
    for p in 1..=n_periods {
        let period_start = rebal[idx + p - 1];
        let period_end = rebal[idx + p];
        let winner_fills = basket_period_fills(&winner, panel, period_start, period_end);
        let loser_fills = basket_period_fills(&loser, panel, period_start, period_end);
        let mean = |fs: &[MemberFill]| fs.iter().map(|f| f.return_pct).sum::<f64>() / fs.len() as f64;
        periods.push(CohortPeriod {
            index: p,
            r_winner: mean(&winner_fills),
            r_loser: mean(&loser_fills),
        });
        fills.extend(winner_fills.into_iter().map(|fill| FillRecord {
            side: Side::Winner,
            period: p,
            fill,
        }));
        fills.extend(loser_fills.into_iter().map(|fill| FillRecord {
            side: Side::Loser,
            period: p,
            fill,
        }));
    }
    Ok(Some(CohortLedger {
        formation,
        winner,
        loser,
        periods,
        liquidation: rebal[idx + n_periods],
        truncated: n_periods < spec.holding,
        fills,
    }))
}

/// Runs the full strategy: scores and ranks at every formation date, tracks
/// each cohort over its holding periods, and aggregates live cohorts into
/// the per-period series.
pub fn run_strategy(
    spec: &StrategySpec,
    panel: &Panel,
    cal: &UniverseCalendar,
) -> Result<(StrategySeries, Vec<CohortLedger>), StrategyError> {
    spec.validate()?;
    let rebal = rebalance_dates(cal, spec.frequency)?;
    // First usable formation sits J periods into the grid, and a cohort
    // needs at least one period end after it.
    if rebal.len() < spec.lookback + 2 {
        return Err(StrategyError::NoCohorts);
    }
    let first_formation = spec.lookback;
    let last_formation = rebal.len() - 2;

    let cohorts: Vec<Option<CohortLedger>> = (first_formation..=last_formation)
        .into_par_iter()
        .map(|idx| build_cohort(spec, panel, cal, &rebal, idx))
        .collect::<Result<_, _>>()?;
    if cohorts.iter().all(Option::is_none) {
        return Err(StrategyError::NoCohorts);
    }

    let amortized_cost = (spec.cost_winner + spec.cost_loser) / spec.holding as f64;
    let direction = spec.mode.direction();
    let mut series = StrategySeries::default();
    for j in first_formation..=last_formation {
        let date = rebal[j + 1];
        let mut legs = Vec::new();
        let lowest = first_formation.max(j + 1 - spec.holding.min(j + 1));
        for f in lowest..=j {
            if let Some(cohort) = &cohorts[f - first_formation] {
                let p = j - f; // 0-based period index within the cohort
                if let Some(period) = cohort.periods.get(p) {
                    legs.push(*period);
                }
            }
        }
        if legs.is_empty() {
            log::warn!("{date}: no live cohorts, period omitted from the series");
            continue;
        }
        let n = legs.len() as f64;
        let mut pi = 0.0;
        let mut impl_ = 0.0;
        let mut abs = 0.0;
        let mut w = 0.0;
        let mut l = 0.0;
        for leg in &legs {
            let spread = leg.r_winner - leg.r_loser;
            pi += direction * spread;
            impl_ += direction * spread - amortized_cost;
            abs += spread.abs() - amortized_cost;
            w += leg.r_winner;
            l += leg.r_loser;
        }
        series.dates.push(date);
        series.r_pi.push(pi / n);
        series.r_impl.push(impl_ / n);
        series.r_abs.push(abs / n);
        series.r_winner.push(w / n);
        series.r_loser.push(l / n);
        series.live_cohorts.push(legs.len());
    }
    let cohorts: Vec<CohortLedger> = cohorts.into_iter().flatten().collect();
    Ok((series, cohorts))
}
