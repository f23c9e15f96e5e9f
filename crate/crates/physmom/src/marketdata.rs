//! Market data ingestion and point-in-time views.
//!
//! Everything downstream (scoring, cohort construction, reporting) reads from
//! the immutable [`Panel`] and [`UniverseCalendar`] built here. Ingestion is
//! single-threaded and fails whole: either every row of an input file parses
//! and validates, or the load returns an error naming the offending line.
//!
//! All collections are ordered (`BTreeMap`/`BTreeSet`) so that identical
//! input files yield identical iteration order, panels, and date lists on
//! every run regardless of thread count.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use thiserror::Error;

/// Errors raised while loading or querying market data.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: expected header `{expected}`, found `{found}`")]
    Schema {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },
    #[error("{path}:{line}: duplicate bar for ({ticker}, {date})")]
    DuplicateBar {
        path: PathBuf,
        line: u64,
        ticker: String,
        date: NaiveDate,
    },
    #[error("invalid bar for ({ticker}, {date}): {msg}")]
    InvalidBar {
        ticker: String,
        date: NaiveDate,
        msg: String,
    },
    #[error("membership intervals overlap for {ticker}")]
    OverlappingMembership { ticker: String },
    #[error("factor dates must be strictly increasing (row {line})")]
    FactorOrder { line: u64 },
    #[error("empty trading calendar")]
    EmptyCalendar,
    #[error("{date} is not a formation date of the {frequency} calendar")]
    NotAFormationDate {
        date: NaiveDate,
        frequency: Frequency,
    },
    #[error("insufficient history: formation {formation} needs {lookback} prior periods")]
    InsufficientHistory {
        formation: NaiveDate,
        lookback: usize,
    },
}

/// Opaque security identifier (ticker or permanent id).
///
/// The lexicographic `Ord` on the underlying string is the total order used
/// for every deterministic tie-break in the engine.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SecurityId(String);

impl SecurityId {
    pub fn new(id: impl Into<String>) -> Self {
        SecurityId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SecurityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SecurityId {
    fn from(s: &str) -> Self {
        SecurityId(s.to_owned())
    }
}

/// One security-day observation.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyBar {
    pub date: NaiveDate,
    /// Close price, currency units. Must be > 0.
    pub close: f64,
    /// Shares traded, >= 0.
    pub volume: f64,
    /// Shares outstanding, > 0.
    pub shares_outstanding: f64,
    /// Total transaction value in cash, >= 0.
    pub traded_value: f64,
    /// Market capitalization, > 0.
    pub market_cap: f64,
}

/// Validation knobs applied to every bar on ingestion.
#[derive(Debug, Clone)]
pub struct BarValidation {
    /// A day's volume may not exceed shares outstanding times this multiple.
    pub volume_sanity_multiple: f64,
}

impl Default for BarValidation {
    fn default() -> Self {
        BarValidation {
            volume_sanity_multiple: 10.0,
        }
    }
}

impl DailyBar {
    fn validate(&self, rules: &BarValidation) -> Result<(), String> {
        let fields = [
            ("close", self.close),
            ("volume", self.volume),
            ("shares_out", self.shares_outstanding),
            ("traded_value", self.traded_value),
            ("market_cap", self.market_cap),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(format!("{name} is not finite"));
            }
        }
        if self.close <= 0.0 {
            return Err(format!("close must be > 0, got {}", self.close));
        }
        if self.volume < 0.0 {
            return Err(format!("volume must be >= 0, got {}", self.volume));
        }
        if self.shares_outstanding <= 0.0 {
            return Err(format!(
                "shares_out must be > 0, got {}",
                self.shares_outstanding
            ));
        }
        if self.traded_value < 0.0 {
            return Err(format!(
                "traded_value must be >= 0, got {}",
                self.traded_value
            ));
        }
        if self.market_cap <= 0.0 {
            return Err(format!("market_cap must be > 0, got {}", self.market_cap));
        }
        if self.volume > self.shares_outstanding * rules.volume_sanity_multiple {
            return Err(format!(
                "volume {} exceeds {} x shares outstanding",
                self.volume, rules.volume_sanity_multiple
            ));
        }
        Ok(())
    }
}

/// Immutable panel of daily bars keyed by (security, date).
///
/// `trading_days` is the union of all bar dates, so every panel key satisfies
/// the calendar-closure invariant by construction.
#[derive(Debug, Clone, Default)]
pub struct Panel {
    bars: BTreeMap<SecurityId, BTreeMap<NaiveDate, DailyBar>>,
    trading_days: BTreeSet<NaiveDate>,
}

impl Panel {
    /// Builds a panel from (security, bar) rows with default validation.
    pub fn from_rows(
        rows: impl IntoIterator<Item = (SecurityId, DailyBar)>,
    ) -> Result<Self, DataError> {
        Self::from_rows_with(rows, &BarValidation::default())
    }

    pub fn from_rows_with(
        rows: impl IntoIterator<Item = (SecurityId, DailyBar)>,
        rules: &BarValidation,
    ) -> Result<Self, DataError> {
        let mut panel = Panel::default();
        for (sec, bar) in rows {
            panel.insert(sec, bar, rules)?;
        }
        Ok(panel)
    }

    fn insert(
        &mut self,
        sec: SecurityId,
        bar: DailyBar,
        rules: &BarValidation,
    ) -> Result<(), DataError> {
        bar.validate(rules).map_err(|msg| DataError::InvalidBar {
            ticker: sec.to_string(),
            date: bar.date,
            msg,
        })?;
        self.trading_days.insert(bar.date);
        let per_sec = self.bars.entry(sec.clone()).or_default();
        if per_sec.insert(bar.date, bar.clone()).is_some() {
            return Err(DataError::InvalidBar {
                ticker: sec.to_string(),
                date: bar.date,
                msg: "duplicate (security, date) key".into(),
            });
        }
        Ok(())
    }

    pub fn securities(&self) -> impl Iterator<Item = &SecurityId> {
        self.bars.keys()
    }

    pub fn trading_days(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.trading_days.iter().copied()
    }

    pub fn n_bars(&self) -> usize {
        self.bars.values().map(|m| m.len()).sum()
    }

    pub fn bar(&self, sec: &SecurityId, date: NaiveDate) -> Option<&DailyBar> {
        self.bars.get(sec).and_then(|m| m.get(&date))
    }

    /// Bars for `sec` with `start <= date < end`, ascending by date.
    pub fn bars_in(
        &self,
        sec: &SecurityId,
        start: NaiveDate,
        end: NaiveDate,
    ) -> impl Iterator<Item = &DailyBar> {
        self.bars
            .get(sec)
            .into_iter()
            .flat_map(move |m| m.range(start..end).map(|(_, b)| b))
    }

    /// Bars for `sec` with `start <= date <= end`, ascending by date.
    pub fn bars_through(
        &self,
        sec: &SecurityId,
        start: NaiveDate,
        end: NaiveDate,
    ) -> impl Iterator<Item = &DailyBar> {
        self.bars
            .get(sec)
            .into_iter()
            .flat_map(move |m| m.range(start..=end).map(|(_, b)| b))
    }

    /// Number of bars for `sec` in the half-open window `[start, end)`.
    pub fn bar_count_in(&self, sec: &SecurityId, start: NaiveDate, end: NaiveDate) -> usize {
        self.bars
            .get(sec)
            .map(|m| m.range(start..end).count())
            .unwrap_or(0)
    }

    /// Copy of the panel restricted to bars within `[from, to]`.
    pub fn restricted(&self, from: Option<NaiveDate>, to: Option<NaiveDate>) -> Panel {
        let lo = from.unwrap_or(NaiveDate::MIN);
        let hi = to.unwrap_or(NaiveDate::MAX);
        let mut out = Panel::default();
        for (sec, days) in &self.bars {
            let kept: BTreeMap<NaiveDate, DailyBar> = days
                .range(lo..=hi)
                .map(|(d, b)| (*d, b.clone()))
                .collect();
            if !kept.is_empty() {
                out.trading_days.extend(kept.keys().copied());
                out.bars.insert(sec.clone(), kept);
            }
        }
        out
    }
}

/// One membership interval; `end = None` means still a member.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MembershipInterval {
    pub start: NaiveDate,
    pub end: Option<NaiveDate>,
}

impl MembershipInterval {
    pub fn contains(&self, date: NaiveDate) -> bool {
        date >= self.start && self.end.map_or(true, |e| date <= e)
    }
}

/// Point-in-time index membership plus the trading-day list.
#[derive(Debug, Clone)]
pub struct UniverseCalendar {
    memberships: BTreeMap<SecurityId, Vec<MembershipInterval>>,
    trading_days: Vec<NaiveDate>,
}

impl UniverseCalendar {
    /// Assembles a calendar, sorting intervals and rejecting overlaps.
    pub fn new(
        memberships: BTreeMap<SecurityId, Vec<MembershipInterval>>,
        trading_days: impl IntoIterator<Item = NaiveDate>,
    ) -> Result<Self, DataError> {
        let days: BTreeSet<NaiveDate> = trading_days.into_iter().collect();
        let mut sorted = memberships;
        for (sec, intervals) in sorted.iter_mut() {
            intervals.sort_by_key(|iv| iv.start);
            for pair in intervals.windows(2) {
                let overlaps = match pair[0].end {
                    None => true,
                    Some(e) => e >= pair[1].start,
                };
                if overlaps {
                    return Err(DataError::OverlappingMembership {
                        ticker: sec.to_string(),
                    });
                }
            }
        }
        Ok(UniverseCalendar {
            memberships: sorted,
            trading_days: days.into_iter().collect(),
        })
    }

    /// Calendar where every listed security is a member on every trading day.
    pub fn full_membership(
        securities: impl IntoIterator<Item = SecurityId>,
        trading_days: impl IntoIterator<Item = NaiveDate>,
    ) -> Result<Self, DataError> {
        let days: BTreeSet<NaiveDate> = trading_days.into_iter().collect();
        let (first, last) = match (days.iter().next(), days.iter().next_back()) {
            (Some(f), Some(l)) => (*f, *l),
            _ => return Err(DataError::EmptyCalendar),
        };
        let memberships = securities
            .into_iter()
            .map(|sec| {
                (
                    sec,
                    vec![MembershipInterval {
                        start: first,
                        end: Some(last),
                    }],
                )
            })
            .collect();
        UniverseCalendar::new(memberships, days)
    }

    pub fn trading_days(&self) -> &[NaiveDate] {
        &self.trading_days
    }

    pub fn is_member(&self, sec: &SecurityId, date: NaiveDate) -> bool {
        self.memberships
            .get(sec)
            .map(|ivs| ivs.iter().any(|iv| iv.contains(date)))
            .unwrap_or(false)
    }

    pub fn members_at(&self, date: NaiveDate) -> BTreeSet<SecurityId> {
        self.memberships
            .iter()
            .filter(|(_, ivs)| ivs.iter().any(|iv| iv.contains(date)))
            .map(|(sec, _)| sec.clone())
            .collect()
    }

    pub fn n_securities(&self) -> usize {
        self.memberships.len()
    }

    /// Calendar restricted to trading days within `[from, to]`.
    pub fn restricted(&self, from: Option<NaiveDate>, to: Option<NaiveDate>) -> UniverseCalendar {
        let lo = from.unwrap_or(NaiveDate::MIN);
        let hi = to.unwrap_or(NaiveDate::MAX);
        UniverseCalendar {
            memberships: self.memberships.clone(),
            trading_days: self
                .trading_days
                .iter()
                .copied()
                .filter(|d| *d >= lo && *d <= hi)
                .collect(),
        }
    }
}

/// One row of the factor file: date plus MKT/SMB/HML/RF in percent per period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorRow {
    pub date: NaiveDate,
    pub mkt: f64,
    pub smb: f64,
    pub hml: f64,
    pub rf: f64,
}

/// Rebalancing frequency for formation dates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frequency {
    Weekly,
    Monthly,
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Frequency::Weekly => f.write_str("weekly"),
            Frequency::Monthly => f.write_str("monthly"),
        }
    }
}

impl FromStr for Frequency {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "weekly" => Ok(Frequency::Weekly),
            "monthly" => Ok(Frequency::Monthly),
            other => Err(format!("unknown frequency `{other}` (weekly|monthly)")),
        }
    }
}

/// Formation dates: the first trading day of each ISO week (weekly) or of
/// each calendar month (monthly). Strictly increasing.
pub fn rebalance_dates(
    cal: &UniverseCalendar,
    frequency: Frequency,
) -> Result<Vec<NaiveDate>, DataError> {
    if cal.trading_days().is_empty() {
        return Err(DataError::EmptyCalendar);
    }
    let key = |d: NaiveDate| -> (i32, u32) {
        match frequency {
            Frequency::Weekly => {
                let iso = d.iso_week();
                (iso.year(), iso.week())
            }
            Frequency::Monthly => (d.year(), d.month()),
        }
    };
    let mut out = Vec::new();
    let mut prev_key = None;
    for &day in cal.trading_days() {
        let k = key(day);
        if prev_key != Some(k) {
            out.push(day);
            prev_key = Some(k);
        }
    }
    Ok(out)
}

/// Members of the index at `formation` with at least two bars inside the
/// lookback window `[formation - j periods, formation)`.
///
/// Uses no membership data or bars dated on/after `formation` except the
/// membership test at the formation date itself.
pub fn eligible_universe(
    cal: &UniverseCalendar,
    panel: &Panel,
    formation: NaiveDate,
    j: usize,
    frequency: Frequency,
) -> Result<BTreeSet<SecurityId>, DataError> {
    let rebal = rebalance_dates(cal, frequency)?;
    let idx = rebal
        .binary_search(&formation)
        .map_err(|_| DataError::NotAFormationDate {
            date: formation,
            frequency,
        })?;
    if idx < j {
        return Err(DataError::InsufficientHistory {
            formation,
            lookback: j,
        });
    }
    let start = rebal[idx - j];
    Ok(eligible_in_window(cal, panel, formation, start))
}

/// Eligibility with an already-resolved window start (used by the strategy
/// loop, which resolves the formation grid once).
pub(crate) fn eligible_in_window(
    cal: &UniverseCalendar,
    panel: &Panel,
    formation: NaiveDate,
    window_start: NaiveDate,
) -> BTreeSet<SecurityId> {
    cal.members_at(formation)
        .into_iter()
        .filter(|sec| panel.bar_count_in(sec, window_start, formation) >= 2)
        .collect()
}

// ---------------------------------------------------------------------------
// CSV loaders
// ---------------------------------------------------------------------------

pub const BARS_HEADER: &str = "date,ticker,close,volume,shares_out,traded_value,market_cap";
pub const MEMBERSHIP_HEADER: &str = "ticker,start_date,end_date";
pub const FACTORS_HEADER: &str = "date,mkt,smb,hml,rf";

fn open_reader(path: &Path) -> Result<csv::Reader<File>, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.to_owned(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn check_header(reader: &mut csv::Reader<File>, path: &Path, expected: &str) -> Result<(), DataError> {
    let headers = reader.headers().map_err(|e| DataError::Parse {
        path: path.to_owned(),
        line: 1,
        msg: e.to_string(),
    })?;
    let found = headers.iter().collect::<Vec<_>>().join(",");
    if found != expected {
        return Err(DataError::Schema {
            path: path.to_owned(),
            expected: expected.to_owned(),
            found,
        });
    }
    Ok(())
}

fn parse_date(field: &str, path: &Path, line: u64, name: &str) -> Result<NaiveDate, DataError> {
    NaiveDate::parse_from_str(field, "%Y-%m-%d").map_err(|_| DataError::Parse {
        path: path.to_owned(),
        line,
        msg: format!("invalid {name} `{field}` (expected YYYY-MM-DD)"),
    })
}

fn parse_num(field: &str, path: &Path, line: u64, name: &str) -> Result<f64, DataError> {
    field.parse::<f64>().map_err(|_| DataError::Parse {
        path: path.to_owned(),
        line,
        msg: format!("invalid {name} `{field}`"),
    })
}

/// Loads the bar CSV (`date,ticker,close,volume,shares_out,traded_value,market_cap`).
///
/// The whole load fails on the first malformed row, duplicate (security, date)
/// key, or invariant violation, with the line number in the error.
pub fn load_bars(path: &Path, rules: &BarValidation) -> Result<Panel, DataError> {
    let mut reader = open_reader(path)?;
    check_header(&mut reader, path, BARS_HEADER)?;
    let mut panel = Panel::default();
    for record in reader.records() {
        let record = record.map_err(|e| DataError::Parse {
            path: path.to_owned(),
            line: e
                .position()
                .map(|p| p.line())
                .unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 7 {
            return Err(DataError::Parse {
                path: path.to_owned(),
                line,
                msg: format!("expected 7 fields, found {}", record.len()),
            });
        }
        let date = parse_date(&record[0], path, line, "date")?;
        let ticker = record[1].to_owned();
        if ticker.is_empty() {
            return Err(DataError::Parse {
                path: path.to_owned(),
                line,
                msg: "empty ticker".into(),
            });
        }
        let bar = DailyBar {
            date,
            close: parse_num(&record[2], path, line, "close")?,
            volume: parse_num(&record[3], path, line, "volume")?,
            shares_outstanding: parse_num(&record[4], path, line, "shares_out")?,
            traded_value: parse_num(&record[5], path, line, "traded_value")?,
            market_cap: parse_num(&record[6], path, line, "market_cap")?,
        };
        let sec = SecurityId::new(ticker.clone());
        if panel.bar(&sec, date).is_some() {
            return Err(DataError::DuplicateBar {
                path: path.to_owned(),
                line,
                ticker,
                date,
            });
        }
        bar.validate(rules).map_err(|msg| DataError::Parse {
            path: path.to_owned(),
            line,
            msg,
        })?;
        panel.insert(sec, bar, rules)?;
    }
    Ok(panel)
}

/// Loads the membership CSV (`ticker,start_date,end_date`; empty end means
/// still a member) as raw intervals. Pair with the panel's trading days via
/// [`UniverseCalendar::new`].
pub fn load_membership(
    path: &Path,
) -> Result<BTreeMap<SecurityId, Vec<MembershipInterval>>, DataError> {
    let mut reader = open_reader(path)?;
    check_header(&mut reader, path, MEMBERSHIP_HEADER)?;
    let mut out: BTreeMap<SecurityId, Vec<MembershipInterval>> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| DataError::Parse {
            path: path.to_owned(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 3 {
            return Err(DataError::Parse {
                path: path.to_owned(),
                line,
                msg: format!("expected 3 fields, found {}", record.len()),
            });
        }
        let ticker = record[0].to_owned();
        if ticker.is_empty() {
            return Err(DataError::Parse {
                path: path.to_owned(),
                line,
                msg: "empty ticker".into(),
            });
        }
        let start = parse_date(&record[1], path, line, "start_date")?;
        let end = if record[2].is_empty() {
            None
        } else {
            Some(parse_date(&record[2], path, line, "end_date")?)
        };
        if let Some(e) = end {
            if e < start {
                return Err(DataError::Parse {
                    path: path.to_owned(),
                    line,
                    msg: format!("end_date {e} earlier than start_date {start}"),
                });
            }
        }
        out.entry(SecurityId::new(ticker))
            .or_default()
            .push(MembershipInterval { start, end });
    }
    Ok(out)
}

/// Loads the factor CSV (`date,mkt,smb,hml,rf`, percent units per period).
/// Dates must be strictly increasing.
pub fn load_factors(path: &Path) -> Result<Vec<FactorRow>, DataError> {
    let mut reader = open_reader(path)?;
    check_header(&mut reader, path, FACTORS_HEADER)?;
    let mut out: Vec<FactorRow> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| DataError::Parse {
            path: path.to_owned(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 5 {
            return Err(DataError::Parse {
                path: path.to_owned(),
                line,
                msg: format!("expected 5 fields, found {}", record.len()),
            });
        }
        let row = FactorRow {
            date: parse_date(&record[0], path, line, "date")?,
            mkt: parse_num(&record[1], path, line, "mkt")?,
            smb: parse_num(&record[2], path, line, "smb")?,
            hml: parse_num(&record[3], path, line, "hml")?,
            rf: parse_num(&record[4], path, line, "rf")?,
        };
        for (name, v) in [
            ("mkt", row.mkt),
            ("smb", row.smb),
            ("hml", row.hml),
            ("rf", row.rf),
        ] {
            if !v.is_finite() {
                return Err(DataError::Parse {
                    path: path.to_owned(),
                    line,
                    msg: format!("{name} is not finite"),
                });
            }
        }
        if let Some(last) = out.last() {
            if row.date <= last.date {
                return Err(DataError::FactorOrder { line });
            }
        }
        out.push(row);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn bar(date: &str, close: f64) -> DailyBar {
        DailyBar {
            date: d(date),
            close,
            volume: 1_000.0,
            shares_outstanding: 1_000_000.0,
            traded_value: close * 1_000.0,
            market_cap: close * 1_000_000.0,
        }
    }

    fn write_temp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_bars_counts_rows() {
        let f = write_temp(
            "date,ticker,close,volume,shares_out,traded_value,market_cap\n\
             2003-01-02,AAA,10.0,100,1000,1000,10000\n\
             2003-01-03,AAA,10.5,100,1000,1050,10500\n\
             2003-01-06,AAA,10.2,100,1000,1020,10200\n\
             2003-01-02,BBB,20.0,200,2000,4000,40000\n\
             2003-01-03,BBB,21.0,200,2000,4200,42000\n\
             2003-01-06,BBB,20.5,200,2000,4100,41000\n",
        );
        let panel = load_bars(f.path(), &BarValidation::default()).unwrap();
        assert_eq!(panel.n_bars(), 6);
        assert_eq!(panel.securities().count(), 2);
        assert_eq!(panel.trading_days().count(), 3);
    }

    #[test]
    fn load_bars_rejects_zero_close_with_line() {
        let f = write_temp(
            "date,ticker,close,volume,shares_out,traded_value,market_cap\n\
             2003-01-02,AAA,10.0,100,1000,1000,10000\n\
             2003-01-03,AAA,0.0,100,1000,0,10000\n",
        );
        let err = load_bars(f.path(), &BarValidation::default()).unwrap_err();
        match err {
            DataError::Parse { line, ref msg, .. } => {
                assert_eq!(line, 3);
                assert!(msg.contains("close"), "msg: {msg}");
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn load_bars_rejects_duplicate_key() {
        let f = write_temp(
            "date,ticker,close,volume,shares_out,traded_value,market_cap\n\
             2003-01-02,AAA,10.0,100,1000,1000,10000\n\
             2003-01-02,AAA,10.5,100,1000,1050,10500\n",
        );
        let err = load_bars(f.path(), &BarValidation::default()).unwrap_err();
        assert!(matches!(err, DataError::DuplicateBar { line: 3, .. }));
    }

    #[test]
    fn load_bars_rejects_wrong_header() {
        let f = write_temp("date,symbol,close\n2003-01-02,AAA,10.0\n");
        let err = load_bars(f.path(), &BarValidation::default()).unwrap_err();
        assert!(matches!(err, DataError::Schema { .. }));
    }

    #[test]
    fn load_bars_enforces_volume_sanity() {
        let f = write_temp(
            "date,ticker,close,volume,shares_out,traded_value,market_cap\n\
             2003-01-02,AAA,10.0,50000,1000,500000,10000\n",
        );
        let err = load_bars(f.path(), &BarValidation::default()).unwrap_err();
        assert!(matches!(err, DataError::Parse { line: 2, .. }));
    }

    #[test]
    fn membership_open_interval_and_overlap() {
        let f = write_temp(
            "ticker,start_date,end_date\n\
             AAA,2003-01-02,2004-06-30\n\
             AAA,2005-01-03,\n\
             BBB,2003-01-02,\n",
        );
        let memberships = load_membership(f.path()).unwrap();
        let cal =
            UniverseCalendar::new(memberships, [d("2003-01-02"), d("2005-02-01")]).unwrap();
        let aaa = SecurityId::from("AAA");
        assert!(cal.is_member(&aaa, d("2003-06-02")));
        assert!(!cal.is_member(&aaa, d("2004-12-01")));
        assert!(cal.is_member(&aaa, d("2005-02-01")));

        let f2 = write_temp(
            "ticker,start_date,end_date\n\
             AAA,2003-01-02,2004-06-30\n\
             AAA,2004-06-30,\n",
        );
        let memberships2 = load_membership(f2.path()).unwrap();
        let err = UniverseCalendar::new(memberships2, [d("2003-01-02")]).unwrap_err();
        assert!(matches!(err, DataError::OverlappingMembership { .. }));
    }

    #[test]
    fn factors_require_increasing_dates() {
        let f = write_temp(
            "date,mkt,smb,hml,rf\n\
             2003-01-06,0.5,0.1,-0.2,0.05\n\
             2003-01-06,0.4,0.0,0.1,0.05\n",
        );
        let err = load_factors(f.path()).unwrap_err();
        assert!(matches!(err, DataError::FactorOrder { line: 3 }));
    }

    #[test]
    fn weekly_rebalance_picks_first_trading_day_of_week() {
        // Two full Mon-Fri weeks.
        let days: Vec<NaiveDate> = [
            "2003-01-06", "2003-01-07", "2003-01-08", "2003-01-09", "2003-01-10",
            "2003-01-13", "2003-01-14", "2003-01-15", "2003-01-16", "2003-01-17",
        ]
        .iter()
        .map(|s| d(s))
        .collect();
        let cal = UniverseCalendar::full_membership([SecurityId::from("AAA")], days).unwrap();
        let dates = rebalance_dates(&cal, Frequency::Weekly).unwrap();
        assert_eq!(dates, vec![d("2003-01-06"), d("2003-01-13")]);
    }

    #[test]
    fn weekly_rebalance_falls_to_tuesday_on_monday_holiday() {
        let days: Vec<NaiveDate> = [
            "2003-01-06", "2003-01-07", "2003-01-08", "2003-01-09", "2003-01-10",
            // Monday 2003-01-13 is a holiday.
            "2003-01-14", "2003-01-15", "2003-01-16", "2003-01-17",
        ]
        .iter()
        .map(|s| d(s))
        .collect();
        let cal = UniverseCalendar::full_membership([SecurityId::from("AAA")], days).unwrap();
        let dates = rebalance_dates(&cal, Frequency::Weekly).unwrap();
        assert_eq!(dates, vec![d("2003-01-06"), d("2003-01-14")]);
    }

    #[test]
    fn monthly_rebalance_single_month() {
        let days: Vec<NaiveDate> = (2..=30)
            .filter_map(|day| NaiveDate::from_ymd_opt(2003, 1, day))
            .filter(|dt| dt.weekday().number_from_monday() <= 5)
            .collect();
        let cal = UniverseCalendar::full_membership([SecurityId::from("AAA")], days).unwrap();
        let dates = rebalance_dates(&cal, Frequency::Monthly).unwrap();
        assert_eq!(dates, vec![d("2003-01-02")]);
    }

    #[test]
    fn empty_calendar_is_an_error() {
        let cal = UniverseCalendar::new(BTreeMap::new(), Vec::new()).unwrap();
        assert!(matches!(
            rebalance_dates(&cal, Frequency::Weekly),
            Err(DataError::EmptyCalendar)
        ));
    }

    #[test]
    fn eligibility_needs_two_bars_in_window() {
        // Three Mon-Fri weeks; AAA trades every day, BBB only one day in the
        // lookback week, CCC delisted before formation.
        let mut days = Vec::new();
        for day in ["06", "07", "08", "09", "10", "13", "14", "15", "16", "17", "20"] {
            days.push(d(&format!("2003-01-{day}")));
        }
        let mut rows = Vec::new();
        for &day in &days {
            rows.push((SecurityId::from("AAA"), bar(&day.to_string(), 10.0)));
        }
        rows.push((SecurityId::from("BBB"), bar("2003-01-14", 5.0)));
        for &day in &days[..5] {
            rows.push((SecurityId::from("CCC"), bar(&day.to_string(), 7.0)));
        }
        let panel = Panel::from_rows(rows).unwrap();

        let mut memberships: BTreeMap<SecurityId, Vec<MembershipInterval>> = BTreeMap::new();
        for sec in ["AAA", "BBB"] {
            memberships.insert(
                SecurityId::from(sec),
                vec![MembershipInterval {
                    start: d("2003-01-06"),
                    end: None,
                }],
            );
        }
        memberships.insert(
            SecurityId::from("CCC"),
            vec![MembershipInterval {
                start: d("2003-01-06"),
                end: Some(d("2003-01-10")),
            }],
        );
        let cal = UniverseCalendar::new(memberships, days).unwrap();

        let eligible =
            eligible_universe(&cal, &panel, d("2003-01-20"), 1, Frequency::Weekly).unwrap();
        assert!(eligible.contains(&SecurityId::from("AAA")));
        assert!(!eligible.contains(&SecurityId::from("BBB")), "one bar only");
        assert!(!eligible.contains(&SecurityId::from("CCC")), "delisted");

        // Formation earlier than J periods after data start.
        let err =
            eligible_universe(&cal, &panel, d("2003-01-06"), 1, Frequency::Weekly).unwrap_err();
        assert!(matches!(err, DataError::InsufficientHistory { .. }));
    }

    #[test]
    fn panel_restriction_clamps_bars_and_days() {
        let rows = vec![
            (SecurityId::from("AAA"), bar("2003-01-06", 10.0)),
            (SecurityId::from("AAA"), bar("2003-01-07", 11.0)),
            (SecurityId::from("AAA"), bar("2003-01-08", 12.0)),
        ];
        let panel = Panel::from_rows(rows).unwrap();
        let clipped = panel.restricted(Some(d("2003-01-07")), None);
        assert_eq!(clipped.n_bars(), 2);
        assert_eq!(clipped.trading_days().count(), 2);
    }
}
