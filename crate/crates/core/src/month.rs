use chrono::{DateTime, Datelike, Utc};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A UTC calendar month, stored as months since year 0. Serializes as
/// "YYYY-MM".
///
/// All monthly bucketing in the pipeline goes through this type so that
/// month arithmetic is identical everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth(i64);

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Self {
        debug_assert!((1..=12).contains(&month));
        YearMonth(i64::from(year) * 12 + i64::from(month) - 1)
    }

    pub fn of(ts: DateTime<Utc>) -> Self {
        YearMonth::new(ts.year(), ts.month())
    }

    pub fn year(self) -> i32 {
        self.0.div_euclid(12) as i32
    }

    pub fn month(self) -> u32 {
        (self.0.rem_euclid(12) + 1) as u32
    }

    pub fn next(self) -> Self {
        YearMonth(self.0 + 1)
    }

    /// Signed number of calendar months from `origin` to `self`.
    pub fn index_from(self, origin: YearMonth) -> i64 {
        self.0 - origin.0
    }
}

impl std::fmt::Display for YearMonth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:04}-{:02}", self.year(), self.month())
    }
}

impl std::str::FromStr for YearMonth {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (y, m) = s
            .split_once('-')
            .ok_or_else(|| format!("expected YYYY-MM, got {s:?}"))?;
        let year: i32 = y.parse().map_err(|_| format!("bad year in {s:?}"))?;
        let month: u32 = m.parse().map_err(|_| format!("bad month in {s:?}"))?;
        if !(1..=12).contains(&month) {
            return Err(format!("month out of range in {s:?}"));
        }
        Ok(YearMonth::new(year, month))
    }
}

impl Serialize for YearMonth {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for YearMonth {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(D::Error::custom)
    }
}

/// Months covered by the half-open window `[start, end)`, in order.
///
/// A month is covered if any instant of the window falls inside it, so the
/// result is the contiguous run from the month of `start` through the month
/// of the last instant before `end`. Empty windows yield an empty list.
pub fn months_in_window(start: DateTime<Utc>, end: DateTime<Utc>) -> Vec<YearMonth> {
    if start >= end {
        return Vec::new();
    }
    let first = YearMonth::of(start);
    let last = YearMonth::of(end - chrono::Duration::seconds(1));
    let mut months = Vec::new();
    let mut m = first;
    while m <= last {
        months.push(m);
        m = m.next();
    }
    months
}
