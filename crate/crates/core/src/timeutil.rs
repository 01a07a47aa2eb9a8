//! Timestamp handling for snapshot traces.
//!
//! All instants live in a single unnamed zone (the traces carry no offset),
//! stored as seconds since the Unix epoch. The trace text format is
//! `YYYY-MM-DD HH:MM:SS`.

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike, Weekday};

use crate::error::{Error, Result};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

/// Seconds in one snapshot slot. Traces are sampled every 10 minutes.
pub const SLOT_SECONDS: i64 = 600;

/// Snapshot slots per day.
pub const SLOTS_PER_DAY: u32 = 144;

/// An instant at second resolution, comparable and hashable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(i64);

impl Timestamp {
    pub fn from_epoch_seconds(secs: i64) -> Self {
        Timestamp(secs)
    }

    pub fn epoch_seconds(self) -> i64 {
        self.0
    }

    pub fn parse(text: &str) -> Result<Self> {
        let dt = NaiveDateTime::parse_from_str(text.trim(), TIMESTAMP_FORMAT)
            .map_err(|e| Error::invalid(format!("malformed timestamp {text:?}: {e}")))?;
        Ok(Timestamp(dt.and_utc().timestamp()))
    }

    pub fn format(self) -> String {
        self.datetime().format(TIMESTAMP_FORMAT).to_string()
    }

    /// Snap down to the enclosing 10-minute slot boundary. Sub-slot jitter
    /// in the raw traces is measurement noise from the sampling query.
    pub fn snap_to_slot(self) -> Self {
        Timestamp(self.0.div_euclid(SLOT_SECONDS) * SLOT_SECONDS)
    }

    fn datetime(self) -> NaiveDateTime {
        chrono::DateTime::from_timestamp(self.0, 0)
            .expect("timestamp in representable range")
            .naive_utc()
    }

    pub fn date(self) -> NaiveDate {
        self.datetime().date()
    }

    /// Whole calendar days from `origin`'s date to this instant's date.
    /// Negative when this instant precedes the origin date.
    pub fn day_index_from(self, origin: Timestamp) -> i64 {
        (self.date() - origin.date()).num_days()
    }

    pub fn hour_of_day(self) -> u32 {
        self.datetime().hour()
    }

    /// `"YYYY-MM"` bucket key.
    pub fn month_key(self) -> String {
        let d = self.date();
        format!("{:04}-{:02}", d.year(), d.month())
    }

    /// `"YYYY-MM-DD"` bucket key.
    pub fn day_key(self) -> String {
        self.date().format("%Y-%m-%d").to_string()
    }

    pub fn weekday(self) -> Weekday {
        self.date().weekday()
    }
}

/// Closed interval `[start, end]` limiting an analysis run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeWindow {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl TimeWindow {
    pub fn new(start: Timestamp, end: Timestamp) -> Result<Self> {
        if start > end {
            return Err(Error::invalid(format!(
                "window start {} is after end {}",
                start.format(),
                end.format()
            )));
        }
        Ok(TimeWindow { start, end })
    }

    pub fn contains(&self, t: Timestamp) -> bool {
        self.start <= t && t <= self.end
    }

    /// Number of calendar days covered, counting both boundary days.
    pub fn days(&self) -> u32 {
        (self.end.day_index_from(self.start) + 1) as u32
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_format_round_trip() {
        let t = Timestamp::parse("2008-12-03 12:20:00").unwrap();
        assert_eq!(t.format(), "2008-12-03 12:20:00");
    }

    #[test]
    fn rejects_malformed() {
        assert!(Timestamp::parse("2008-13-03 12:20:00").is_err());
        assert!(Timestamp::parse("not a time").is_err());
    }

    #[test]
    fn snaps_down_to_slot() {
        let t = Timestamp::parse("2008-12-03 12:27:42").unwrap();
        assert_eq!(t.snap_to_slot().format(), "2008-12-03 12:20:00");
        let aligned = Timestamp::parse("2008-12-03 12:20:00").unwrap();
        assert_eq!(aligned.snap_to_slot(), aligned);
    }

    #[test]
    fn day_index_counts_calendar_days() {
        let origin = Timestamp::parse("2008-01-01 23:50:00").unwrap();
        let next = Timestamp::parse("2008-01-02 00:10:00").unwrap();
        assert_eq!(next.day_index_from(origin), 1);
        assert_eq!(origin.day_index_from(origin), 0);
    }

    #[test]
    fn window_is_closed_and_validated() {
        let a = Timestamp::parse("2008-01-01 00:00:00").unwrap();
        let b = Timestamp::parse("2008-12-31 23:59:59").unwrap();
        let w = TimeWindow::new(a, b).unwrap();
        assert!(w.contains(a));
        assert!(w.contains(b));
        assert_eq!(w.days(), 366); // 2008 is a leap year
        assert!(TimeWindow::new(b, a).is_err());
    }
}
