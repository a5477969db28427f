//! Simulation clock.
//!
//! Time is kept as integer nanoseconds so slot arithmetic and event ordering
//! are exact. Conversions to and from seconds happen only at the edges
//! (configuration, traces, reports).

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

const NANOS_PER_SEC: u64 = 1_000_000_000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us * 1_000)
    }

    /// Rounds to the nearest nanosecond. Negative and non-finite inputs clamp to zero.
    pub fn from_secs_f64(secs: f64) -> Self {
        if !secs.is_finite() || secs <= 0.0 {
            return SimTime::ZERO;
        }
        SimTime((secs * NANOS_PER_SEC as f64).round() as u64)
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / NANOS_PER_SEC as f64
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }

    /// Smallest multiple of `step` (counted from `origin`) that is `>= self`.
    pub fn ceil_to_grid(self, origin: SimTime, step: SimTime) -> SimTime {
        if self <= origin || step.0 == 0 {
            return origin.max(self);
        }
        let offset = self.0 - origin.0;
        let k = offset.div_ceil(step.0);
        SimTime(origin.0 + k * step.0)
    }

    /// Parses the fixed nine-decimal representation produced by `Display`.
    pub fn parse(s: &str) -> Option<SimTime> {
        let (whole, frac) = match s.split_once('.') {
            Some((w, f)) => (w, f),
            None => (s, ""),
        };
        if whole.is_empty() || frac.len() > 9 || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let whole: u64 = whole.parse().ok()?;
        let mut frac_ns: u64 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
        for _ in frac.len()..9 {
            frac_ns *= 10;
        }
        whole.checked_mul(NANOS_PER_SEC)?.checked_add(frac_ns).map(SimTime)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:09}", self.0 / NANOS_PER_SEC, self.0 % NANOS_PER_SEC)
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_parse_round_trip() {
        for ns in [0, 1, 999_999_999, 1_000_000_000, 40_123_456_789] {
            let t = SimTime::from_nanos(ns);
            assert_eq!(SimTime::parse(&t.to_string()), Some(t));
        }
        assert_eq!(SimTime::parse("1.5"), Some(SimTime::from_millis(1500)));
        assert_eq!(SimTime::parse("x"), None);
        assert_eq!(SimTime::parse("1.0000000001"), None);
    }

    #[test]
    fn grid_ceiling() {
        let step = SimTime::from_millis(1);
        assert_eq!(SimTime::from_micros(1500).ceil_to_grid(SimTime::ZERO, step), SimTime::from_millis(2));
        assert_eq!(SimTime::from_millis(3).ceil_to_grid(SimTime::ZERO, step), SimTime::from_millis(3));
        assert_eq!(
            SimTime::from_micros(100).ceil_to_grid(SimTime::from_micros(200), step),
            SimTime::from_micros(200)
        );
    }

    #[test]
    fn seconds_conversion() {
        assert_eq!(SimTime::from_secs_f64(0.0049), SimTime::from_micros(4900));
        assert_eq!(SimTime::from_secs_f64(-1.0), SimTime::ZERO);
        assert_eq!(SimTime::from_millis(1050).as_secs_f64(), 1.05);
    }
}
