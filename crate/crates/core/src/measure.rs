//! Additive measures carried by every summary row.
//!
//! Miles are held as an unsigned fixed-point count of 2^-64 mile units, so
//! sums are exact integer additions: merging partial tables in any order or
//! grouping yields bit-identical totals. A finite `f64` that came out of a
//! [`Miles`] always converts back without loss, which keeps stored tables
//! stable across write/read cycles.

use std::iter::Sum;
use std::ops::{Add, AddAssign};

const SCALE: f64 = 18_446_744_073_709_551_616.0; // 2^64

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Miles(u128);

impl Miles {
    pub const ZERO: Miles = Miles(0);

    /// Rounds to the nearest fixed-point unit; negative and non-finite
    /// inputs are rejected.
    pub fn from_f64(miles: f64) -> Option<Miles> {
        if !miles.is_finite() || miles < 0.0 {
            return None;
        }
        let scaled = (miles * SCALE).round();
        if scaled >= u128::MAX as f64 {
            return None;
        }
        Some(Miles(scaled as u128))
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / SCALE
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn raw(self) -> u128 {
        self.0
    }
}

impl Add for Miles {
    type Output = Miles;

    fn add(self, rhs: Miles) -> Miles {
        Miles(self.0 + rhs.0)
    }
}

impl AddAssign for Miles {
    fn add_assign(&mut self, rhs: Miles) {
        self.0 += rhs.0;
    }
}

impl Sum for Miles {
    fn sum<I: Iterator<Item = Miles>>(iter: I) -> Miles {
        iter.fold(Miles::ZERO, Add::add)
    }
}

/// Miles plus elapsed time in whole 100 ms steps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Measure {
    pub miles: Miles,
    pub steps: u64,
}

impl Measure {
    pub fn new(miles: Miles, steps: u64) -> Self {
        Measure { miles, steps }
    }

    pub fn time_s(&self) -> f64 {
        self.steps as f64 / 10.0
    }

    /// Seconds with exactly one decimal, e.g. `"12.3"`.
    pub fn time_text(&self) -> String {
        format!("{}.{}", self.steps / 10, self.steps % 10)
    }
}

impl Add for Measure {
    type Output = Measure;

    fn add(self, rhs: Measure) -> Measure {
        Measure {
            miles: self.miles + rhs.miles,
            steps: self.steps + rhs.steps,
        }
    }
}

impl AddAssign for Measure {
    fn add_assign(&mut self, rhs: Measure) {
        *self = *self + rhs;
    }
}

/// Parses seconds written with at most one decimal into 100 ms steps.
pub fn parse_time_steps(text: &str) -> Option<u64> {
    let text = text.trim();
    let (whole, frac) = match text.split_once('.') {
        Some((w, f)) => (w, f),
        None => (text, ""),
    };
    let whole: u64 = whole.parse().ok()?;
    let tenth = match frac.trim_end_matches('0') {
        "" => 0,
        f if f.len() == 1 => f.parse::<u64>().ok()?,
        _ => return None,
    };
    whole.checked_mul(10)?.checked_add(tenth)
}
