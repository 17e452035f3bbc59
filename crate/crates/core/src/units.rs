//! Integer physical units used throughout the simulator.
//!
//! Time is kept in microseconds, power in milliwatts and energy in
//! nanojoules, so that `duration × power` is an exact integer product
//! (1 µs × 1 mW = 1 nJ). Floats only appear at the file boundary, where
//! they are converted with round-half-even.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

const MICROS_PER_SEC: u64 = 1_000_000;

/// A point in (or span of) simulated time, in microseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * MICROS_PER_SEC)
    }

    /// Converts a float number of seconds, rounding half to even.
    /// Returns `None` for negative, non-finite or out-of-range inputs.
    pub fn from_secs_f64(s: f64) -> Option<Self> {
        if !s.is_finite() || s < 0.0 {
            return None;
        }
        let us = (s * MICROS_PER_SEC as f64).round_ties_even();
        if us > u64::MAX as f64 {
            return None;
        }
        Some(SimTime(us as u64))
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / MICROS_PER_SEC as f64
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }

    pub fn saturating_add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }

    /// Fixed six-decimal rendering in seconds, computed without floats.
    pub fn display_secs(self) -> SecsDisplay {
        SecsDisplay(self.0)
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

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}s", self.display_secs())
    }
}

pub struct SecsDisplay(u64);

impl fmt::Display for SecsDisplay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / MICROS_PER_SEC, self.0 % MICROS_PER_SEC)
    }
}

/// Power draw in milliwatts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Milliwatts(pub u64);

impl Milliwatts {
    pub const fn from_watts(w: u64) -> Self {
        Milliwatts(w * 1000)
    }

    pub fn from_watts_f64(w: f64) -> Option<Self> {
        if !w.is_finite() || w < 0.0 {
            return None;
        }
        let mw = (w * 1000.0).round_ties_even();
        if mw > u64::MAX as f64 {
            return None;
        }
        Some(Milliwatts(mw as u64))
    }

    pub fn as_watts_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }
}

/// Energy in nanojoules. Wide enough for months of a large machine.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Nanojoules(pub u128);

impl Nanojoules {
    pub const ZERO: Nanojoules = Nanojoules(0);

    /// Energy drawn at `power` for `duration`; exact.
    pub fn of(power: Milliwatts, duration: SimTime) -> Self {
        Nanojoules(power.0 as u128 * duration.0 as u128)
    }

    pub fn from_joules(j: u64) -> Self {
        Nanojoules(j as u128 * 1_000_000_000)
    }

    pub fn as_joules_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }
}

impl Add for Nanojoules {
    type Output = Nanojoules;
    fn add(self, rhs: Nanojoules) -> Nanojoules {
        Nanojoules(self.0 + rhs.0)
    }
}

impl AddAssign for Nanojoules {
    fn add_assign(&mut self, rhs: Nanojoules) {
        self.0 += rhs.0;
    }
}

impl std::iter::Sum for Nanojoules {
    fn sum<I: Iterator<Item = Nanojoules>>(iter: I) -> Self {
        iter.fold(Nanojoules::ZERO, |a, b| a + b)
    }
}
