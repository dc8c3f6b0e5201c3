use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

const PICO_PER_USD: u64 = 1_000_000_000_000;

/// US dollars, held as an integer count of pico-dollars.
///
/// Per-million-token prices are whole micro-dollars, so a single token costs
/// a whole number of pico-dollars and token costs add exactly. Display rounds
/// to six decimal places. JSON carries the amount as a dollar float, which
/// round-trips exactly below 1,000 USD.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Usd(u64);

impl Usd {
    pub const ZERO: Usd = Usd(0);

    pub fn from_pico(pico: u64) -> Self {
        Usd(pico)
    }

    pub fn pico(self) -> u64 {
        self.0
    }

    /// Rounds a dollar amount to the nearest pico-dollar. Negative and
    /// non-finite input maps to zero.
    pub fn from_dollars(dollars: f64) -> Self {
        if !dollars.is_finite() || dollars <= 0.0 {
            return Usd(0);
        }
        Usd((dollars * PICO_PER_USD as f64).round() as u64)
    }

    pub fn as_dollars(self) -> f64 {
        self.0 as f64 / PICO_PER_USD as f64
    }

    /// Amount rounded half-up to whole micro-dollars.
    pub fn micros_rounded(self) -> u64 {
        (self.0 + 500_000) / 1_000_000
    }
}

impl fmt::Display for Usd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let micros = self.micros_rounded();
        write!(f, "${}.{:06}", micros / 1_000_000, micros % 1_000_000)
    }
}

impl Add for Usd {
    type Output = Usd;
    fn add(self, rhs: Usd) -> Usd {
        Usd(self.0.saturating_add(rhs.0))
    }
}

impl AddAssign for Usd {
    fn add_assign(&mut self, rhs: Usd) {
        *self = *self + rhs;
    }
}

impl Sum for Usd {
    fn sum<I: Iterator<Item = Usd>>(iter: I) -> Usd {
        iter.fold(Usd::ZERO, Add::add)
    }
}

impl Serialize for Usd {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_dollars())
    }
}

impl<'de> Deserialize<'de> for Usd {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        if v < 0.0 || !v.is_finite() {
            return Err(serde::de::Error::custom("currency amount must be a nonnegative number"));
        }
        Ok(Usd::from_dollars(v))
    }
}
