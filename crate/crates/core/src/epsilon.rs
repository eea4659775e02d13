//! Decimal-exact privacy loss values.
//!
//! Privacy claims are published as decimal strings, so composition must not
//! produce float dust (`0.1 + 0.1` has to print as `0.2`). [`Epsilon`] stores
//! a fixed-point count of 10^-12 units and only converts to `f64` when a
//! mechanism needs a noise scale.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

const FRACTION_DIGITS: u32 = 12;
const UNITS_PER_ONE: u64 = 10u64.pow(FRACTION_DIGITS);

/// A nonnegative privacy loss with twelve exact decimal places.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Epsilon(u64);

impl Epsilon {
    pub const ZERO: Epsilon = Epsilon(0);

    /// Builds a value from a count of 10^-12 units.
    pub const fn from_units(units: u64) -> Self {
        Epsilon(units)
    }

    pub const fn units(self) -> u64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn checked_add(self, other: Epsilon) -> Option<Epsilon> {
        self.0.checked_add(other.0).map(Epsilon)
    }

    pub fn checked_sub(self, other: Epsilon) -> Option<Epsilon> {
        self.0.checked_sub(other.0).map(Epsilon)
    }

    pub fn checked_mul(self, n: u64) -> Option<Epsilon> {
        self.0.checked_mul(n).map(Epsilon)
    }

    /// Nearest `f64`. Exact integer division, so `0.1` maps to the same
    /// double as the literal `0.1`.
    pub fn as_f64(self) -> f64 {
        let whole = (self.0 / UNITS_PER_ONE) as f64;
        let frac = (self.0 % UNITS_PER_ONE) as f64 / UNITS_PER_ONE as f64;
        whole + frac
    }
}

impl FromStr for Epsilon {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("not a decimal privacy loss: {s:?}"));
        let (whole, frac) = match s.split_once('.') {
            Some((w, f)) => (w, f),
            None => (s, ""),
        };
        if whole.is_empty() || !whole.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        if !frac.bytes().all(|b| b.is_ascii_digit()) || (s.contains('.') && frac.is_empty()) {
            return Err(bad());
        }
        if frac.len() > FRACTION_DIGITS as usize {
            return Err(Error::invalid(format!(
                "privacy loss {s:?} has more than {FRACTION_DIGITS} decimal places"
            )));
        }
        let whole: u64 = whole.parse().map_err(|_| bad())?;
        let mut frac_units: u64 = if frac.is_empty() {
            0
        } else {
            frac.parse().map_err(|_| bad())?
        };
        frac_units *= 10u64.pow(FRACTION_DIGITS - frac.len() as u32);
        whole
            .checked_mul(UNITS_PER_ONE)
            .and_then(|w| w.checked_add(frac_units))
            .map(Epsilon)
            .ok_or_else(bad)
    }
}

impl fmt::Display for Epsilon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let whole = self.0 / UNITS_PER_ONE;
        let frac = self.0 % UNITS_PER_ONE;
        if frac == 0 {
            return write!(f, "{whole}");
        }
        let digits = format!("{frac:012}");
        write!(f, "{whole}.{}", digits.trim_end_matches('0'))
    }
}
