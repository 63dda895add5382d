//! Exact decimal values.
//!
//! Every numeric comparison in verification goes through [`Decimal`], never
//! through binary floating point: a reference value such as
//! `5.69201612823412` must compare, round and serialize exactly as written.

use std::fmt;
use std::str::FromStr;

use bigdecimal::{BigDecimal, RoundingMode, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Largest decimal exponent accepted by the parser. Values beyond this are
/// rejected rather than materialized digit by digit.
pub const MAX_EXPONENT: i64 = 4096;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecimalError {
    #[error("`{0}` is not a decimal number")]
    Syntax(String),
    #[error("`{0}` is outside the supported exponent range")]
    OutOfRange(String),
}

/// An arbitrary-precision, always finite decimal.
///
/// Equality and ordering are numeric: `5.70 == 5.7`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Decimal(BigDecimal);

impl Decimal {
    /// Parses plain ASCII decimal syntax: optional sign, digits, optional
    /// fraction, optional `e`/`E` exponent. No separators, no whitespace.
    pub fn parse(text: &str) -> Result<Self, DecimalError> {
        if !is_decimal_syntax(text) {
            return Err(DecimalError::Syntax(text.to_string()));
        }
        let value = BigDecimal::from_str(text).map_err(|_| DecimalError::Syntax(text.to_string()))?;
        let (digits, scale) = value.as_bigint_and_exponent();
        let magnitude = digits.to_string().trim_start_matches('-').len() as i64;
        // scale is the negated exponent; bound both ends of the written value.
        if scale.unsigned_abs() > MAX_EXPONENT as u64 + magnitude as u64 {
            return Err(DecimalError::OutOfRange(text.to_string()));
        }
        Ok(Decimal(value))
    }

    pub fn zero() -> Self {
        Decimal(BigDecimal::zero())
    }

    pub fn from_i64(value: i64) -> Self {
        Decimal(BigDecimal::from(value))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn abs(&self) -> Self {
        Decimal(self.0.abs())
    }

    /// Rounds to `places` fractional digits, ties away from zero.
    pub fn round_half_away(&self, places: u32) -> Self {
        Decimal(self.0.with_scale_round(places as i64, RoundingMode::HalfUp))
    }

    /// Canonical text form: plain notation, no exponent, no trailing
    /// fractional zeros, `0` for any zero.
    pub fn canonical(&self) -> String {
        if self.0.is_zero() {
            return "0".to_string();
        }
        self.0.normalized().to_plain_string()
    }

    /// Number of fractional digits in the canonical form.
    pub fn fractional_digits(&self) -> u32 {
        let (_, scale) = self.0.normalized().as_bigint_and_exponent();
        scale.max(0) as u32
    }

    pub fn max(self, other: Self) -> Self {
        if self >= other {
            self
        } else {
            other
        }
    }
}

fn is_decimal_syntax(text: &str) -> bool {
    let bytes = text.as_bytes();
    let mut i = 0;
    if matches!(bytes.first(), Some(b'+' | b'-')) {
        i += 1;
    }
    let int_start = i;
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    if i == int_start {
        return false;
    }
    if i < bytes.len() && bytes[i] == b'.' {
        i += 1;
        let frac_start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        if i == frac_start {
            return false;
        }
    }
    if i < bytes.len() && matches!(bytes[i], b'e' | b'E') {
        i += 1;
        if matches!(bytes.get(i), Some(b'+' | b'-')) {
            i += 1;
        }
        let exp_start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        if i == exp_start {
            return false;
        }
    }
    i == bytes.len()
}

impl std::ops::Add for &Decimal {
    type Output = Decimal;
    fn add(self, rhs: &Decimal) -> Decimal {
        Decimal(&self.0 + &rhs.0)
    }
}

impl std::ops::Sub for &Decimal {
    type Output = Decimal;
    fn sub(self, rhs: &Decimal) -> Decimal {
        Decimal(&self.0 - &rhs.0)
    }
}

impl std::ops::Mul for &Decimal {
    type Output = Decimal;
    fn mul(self, rhs: &Decimal) -> Decimal {
        Decimal(&self.0 * &rhs.0)
    }
}

impl FromStr for Decimal {
    type Err = DecimalError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Decimal::parse(s)
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

impl fmt::Debug for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Decimal({})", self.canonical())
    }
}

impl Serialize for Decimal {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.canonical())
    }
}

impl<'de> Deserialize<'de> for Decimal {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Decimal::parse(&text).map_err(serde::de::Error::custom)
    }
}
