//! Exact decimal numbers backed by a scaled `i128`.
//!
//! Reference-range bounds are compared against observed values at their edges
//! (`<200 mg/dL` against `200 mg/dL`), so binary floating point is not an
//! option. A [`Decimal`] keeps the scale it was written with, which lets
//! `"3.0"` render back as `"3.0"` while still comparing equal to `3`.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

const MAX_SCALE: u32 = 18;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecimalError {
    #[error("invalid decimal literal {0:?}")]
    Invalid(String),
    #[error("decimal overflow")]
    Overflow,
}

#[derive(Clone, Copy)]
pub struct Decimal {
    mantissa: i128,
    scale: u32,
}

impl Decimal {
    pub const ZERO: Decimal = Decimal { mantissa: 0, scale: 0 };
    pub const ONE: Decimal = Decimal { mantissa: 1, scale: 0 };

    pub fn new(mantissa: i128, scale: u32) -> Self {
        assert!(scale <= MAX_SCALE, "scale {scale} exceeds {MAX_SCALE}");
        Decimal { mantissa, scale }
    }

    pub fn from_int(v: i64) -> Self {
        Decimal { mantissa: v as i128, scale: 0 }
    }

    pub fn mantissa(&self) -> i128 {
        self.mantissa
    }

    pub fn scale(&self) -> u32 {
        self.scale
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa == 0
    }

    pub fn is_negative(&self) -> bool {
        self.mantissa < 0
    }

    /// Same value with trailing fractional zeros removed.
    pub fn normalized(&self) -> Decimal {
        let mut m = self.mantissa;
        let mut s = self.scale;
        while s > 0 && m % 10 == 0 {
            m /= 10;
            s -= 1;
        }
        Decimal { mantissa: m, scale: s }
    }

    pub fn checked_mul(&self, other: &Decimal) -> Option<Decimal> {
        let mantissa = self.mantissa.checked_mul(other.mantissa)?;
        let out = Decimal { mantissa, scale: self.scale + other.scale };
        if out.scale <= MAX_SCALE {
            return Some(out);
        }
        // Drop trailing zeros until the scale fits; refuse to round.
        let n = out.normalized();
        (n.scale <= MAX_SCALE).then_some(n)
    }

    /// `self / other` when the quotient has a terminating expansion within
    /// the maximum scale; `None` otherwise (including division by zero).
    pub fn checked_div_exact(&self, other: &Decimal) -> Option<Decimal> {
        if other.mantissa == 0 {
            return None;
        }
        let den = other.mantissa.checked_mul(10i128.checked_pow(self.scale)?)?;
        for s in 0..=MAX_SCALE {
            let num = self.mantissa.checked_mul(10i128.checked_pow(other.scale + s)?)?;
            if num % den == 0 {
                return Some(Decimal { mantissa: num / den, scale: s });
            }
        }
        None
    }

    pub fn to_f64(&self) -> f64 {
        self.mantissa as f64 / 10f64.powi(self.scale as i32)
    }

    fn rescaled(&self, scale: u32) -> Option<i128> {
        debug_assert!(scale >= self.scale);
        10i128.checked_pow(scale - self.scale)?.checked_mul(self.mantissa)
    }
}

impl Default for Decimal {
    fn default() -> Self {
        Decimal::ZERO
    }
}

impl PartialEq for Decimal {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Decimal {}

impl PartialOrd for Decimal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Decimal {
    fn cmp(&self, other: &Self) -> Ordering {
        let scale = self.scale.max(other.scale);
        match (self.rescaled(scale), other.rescaled(scale)) {
            (Some(a), Some(b)) => a.cmp(&b),
            // Only reachable near i128::MAX; fall back to the normalized forms.
            _ => {
                let (a, b) = (self.normalized(), other.normalized());
                a.mantissa
                    .signum()
                    .cmp(&b.mantissa.signum())
                    .then_with(|| a.to_f64().total_cmp(&b.to_f64()))
            }
        }
    }
}

impl Hash for Decimal {
    fn hash<H: Hasher>(&self, state: &mut H) {
        let n = self.normalized();
        n.mantissa.hash(state);
        n.scale.hash(state);
    }
}

impl FromStr for Decimal {
    type Err = DecimalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let invalid = || DecimalError::Invalid(s.to_string());
        let (negative, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int_part.is_empty() || !int_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(invalid());
        }
        if body.contains('.') && (frac_part.is_empty() || !frac_part.bytes().all(|b| b.is_ascii_digit())) {
            return Err(invalid());
        }
        let scale = frac_part.len() as u32;
        if scale > MAX_SCALE {
            return Err(DecimalError::Overflow);
        }
        let mut mantissa: i128 = 0;
        for b in int_part.bytes().chain(frac_part.bytes()) {
            mantissa = mantissa
                .checked_mul(10)
                .and_then(|m| m.checked_add((b - b'0') as i128))
                .ok_or(DecimalError::Overflow)?;
        }
        if negative {
            mantissa = -mantissa;
        }
        Ok(Decimal { mantissa, scale })
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.mantissa < 0 { "-" } else { "" };
        let digits = self.mantissa.unsigned_abs().to_string();
        if self.scale == 0 {
            return write!(f, "{sign}{digits}");
        }
        let scale = self.scale as usize;
        let padded = format!("{digits:0>width$}", width = scale + 1);
        let (int_part, frac_part) = padded.split_at(padded.len() - scale);
        write!(f, "{sign}{int_part}.{frac_part}")
    }
}

impl fmt::Debug for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Serialize for Decimal {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Decimal {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(s: &str) -> Decimal {
        s.parse().unwrap()
    }

    #[test]
    fn exact_division() {
        assert_eq!(d("20000").checked_div_exact(&d("1000")), Some(d("20")));
        assert_eq!(d("1").checked_div_exact(&d("8")), Some(d("0.125")));
        assert_eq!(d("0.3").checked_div_exact(&d("0.01")), Some(d("30")));
        assert_eq!(d("1").checked_div_exact(&d("3")), None);
        assert_eq!(d("1").checked_div_exact(&d("0")), None);
        assert_eq!(d("-7.5").checked_div_exact(&d("2.5")), Some(d("-3")));
    }

    #[test]
    fn keeps_written_scale() {
        assert_eq!(d("3.0").to_string(), "3.0");
        assert_eq!(d("0.05").to_string(), "0.05");
        assert_eq!(d("1000").to_string(), "1000");
        assert_eq!(d("-1.40").to_string(), "-1.40");
    }

    #[test]
    fn compares_by_value() {
        assert_eq!(d("3.0"), d("3"));
        assert!(d("2.5") < d("3"));
        assert!(d("199.999") < d("200"));
        assert!(d("-1") < d("0.0001"));
    }

    #[test]
    fn rejects_garbage() {
        for s in ["", ".", "1.", ".5", "1e3", "1,5", "--1", "abc"] {
            assert!(s.parse::<Decimal>().is_err(), "{s:?} parsed");
        }
    }

    #[test]
    fn multiplication_is_exact() {
        assert_eq!(d("20").checked_mul(&d("1000")).unwrap(), d("20000"));
        assert_eq!(d("0.1").checked_mul(&d("0.2")).unwrap(), d("0.02"));
    }

    proptest! {
        #[test]
        fn display_parse_roundtrip(m in -10_000_000i64..10_000_000, s in 0u32..6) {
            let v = Decimal::new(m as i128, s);
            let back: Decimal = v.to_string().parse().unwrap();
            prop_assert_eq!(back, v);
            prop_assert_eq!(back.scale(), v.scale());
        }

        #[test]
        fn order_matches_cross_multiplication(a in -1_000_000i64..1_000_000, sa in 0u32..4, b in -1_000_000i64..1_000_000, sb in 0u32..4) {
            let x = Decimal::new(a as i128, sa);
            let y = Decimal::new(b as i128, sb);
            // Exact rationals: compare a*10^sb vs b*10^sa in integers.
            let lhs = a as i128 * 10i128.pow(sb);
            let rhs = b as i128 * 10i128.pow(sa);
            prop_assert_eq!(x.cmp(&y), lhs.cmp(&rhs));
        }
    }
}
