//! Exact fractions in `[0, 1]` for policy parameters.
//!
//! Budget splits are floor-sensitive, so `1/3` must stay `1/3`. Decimal
//! input such as `0.375` is read digit by digit into `375/1000`, never
//! through binary floating point.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fraction(Ratio<u64>);

impl Fraction {
    pub const ZERO: Fraction = Fraction(Ratio::new_raw(0, 1));
    pub const ONE: Fraction = Fraction(Ratio::new_raw(1, 1));

    pub fn new(numer: u64, denom: u64) -> Result<Self> {
        if denom == 0 {
            return Err(Error::invalid("fraction with zero denominator"));
        }
        if numer > denom {
            return Err(Error::invalid(format!("{numer}/{denom} exceeds 1")));
        }
        Ok(Fraction(Ratio::new(numer, denom)))
    }

    pub fn numer(&self) -> u64 {
        *self.0.numer()
    }

    pub fn denom(&self) -> u64 {
        *self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.numer() == 0
    }

    /// `1 - self`.
    pub fn complement(&self) -> Fraction {
        Fraction(Ratio::from_integer(1) - self.0)
    }

    /// `floor(self * x)`, exact.
    pub fn floor_mul(&self, x: u64) -> u64 {
        ((self.numer() as u128 * x as u128) / self.denom() as u128) as u64
    }

    pub fn to_f64(&self) -> f64 {
        self.numer() as f64 / self.denom() as f64
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denom() == 1 {
            write!(f, "{}", self.numer())
        } else {
            write!(f, "{}/{}", self.numer(), self.denom())
        }
    }
}

impl FromStr for Fraction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::invalid(format!("cannot parse {s:?} as a fraction"));
        if let Some((n, d)) = s.split_once('/') {
            let n: u64 = n.trim().parse().map_err(|_| bad())?;
            let d: u64 = d.trim().parse().map_err(|_| bad())?;
            return Fraction::new(n, d);
        }
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if (int.is_empty() && frac.is_empty())
            || !int.bytes().all(|b| b.is_ascii_digit())
            || !frac.bytes().all(|b| b.is_ascii_digit())
            || frac.len() > 18
        {
            return Err(bad());
        }
        let denom = 10u64.pow(frac.len() as u32);
        let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
        let frac_val: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
        let numer = int
            .checked_mul(denom)
            .and_then(|v| v.checked_add(frac_val))
            .ok_or_else(bad)?;
        Fraction::new(numer, denom)
    }
}

impl Serialize for Fraction {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Fraction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct FractionVisitor;

        impl Visitor<'_> for FractionVisitor {
            type Value = Fraction;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a fraction in [0, 1] as a number or a string like \"1/3\"")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Fraction, E> {
                v.parse().map_err(E::custom)
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Fraction, E> {
                Fraction::new(v, 1).map_err(E::custom)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Fraction, E> {
                u64::try_from(v)
                    .map_err(E::custom)
                    .and_then(|v| self.visit_u64(v))
            }

            // Shortest round-trip decimal of the JSON number, parsed exactly.
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Fraction, E> {
                if !v.is_finite() {
                    return Err(E::custom("fraction must be finite"));
                }
                format!("{v}").parse().map_err(E::custom)
            }
        }

        deserializer.deserialize_any(FractionVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_decimals_and_ratios_exactly() {
        assert_eq!("1/3".parse::<Fraction>().unwrap(), Fraction::new(1, 3).unwrap());
        assert_eq!("0.375".parse::<Fraction>().unwrap(), Fraction::new(3, 8).unwrap());
        assert_eq!("0.2".parse::<Fraction>().unwrap(), Fraction::new(1, 5).unwrap());
        assert_eq!("0".parse::<Fraction>().unwrap(), Fraction::ZERO);
        assert_eq!("1".parse::<Fraction>().unwrap(), Fraction::ONE);
        assert_eq!(".5".parse::<Fraction>().unwrap(), Fraction::new(1, 2).unwrap());
        for bad in ["", "abc", "1.5", "2/1", "1/0", "-0.2", "0.2.1"] {
            assert!(bad.parse::<Fraction>().is_err(), "{bad}");
        }
    }

    #[test]
    fn floor_mul_is_exact() {
        let third = Fraction::new(1, 3).unwrap();
        assert_eq!(third.floor_mul(1200), 400);
        assert_eq!(third.complement().floor_mul(1200), 800);
        assert_eq!(third.floor_mul(299), 99);
    }

    #[test]
    fn json_numbers_and_strings() {
        let v: Vec<Fraction> = serde_json::from_str(r#"[0.33, "1/3", 0, 1, 0.375]"#).unwrap();
        assert_eq!(v[0], Fraction::new(33, 100).unwrap());
        assert_eq!(v[1], Fraction::new(1, 3).unwrap());
        assert_eq!(v[2], Fraction::ZERO);
        assert_eq!(v[3], Fraction::ONE);
        assert_eq!(v[4], Fraction::new(3, 8).unwrap());
        assert_eq!(serde_json::to_string(&v[1]).unwrap(), r#""1/3""#);
    }
}
