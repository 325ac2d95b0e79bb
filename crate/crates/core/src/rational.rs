//! Exact rational arithmetic helpers.
//!
//! Prices, payments, budgets and valuations are arbitrary-precision rationals
//! (`num_rational::BigRational`, always kept in reduced form). The control
//! flow of the auction relies on exact equalities such as `d * c == B - p`,
//! so nothing in this crate ever touches floating point.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rational = num_rational::BigRational;

pub fn int(value: i64) -> Rational {
    Rational::from_integer(BigInt::from(value))
}

/// `numer / denom`; panics on a zero denominator.
pub fn ratio(numer: i64, denom: i64) -> Rational {
    Rational::new(BigInt::from(numer), BigInt::from(denom))
}

pub fn zero() -> Rational {
    Rational::zero()
}

/// Parses `"p/q"`, `"-p/q"` or a plain integer. Decimal notation is rejected.
pub fn parse(text: &str) -> Result<Rational> {
    let text = text.trim();
    let bad = || Error::Parse(format!("`{text}` is not an exact rational (expected \"p/q\" or an integer)"));
    let parse_int = |s: &str| -> Result<BigInt> {
        let s = s.trim();
        if s.is_empty() || !s.trim_start_matches(['-', '+']).chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        s.parse::<BigInt>().map_err(|_| bad())
    };
    match text.split_once('/') {
        Some((n, d)) => {
            let n = parse_int(n)?;
            let d = parse_int(d)?;
            if d.is_zero() {
                return Err(Error::Parse(format!("`{text}` has a zero denominator")));
            }
            Ok(Rational::new(n, d))
        }
        None => Ok(Rational::from_integer(parse_int(text)?)),
    }
}

/// Canonical string form: `"p/q"` in lowest terms, or `"n"` for integers.
pub fn format(value: &Rational) -> String {
    value.to_string()
}

/// Largest integer not exceeding `value`. Panics if it does not fit in `i64`.
pub fn floor_i64(value: &Rational) -> i64 {
    value
        .floor()
        .to_integer()
        .to_i64()
        .expect("floor exceeds i64 range")
}

/// Decimal approximation with `digits` significant digits, rounded half away
/// from zero. Only meant for human-readable report columns.
pub fn to_decimal(value: &Rational, digits: usize) -> String {
    if value.is_zero() {
        return "0".to_string();
    }
    let negative = value.is_negative();
    let abs = value.abs();
    let ten = BigInt::from(10);

    // exponent e such that 10^e <= abs < 10^(e+1)
    let mut exp: i64 = abs.to_integer().to_string().len() as i64 - 1;
    if abs < Rational::one() {
        exp = -1;
        let mut probe = abs.clone() * Rational::from_integer(ten.clone());
        while probe < Rational::one() {
            probe *= Rational::from_integer(ten.clone());
            exp -= 1;
        }
    }
    let shift = digits as i64 - 1 - exp;
    let scale = Rational::from_integer(num_traits::pow(ten.clone(), shift.unsigned_abs() as usize));
    let scaled = if shift >= 0 { &abs * &scale } else { &abs / &scale };
    let half = ratio(1, 2);
    let mut mantissa = (scaled + half).floor().to_integer();
    let mut shift = shift;
    // rounding may carry into a new digit (e.g. 9.99.. -> 10.0)
    if mantissa.to_string().len() > digits {
        let (q, _) = mantissa.div_rem(&ten);
        mantissa = q;
        shift -= 1;
    }
    let mut out = String::new();
    if negative {
        out.push('-');
    }
    let m = mantissa.to_string();
    if shift <= 0 {
        out.push_str(&m);
        out.push_str(&"0".repeat(shift.unsigned_abs() as usize));
    } else {
        let shift = shift as usize;
        let (int_part, frac_part) = if m.len() > shift {
            let (a, b) = m.split_at(m.len() - shift);
            (a.to_string(), b.to_string())
        } else {
            ("0".to_string(), format!("{}{}", "0".repeat(shift - m.len()), m))
        };
        let frac_part = frac_part.trim_end_matches('0');
        out.push_str(&int_part);
        if !frac_part.is_empty() {
            out.push('.');
            out.push_str(frac_part);
        }
    }
    out
}

/// Serde adapter storing a rational as its canonical string.
pub mod as_string {
    use super::Rational;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format(value))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let text = String::deserialize(d)?;
        super::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// Serde adapter for a vector of rationals.
pub mod vec_as_string {
    use super::Rational;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(values: &[Rational], s: S) -> Result<S::Ok, S::Error> {
        values.iter().map(super::format).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|t| super::parse(t).map_err(serde::de::Error::custom))
            .collect()
    }
}

/// Serde adapter for an optional rational.
pub mod opt_as_string {
    use super::Rational;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
        match value {
            Some(v) => s.serialize_some(&super::format(v)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Rational>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|t| super::parse(&t).map_err(serde::de::Error::custom))
            .transpose()
    }
}
