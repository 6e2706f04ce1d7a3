//! Exact rational quantities (bandwidth, latency, capacity).
//!
//! Scenario files carry plain decimal numbers (`0.25`, `12.5`) or explicit
//! fractions (`"1/3"`). Both are parsed exactly; no floating point arithmetic
//! ever touches accounting state.

use std::fmt;

use num_rational::Ratio;
use num_traits::{Signed, Zero};
use serde::de::{self, Visitor};
use serde::{Deserializer, Serializer};

pub type Rational = Ratio<i64>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid rational literal `{0}`")]
pub struct ParseRationalError(pub String);

/// Builds a rational from an integer.
pub fn int(n: i64) -> Rational {
    Rational::from_integer(n)
}

/// Parses `"3"`, `"-0.25"`, `"12.5"` or `"1/3"`.
pub fn parse(text: &str) -> Result<Rational, ParseRationalError> {
    let err = || ParseRationalError(text.to_string());
    let s = text.trim();
    if s.is_empty() {
        return Err(err());
    }
    if let Some((n, d)) = s.split_once('/') {
        let n: i64 = n.trim().parse().map_err(|_| err())?;
        let d: i64 = d.trim().parse().map_err(|_| err())?;
        if d == 0 {
            return Err(err());
        }
        return Ok(Rational::new(n, d));
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (whole, frac) = body.split_once('.').unwrap_or((body, ""));
    if whole.is_empty() && frac.is_empty() {
        return Err(err());
    }
    if !whole.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
        return Err(err());
    }
    if frac.len() > 18 {
        return Err(err());
    }
    let whole: i64 = if whole.is_empty() { 0 } else { whole.parse().map_err(|_| err())? };
    let scale = 10i64.checked_pow(frac.len() as u32).ok_or_else(err)?;
    let frac_num: i64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| err())? };
    let numer = whole
        .checked_mul(scale)
        .and_then(|w| w.checked_add(frac_num))
        .ok_or_else(err)?;
    let value = Rational::new(numer, scale);
    Ok(if neg { -value } else { value })
}

/// Canonical text form: integers and terminating decimals print as decimals,
/// everything else as `n/d`.
pub fn format(value: &Rational) -> String {
    if value.is_integer() {
        return value.numer().to_string();
    }
    let mut d = *value.denom();
    while d % 2 == 0 {
        d /= 2;
    }
    while d % 5 == 0 {
        d /= 5;
    }
    if d != 1 {
        return format!("{}/{}", value.numer(), value.denom());
    }
    let sign = if value.is_negative() { "-" } else { "" };
    let abs = value.abs();
    let whole = abs.trunc().to_integer();
    let mut rem = abs.fract();
    let mut digits = String::new();
    while !rem.is_zero() {
        rem *= int(10);
        let digit = rem.trunc().to_integer();
        digits.push(char::from(b'0' + digit as u8));
        rem = rem.fract();
    }
    format!("{sign}{whole}.{digits}")
}

/// Ceiling of `value` as a nonnegative integer (negative input clamps to 0).
pub fn ceil_u32(value: &Rational) -> u32 {
    let c = value.ceil().to_integer();
    c.clamp(0, u32::MAX as i64) as u32
}

struct RationalVisitor;

impl Visitor<'_> for RationalVisitor {
    type Value = Rational;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a number or a rational string such as \"1/3\"")
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Rational, E> {
        Ok(int(v))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Rational, E> {
        i64::try_from(v).map(int).map_err(|_| E::custom("integer out of range"))
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Rational, E> {
        if !v.is_finite() {
            return Err(E::custom("non-finite number"));
        }
        // f64's Display is the shortest string that round-trips, which is
        // exactly the decimal the author wrote.
        parse(&v.to_string()).map_err(E::custom)
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Rational, E> {
        parse(v).map_err(E::custom)
    }
}

/// Serde adapter for `Rational` fields.
pub mod serde_rational {
    use super::*;

    pub fn serialize<S: Serializer>(value: &Rational, s: S) -> Result<S::Ok, S::Error> {
        if value.is_integer() {
            s.serialize_i64(*value.numer())
        } else {
            s.serialize_str(&format(value))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        d.deserialize_any(RationalVisitor)
    }
}

/// Serde adapter for `Option<Rational>` fields. Also accepts the strings
/// `"inf"` / `"infinity"` as `None` (unbounded).
pub mod serde_opt_rational {
    use super::*;

    pub fn serialize<S: Serializer>(value: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
        match value {
            Some(v) => serde_rational::serialize(v, s),
            None => s.serialize_none(),
        }
    }

    struct OptVisitor;

    impl<'de> Visitor<'de> for OptVisitor {
        type Value = Option<Rational>;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a number, a rational string, \"inf\" or null")
        }

        fn visit_none<E: de::Error>(self) -> Result<Self::Value, E> {
            Ok(None)
        }

        fn visit_unit<E: de::Error>(self) -> Result<Self::Value, E> {
            Ok(None)
        }

        fn visit_some<D: Deserializer<'de>>(self, d: D) -> Result<Self::Value, D::Error> {
            d.deserialize_any(OptVisitor)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<Self::Value, E> {
            RationalVisitor.visit_i64(v).map(Some)
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<Self::Value, E> {
            RationalVisitor.visit_u64(v).map(Some)
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<Self::Value, E> {
            RationalVisitor.visit_f64(v).map(Some)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
            match v.trim().to_ascii_lowercase().as_str() {
                "inf" | "infinity" | "∞" => Ok(None),
                _ => RationalVisitor.visit_str(v).map(Some),
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Rational>, D::Error> {
        d.deserialize_option(OptVisitor)
    }
}

/// Serde adapter for maps whose values are `Rational`.
pub mod serde_rational_map {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Serialize};

    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(transparent)]
    struct Q(#[serde(with = "serde_rational")] Rational);

    pub fn serialize<K, S>(map: &BTreeMap<K, Rational>, s: S) -> Result<S::Ok, S::Error>
    where
        K: Serialize + Ord,
        S: Serializer,
    {
        let m: BTreeMap<&K, Q> = map.iter().map(|(k, v)| (k, Q(*v))).collect();
        m.serialize(s)
    }

    pub fn deserialize<'de, K, D>(d: D) -> Result<BTreeMap<K, Rational>, D::Error>
    where
        K: Deserialize<'de> + Ord,
        D: Deserializer<'de>,
    {
        let m: BTreeMap<K, Q> = BTreeMap::deserialize(d)?;
        Ok(m.into_iter().map(|(k, v)| (k, v.0)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_decimals_and_fractions() {
        assert_eq!(parse("12.5").unwrap(), Rational::new(25, 2));
        assert_eq!(parse("0.25").unwrap(), Rational::new(1, 4));
        assert_eq!(parse("-3").unwrap(), int(-3));
        assert_eq!(parse("1/3").unwrap(), Rational::new(1, 3));
        assert_eq!(parse(".5").unwrap(), Rational::new(1, 2));
        assert!(parse("").is_err());
        assert!(parse("1/0").is_err());
        assert!(parse("1e3").is_err());
        assert!(parse("abc").is_err());
    }

    #[test]
    fn formats_canonically() {
        assert_eq!(format(&Rational::new(25, 2)), "12.5");
        assert_eq!(format(&Rational::new(-1, 8)), "-0.125");
        assert_eq!(format(&Rational::new(1, 3)), "1/3");
        assert_eq!(format(&int(7)), "7");
    }

    #[test]
    fn json_numbers_are_exact() {
        #[derive(serde::Deserialize)]
        struct W {
            #[serde(with = "serde_rational")]
            v: Rational,
            #[serde(default, with = "serde_opt_rational")]
            o: Option<Rational>,
        }
        let w: W = serde_json::from_str(r#"{"v": 0.1, "o": "inf"}"#).unwrap();
        assert_eq!(w.v, Rational::new(1, 10));
        assert_eq!(w.o, None);
        let w: W = serde_json::from_str(r#"{"v": "2/6", "o": 5}"#).unwrap();
        assert_eq!(w.v, Rational::new(1, 3));
        assert_eq!(w.o, Some(int(5)));
    }

    proptest! {
        #[test]
        fn format_parse_roundtrip(n in -100_000i64..100_000, d in 1i64..2_000) {
            let r = Rational::new(n, d);
            prop_assert_eq!(parse(&format(&r)).unwrap(), r);
        }
    }
}
