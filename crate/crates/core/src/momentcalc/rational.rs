//! Exact rational parsing and the string encoding used in JSON documents.

use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use super::MomentError;

/// Parses `a/b`, an integer, or a decimal with optional exponent
/// (`-1.25e-3`) into an exact rational.
pub fn parse_rational(s: &str) -> Result<BigRational, MomentError> {
    let s = s.trim();
    let bad = || MomentError::Parse(format!("not a rational: {s:?}"));
    if let Some((n, d)) = s.split_once('/') {
        let n = BigInt::from_str(n.trim()).map_err(|_| bad())?;
        let d = BigInt::from_str(d.trim()).map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(n, d));
    }
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int, frac) = digits.split_once('.').unwrap_or((digits, ""));
    if int.is_empty() && frac.is_empty() || !(int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit())) {
        return Err(bad());
    }
    let all = format!("{int}{frac}");
    let n = BigInt::from_str(if all.is_empty() { "0" } else { &all }).map_err(|_| bad())?;
    let scale = exp as i64 - frac.len() as i64;
    let ten = BigInt::from(10u32).pow(scale.unsigned_abs() as u32);
    let mut r = if scale >= 0 {
        BigRational::from_integer(n * ten)
    } else {
        BigRational::new(n, ten)
    };
    if neg {
        r = -r;
    }
    Ok(r)
}

/// `a/b` in lowest terms, or `a` for integers.
pub fn format_rational(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Serde for `Option<BigRational>` as a string or null.
pub mod option {
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<BigRational>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(r) => s.serialize_str(&format_rational(r)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<BigRational>, D::Error> {
        let v: Option<serde_json::Value> = Option::deserialize(d)?;
        match v {
            None | Some(serde_json::Value::Null) => Ok(None),
            Some(v) => super::from_value(&v).map(Some).map_err(serde::de::Error::custom),
        }
    }
}

/// A rational from a JSON string (`"a/b"`, decimal) or number.
pub fn from_value(v: &serde_json::Value) -> Result<BigRational, MomentError> {
    match v {
        serde_json::Value::String(s) => parse_rational(s),
        serde_json::Value::Number(n) => parse_rational(&n.to_string()),
        other => Err(MomentError::Parse(format!("expected a rational, got {other}"))),
    }
}

/// Serde for `Vec<BigRational>`, written as strings and read from strings or
/// numbers.
pub mod vec {
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[BigRational], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(format_rational))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<BigRational>, D::Error> {
        let raw: Vec<serde_json::Value> = Vec::deserialize(d)?;
        raw.iter().map(|v| super::from_value(v).map_err(serde::de::Error::custom)).collect()
    }
}

/// Serde for a `Partition → rational` table as
/// `[{"partition": [1], "value": "1/2"}, ...]`.
pub mod entries {
    use std::collections::BTreeMap;

    use super::*;
    use crate::abelianp::Partition;
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Entry {
        partition: Partition,
        value: serde_json::Value,
    }

    pub fn serialize<S: Serializer>(v: &BTreeMap<Partition, BigRational>, s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for (partition, value) in v {
            seq.serialize_element(&Entry {
                partition: partition.clone(),
                value: serde_json::Value::String(format_rational(value)),
            })?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<Partition, BigRational>, D::Error> {
        let raw: Vec<Entry> = Vec::deserialize(d)?;
        let mut out = BTreeMap::new();
        for e in raw {
            let r = from_value(&e.value).map_err(serde::de::Error::custom)?;
            if out.insert(e.partition.clone(), r).is_some() {
                return Err(serde::de::Error::custom(format!("duplicate entry {}", e.partition)));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn parsing() {
        assert_eq!(parse_rational("1/2").unwrap(), q(1, 2));
        assert_eq!(parse_rational("-6/4").unwrap(), q(-3, 2));
        assert_eq!(parse_rational("0.25").unwrap(), q(1, 4));
        assert_eq!(parse_rational("-1.5e-2").unwrap(), q(-3, 200));
        assert_eq!(parse_rational("3").unwrap(), q(3, 1));
        assert_eq!(parse_rational("2E3").unwrap(), q(2000, 1));
        assert_eq!(parse_rational(".5").unwrap(), q(1, 2));
        for bad in ["", "1/0", "a", "1.2.3", "--1", "."] {
            assert!(parse_rational(bad).is_err(), "{bad}");
        }
        assert_eq!(format_rational(&q(6, 4)), "3/2");
        assert_eq!(format_rational(&q(-4, 2)), "-2");
    }
}
