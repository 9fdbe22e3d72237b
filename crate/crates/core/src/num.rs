//! Decimal-string encodings for wide integers and exchange rates.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use primitive_types::U256;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serializer};

/// Parses a decimal or `0x`-prefixed hex literal.
pub fn parse_u256(s: &str) -> Option<U256> {
    let s = s.trim();
    if let Some(hex) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        if hex.is_empty() || hex.len() > 64 {
            return None;
        }
        U256::from_str_radix(hex, 16).ok()
    } else if !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()) {
        U256::from_dec_str(s).ok()
    } else {
        None
    }
}

pub fn u256_to_bigint(v: U256) -> BigInt {
    BigInt::from_bytes_be(num_bigint::Sign::Plus, &v.to_big_endian())
}

/// Parses an exchange rate written as an integer, a decimal fraction
/// (`"0.25"`) or a ratio (`"3/4"`).
pub fn parse_rate(s: &str) -> Option<BigRational> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(BigRational::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let neg = int.starts_with('-');
        let digits = format!("{}{}", int.trim_start_matches('-'), frac);
        let n: BigInt = digits.parse().ok()?;
        let mut d = BigInt::one();
        for _ in 0..frac.len() {
            d *= 10;
        }
        let r = BigRational::new(n, d);
        return Some(if neg { -r } else { r });
    }
    s.parse::<BigInt>().ok().map(BigRational::from_integer)
}

pub fn rate_to_string(r: &BigRational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NumOrStr {
    Num(u64),
    Str(String),
}

/// `#[serde(with = "u256_dec")]`: U256 as a decimal string.
pub mod u256_dec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &U256, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<U256, D::Error> {
        match NumOrStr::deserialize(d)? {
            NumOrStr::Num(n) => Ok(U256::from(n)),
            NumOrStr::Str(s) => {
                parse_u256(&s).ok_or_else(|| D::Error::custom(format!("invalid uint256 `{s}`")))
            }
        }
    }
}

/// `#[serde(with = "bigint_dec")]`: signed integer as a decimal string.
pub mod bigint_dec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &BigInt, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigInt, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(i64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(n) => Ok(BigInt::from(n)),
            Raw::Str(s) => s
                .trim()
                .parse()
                .map_err(|_| D::Error::custom(format!("invalid integer `{s}`"))),
        }
    }
}

/// Serializes a map with values in their `Display` form.
pub fn ser_display_map<K, V, S>(m: &std::collections::BTreeMap<K, V>, s: S) -> Result<S::Ok, S::Error>
where
    K: serde::Serialize,
    V: std::fmt::Display,
    S: Serializer,
{
    s.collect_map(m.iter().map(|(k, v)| (k, v.to_string())))
}

/// Two-level version of [`ser_display_map`].
pub fn ser_display_map2<K1, K2, V, S>(
    m: &std::collections::BTreeMap<K1, std::collections::BTreeMap<K2, V>>,
    s: S,
) -> Result<S::Ok, S::Error>
where
    K1: serde::Serialize,
    K2: serde::Serialize + Ord,
    V: std::fmt::Display,
    S: Serializer,
{
    let inner: Vec<(&K1, std::collections::BTreeMap<&K2, String>)> = m
        .iter()
        .map(|(k, v)| (k, v.iter().map(|(k2, x)| (k2, x.to_string())).collect()))
        .collect();
    s.collect_map(inner)
}

/// Map of asset name to signed amount, amounts as decimal strings.
pub mod asset_map {
    use std::collections::BTreeMap;

    use serde::ser::SerializeMap;

    use super::*;

    pub fn serialize<S: Serializer>(m: &BTreeMap<String, BigInt>, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(m.len()))?;
        for (k, v) in m {
            map.serialize_entry(k, &v.to_string())?;
        }
        map.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, BigInt>, D::Error> {
        #[derive(Deserialize)]
        struct Wrap(#[serde(with = "super::bigint_dec")] BigInt);
        let raw: BTreeMap<String, Wrap> = BTreeMap::deserialize(d)?;
        Ok(raw.into_iter().map(|(k, v)| (k, v.0)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates() {
        assert_eq!(parse_rate("3/4"), Some(BigRational::new(3.into(), 4.into())));
        assert_eq!(parse_rate("0.25"), Some(BigRational::new(1.into(), 4.into())));
        assert_eq!(parse_rate("2"), Some(BigRational::from_integer(2.into())));
        assert_eq!(parse_rate("1/0"), None);
        assert_eq!(rate_to_string(&BigRational::new(6.into(), 8.into())), "3/4");
    }

    #[test]
    fn u256_literals() {
        assert_eq!(parse_u256("0x10"), Some(U256::from(16)));
        assert_eq!(parse_u256("42"), Some(U256::from(42)));
        assert_eq!(parse_u256("-1"), None);
        assert_eq!(u256_to_bigint(U256::MAX).to_string().len(), 78);
    }
}
