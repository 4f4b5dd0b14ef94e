//! Value semirings.
//!
//! A measure in this crate takes values in a commutative semiring `A` with
//! `0 ≠ 1`.  Four semirings are provided:
//!
//! * `INT` — the ring of integers (Euler characteristics live here);
//! * `TROP` — the tropical semiring on `ℕ ∪ {-∞}` with `max` as addition and
//!   `+` as multiplication (dimensions and ranks live here);
//! * `COUNT` — the natural numbers (cardinalities live here);
//! * `PAIR(A, B)` — the product semiring, componentwise.
//!
//! Every semiring receives a unique morphism from `ℕ` sending `d` to the
//! `d`-fold sum `1 + ... + 1`; see [`SemiringValue::from_nat`].  In `TROP`
//! this collapses: `0 ↦ -∞` and `d ↦ 0` for `d ≥ 1`.

use num::bigint::BigInt;
use num::BigUint;
use serde::de::Error as _;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Identifies one of the supported value semirings.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SemiringId {
    Int,
    Trop,
    Count,
    Pair(Box<SemiringId>, Box<SemiringId>),
}

impl SemiringId {
    /// Parses the textual tag used in JSON payloads and on the command line:
    /// `int`, `trop`, `count`, or `pair(<tag>,<tag>)` nested arbitrarily.
    pub fn parse(tag: &str) -> Result<SemiringId, SemiringError> {
        let (id, rest) = Self::parse_prefix(tag.trim())?;
        if rest.trim().is_empty() {
            Ok(id)
        } else {
            Err(SemiringError::BadTag(tag.to_string()))
        }
    }

    fn parse_prefix(s: &str) -> Result<(SemiringId, &str), SemiringError> {
        let s = s.trim_start();
        if let Some(rest) = s.strip_prefix("pair(") {
            let (left, rest) = Self::parse_prefix(rest)?;
            let rest = rest.trim_start();
            let rest = rest
                .strip_prefix(',')
                .ok_or_else(|| SemiringError::BadTag(s.to_string()))?;
            let (right, rest) = Self::parse_prefix(rest)?;
            let rest = rest.trim_start();
            let rest = rest
                .strip_prefix(')')
                .ok_or_else(|| SemiringError::BadTag(s.to_string()))?;
            Ok((SemiringId::Pair(Box::new(left), Box::new(right)), rest))
        } else {
            for (tag, id) in [
                ("int", SemiringId::Int),
                ("trop", SemiringId::Trop),
                ("count", SemiringId::Count),
            ] {
                if let Some(rest) = s.strip_prefix(tag) {
                    // make sure we do not eat a prefix of a longer word
                    if rest.chars().next().is_none_or(|c| !c.is_alphanumeric()) {
                        return Ok((id, rest));
                    }
                }
            }
            Err(SemiringError::BadTag(s.to_string()))
        }
    }
}

impl fmt::Display for SemiringId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SemiringId::Int => write!(f, "int"),
            SemiringId::Trop => write!(f, "trop"),
            SemiringId::Count => write!(f, "count"),
            SemiringId::Pair(a, b) => write!(f, "pair({a},{b})"),
        }
    }
}

/// A tropical number: `-∞` or a natural number.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Trop {
    NegInf,
    Nat(BigUint),
}

/// An element of one of the supported semirings.  Arithmetic is exact and
/// unbounded.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SemiringValue {
    Int(BigInt),
    Trop(Trop),
    Count(BigUint),
    Pair(Box<SemiringValue>, Box<SemiringValue>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SemiringError {
    #[error("mismatched semirings: {0} vs {1}")]
    Mismatch(SemiringId, SemiringId),
    #[error("unrecognised semiring tag `{0}`")]
    BadTag(String),
    #[error("malformed semiring value payload: {0}")]
    BadValue(String),
}

impl SemiringValue {
    pub fn id(&self) -> SemiringId {
        match self {
            SemiringValue::Int(_) => SemiringId::Int,
            SemiringValue::Trop(_) => SemiringId::Trop,
            SemiringValue::Count(_) => SemiringId::Count,
            SemiringValue::Pair(a, b) => SemiringId::Pair(Box::new(a.id()), Box::new(b.id())),
        }
    }

    /// The additive identity of the semiring (`0`, `-∞`, `0`, componentwise).
    pub fn zero(id: &SemiringId) -> SemiringValue {
        match id {
            SemiringId::Int => SemiringValue::Int(BigInt::from(0)),
            SemiringId::Trop => SemiringValue::Trop(Trop::NegInf),
            SemiringId::Count => SemiringValue::Count(BigUint::from(0u32)),
            SemiringId::Pair(a, b) => {
                SemiringValue::Pair(Box::new(Self::zero(a)), Box::new(Self::zero(b)))
            }
        }
    }

    /// The multiplicative identity (`1`, `0`, `1`, componentwise).
    pub fn one(id: &SemiringId) -> SemiringValue {
        match id {
            SemiringId::Int => SemiringValue::Int(BigInt::from(1)),
            SemiringId::Trop => SemiringValue::Trop(Trop::Nat(BigUint::from(0u32))),
            SemiringId::Count => SemiringValue::Count(BigUint::from(1u32)),
            SemiringId::Pair(a, b) => {
                SemiringValue::Pair(Box::new(Self::one(a)), Box::new(Self::one(b)))
            }
        }
    }

    /// The image of `d ∈ ℕ` under the unique semiring morphism `ℕ → A`,
    /// i.e. the `d`-fold sum of `1`.
    pub fn from_nat(d: u64, id: &SemiringId) -> SemiringValue {
        match id {
            SemiringId::Int => SemiringValue::Int(BigInt::from(d)),
            SemiringId::Count => SemiringValue::Count(BigUint::from(d)),
            SemiringId::Trop => {
                if d == 0 {
                    SemiringValue::Trop(Trop::NegInf)
                } else {
                    SemiringValue::Trop(Trop::Nat(BigUint::from(0u32)))
                }
            }
            SemiringId::Pair(a, b) => SemiringValue::Pair(
                Box::new(Self::from_nat(d, a)),
                Box::new(Self::from_nat(d, b)),
            ),
        }
    }

    pub fn add(&self, other: &SemiringValue) -> Result<SemiringValue, SemiringError> {
        match (self, other) {
            (SemiringValue::Int(a), SemiringValue::Int(b)) => Ok(SemiringValue::Int(a + b)),
            (SemiringValue::Count(a), SemiringValue::Count(b)) => Ok(SemiringValue::Count(a + b)),
            (SemiringValue::Trop(a), SemiringValue::Trop(b)) => Ok(SemiringValue::Trop(match (a, b)
            {
                (Trop::NegInf, x) | (x, Trop::NegInf) => x.clone(),
                (Trop::Nat(a), Trop::Nat(b)) => Trop::Nat(a.max(b).clone()),
            })),
            (SemiringValue::Pair(a1, b1), SemiringValue::Pair(a2, b2)) => Ok(SemiringValue::Pair(
                Box::new(a1.add(a2)?),
                Box::new(b1.add(b2)?),
            )),
            _ => Err(SemiringError::Mismatch(self.id(), other.id())),
        }
    }

    pub fn mul(&self, other: &SemiringValue) -> Result<SemiringValue, SemiringError> {
        match (self, other) {
            (SemiringValue::Int(a), SemiringValue::Int(b)) => Ok(SemiringValue::Int(a * b)),
            (SemiringValue::Count(a), SemiringValue::Count(b)) => Ok(SemiringValue::Count(a * b)),
            (SemiringValue::Trop(a), SemiringValue::Trop(b)) => Ok(SemiringValue::Trop(match (a, b)
            {
                (Trop::NegInf, _) | (_, Trop::NegInf) => Trop::NegInf,
                (Trop::Nat(a), Trop::Nat(b)) => Trop::Nat(a + b),
            })),
            (SemiringValue::Pair(a1, b1), SemiringValue::Pair(a2, b2)) => Ok(SemiringValue::Pair(
                Box::new(a1.mul(a2)?),
                Box::new(b1.mul(b2)?),
            )),
            _ => Err(SemiringError::Mismatch(self.id(), other.id())),
        }
    }

    /// Sums a sequence of values in a fixed semiring, starting from zero.
    pub fn sum<'a, I>(id: &SemiringId, values: I) -> Result<SemiringValue, SemiringError>
    where
        I: IntoIterator<Item = &'a SemiringValue>,
    {
        let mut acc = Self::zero(id);
        for v in values {
            acc = acc.add(v)?;
        }
        Ok(acc)
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::zero(&self.id())
    }

    /// Canonical report order within one semiring: integers ascending,
    /// tropical with `-∞` first, pairs lexicographically.  Values from
    /// different semirings compare by their tag, so sorting stays total.
    pub fn report_cmp(&self, other: &SemiringValue) -> std::cmp::Ordering {
        use std::cmp::Ordering;
        match (self, other) {
            (SemiringValue::Int(a), SemiringValue::Int(b)) => a.cmp(b),
            (SemiringValue::Count(a), SemiringValue::Count(b)) => a.cmp(b),
            (SemiringValue::Trop(a), SemiringValue::Trop(b)) => match (a, b) {
                (Trop::NegInf, Trop::NegInf) => Ordering::Equal,
                (Trop::NegInf, _) => Ordering::Less,
                (_, Trop::NegInf) => Ordering::Greater,
                (Trop::Nat(a), Trop::Nat(b)) => a.cmp(b),
            },
            (SemiringValue::Pair(a1, b1), SemiringValue::Pair(a2, b2)) => {
                a1.report_cmp(a2).then_with(|| b1.report_cmp(b2))
            }
            _ => self.id().cmp(&other.id()),
        }
    }

    /// The bare JSON payload, without the semiring tag: an integer for `INT`
    /// and `COUNT`, an integer or the string `"neg_inf"` for `TROP`, and a
    /// two-element array for `PAIR`.
    pub fn value_json(&self) -> serde_json::Value {
        match self {
            SemiringValue::Int(a) => json_bigint(a),
            SemiringValue::Count(a) => json_bigint(&BigInt::from(a.clone())),
            SemiringValue::Trop(Trop::NegInf) => serde_json::Value::String("neg_inf".into()),
            SemiringValue::Trop(Trop::Nat(a)) => json_bigint(&BigInt::from(a.clone())),
            SemiringValue::Pair(a, b) => serde_json::Value::Array(vec![a.value_json(), b.value_json()]),
        }
    }

    fn value_from_json(
        id: &SemiringId,
        v: &serde_json::Value,
    ) -> Result<SemiringValue, SemiringError> {
        let bad = || SemiringError::BadValue(v.to_string());
        match id {
            SemiringId::Int => Ok(SemiringValue::Int(bigint_from_json(v).ok_or_else(bad)?)),
            SemiringId::Count => {
                let n = bigint_from_json(v).ok_or_else(bad)?;
                let n = n.to_biguint().ok_or_else(bad)?;
                Ok(SemiringValue::Count(n))
            }
            SemiringId::Trop => {
                if v.as_str() == Some("neg_inf") {
                    Ok(SemiringValue::Trop(Trop::NegInf))
                } else {
                    let n = bigint_from_json(v).ok_or_else(bad)?;
                    let n = n.to_biguint().ok_or_else(bad)?;
                    Ok(SemiringValue::Trop(Trop::Nat(n)))
                }
            }
            SemiringId::Pair(a, b) => {
                let arr = v.as_array().ok_or_else(bad)?;
                if arr.len() != 2 {
                    return Err(bad());
                }
                Ok(SemiringValue::Pair(
                    Box::new(Self::value_from_json(a, &arr[0])?),
                    Box::new(Self::value_from_json(b, &arr[1])?),
                ))
            }
        }
    }
}

fn json_bigint(n: &BigInt) -> serde_json::Value {
    // Stay within i64 when possible so ordinary JSON numbers come out;
    // larger magnitudes fall back to decimal strings.
    if let Ok(i) = i64::try_from(n.clone()) {
        serde_json::Value::Number(i.into())
    } else {
        serde_json::Value::String(n.to_string())
    }
}

fn bigint_from_json(v: &serde_json::Value) -> Option<BigInt> {
    match v {
        serde_json::Value::Number(n) => n.as_i64().map(BigInt::from),
        serde_json::Value::String(s) => s.parse().ok(),
        _ => None,
    }
}

impl fmt::Display for SemiringValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SemiringValue::Int(a) => write!(f, "{a}"),
            SemiringValue::Count(a) => write!(f, "{a}"),
            SemiringValue::Trop(Trop::NegInf) => write!(f, "-inf"),
            SemiringValue::Trop(Trop::Nat(a)) => write!(f, "{a}"),
            SemiringValue::Pair(a, b) => write!(f, "({a},{b})"),
        }
    }
}

/// A tagged value serialises as `{"semiring": tag, "value": payload}`.
impl Serialize for SemiringValue {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = serializer.serialize_map(Some(2))?;
        map.serialize_entry("semiring", &self.id().to_string())?;
        map.serialize_entry("value", &self.value_json())?;
        map.end()
    }
}

impl<'de> Deserialize<'de> for SemiringValue {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = serde_json::Value::deserialize(deserializer)?;
        let obj = raw
            .as_object()
            .ok_or_else(|| D::Error::custom("expected a {semiring, value} object"))?;
        let tag = obj
            .get("semiring")
            .and_then(|t| t.as_str())
            .ok_or_else(|| D::Error::custom("missing `semiring` tag"))?;
        let id = SemiringId::parse(tag).map_err(D::Error::custom)?;
        let value = obj
            .get("value")
            .ok_or_else(|| D::Error::custom("missing `value`"))?;
        SemiringValue::value_from_json(&id, value).map_err(D::Error::custom)
    }
}

/// Convenience constructors used throughout the tests.
impl SemiringValue {
    pub fn int(n: i64) -> SemiringValue {
        SemiringValue::Int(BigInt::from(n))
    }
    pub fn count(n: u64) -> SemiringValue {
        SemiringValue::Count(BigUint::from(n))
    }
    pub fn trop(n: u64) -> SemiringValue {
        SemiringValue::Trop(Trop::Nat(BigUint::from(n)))
    }
    pub fn trop_neg_inf() -> SemiringValue {
        SemiringValue::Trop(Trop::NegInf)
    }
    pub fn pair(a: SemiringValue, b: SemiringValue) -> SemiringValue {
        SemiringValue::Pair(Box::new(a), Box::new(b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tropical_tables() {
        // max is addition, + is multiplication, -∞ is zero, 0 is one
        let t = SemiringValue::trop;
        assert_eq!(t(2).add(&t(5)).unwrap(), t(5));
        assert_eq!(t(2).mul(&t(5)).unwrap(), t(7));
        assert_eq!(SemiringValue::trop_neg_inf().add(&t(3)).unwrap(), t(3));
        assert_eq!(
            SemiringValue::trop_neg_inf().mul(&t(3)).unwrap(),
            SemiringValue::trop_neg_inf()
        );
        assert_eq!(SemiringValue::zero(&SemiringId::Trop), SemiringValue::trop_neg_inf());
        assert_eq!(SemiringValue::one(&SemiringId::Trop), t(0));
    }

    #[test]
    fn from_nat_collapses_in_trop() {
        assert_eq!(
            SemiringValue::from_nat(0, &SemiringId::Trop),
            SemiringValue::trop_neg_inf()
        );
        assert_eq!(SemiringValue::from_nat(1, &SemiringId::Trop), SemiringValue::trop(0));
        assert_eq!(SemiringValue::from_nat(3, &SemiringId::Trop), SemiringValue::trop(0));
        assert_eq!(SemiringValue::from_nat(3, &SemiringId::Int), SemiringValue::int(3));
        assert_eq!(SemiringValue::from_nat(3, &SemiringId::Count), SemiringValue::count(3));
    }

    #[test]
    fn pair_componentwise() {
        let id = SemiringId::Pair(Box::new(SemiringId::Int), Box::new(SemiringId::Trop));
        let x = SemiringValue::pair(SemiringValue::int(-2), SemiringValue::trop(1));
        let y = SemiringValue::pair(SemiringValue::int(3), SemiringValue::trop(4));
        assert_eq!(
            x.add(&y).unwrap(),
            SemiringValue::pair(SemiringValue::int(1), SemiringValue::trop(4))
        );
        assert_eq!(
            x.mul(&y).unwrap(),
            SemiringValue::pair(SemiringValue::int(-6), SemiringValue::trop(5))
        );
        assert_eq!(
            SemiringValue::from_nat(2, &id),
            SemiringValue::pair(SemiringValue::int(2), SemiringValue::trop(0))
        );
    }

    #[test]
    fn mismatch_is_rejected() {
        let err = SemiringValue::int(1).add(&SemiringValue::count(1)).unwrap_err();
        assert!(matches!(err, SemiringError::Mismatch(..)));
    }

    #[test]
    fn tag_round_trip() {
        for tag in ["int", "trop", "count", "pair(int,trop)", "pair(pair(int,int),count)"] {
            let id = SemiringId::parse(tag).unwrap();
            assert_eq!(id.to_string(), tag);
        }
        assert!(SemiringId::parse("integer").is_err());
        assert!(SemiringId::parse("pair(int)").is_err());
    }

    #[test]
    fn json_round_trip() {
        let values = [
            SemiringValue::int(-7),
            SemiringValue::count(7),
            SemiringValue::trop(7),
            SemiringValue::trop_neg_inf(),
            SemiringValue::pair(SemiringValue::int(1), SemiringValue::trop_neg_inf()),
        ];
        for v in values {
            let s = serde_json::to_string(&v).unwrap();
            let back: SemiringValue = serde_json::from_str(&s).unwrap();
            assert_eq!(back, v);
        }
        let v: SemiringValue =
            serde_json::from_str(r#"{"semiring":"trop","value":"neg_inf"}"#).unwrap();
        assert_eq!(v, SemiringValue::trop_neg_inf());
    }

    #[test]
    fn report_order() {
        let mut vs = vec![
            SemiringValue::trop(2),
            SemiringValue::trop_neg_inf(),
            SemiringValue::trop(0),
        ];
        vs.sort_by(|a, b| a.report_cmp(b));
        assert_eq!(
            vs,
            vec![
                SemiringValue::trop_neg_inf(),
                SemiringValue::trop(0),
                SemiringValue::trop(2)
            ]
        );
    }
}
