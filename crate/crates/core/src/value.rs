//! Scalar values held by tutor fields.
//!
//! Every value is kept in canonical form: `Value::parse(&v.to_string()) == v`
//! holds for every value produced by this crate, which is what lets the wire
//! and storage formats carry values as plain field text.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, CheckedSub, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Exact rational number used for all numeric field values.
pub type Number = Ratio<i64>;

/// Glyphs that parse as [`Value::Symbol`] rather than text.
pub const SYMBOL_GLYPHS: &[&str] = &["+", "-", "x", "×", "*", "/", "÷", "="];

/// Tagged scalar held by a tutor field.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Value {
    Number(Number),
    Text(String),
    Symbol(String),
    Empty,
}

impl Value {
    pub fn int(n: i64) -> Self {
        Value::Number(Number::from_integer(n))
    }

    pub fn ratio(numer: i64, denom: i64) -> Self {
        Value::Number(Number::new(numer, denom))
    }

    pub fn symbol(glyph: &str) -> Self {
        Value::Symbol(glyph.to_owned())
    }

    /// Parses the text a user would type into a field.
    ///
    /// Integers (`-12`) and fractions (`3/4`) become numbers, operator glyphs
    /// become symbols, blank text becomes [`Value::Empty`] and anything else
    /// stays text.
    pub fn parse(raw: &str) -> Self {
        let s = raw.trim();
        if s.is_empty() {
            return Value::Empty;
        }
        if SYMBOL_GLYPHS.contains(&s) {
            return Value::Symbol(s.to_owned());
        }
        if let Some(n) = parse_number(s) {
            return Value::Number(n);
        }
        Value::Text(s.to_owned())
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Value::Empty)
    }

    pub fn as_number(&self) -> Option<&Number> {
        match self {
            Value::Number(n) => Some(n),
            _ => None,
        }
    }

    /// Integer payload, if this is a number with denominator one.
    pub fn as_integer(&self) -> Option<i64> {
        self.as_number()
            .filter(|n| n.is_integer())
            .map(|n| *n.numer())
    }

    pub fn same_variant(&self, other: &Value) -> bool {
        std::mem::discriminant(self) == std::mem::discriminant(other)
    }

    pub fn variant_name(&self) -> &'static str {
        match self {
            Value::Number(_) => "number",
            Value::Text(_) => "text",
            Value::Symbol(_) => "symbol",
            Value::Empty => "empty",
        }
    }

    pub(crate) fn checked_add(&self, other: &Value) -> Option<Value> {
        Some(Value::Number(
            self.as_number()?.checked_add(other.as_number()?)?,
        ))
    }

    pub(crate) fn checked_sub(&self, other: &Value) -> Option<Value> {
        Some(Value::Number(
            self.as_number()?.checked_sub(other.as_number()?)?,
        ))
    }

    pub(crate) fn checked_mul(&self, other: &Value) -> Option<Value> {
        Some(Value::Number(
            self.as_number()?.checked_mul(other.as_number()?)?,
        ))
    }

    pub(crate) fn checked_div(&self, other: &Value) -> Option<Value> {
        let d = other.as_number()?;
        if d.is_zero() {
            return None;
        }
        Some(Value::Number(self.as_number()?.checked_div(d)?))
    }
}

fn parse_number(s: &str) -> Option<Number> {
    fn int(s: &str) -> Option<i64> {
        let digits = s.strip_prefix('-').unwrap_or(s);
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        s.parse().ok()
    }
    match s.split_once('/') {
        None => int(s).map(Number::from_integer),
        Some((n, d)) => {
            let n = int(n)?;
            let d = int(d)?;
            if d == 0 || d.is_negative() {
                return None;
            }
            Some(Number::new(n, d))
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(n) if n.is_integer() => write!(f, "{}", n.numer()),
            Value::Number(n) => write!(f, "{}/{}", n.numer(), n.denom()),
            Value::Text(s) | Value::Symbol(s) => f.write_str(s),
            Value::Empty => Ok(()),
        }
    }
}

impl FromStr for Value {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(Value::parse(s))
    }
}

impl From<i64> for Value {
    fn from(n: i64) -> Self {
        Value::int(n)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::parse(s)
    }
}

/// Total order used only for deterministic sorting: variant, then payload.
impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        fn rank(v: &Value) -> u8 {
            match v {
                Value::Empty => 0,
                Value::Number(_) => 1,
                Value::Symbol(_) => 2,
                Value::Text(_) => 3,
            }
        }
        match (self, other) {
            (Value::Number(a), Value::Number(b)) => a.cmp(b),
            (Value::Symbol(a), Value::Symbol(b)) | (Value::Text(a), Value::Text(b)) => a.cmp(b),
            _ => rank(self).cmp(&rank(other)),
        }
    }
}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(Value::parse(&s))
    }
}
