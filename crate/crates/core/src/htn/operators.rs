use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::value::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorKind {
    /// Computes a value without touching the interface.
    Mental,
    /// Acts on the tutor interface.
    Interface,
    /// Derives boolean relation facts during closure.
    Relation,
}

/// The pre-authored primitive operators. Declaration order is significant:
/// explanation search breaks depth ties by it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Operator {
    Add,
    Subtract,
    Multiply,
    Divide,
    Concatenate,
    LeftDigits,
    Copy,
    InputValue,
    ClickDone,
    Equals,
    LessThan,
}

pub const ALL_OPERATORS: [Operator; 11] = [
    Operator::Add,
    Operator::Subtract,
    Operator::Multiply,
    Operator::Divide,
    Operator::Concatenate,
    Operator::LeftDigits,
    Operator::Copy,
    Operator::InputValue,
    Operator::ClickDone,
    Operator::Equals,
    Operator::LessThan,
];

/// Mental arithmetic and string operators, interface actions, and relations.
pub fn standard_operator_library() -> Vec<Operator> {
    ALL_OPERATORS.to_vec()
}

impl Operator {
    pub fn name(self) -> &'static str {
        match self {
            Operator::Add => "add",
            Operator::Subtract => "subtract",
            Operator::Multiply => "multiply",
            Operator::Divide => "divide",
            Operator::Concatenate => "concatenate",
            Operator::LeftDigits => "left-digits",
            Operator::Copy => "copy",
            Operator::InputValue => "input-value",
            Operator::ClickDone => "click-done",
            Operator::Equals => "equals",
            Operator::LessThan => "less-than",
        }
    }

    pub fn kind(self) -> OperatorKind {
        match self {
            Operator::InputValue | Operator::ClickDone => OperatorKind::Interface,
            Operator::Equals | Operator::LessThan => OperatorKind::Relation,
            _ => OperatorKind::Mental,
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Operator::ClickDone => 0,
            Operator::LeftDigits | Operator::Copy | Operator::InputValue => 1,
            _ => 2,
        }
    }

    pub fn is_mental(self) -> bool {
        self.kind() == OperatorKind::Mental
    }

    pub fn is_relation(self) -> bool {
        self.kind() == OperatorKind::Relation
    }

    /// Applies a mental operator. `None` means the operator does not apply to
    /// these arguments (wrong types, division by zero, overflow).
    pub fn apply(self, args: &[Value]) -> Option<Value> {
        if args.len() != self.arity() || args.iter().any(Value::is_empty) {
            return None;
        }
        match self {
            Operator::Add => args[0].checked_add(&args[1]),
            Operator::Subtract => args[0].checked_sub(&args[1]),
            Operator::Multiply => args[0].checked_mul(&args[1]),
            Operator::Divide => args[0].checked_div(&args[1]),
            Operator::Concatenate => concatenate(&args[0], &args[1]),
            Operator::LeftDigits => {
                let n = args[0].as_integer()?;
                (n >= 0).then(|| Value::int(n / 10))
            }
            Operator::Copy => Some(args[0].clone()),
            _ => None,
        }
    }

    /// Evaluates a relation operator on two non-empty values.
    pub fn holds(self, a: &Value, b: &Value) -> bool {
        if a.is_empty() || b.is_empty() {
            return false;
        }
        match self {
            Operator::Equals => a.same_variant(b) && a == b,
            Operator::LessThan => match (a, b) {
                (Value::Number(x), Value::Number(y)) => x < y,
                _ => false,
            },
            _ => false,
        }
    }
}

fn concatenate(a: &Value, b: &Value) -> Option<Value> {
    fn part(v: &Value) -> Option<String> {
        match v {
            Value::Number(_) => v.as_integer().filter(|n| *n >= 0).map(|n| n.to_string()),
            Value::Text(s) => Some(s.clone()),
            _ => None,
        }
    }
    let joined = part(a)? + &part(b)?;
    if joined.len() > 18 {
        return None;
    }
    Some(Value::parse(&joined))
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Operator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ALL_OPERATORS
            .into_iter()
            .find(|op| op.name() == s)
            .ok_or_else(|| format!("unknown operator `{s}`"))
    }
}
