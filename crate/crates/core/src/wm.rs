//! Working memory: the facts describing one tutor state, plus the relation
//! facts derived from them.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::htn::Operator;
use crate::layout::{LayoutTree, NodeKind, ROOT_ID};
use crate::value::Value;

pub const ATTR_NAME: &str = "name";
pub const ATTR_VALUE: &str = "value";
pub const ATTR_CONTAINER: &str = "contained-in";
pub const ATTR_TYPE: &str = "type";
pub const ATTR_RELATION: &str = "relation";
pub const ATTR_ARG1: &str = "arg1";
pub const ATTR_ARG2: &str = "arg2";

/// Field values keyed by field name, as the interface reports them.
pub type TutorState = BTreeMap<String, Value>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WmError {
    #[error("field `{0}` is not an input of this layout")]
    StructuralMismatch(String),
    #[error("no field named `{0}` in working memory")]
    NotFound(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FactId(pub u32);

impl fmt::Display for FactId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "f{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FactKind {
    Field,
    Relation,
}

/// An attribute payload: either a scalar or a reference to a field fact by
/// its (unique) field name. A field fact's own `name` attribute is a
/// reference to itself, so names join directly against relation arguments.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Atom {
    Value(Value),
    Ref(String),
}

impl Atom {
    pub fn text(s: &str) -> Self {
        Atom::Value(Value::Text(s.to_owned()))
    }

    pub fn as_value(&self) -> Option<&Value> {
        match self {
            Atom::Value(v) => Some(v),
            Atom::Ref(_) => None,
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Value(Value::Empty) => f.write_str("<empty>"),
            Atom::Value(v) => write!(f, "{v:?}"),
            Atom::Ref(name) => write!(f, "@{name}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fact {
    pub id: FactId,
    pub kind: FactKind,
    pub attrs: BTreeMap<String, Atom>,
}

impl Fact {
    pub fn get(&self, attr: &str) -> Option<&Atom> {
        self.attrs.get(attr)
    }

    /// Field name for field facts.
    pub fn field_name(&self) -> Option<&str> {
        match (self.kind, self.attrs.get(ATTR_NAME)) {
            (FactKind::Field, Some(Atom::Ref(n))) => Some(n),
            _ => None,
        }
    }

    pub fn value(&self) -> Option<&Value> {
        self.attrs.get(ATTR_VALUE).and_then(Atom::as_value)
    }

    pub fn is_input(&self) -> bool {
        self.attrs.get(ATTR_TYPE) == Some(&Atom::text("input"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WorkingMemory {
    facts: Vec<Fact>,
    by_name: HashMap<String, usize>,
    closed: bool,
}

impl WorkingMemory {
    /// Converts a tutor state into one field fact per layout leaf. Inputs take
    /// their value from `state` (empty when absent); labels carry their text.
    pub fn from_tutor_state(state: &TutorState, layout: &LayoutTree) -> Result<Self, WmError> {
        let slots = layout.fields();
        for name in state.keys() {
            if !slots
                .iter()
                .any(|s| s.kind == NodeKind::Input && &s.name == name)
            {
                return Err(WmError::StructuralMismatch(name.clone()));
            }
        }
        let mut wm = WorkingMemory {
            facts: Vec::with_capacity(slots.len()),
            by_name: HashMap::new(),
            closed: false,
        };
        for slot in slots {
            let (kind, value) = match slot.kind {
                NodeKind::Label => (
                    "label",
                    Value::parse(slot.text.as_deref().unwrap_or_default()),
                ),
                _ => (
                    "input",
                    state.get(&slot.name).cloned().unwrap_or(Value::Empty),
                ),
            };
            wm.push_field(&slot.name, value, &slot.parent, kind);
        }
        Ok(wm)
    }

    /// A memory of input fields directly under the root, in the given order.
    pub fn from_fields<'a>(fields: impl IntoIterator<Item = (&'a str, Value)>) -> Self {
        let mut wm = WorkingMemory {
            facts: Vec::new(),
            by_name: HashMap::new(),
            closed: false,
        };
        for (name, value) in fields {
            assert!(!wm.by_name.contains_key(name), "duplicate field `{name}`");
            wm.push_field(name, value, ROOT_ID, "input");
        }
        wm
    }

    fn push_field(&mut self, name: &str, value: Value, parent: &str, kind: &str) {
        let id = FactId(self.facts.len() as u32);
        let attrs = BTreeMap::from([
            (ATTR_NAME.to_owned(), Atom::Ref(name.to_owned())),
            (ATTR_VALUE.to_owned(), Atom::Value(value)),
            (ATTR_CONTAINER.to_owned(), Atom::text(parent)),
            (ATTR_TYPE.to_owned(), Atom::text(kind)),
        ]);
        self.by_name.insert(name.to_owned(), self.facts.len());
        self.facts.push(Fact {
            id,
            kind: FactKind::Field,
            attrs,
        });
    }

    /// Adds one relation fact per relation operator per ordered pair of
    /// distinct non-empty fields for which the relation holds. Closing a
    /// closed memory returns it unchanged.
    pub fn close_relations(mut self, relations: &[Operator]) -> Self {
        if self.closed {
            return self;
        }
        let fields: Vec<(String, Value)> = self
            .fields()
            .filter_map(|f| Some((f.field_name()?.to_owned(), f.value()?.clone())))
            .filter(|(_, v)| !v.is_empty())
            .collect();
        for rel in relations.iter().filter(|op| op.is_relation()) {
            for (a, va) in &fields {
                for (b, vb) in &fields {
                    if a != b && rel.holds(va, vb) {
                        let id = FactId(self.facts.len() as u32);
                        let attrs = BTreeMap::from([
                            (ATTR_RELATION.to_owned(), Atom::text(rel.name())),
                            (ATTR_ARG1.to_owned(), Atom::Ref(a.clone())),
                            (ATTR_ARG2.to_owned(), Atom::Ref(b.clone())),
                        ]);
                        self.facts.push(Fact {
                            id,
                            kind: FactKind::Relation,
                            attrs,
                        });
                    }
                }
            }
        }
        self.closed = true;
        self
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn facts(&self) -> &[Fact] {
        &self.facts
    }

    pub fn fact(&self, id: FactId) -> Option<&Fact> {
        self.facts.get(id.0 as usize)
    }

    pub fn fields(&self) -> impl Iterator<Item = &Fact> {
        self.facts.iter().filter(|f| f.kind == FactKind::Field)
    }

    pub fn relations(&self) -> impl Iterator<Item = &Fact> {
        self.facts.iter().filter(|f| f.kind == FactKind::Relation)
    }

    pub fn field(&self, name: &str) -> Option<&Fact> {
        self.by_name.get(name).map(|&i| &self.facts[i])
    }

    pub fn lookup(&self, name: &str) -> Result<&Value, WmError> {
        self.field(name)
            .and_then(Fact::value)
            .ok_or_else(|| WmError::NotFound(name.to_owned()))
    }

    /// Input fields that are still blank, in layout order.
    pub fn empty_inputs(&self) -> impl Iterator<Item = &str> {
        self.fields()
            .filter(|f| f.is_input() && f.value().is_some_and(Value::is_empty))
            .filter_map(Fact::field_name)
    }

    pub fn all_inputs_filled(&self) -> bool {
        self.empty_inputs().next().is_none()
    }

    /// Stable digest of the field values, used to detect stale plan traces.
    pub fn fingerprint(&self) -> u64 {
        const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
        const PRIME: u64 = 0x0100_0000_01b3;
        let mut h = OFFSET;
        for f in self.fields() {
            let line = format!(
                "{}={};",
                f.field_name().unwrap_or_default(),
                f.value().cloned().unwrap_or(Value::Empty)
            );
            for b in line.bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(PRIME);
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalsim::Domain;
    use crate::htn::Operator;

    fn rels() -> Vec<Operator> {
        vec![Operator::Equals, Operator::LessThan]
    }

    fn relation_set(wm: &WorkingMemory) -> Vec<(String, String, String)> {
        wm.relations()
            .map(|r| {
                let s = |k| match r.get(k).unwrap() {
                    Atom::Ref(n) => n.clone(),
                    Atom::Value(v) => v.to_string(),
                };
                (s(ATTR_RELATION), s(ATTR_ARG1), s(ATTR_ARG2))
            })
            .collect()
    }

    #[test]
    fn fraction_state_gives_one_fact_per_field() {
        let layout = Domain::FractionMultiply.layout();
        let state = TutorState::from([
            ("num1".into(), Value::int(3)),
            ("num2".into(), Value::int(4)),
            ("op".into(), Value::symbol("x")),
        ]);
        let wm = WorkingMemory::from_tutor_state(&state, &layout).unwrap();
        assert_eq!(wm.facts().len(), 8);
        assert_eq!(wm.relations().count(), 0);
        assert!(wm.fields().all(|f| f.get(ATTR_CONTAINER).is_some()));
        assert_eq!(
            wm.field("num1").unwrap().get(ATTR_CONTAINER),
            Some(&Atom::text("frac1"))
        );
        assert_eq!(wm.lookup("den1").unwrap(), &Value::Empty);
    }

    #[test]
    fn empty_state_single_field() {
        let layout =
            LayoutTree::with_children(vec![crate::layout::LayoutNode::input("a")]).unwrap();
        let wm = WorkingMemory::from_tutor_state(&TutorState::new(), &layout).unwrap();
        assert_eq!(wm.facts().len(), 1);
        assert_eq!(wm.lookup("a").unwrap(), &Value::Empty);
    }

    #[test]
    fn unknown_field_is_structural_mismatch() {
        let layout = Domain::FractionMultiply.layout();
        let state = TutorState::from([("ghost".into(), Value::int(1))]);
        assert_eq!(
            WorkingMemory::from_tutor_state(&state, &layout),
            Err(WmError::StructuralMismatch("ghost".into()))
        );
    }

    #[test]
    fn lookup_reads_back_values() {
        let wm = WorkingMemory::from_fields([("num1", Value::int(3)), ("ans", Value::Empty)]);
        assert_eq!(wm.lookup("num1").unwrap(), &Value::int(3));
        assert_eq!(wm.lookup("ans").unwrap(), &Value::Empty);
        assert_eq!(
            wm.lookup("missing"),
            Err(WmError::NotFound("missing".into()))
        );
    }

    #[test]
    fn equal_denominators_relate() {
        let wm = WorkingMemory::from_fields([("d1", Value::int(4)), ("d2", Value::int(4))])
            .close_relations(&rels());
        let r = relation_set(&wm);
        assert!(r.contains(&("equals".into(), "d1".into(), "d2".into())));
        assert!(!r.iter().any(|(n, _, _)| n == "less-than"));
    }

    #[test]
    fn single_field_has_no_relations() {
        let wm = WorkingMemory::from_fields([("a", Value::int(4))]).close_relations(&rels());
        assert_eq!(wm.relations().count(), 0);
    }

    #[test]
    fn less_than_is_directional() {
        let wm = WorkingMemory::from_fields([("a", Value::int(2)), ("b", Value::int(5))])
            .close_relations(&rels());
        assert_eq!(
            relation_set(&wm),
            vec![("less-than".into(), "a".into(), "b".into())]
        );
    }

    #[test]
    fn empty_fields_excluded_from_pairs() {
        let wm = WorkingMemory::from_fields([
            ("a", Value::int(2)),
            ("b", Value::Empty),
            ("c", Value::int(2)),
        ])
        .close_relations(&rels());
        assert_eq!(
            relation_set(&wm),
            vec![
                ("equals".into(), "a".into(), "c".into()),
                ("equals".into(), "c".into(), "a".into())
            ]
        );
    }

    #[test]
    fn equals_needs_same_variant() {
        let wm = WorkingMemory::from_fields([
            ("a", Value::symbol("x")),
            ("b", Value::symbol("x")),
            ("c", Value::Text("x1".into())),
        ])
        .close_relations(&rels());
        assert_eq!(relation_set(&wm).len(), 2);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_fields() -> impl Strategy<Value = Vec<Value>> {
            proptest::collection::vec(
                prop_oneof![
                    3 => (0..6i64).prop_map(Value::int),
                    1 => Just(Value::Empty),
                    1 => proptest::sample::select(vec!["+", "x"]).prop_map(Value::symbol),
                ],
                0..8,
            )
        }

        fn build(values: &[Value]) -> WorkingMemory {
            let names: Vec<String> = (0..values.len()).map(|i| format!("f{i}")).collect();
            WorkingMemory::from_fields(names.iter().map(String::as_str).zip(values.iter().cloned()))
        }

        proptest! {
            #[test]
            fn closure_is_idempotent(values in arb_fields()) {
                let once = build(&values).close_relations(&rels());
                let twice = once.clone().close_relations(&rels());
                prop_assert_eq!(once, twice);
            }

            #[test]
            fn closure_sound_complete_and_field_preserving(values in arb_fields()) {
                let open = build(&values);
                let closed = open.clone().close_relations(&rels());
                let before: Vec<_> = open.fields().cloned().collect();
                let after: Vec<_> = closed.fields().cloned().collect();
                prop_assert_eq!(before, after);

                let mut expected = Vec::new();
                for rel in rels() {
                    for (i, a) in values.iter().enumerate() {
                        for (j, b) in values.iter().enumerate() {
                            let holds = match rel {
                                Operator::Equals => a == b,
                                Operator::LessThan => matches!((a, b), (Value::Number(x), Value::Number(y)) if x < y),
                                _ => unreachable!(),
                            };
                            if i != j && !a.is_empty() && !b.is_empty() && holds {
                                expected.push((rel.name().to_string(), format!("f{i}"), format!("f{j}")));
                            }
                        }
                    }
                }
                prop_assert_eq!(relation_set(&closed), expected);
            }
        }
    }
}
