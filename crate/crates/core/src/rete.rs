//! Rete pattern matching over a closed working memory.
//!
//! Conditions are conjunctions of fact templates. Compilation splits every
//! template into an alpha test (fact kind, constant attributes, required
//! attributes) shared across productions, and a chain of beta joins that
//! carry variable bindings from clause to clause. Negated templates run as
//! a final filter over complete tokens.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::value::Value;
use crate::wm::{
    Atom, Fact, FactId, FactKind, WorkingMemory, ATTR_ARG1, ATTR_ARG2, ATTR_NAME, ATTR_RELATION,
    ATTR_VALUE,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReteError {
    #[error("variable ?{0} appears in a negated clause but in no positive clause")]
    UnsafeNegation(String),
    #[error("working memory must be closed under relational inference before matching")]
    Unclosed,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Term {
    Const(Atom),
    Var(String),
}

impl Term {
    pub fn var(name: impl Into<String>) -> Self {
        Term::Var(name.into())
    }

    pub fn value(v: Value) -> Self {
        Term::Const(Atom::Value(v))
    }

    pub fn text(s: &str) -> Self {
        Term::Const(Atom::text(s))
    }

    pub fn field_ref(name: &str) -> Self {
        Term::Const(Atom::Ref(name.to_owned()))
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            Term::Var(v) => Some(v),
            Term::Const(_) => None,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(a) => write!(f, "{a}"),
            Term::Var(v) => write!(f, "?{v}"),
        }
    }
}

/// One clause of a condition: a fact kind plus attribute constraints. Facts
/// may carry attributes the template does not mention.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FactTemplate {
    pub kind: FactKind,
    pub attrs: BTreeMap<String, Term>,
}

impl FactTemplate {
    pub fn new(kind: FactKind, attrs: impl IntoIterator<Item = (&'static str, Term)>) -> Self {
        FactTemplate {
            kind,
            attrs: attrs.into_iter().map(|(k, t)| (k.to_owned(), t)).collect(),
        }
    }

    /// `field(name = <name>, value = <value>)`.
    pub fn field(name: &str, value: Term) -> Self {
        Self::new(
            FactKind::Field,
            [(ATTR_NAME, Term::field_ref(name)), (ATTR_VALUE, value)],
        )
    }

    /// `relation(relation = <rel>, arg1 = @a, arg2 = @b)`.
    pub fn relation(rel: &str, a: &str, b: &str) -> Self {
        Self::new(
            FactKind::Relation,
            [
                (ATTR_RELATION, Term::text(rel)),
                (ATTR_ARG1, Term::field_ref(a)),
                (ATTR_ARG2, Term::field_ref(b)),
            ],
        )
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.attrs.values().filter_map(Term::as_var)
    }
}

impl fmt::Display for FactTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            FactKind::Field => "field",
            FactKind::Relation => "relation",
        };
        write!(f, "{kind}(")?;
        for (i, (k, t)) in self.attrs.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}={t}")?;
        }
        f.write_str(")")
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pattern {
    pub clauses: Vec<FactTemplate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub negated: Vec<FactTemplate>,
}

impl Pattern {
    pub fn new(clauses: Vec<FactTemplate>) -> Self {
        Pattern {
            clauses,
            negated: Vec::new(),
        }
    }

    pub fn clause_count(&self) -> usize {
        self.clauses.len() + self.negated.len()
    }

    pub fn positive_variables(&self) -> BTreeSet<&str> {
        self.clauses
            .iter()
            .flat_map(FactTemplate::variables)
            .collect()
    }

    /// Every negated variable must be bound by some positive clause.
    pub fn check_safety(&self) -> Result<(), ReteError> {
        let bound = self.positive_variables();
        for v in self.negated.iter().flat_map(FactTemplate::variables) {
            if !bound.contains(v) {
                return Err(ReteError::UnsafeNegation(v.to_owned()));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pos = self.clauses.iter().map(ToString::to_string);
        let neg = self.negated.iter().map(|c| format!("not {c}"));
        let all: Vec<_> = pos.chain(neg).collect();
        if all.is_empty() {
            f.write_str("true")
        } else {
            f.write_str(&all.join(" & "))
        }
    }
}

/// Variable bindings plus the facts matched by each positive clause.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct BindingSet {
    pub vars: BTreeMap<String, Atom>,
    pub facts: Vec<FactId>,
}

impl BindingSet {
    pub fn get(&self, var: &str) -> Option<&Atom> {
        self.vars.get(var)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct AlphaTest {
    kind: FactKind,
    constants: Vec<(String, Atom)>,
    required: Vec<String>,
}

impl AlphaTest {
    fn of(template: &FactTemplate) -> Self {
        let mut constants = Vec::new();
        let mut required = Vec::new();
        for (attr, term) in &template.attrs {
            match term {
                Term::Const(a) => constants.push((attr.clone(), a.clone())),
                Term::Var(_) => required.push(attr.clone()),
            }
        }
        AlphaTest {
            kind: template.kind,
            constants,
            required,
        }
    }

    fn passes(&self, fact: &Fact) -> bool {
        fact.kind == self.kind
            && self
                .constants
                .iter()
                .all(|(k, a)| fact.attrs.get(k) == Some(a))
            && self.required.iter().all(|k| fact.attrs.contains_key(k))
    }
}

/// Join step for one positive clause: the variable attributes still to be
/// bound or tested once the alpha test has passed.
#[derive(Clone, Debug)]
struct JoinNode {
    alpha: usize,
    vars: Vec<(String, String)>,
}

#[derive(Clone, Debug)]
struct Production {
    joins: Vec<JoinNode>,
    negations: Vec<FactTemplate>,
}

/// A rete holding many productions over shared alpha memories.
#[derive(Clone, Debug, Default)]
pub struct Rete {
    alphas: Vec<AlphaTest>,
    alpha_ids: HashMap<AlphaTest, usize>,
    productions: Vec<Production>,
}

pub type ProductionId = usize;

impl Rete {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_production(&mut self, pattern: &Pattern) -> Result<ProductionId, ReteError> {
        pattern.check_safety()?;
        let joins = pattern
            .clauses
            .iter()
            .map(|clause| {
                let test = AlphaTest::of(clause);
                let next = self.alphas.len();
                let alpha = *self.alpha_ids.entry(test.clone()).or_insert(next);
                if alpha == next {
                    self.alphas.push(test);
                }
                let vars = clause
                    .attrs
                    .iter()
                    .filter_map(|(attr, t)| t.as_var().map(|v| (attr.clone(), v.to_owned())))
                    .collect();
                JoinNode { alpha, vars }
            })
            .collect();
        self.productions.push(Production {
            joins,
            negations: pattern.negated.clone(),
        });
        Ok(self.productions.len() - 1)
    }

    pub fn production_count(&self) -> usize {
        self.productions.len()
    }

    pub fn alpha_count(&self) -> usize {
        self.alphas.len()
    }

    /// Fills the alpha memories for `wm`; productions are then joined on demand.
    pub fn activate<'a>(&'a self, wm: &'a WorkingMemory) -> Result<Activation<'a>, ReteError> {
        if !wm.is_closed() {
            return Err(ReteError::Unclosed);
        }
        let memories = self
            .alphas
            .iter()
            .map(|test| {
                wm.facts()
                    .iter()
                    .filter(|f| test.passes(f))
                    .map(|f| f.id)
                    .collect()
            })
            .collect();
        Ok(Activation {
            rete: self,
            wm,
            memories,
        })
    }
}

/// Alpha memories of one rete over one working memory.
pub struct Activation<'a> {
    rete: &'a Rete,
    wm: &'a WorkingMemory,
    memories: Vec<Vec<FactId>>,
}

impl Activation<'_> {
    /// All bindings of a production, ordered by clause then fact id.
    pub fn matches(&self, production: ProductionId) -> Vec<BindingSet> {
        let prod = &self.rete.productions[production];
        let mut tokens = vec![BindingSet::default()];
        for join in &prod.joins {
            let mut next = Vec::new();
            for token in &tokens {
                for &fid in &self.memories[join.alpha] {
                    if token.facts.contains(&fid) {
                        continue;
                    }
                    let fact = self.wm.fact(fid).expect("alpha memory holds live facts");
                    if let Some(vars) = extend(&token.vars, &join.vars, fact) {
                        let mut facts = token.facts.clone();
                        facts.push(fid);
                        next.push(BindingSet { vars, facts });
                    }
                }
            }
            tokens = next;
            if tokens.is_empty() {
                break;
            }
        }
        tokens.retain(|t| !prod.negations.iter().any(|neg| self.blocked(neg, &t.vars)));
        tokens
    }

    fn blocked(&self, template: &FactTemplate, vars: &BTreeMap<String, Atom>) -> bool {
        self.wm.facts().iter().any(|f| {
            f.kind == template.kind
                && template.attrs.iter().all(|(attr, term)| {
                    let want = match term {
                        Term::Const(a) => a,
                        Term::Var(v) => &vars[v],
                    };
                    f.attrs.get(attr) == Some(want)
                })
        })
    }
}

fn extend(
    bound: &BTreeMap<String, Atom>,
    vars: &[(String, String)],
    fact: &Fact,
) -> Option<BTreeMap<String, Atom>> {
    let mut out: Option<BTreeMap<String, Atom>> = None;
    for (attr, var) in vars {
        let got = fact.attrs.get(attr)?;
        let current = out.as_ref().unwrap_or(bound);
        match current.get(var) {
            Some(existing) if existing != got => return None,
            Some(_) => {}
            None => {
                out.get_or_insert_with(|| bound.clone())
                    .insert(var.clone(), got.clone());
            }
        }
    }
    Some(out.unwrap_or_else(|| bound.clone()))
}

/// A compiled single-pattern matcher.
#[derive(Clone, Debug)]
pub struct MatcherNetwork {
    rete: Rete,
}

pub fn compile(pattern: &Pattern) -> Result<MatcherNetwork, ReteError> {
    let mut rete = Rete::new();
    rete.add_production(pattern)?;
    Ok(MatcherNetwork { rete })
}

impl MatcherNetwork {
    pub fn matches(&self, wm: &WorkingMemory) -> Result<Vec<BindingSet>, ReteError> {
        Ok(self.rete.activate(wm)?.matches(0))
    }
}

/// Compiles and matches in one call.
pub fn match_pattern(pattern: &Pattern, wm: &WorkingMemory) -> Result<Vec<BindingSet>, ReteError> {
    compile(pattern)?.matches(wm)
}
