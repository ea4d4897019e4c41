//! Learning component: explain a demonstrated value with the operator
//! library, turn the explanation into a method, generalize methods that share
//! a decomposition, and react to yes/no feedback.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::htn::{
    Arg, HtnError, KnowledgeBase, Method, MethodKey, Operator, OperatorCall, Provenance, Subtask,
    TaskName,
};
use crate::planner::{attempt_excluding, Attempt, FieldAction, Plan, PlanError};
use crate::rete::{FactTemplate, Pattern, Term};
use crate::value::Value;
use crate::wm::{
    FactKind, WorkingMemory, ATTR_ARG1, ATTR_ARG2, ATTR_NAME, ATTR_RELATION, ATTR_VALUE,
};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("feedback refers to a plan made against an older agent or tutor state")]
    StaleTrace,
    #[error("invalid demonstration: {0}")]
    InvalidDemonstration(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Htn(#[from] HtnError),
}

/// A value computed from working-memory fields by mental operators.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Field(String),
    Apply(Operator, Vec<Expr>),
}

impl Expr {
    pub fn eval(&self, wm: &WorkingMemory) -> Option<Value> {
        match self {
            Expr::Field(f) => wm.lookup(f).ok().filter(|v| !v.is_empty()).cloned(),
            Expr::Apply(op, args) => {
                let vals = args
                    .iter()
                    .map(|a| a.eval(wm))
                    .collect::<Option<Vec<_>>>()?;
                op.apply(&vals)
            }
        }
    }

    /// Source fields in order of first appearance.
    pub fn sources(&self) -> Vec<&str> {
        fn walk<'a>(e: &'a Expr, out: &mut Vec<&'a str>) {
            match e {
                Expr::Field(f) if !out.contains(&f.as_str()) => out.push(f),
                Expr::Field(_) => {}
                Expr::Apply(_, args) => args.iter().for_each(|a| walk(a, out)),
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Field(name) => f.write_str(name),
            Expr::Apply(op, args) => {
                write!(f, "{op}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Explanation {
    pub expr: Expr,
    /// 0 for a copy of an existing field, otherwise the operator nesting depth.
    pub depth: usize,
    pub output: Value,
}

impl Explanation {
    pub fn replay(&self, wm: &WorkingMemory) -> Option<Value> {
        self.expr.eval(wm)
    }
}

struct Node {
    value: Value,
    depth: usize,
    kind: NodeKind,
}

enum NodeKind {
    Leaf { name: String, order: usize },
    Apply { op: Operator, args: Vec<usize> },
}

struct Arena {
    nodes: Vec<Node>,
}

impl Arena {
    fn push(&mut self, value: Value, depth: usize, kind: NodeKind) -> usize {
        self.nodes.push(Node { value, depth, kind });
        self.nodes.len() - 1
    }

    fn apply(&mut self, op: Operator, args: &[usize], depth: usize) -> Option<usize> {
        let vals: Vec<Value> = args.iter().map(|&a| self.nodes[a].value.clone()).collect();
        let value = op.apply(&vals)?;
        Some(self.push(
            value,
            depth,
            NodeKind::Apply {
                op,
                args: args.to_vec(),
            },
        ))
    }

    fn cmp(&self, x: usize, y: usize) -> std::cmp::Ordering {
        use std::cmp::Ordering;
        match (&self.nodes[x].kind, &self.nodes[y].kind) {
            (NodeKind::Leaf { order: a, .. }, NodeKind::Leaf { order: b, .. }) => a.cmp(b),
            (NodeKind::Leaf { .. }, NodeKind::Apply { .. }) => Ordering::Less,
            (NodeKind::Apply { .. }, NodeKind::Leaf { .. }) => Ordering::Greater,
            (NodeKind::Apply { op: oa, args: aa }, NodeKind::Apply { op: ob, args: ab }) => {
                oa.cmp(ob).then_with(|| {
                    aa.iter()
                        .zip(ab)
                        .map(|(&p, &q)| self.cmp(p, q))
                        .find(|o| o.is_ne())
                        .unwrap_or(aa.len().cmp(&ab.len()))
                })
            }
        }
    }

    /// True when the value cannot depend on the sources, e.g. `divide(a, a)`.
    fn constant_valued(&self, id: usize) -> bool {
        match &self.nodes[id].kind {
            NodeKind::Leaf { .. } => false,
            NodeKind::Apply { op, args } => {
                let cancels = matches!(op, Operator::Subtract | Operator::Divide)
                    && args.len() == 2
                    && self.cmp(args[0], args[1]).is_eq();
                cancels || args.iter().all(|&a| self.constant_valued(a))
            }
        }
    }

    fn distinct_sources(&self, id: usize) -> usize {
        fn walk<'a>(a: &'a Arena, id: usize, out: &mut BTreeSet<&'a str>) {
            match &a.nodes[id].kind {
                NodeKind::Leaf { name, .. } => {
                    out.insert(name);
                }
                NodeKind::Apply { args, .. } => args.iter().for_each(|&x| walk(a, x, out)),
            }
        }
        let mut out = BTreeSet::new();
        walk(self, id, &mut out);
        out.len()
    }

    fn expr(&self, id: usize) -> Expr {
        match &self.nodes[id].kind {
            NodeKind::Leaf { name, .. } => Expr::Field(name.clone()),
            NodeKind::Apply { op, args } => {
                Expr::Apply(*op, args.iter().map(|&a| self.expr(a)).collect())
            }
        }
    }
}

/// What the free operand of a binary operator must be for the result to hit
/// the target.
enum Need {
    Exact(Value),
    AnyNumber,
    AnyNonZero,
    Nothing,
    /// No shortcut; try every candidate.
    Scan,
}

fn is_zero(v: &Value) -> bool {
    v.as_number().is_some_and(|n| *n.numer() == 0)
}

fn exact(v: Option<Value>) -> Need {
    v.map_or(Need::Scan, Need::Exact)
}

/// `fixed op ? = target`
fn need_right(op: Operator, fixed: &Value, target: &Value) -> Need {
    if op != Operator::Concatenate && (fixed.as_number().is_none() || target.as_number().is_none())
    {
        return Need::Nothing;
    }
    match op {
        Operator::Add => exact(target.checked_sub(fixed)),
        Operator::Subtract => exact(fixed.checked_sub(target)),
        Operator::Multiply if is_zero(fixed) => {
            if is_zero(target) {
                Need::AnyNumber
            } else {
                Need::Nothing
            }
        }
        Operator::Multiply => exact(target.checked_div(fixed)),
        Operator::Divide if is_zero(target) => {
            if is_zero(fixed) {
                Need::AnyNonZero
            } else {
                Need::Nothing
            }
        }
        Operator::Divide if is_zero(fixed) => Need::Nothing,
        Operator::Divide => exact(fixed.checked_div(target)),
        _ => Need::Scan,
    }
}

/// `? op fixed = target`
fn need_left(op: Operator, fixed: &Value, target: &Value) -> Need {
    if op != Operator::Concatenate && (fixed.as_number().is_none() || target.as_number().is_none())
    {
        return Need::Nothing;
    }
    match op {
        Operator::Add => exact(target.checked_sub(fixed)),
        Operator::Subtract => exact(target.checked_add(fixed)),
        Operator::Multiply if is_zero(fixed) => {
            if is_zero(target) {
                Need::AnyNumber
            } else {
                Need::Nothing
            }
        }
        Operator::Multiply => exact(target.checked_div(fixed)),
        Operator::Divide if is_zero(fixed) => Need::Nothing,
        Operator::Divide => exact(target.checked_mul(fixed)),
        _ => Need::Scan,
    }
}

struct Pool<'a> {
    ids: &'a [usize],
    by_value: HashMap<&'a Value, Vec<usize>>,
}

impl<'a> Pool<'a> {
    fn new(arena: &'a Arena, ids: &'a [usize]) -> Self {
        let mut by_value: HashMap<&Value, Vec<usize>> = HashMap::new();
        for &id in ids {
            by_value.entry(&arena.nodes[id].value).or_default().push(id);
        }
        Pool { ids, by_value }
    }

    fn candidates(&self, arena: &Arena, need: Need) -> Vec<usize> {
        let numbers = |nonzero: bool| {
            self.ids
                .iter()
                .copied()
                .filter(|&i| {
                    arena.nodes[i]
                        .value
                        .as_number()
                        .is_some_and(|n| !nonzero || *n.numer() != 0)
                })
                .collect()
        };
        match need {
            Need::Exact(v) => self.by_value.get(&v).cloned().unwrap_or_default(),
            Need::AnyNumber => numbers(false),
            Need::AnyNonZero => numbers(true),
            Need::Nothing => Vec::new(),
            Need::Scan => self.ids.to_vec(),
        }
    }
}

/// Every way to produce `target` from the memory's non-empty fields with at
/// most `max_depth` nested mental operators, shallowest first, then those
/// whose value actually depends on their sources, then those reading more
/// distinct fields, then by operator declaration order, then by argument
/// (field order).
///
/// Depth 0 holds copies of fields already equal to the target and is only
/// searched when `copy` is in the library. Deeper results never use `copy`.
pub fn explain(
    wm: &WorkingMemory,
    target: &Value,
    operators: &[Operator],
    max_depth: usize,
) -> Vec<Explanation> {
    if target.is_empty() {
        return Vec::new();
    }
    let mut ops: Vec<Operator> = operators
        .iter()
        .copied()
        .filter(|o| o.is_mental() && *o != Operator::Copy)
        .collect();
    ops.sort();
    ops.dedup();

    let mut arena = Arena { nodes: Vec::new() };
    let mut leaves = Vec::new();
    for (order, f) in wm.fields().enumerate() {
        let (Some(name), Some(value)) = (f.field_name(), f.value()) else {
            continue;
        };
        if !value.is_empty() {
            leaves.push(arena.push(
                value.clone(),
                0,
                NodeKind::Leaf {
                    name: name.to_owned(),
                    order,
                },
            ));
        }
    }

    let mut found = Vec::new();
    if operators.contains(&Operator::Copy) {
        for &leaf in &leaves {
            if &arena.nodes[leaf].value == target {
                found.push(arena.push(
                    target.clone(),
                    0,
                    NodeKind::Apply {
                        op: Operator::Copy,
                        args: vec![leaf],
                    },
                ));
            }
        }
    }

    let mut layers: Vec<Vec<usize>> = vec![leaves];
    for k in 1..=max_depth {
        let prev = layers[k - 1].clone();
        let below_prev: Vec<usize> = layers[..k - 1].concat();
        let lower: Vec<usize> = layers[..k].concat();
        if k < max_depth {
            let mut layer = Vec::new();
            for &op in &ops {
                if op.arity() == 1 {
                    layer.extend(prev.iter().filter_map(|&a| arena.apply(op, &[a], k)));
                    continue;
                }
                for &a in &prev {
                    layer.extend(lower.iter().filter_map(|&b| arena.apply(op, &[a, b], k)));
                }
                for &a in &below_prev {
                    layer.extend(prev.iter().filter_map(|&b| arena.apply(op, &[a, b], k)));
                }
            }
            found.extend(
                layer
                    .iter()
                    .copied()
                    .filter(|&n| &arena.nodes[n].value == target),
            );
            layers.push(layer);
        } else {
            // Last layer: only the target matters, so solve for the free operand.
            let mut hits = Vec::new();
            {
                let lower_pool = Pool::new(&arena, &lower);
                let below_pool = Pool::new(&arena, &below_prev);
                for &op in &ops {
                    if op.arity() == 1 {
                        for &a in &prev {
                            if op.apply(&[arena.nodes[a].value.clone()]).as_ref() == Some(target) {
                                hits.push((op, vec![a]));
                            }
                        }
                        continue;
                    }
                    for &a in &prev {
                        let need = need_right(op, &arena.nodes[a].value, target);
                        hits.extend(
                            lower_pool
                                .candidates(&arena, need)
                                .into_iter()
                                .map(|b| (op, vec![a, b])),
                        );
                    }
                    for &b in &prev {
                        let need = need_left(op, &arena.nodes[b].value, target);
                        hits.extend(
                            below_pool
                                .candidates(&arena, need)
                                .into_iter()
                                .map(|a| (op, vec![a, b])),
                        );
                    }
                }
            }
            for (op, args) in hits {
                if let Some(id) = arena.apply(op, &args, k) {
                    if &arena.nodes[id].value == target {
                        found.push(id);
                    }
                }
            }
        }
    }

    found.sort_by(|&x, &y| {
        arena.nodes[x]
            .depth
            .cmp(&arena.nodes[y].depth)
            .then_with(|| arena.constant_valued(x).cmp(&arena.constant_valued(y)))
            .then_with(|| arena.distinct_sources(y).cmp(&arena.distinct_sources(x)))
            .then_with(|| arena.cmp(x, y))
    });
    found
        .into_iter()
        .map(|id| Explanation {
            expr: arena.expr(id),
            depth: arena.nodes[id].depth,
            output: arena.nodes[id].value.clone(),
        })
        .collect()
}

/// A teacher step together with the memory it was made in.
#[derive(Clone, Debug)]
pub struct Demonstration {
    pub action: FieldAction,
    pub label: TaskName,
    /// Closed memory of the state *before* the step.
    pub wm: WorkingMemory,
}

impl Demonstration {
    pub fn validate(&self) -> Result<(), LearnError> {
        if let FieldAction::InputValue { field, value } = &self.action {
            if value.is_empty() {
                return Err(LearnError::InvalidDemonstration(format!(
                    "empty value for `{field}`"
                )));
            }
            match self.wm.field(field) {
                Some(f) if f.is_input() && f.value().is_some_and(Value::is_empty) => {}
                Some(_) => {
                    return Err(LearnError::InvalidDemonstration(format!(
                        "`{field}` is not an empty input"
                    )))
                }
                None => {
                    return Err(LearnError::InvalidDemonstration(format!(
                        "no field `{field}`"
                    )))
                }
            }
        }
        Ok(())
    }
}

/// The conjunction of every fact in `wm`, as constants except for the value
/// of each field in `vars`.
pub fn state_conditions(wm: &WorkingMemory, vars: &BTreeMap<String, String>) -> Pattern {
    let clauses = wm
        .facts()
        .iter()
        .map(|fact| {
            let var = fact.field_name().and_then(|n| vars.get(n));
            let attrs = fact
                .attrs
                .iter()
                .map(|(k, atom)| match var {
                    Some(v) if k == ATTR_VALUE => (k.clone(), Term::Var(v.clone())),
                    _ => (k.clone(), Term::Const(atom.clone())),
                })
                .collect();
            FactTemplate {
                kind: fact.kind,
                attrs,
            }
        })
        .collect();
    Pattern::new(clauses)
}

/// Builds a method from a demonstration: the first explanation becomes an
/// operator sequence reading variablized source fields; with no explanation
/// the value is memorized for this exact state.
pub fn induce_method(demo: &Demonstration, explanations: &[Explanation]) -> Method {
    let field = match &demo.action {
        FieldAction::ClickDone => {
            return Method::new(
                demo.label.clone(),
                state_conditions(&demo.wm, &BTreeMap::new()),
                vec![Subtask::OperatorCall(OperatorCall::click_done())],
                Provenance::Learned,
            );
        }
        FieldAction::InputValue { field, value } => match explanations.first() {
            Some(e) => (field, e),
            None => {
                return Method::new(
                    demo.label.clone(),
                    state_conditions(&demo.wm, &BTreeMap::new()),
                    vec![Subtask::OperatorCall(OperatorCall::input(
                        field,
                        Arg::Const(value.clone()),
                    ))],
                    Provenance::Memorized,
                );
            }
        },
    };
    let (target, explanation) = field;
    let mut vars = BTreeMap::new();
    for (i, f) in explanation.expr.sources().into_iter().enumerate() {
        vars.insert(f.to_owned(), format!("a{i}"));
    }
    let mut steps = Vec::new();
    let last = flatten(&explanation.expr, &vars, &mut steps);
    steps.push(Subtask::OperatorCall(OperatorCall::input(target, last)));
    Method::new(
        demo.label.clone(),
        state_conditions(&demo.wm, &vars),
        steps,
        Provenance::Learned,
    )
}

fn flatten(expr: &Expr, vars: &BTreeMap<String, String>, steps: &mut Vec<Subtask>) -> Arg {
    match expr {
        Expr::Field(f) => Arg::Var(vars[f].clone()),
        Expr::Apply(op, args) => {
            let args = args.iter().map(|a| flatten(a, vars, steps)).collect();
            steps.push(Subtask::OperatorCall(OperatorCall::new(*op, args)));
            Arg::Step(steps.len() - 1)
        }
    }
}

struct AntiUnifier {
    memo: HashMap<(Term, Term), String>,
    claimed: HashSet<String>,
    taken: HashSet<String>,
    next: usize,
}

impl AntiUnifier {
    fn term(&mut self, t1: &Term, t2: &Term) -> Term {
        if let (Term::Const(_), true) = (t1, t1 == t2) {
            return t1.clone();
        }
        if let Some(v) = self.memo.get(&(t1.clone(), t2.clone())) {
            return Term::Var(v.clone());
        }
        // Reuse the left variable's name for its first pairing so that
        // generalizing an already-general pattern leaves it unchanged.
        let name = match t1 {
            Term::Var(v) if self.claimed.insert(v.clone()) => v.clone(),
            _ => self.fresh(),
        };
        self.memo.insert((t1.clone(), t2.clone()), name.clone());
        Term::Var(name)
    }

    fn fresh(&mut self) -> String {
        loop {
            let name = format!("g{}", self.next);
            self.next += 1;
            if self.taken.insert(name.clone()) {
                return name;
            }
        }
    }
}

fn anchor(c: &FactTemplate) -> (FactKind, Vec<Option<&Term>>) {
    let keys: &[&str] = match c.kind {
        FactKind::Field => &[ATTR_NAME],
        FactKind::Relation => &[ATTR_RELATION, ATTR_ARG1, ATTR_ARG2],
    };
    (c.kind, keys.iter().map(|k| c.attrs.get(*k)).collect())
}

/// Least general generalization of two condition patterns.
///
/// Field clauses pair up by field name and relation clauses by relation and
/// arguments; clauses without a partner, and attributes only one side has,
/// are dropped. Differing terms become variables, one per distinct pair of
/// terms. Negated clauses survive only when both sides have them.
pub fn lgg_conditions(a: &Pattern, b: &Pattern) -> Pattern {
    let taken = a
        .clauses
        .iter()
        .chain(&b.clauses)
        .chain(&a.negated)
        .chain(&b.negated)
        .flat_map(FactTemplate::variables)
        .map(str::to_owned)
        .collect();
    let mut au = AntiUnifier {
        memo: HashMap::new(),
        claimed: HashSet::new(),
        taken,
        next: 0,
    };
    let mut used = vec![false; b.clauses.len()];
    let mut clauses = Vec::new();
    for c1 in &a.clauses {
        let key = anchor(c1);
        let Some(j) = (0..b.clauses.len()).find(|&j| !used[j] && anchor(&b.clauses[j]) == key)
        else {
            continue;
        };
        used[j] = true;
        let c2 = &b.clauses[j];
        let attrs = c1
            .attrs
            .iter()
            .filter_map(|(k, t1)| c2.attrs.get(k).map(|t2| (k.clone(), au.term(t1, t2))))
            .collect();
        clauses.push(FactTemplate {
            kind: c1.kind,
            attrs,
        });
    }
    let mut out = Pattern::new(clauses);
    let bound: BTreeSet<String> = out
        .positive_variables()
        .into_iter()
        .map(str::to_owned)
        .collect();
    out.negated = a
        .negated
        .iter()
        .filter(|n| b.negated.contains(n) && n.variables().all(|v| bound.contains(v)))
        .cloned()
        .collect();
    out
}

/// Result of folding one demonstration into the knowledge base.
#[derive(Clone, Debug)]
pub struct Integration {
    pub key: MethodKey,
    pub merged: bool,
    pub explanation: Option<Explanation>,
}

/// Explains and induces a method for `demo`, merging it with an existing
/// method of the same label and decomposition, and links the label under
/// the root task.
pub fn integrate_demonstration(
    kb: &mut KnowledgeBase,
    demo: &Demonstration,
) -> Result<Integration, LearnError> {
    demo.validate()?;
    let explanations = match &demo.action {
        FieldAction::InputValue { value, .. } => {
            explain(&demo.wm, value, kb.operators(), kb.max_depth)
        }
        FieldAction::ClickDone => Vec::new(),
    };
    let chosen = reuse_explanation(kb, demo, &explanations).unwrap_or(0);
    let explanation = explanations.get(chosen).cloned();
    let method = induce_method(demo, &explanations[chosen.min(explanations.len())..]);
    let twin = kb
        .methods_for(&demo.label)
        .into_iter()
        .find(|(_, m)| m.same_decomposition(&method))
        .map(|(k, m)| (k, m.clone()));
    let (key, merged) = match twin {
        Some((key, existing)) => {
            let mut m = existing;
            m.conditions = lgg_conditions(&m.conditions, &method.conditions);
            m.merge_count += 1;
            kb.replace_method(&key, m)?;
            (key, true)
        }
        None => {
            let index = kb.add_method(method)?.index();
            (
                MethodKey {
                    task: demo.label.clone(),
                    index,
                },
                false,
            )
        }
    };
    ensure_root_link(kb, &demo.label)?;
    Ok(Integration {
        key,
        merged,
        explanation,
    })
}

/// Index of the first explanation that reproduces the decomposition of an
/// already learned method for the demonstrated task, trying methods with
/// more merged demonstrations first.
fn reuse_explanation(
    kb: &KnowledgeBase,
    demo: &Demonstration,
    explanations: &[Explanation],
) -> Option<usize> {
    if explanations.len() < 2 {
        return None;
    }
    let mut known: Vec<&Method> = kb
        .methods_for(&demo.label)
        .into_iter()
        .map(|(_, m)| m)
        .filter(|m| m.provenance == Provenance::Learned)
        .collect();
    if known.is_empty() {
        return None;
    }
    known.sort_by_key(|m| std::cmp::Reverse(m.merge_count));
    let candidates: Vec<Method> = (0..explanations.len())
        .map(|i| induce_method(demo, &explanations[i..]))
        .collect();
    known
        .iter()
        .find_map(|m| candidates.iter().position(|c| m.same_decomposition(c)))
}

fn ensure_root_link(kb: &mut KnowledgeBase, label: &TaskName) -> Result<(), LearnError> {
    if label.is_root() {
        return Ok(());
    }
    let link = vec![Subtask::Task(label.clone())];
    if kb
        .methods_for(&TaskName::root())
        .iter()
        .any(|(_, m)| m.subtasks == link)
    {
        return Ok(());
    }
    kb.add_method(Method::new(
        TaskName::root(),
        Pattern::default(),
        link,
        Provenance::Learned,
    ))?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Yes,
    No,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Directive {
    Advance,
    Retry(Plan),
    RequestDemonstration,
}

/// Acts on the teacher's verdict for `plan`. A "no" excludes the acting
/// method for the rest of this step and asks the planner for an alternative.
/// The knowledge base is never modified.
pub fn integrate_feedback(
    kb: &KnowledgeBase,
    wm: &WorkingMemory,
    task: &TaskName,
    plan: &Plan,
    verdict: Verdict,
    excluded: &mut BTreeSet<MethodKey>,
) -> Result<Directive, LearnError> {
    if plan.trace.kb_revision != kb.revision() || plan.trace.state_fingerprint != wm.fingerprint() {
        return Err(LearnError::StaleTrace);
    }
    if verdict == Verdict::Yes {
        return Ok(Directive::Advance);
    }
    if let Some(key) = plan.trace.acting_method() {
        excluded.insert(key.clone());
    }
    Ok(match attempt_excluding(kb, wm, task, excluded)? {
        Attempt::Action(p) => Directive::Retry(p),
        Attempt::CannotSolve => Directive::RequestDemonstration,
    })
}

/// True when `p` subsumes `q`: some substitution of `p`'s variables maps
/// every clause of `p` onto a distinct clause of `q`.
pub fn subsumes(p: &Pattern, q: &Pattern) -> bool {
    fn go(
        p: &[FactTemplate],
        q: &[FactTemplate],
        used: &mut Vec<bool>,
        sub: &mut BTreeMap<String, Term>,
    ) -> bool {
        let Some((c, rest)) = p.split_first() else {
            return true;
        };
        for j in 0..q.len() {
            if used[j] || q[j].kind != c.kind || c.attrs.keys().any(|k| !q[j].attrs.contains_key(k))
            {
                continue;
            }
            let snapshot = sub.clone();
            let ok = c.attrs.iter().all(|(k, t)| {
                let other = &q[j].attrs[k];
                match t {
                    Term::Const(_) => t == other,
                    Term::Var(v) => match sub.get(v) {
                        Some(bound) => bound == other,
                        None => {
                            sub.insert(v.clone(), other.clone());
                            true
                        }
                    },
                }
            });
            if ok {
                used[j] = true;
                if go(rest, q, used, sub) {
                    return true;
                }
                used[j] = false;
            }
            *sub = snapshot;
        }
        false
    }
    go(
        &p.clauses,
        &q.clauses,
        &mut vec![false; q.clauses.len()],
        &mut BTreeMap::new(),
    )
}
