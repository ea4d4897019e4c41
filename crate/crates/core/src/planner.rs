//! Performance component: decompose a task over the HTN until an interface
//! operator fires, yielding the next tutor action.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::htn::{
    Arg, KnowledgeBase, Method, MethodKey, Operator, OperatorCall, Subtask, TaskName,
};
use crate::rete::{Activation, BindingSet, ProductionId, Rete, ReteError};
use crate::value::Value;
use crate::wm::{Atom, WorkingMemory};

/// Decomposition depth past which the knowledge base is assumed cyclic.
pub const MAX_DECOMPOSITION_DEPTH: usize = 32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error("decomposition of `{0}` exceeded depth {MAX_DECOMPOSITION_DEPTH}; the knowledge base is likely cyclic")]
    DepthExceeded(String),
    #[error(transparent)]
    Match(#[from] ReteError),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FieldAction {
    InputValue { field: String, value: Value },
    ClickDone,
}

impl FieldAction {
    pub fn field(&self) -> Option<&str> {
        match self {
            FieldAction::InputValue { field, .. } => Some(field),
            FieldAction::ClickDone => None,
        }
    }
}

/// Where an executed operator's argument came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArgSource {
    Field(String),
    Step(usize),
    Const,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutedOp {
    pub op: Operator,
    pub args: Vec<(ArgSource, Value)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainLink {
    pub key: MethodKey,
    pub bindings: BindingSet,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlanTrace {
    /// Methods chosen from the requested task down to the one that acted.
    pub chain: Vec<ChainLink>,
    /// Operators run by the acting method, ending with the interface operator.
    pub executed: Vec<ExecutedOp>,
    pub kb_revision: u64,
    pub state_fingerprint: u64,
}

impl PlanTrace {
    /// Method that produced the interface action.
    pub fn acting_method(&self) -> Option<&MethodKey> {
        self.chain.last().map(|l| &l.key)
    }

    /// Re-evaluates the executed operators against `wm`, reading field
    /// arguments afresh, and returns the action they produce.
    pub fn replay(&self, wm: &WorkingMemory) -> Option<FieldAction> {
        let mut results: Vec<Option<Value>> = Vec::with_capacity(self.executed.len());
        for (i, op) in self.executed.iter().enumerate() {
            let mut args = Vec::with_capacity(op.args.len());
            for (src, recorded) in &op.args {
                args.push(match src {
                    ArgSource::Field(f) => wm.lookup(f).ok()?.clone(),
                    ArgSource::Step(j) => results.get(*j)?.clone()?,
                    ArgSource::Const => recorded.clone(),
                });
            }
            match op.op {
                Operator::InputValue => {
                    let field = op.target.clone()?;
                    return (i + 1 == self.executed.len()).then_some(FieldAction::InputValue {
                        field,
                        value: args.pop()?,
                    });
                }
                Operator::ClickDone => return Some(FieldAction::ClickDone),
                other => results.push(Some(other.apply(&args)?)),
            }
        }
        None
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Plan {
    pub action: FieldAction,
    pub trace: PlanTrace,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Attempt {
    Action(Plan),
    /// No method chain produced an action for this state.
    CannotSolve,
}

impl Attempt {
    pub fn plan(self) -> Option<Plan> {
        match self {
            Attempt::Action(p) => Some(p),
            Attempt::CannotSolve => None,
        }
    }
}

pub fn attempt(
    kb: &KnowledgeBase,
    wm: &WorkingMemory,
    task: &TaskName,
) -> Result<Attempt, PlanError> {
    attempt_excluding(kb, wm, task, &BTreeSet::new())
}

/// Depth-first AND-OR search for the first interface action, skipping the
/// methods in `excluded`.
pub fn attempt_excluding(
    kb: &KnowledgeBase,
    wm: &WorkingMemory,
    task: &TaskName,
    excluded: &BTreeSet<MethodKey>,
) -> Result<Attempt, PlanError> {
    let mut rete = Rete::new();
    let mut productions = HashMap::new();
    for (t, methods) in kb.tasks() {
        for (index, m) in methods.iter().enumerate() {
            productions.insert(
                MethodKey {
                    task: t.clone(),
                    index,
                },
                rete.add_production(&m.conditions)?,
            );
        }
    }
    let activation = rete.activate(wm)?;
    let search = Search {
        kb,
        wm,
        activation,
        productions,
        excluded,
    };
    Ok(match search.solve(task, 0)? {
        Outcome::Action(action, chain, executed) => Attempt::Action(Plan {
            action,
            trace: PlanTrace {
                chain: chain.into_iter().rev().collect(),
                executed,
                kb_revision: kb.revision(),
                state_fingerprint: wm.fingerprint(),
            },
        }),
        Outcome::Done | Outcome::Fail => Attempt::CannotSolve,
    })
}

enum Outcome {
    /// Chain links are accumulated innermost first.
    Action(FieldAction, Vec<ChainLink>, Vec<ExecutedOp>),
    /// Every subtask was already satisfied; no action needed.
    Done,
    Fail,
}

struct Search<'a> {
    kb: &'a KnowledgeBase,
    wm: &'a WorkingMemory,
    activation: Activation<'a>,
    productions: HashMap<MethodKey, ProductionId>,
    excluded: &'a BTreeSet<MethodKey>,
}

impl Search<'_> {
    fn solve(&self, task: &TaskName, depth: usize) -> Result<Outcome, PlanError> {
        if depth > MAX_DECOMPOSITION_DEPTH {
            return Err(PlanError::DepthExceeded(task.to_string()));
        }
        let mut done = false;
        for (key, method) in self.kb.methods_for(task) {
            if self.excluded.contains(&key) {
                continue;
            }
            for bindings in self.activation.matches(self.productions[&key]) {
                match self.run(method, &bindings, depth)? {
                    Outcome::Action(a, mut chain, ops) => {
                        chain.push(ChainLink { key, bindings });
                        return Ok(Outcome::Action(a, chain, ops));
                    }
                    Outcome::Done => done = true,
                    Outcome::Fail => {}
                }
            }
        }
        Ok(if done { Outcome::Done } else { Outcome::Fail })
    }

    fn run(
        &self,
        method: &Method,
        bindings: &BindingSet,
        depth: usize,
    ) -> Result<Outcome, PlanError> {
        let var_fields = method.variable_fields();
        // subtask index -> (result, position in `executed`)
        let mut results: Vec<Option<(Value, usize)>> = vec![None; method.subtasks.len()];
        let mut executed = Vec::new();
        for (i, subtask) in method.subtasks.iter().enumerate() {
            let call = match subtask {
                Subtask::Task(t) => match self.solve(t, depth + 1)? {
                    Outcome::Done => continue,
                    other => return Ok(other),
                },
                Subtask::OperatorCall(call) => call,
            };
            let Some(args) = resolve(call, bindings, &var_fields, &results) else {
                return Ok(Outcome::Fail);
            };
            match call.name {
                Operator::InputValue => {
                    let Some(field) = call.target.as_deref() else {
                        return Ok(Outcome::Fail);
                    };
                    match self.wm.lookup(field) {
                        Ok(current) if !current.is_empty() => continue,
                        Ok(_) => {}
                        Err(_) => return Ok(Outcome::Fail),
                    }
                    let value = args[0].1.clone();
                    if value.is_empty() {
                        return Ok(Outcome::Fail);
                    }
                    executed.push(ExecutedOp {
                        op: call.name,
                        args,
                        target: Some(field.to_owned()),
                        result: None,
                    });
                    let action = FieldAction::InputValue {
                        field: field.to_owned(),
                        value,
                    };
                    return Ok(Outcome::Action(action, Vec::new(), executed));
                }
                Operator::ClickDone => {
                    if !self.wm.all_inputs_filled() {
                        return Ok(Outcome::Fail);
                    }
                    executed.push(ExecutedOp {
                        op: call.name,
                        args,
                        target: None,
                        result: None,
                    });
                    return Ok(Outcome::Action(
                        FieldAction::ClickDone,
                        Vec::new(),
                        executed,
                    ));
                }
                op => {
                    let values: Vec<Value> = args.iter().map(|(_, v)| v.clone()).collect();
                    let Some(out) = op.apply(&values) else {
                        return Ok(Outcome::Fail);
                    };
                    results[i] = Some((out.clone(), executed.len()));
                    executed.push(ExecutedOp {
                        op,
                        args,
                        target: None,
                        result: Some(out),
                    });
                }
            }
        }
        Ok(Outcome::Done)
    }
}

fn resolve(
    call: &OperatorCall,
    bindings: &BindingSet,
    var_fields: &BTreeMap<String, String>,
    results: &[Option<(Value, usize)>],
) -> Option<Vec<(ArgSource, Value)>> {
    call.args
        .iter()
        .map(|arg| match arg {
            Arg::Var(v) => {
                let Atom::Value(value) = bindings.get(v)? else {
                    return None;
                };
                let src = var_fields
                    .get(v)
                    .map_or(ArgSource::Const, |f| ArgSource::Field(f.clone()));
                Some((src, value.clone()))
            }
            Arg::Const(c) => Some((ArgSource::Const, c.clone())),
            Arg::Step(j) => {
                let (value, pos) = results.get(*j)?.clone()?;
                Some((ArgSource::Step(pos), value))
            }
        })
        .collect()
}

/// Natural-language account of a plan step, plus the fields it read.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepExplanation {
    pub text: String,
    pub highlights: BTreeSet<String>,
}

pub fn explain_trace(trace: &PlanTrace) -> StepExplanation {
    let mut highlights = BTreeSet::new();
    let mut clauses = Vec::new();
    let name = |src: &ArgSource, v: &Value, hl: &mut BTreeSet<String>| match src {
        ArgSource::Field(f) => {
            hl.insert(f.clone());
            f.clone()
        }
        ArgSource::Step(j) => format!("the result of step {}", j + 1),
        ArgSource::Const => v.to_string(),
    };
    for op in &trace.executed {
        let a: Vec<String> = op
            .args
            .iter()
            .map(|(s, v)| name(s, v, &mut highlights))
            .collect();
        let clause = match op.op {
            Operator::Add => format!("added {} and {}", a[0], a[1]),
            Operator::Subtract => format!("subtracted {} from {}", a[1], a[0]),
            Operator::Multiply => format!("multiplied {} by {}", a[0], a[1]),
            Operator::Divide => format!("divided {} by {}", a[0], a[1]),
            Operator::Concatenate => format!("appended {} to {}", a[1], a[0]),
            Operator::LeftDigits => format!("took the digits of {} left of the ones place", a[0]),
            Operator::Copy => format!("copied {}", a[0]),
            Operator::InputValue => {
                let target = op.target.as_deref().unwrap_or("the field");
                let memorized = trace.executed.len() == 1;
                if memorized {
                    format!(
                        "entered {} in {target}, which I remember from this exact problem",
                        a[0]
                    )
                } else {
                    format!("put the result in {target}")
                }
            }
            Operator::ClickDone => {
                return StepExplanation {
                    text: "I think the problem is complete.".into(),
                    highlights,
                }
            }
            Operator::Equals | Operator::LessThan => continue,
        };
        clauses.push(clause);
    }
    let text = match clauses.split_last() {
        None => String::new(),
        Some((last, [])) => format!("I {last}."),
        Some((last, init)) => format!("I {} and {last}.", init.join(", then ")),
    };
    StepExplanation { text, highlights }
}
