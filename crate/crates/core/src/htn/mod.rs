//! HTN knowledge base: tasks, the methods that achieve them, and the
//! primitive operators methods bottom out in.
//!
//! The network is an AND-OR tree. A task is solved by any one of its methods
//! (OR); a method succeeds only when all of its subtasks do (AND).

mod operators;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use operators::{standard_operator_library, Operator, OperatorKind, ALL_OPERATORS};

use crate::rete::{Pattern, ReteError, Term};
use crate::value::Value;
use crate::wm::{Atom, FactKind, ATTR_ARG1, ATTR_ARG2, ATTR_NAME, ATTR_VALUE};

/// Label of the top-level task every training session plans for.
pub const ROOT_TASK: &str = "Solve Problem";

/// Agent document schema number.
pub const AGENT_SCHEMA: u32 = 1;

pub const DEFAULT_MAX_DEPTH: usize = 2;

#[derive(Debug, Error)]
pub enum HtnError {
    #[error("task labels must be nonempty")]
    EmptyTaskName,
    #[error("method for `{task}` is malformed: {reason}")]
    MalformedMethod { task: String, reason: String },
    #[error(transparent)]
    Condition(#[from] ReteError),
    #[error("agent document is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported agent schema {0}")]
    Schema(u32),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TaskName(String);

impl TaskName {
    pub fn new(label: impl Into<String>) -> Result<Self, HtnError> {
        let label = label.into();
        if label.trim().is_empty() {
            return Err(HtnError::EmptyTaskName);
        }
        Ok(TaskName(label))
    }

    pub fn root() -> Self {
        TaskName(ROOT_TASK.to_owned())
    }

    /// The user's label, or the field identifier when the label is blank.
    pub fn or_default(label: &str, field: &str) -> Self {
        Self::new(label).unwrap_or_else(|_| TaskName(field.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_root(&self) -> bool {
        self.0 == ROOT_TASK
    }
}

impl TryFrom<String> for TaskName {
    type Error = HtnError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        TaskName::new(s)
    }
}

impl From<TaskName> for String {
    fn from(t: TaskName) -> String {
        t.0
    }
}

impl fmt::Display for TaskName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// An operator argument inside a method body.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arg {
    /// A condition variable bound when the method matched.
    Var(String),
    Const(Value),
    /// The result of an earlier operator call in the same method.
    Step(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OperatorCall {
    pub name: Operator,
    pub args: Vec<Arg>,
    /// Field written by `input-value`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

impl OperatorCall {
    pub fn new(name: Operator, args: Vec<Arg>) -> Self {
        OperatorCall {
            name,
            args,
            target: None,
        }
    }

    pub fn input(target: &str, value: Arg) -> Self {
        OperatorCall {
            name: Operator::InputValue,
            args: vec![value],
            target: Some(target.to_owned()),
        }
    }

    pub fn click_done() -> Self {
        OperatorCall::new(Operator::ClickDone, Vec::new())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subtask {
    Task(TaskName),
    OperatorCall(OperatorCall),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// Induced from an explained demonstration (or a done click).
    Learned,
    /// Stores one constant for one exact state; no explanation was found.
    Memorized,
    /// Written by hand rather than learned.
    Authored,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Method {
    pub task: TaskName,
    pub conditions: Pattern,
    pub subtasks: Vec<Subtask>,
    pub provenance: Provenance,
    pub merge_count: u32,
}

impl Method {
    pub fn new(
        task: TaskName,
        conditions: Pattern,
        subtasks: Vec<Subtask>,
        provenance: Provenance,
    ) -> Self {
        Method {
            task,
            conditions,
            subtasks,
            provenance,
            merge_count: 1,
        }
    }

    /// Checks that the body is nonempty, every `Step` points backwards at an
    /// operator call, every variable is bound by the conditions, and the
    /// conditions themselves are safe.
    pub fn validate(&self) -> Result<(), HtnError> {
        let bad = |reason: String| HtnError::MalformedMethod {
            task: self.task.to_string(),
            reason,
        };
        self.conditions.check_safety()?;
        if self.subtasks.is_empty() {
            return Err(bad("no subtasks".into()));
        }
        let bound = self.conditions.positive_variables();
        for (i, st) in self.subtasks.iter().enumerate() {
            let Subtask::OperatorCall(call) = st else {
                continue;
            };
            if call.name.is_relation() {
                return Err(bad(format!("relation `{}` cannot be a subtask", call.name)));
            }
            if call.args.len() != call.name.arity() {
                return Err(bad(format!(
                    "`{}` takes {} arguments",
                    call.name,
                    call.name.arity()
                )));
            }
            if (call.name == Operator::InputValue) != call.target.is_some() {
                return Err(bad("only input-value carries a target field".into()));
            }
            for arg in &call.args {
                match arg {
                    Arg::Var(v) if !bound.contains(v.as_str()) => {
                        return Err(bad(format!("?{v} is not bound by the conditions")));
                    }
                    Arg::Step(j)
                        if *j >= i || !matches!(self.subtasks[*j], Subtask::OperatorCall(_)) =>
                    {
                        return Err(bad(format!("step {j} is not an earlier operator call")));
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// True when both methods decompose identically (same operators, argument
    /// roles and targets).
    pub fn same_decomposition(&self, other: &Method) -> bool {
        self.subtasks == other.subtasks && self.argument_roles() == other.argument_roles()
    }

    /// Field feeding each variable the body reads.
    fn argument_roles(&self) -> BTreeMap<String, Option<String>> {
        let fields = self.variable_fields();
        self.subtasks
            .iter()
            .filter_map(|st| match st {
                Subtask::OperatorCall(call) => Some(&call.args),
                Subtask::Task(_) => None,
            })
            .flatten()
            .filter_map(|a| match a {
                Arg::Var(v) => Some((v.clone(), fields.get(v).cloned())),
                _ => None,
            })
            .collect()
    }

    /// Maps each condition variable bound to a field's value onto that field.
    pub fn variable_fields(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        for clause in self
            .conditions
            .clauses
            .iter()
            .filter(|c| c.kind == FactKind::Field)
        {
            if let (Some(Term::Const(Atom::Ref(field))), Some(Term::Var(v))) =
                (clause.attrs.get(ATTR_NAME), clause.attrs.get(ATTR_VALUE))
            {
                out.entry(v.clone()).or_insert_with(|| field.clone());
            }
        }
        out
    }

    /// Field names mentioned anywhere in the method.
    pub fn field_references(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for clause in self
            .conditions
            .clauses
            .iter()
            .chain(&self.conditions.negated)
        {
            for attr in [ATTR_NAME, ATTR_ARG1, ATTR_ARG2] {
                if let Some(Term::Const(Atom::Ref(f))) = clause.attrs.get(attr) {
                    out.insert(f.clone());
                }
            }
        }
        for st in &self.subtasks {
            if let Subtask::OperatorCall(OperatorCall {
                target: Some(t), ..
            }) = st
            {
                out.insert(t.clone());
            }
        }
        out
    }
}

/// Position of a method in the knowledge base: its task and insertion index.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MethodKey {
    pub task: TaskName,
    pub index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AddOutcome {
    Appended(usize),
    /// An identical method already existed at this index; its merge count grew.
    Merged(usize),
}

impl AddOutcome {
    pub fn index(self) -> usize {
        match self {
            AddOutcome::Appended(i) | AddOutcome::Merged(i) => i,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KnowledgeBase {
    pub max_depth: usize,
    operators: Vec<Operator>,
    tasks: BTreeMap<TaskName, Vec<Method>>,
    revision: u64,
}

impl Default for KnowledgeBase {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Serialize, Deserialize)]
struct AgentDocument {
    version: u32,
    max_depth: usize,
    operators: Vec<Operator>,
    tasks: BTreeMap<TaskName, Vec<Method>>,
}

impl KnowledgeBase {
    /// An agent with the standard operator library and no methods.
    pub fn new() -> Self {
        Self::with_operators(standard_operator_library())
    }

    pub fn with_operators(operators: Vec<Operator>) -> Self {
        KnowledgeBase {
            max_depth: DEFAULT_MAX_DEPTH,
            operators,
            tasks: BTreeMap::new(),
            revision: 0,
        }
    }

    pub fn operators(&self) -> &[Operator] {
        &self.operators
    }

    pub fn mental_operators(&self) -> Vec<Operator> {
        self.operators
            .iter()
            .copied()
            .filter(|o| o.is_mental())
            .collect()
    }

    pub fn relation_operators(&self) -> Vec<Operator> {
        self.operators
            .iter()
            .copied()
            .filter(|o| o.is_relation())
            .collect()
    }

    /// Bumped on every mutation; plan traces record it to detect staleness.
    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn tasks(&self) -> impl Iterator<Item = (&TaskName, &[Method])> {
        self.tasks.iter().map(|(t, ms)| (t, ms.as_slice()))
    }

    pub fn method_count(&self) -> usize {
        self.tasks.values().map(Vec::len).sum()
    }

    pub fn method(&self, key: &MethodKey) -> Option<&Method> {
        self.tasks.get(&key.task).and_then(|ms| ms.get(key.index))
    }

    /// Adds `m` under its task, or bumps the merge count of an existing method
    /// with identical conditions and subtasks.
    pub fn add_method(&mut self, m: Method) -> Result<AddOutcome, HtnError> {
        m.validate()?;
        self.revision += 1;
        let methods = self.tasks.entry(m.task.clone()).or_default();
        if let Some(i) = methods
            .iter()
            .position(|e| e.conditions == m.conditions && e.subtasks == m.subtasks)
        {
            methods[i].merge_count += m.merge_count;
            return Ok(AddOutcome::Merged(i));
        }
        methods.push(m);
        Ok(AddOutcome::Appended(methods.len() - 1))
    }

    pub fn replace_method(&mut self, key: &MethodKey, m: Method) -> Result<(), HtnError> {
        m.validate()?;
        let slot = self
            .tasks
            .get_mut(&key.task)
            .and_then(|ms| ms.get_mut(key.index))
            .ok_or_else(|| HtnError::MalformedMethod {
                task: key.task.to_string(),
                reason: "no such method".into(),
            })?;
        *slot = m;
        self.revision += 1;
        Ok(())
    }

    /// Methods of `task`, most specific (most condition clauses) first, ties
    /// broken by insertion order.
    pub fn methods_for(&self, task: &TaskName) -> Vec<(MethodKey, &Method)> {
        let Some(methods) = self.tasks.get(task) else {
            return Vec::new();
        };
        let mut out: Vec<_> = methods
            .iter()
            .enumerate()
            .map(|(index, m)| {
                (
                    MethodKey {
                        task: task.clone(),
                        index,
                    },
                    m,
                )
            })
            .collect();
        out.sort_by(|(a, ma), (b, mb)| {
            mb.conditions
                .clause_count()
                .cmp(&ma.conditions.clause_count())
                .then(a.index.cmp(&b.index))
        });
        out
    }

    /// Every field name the agent's methods refer to.
    pub fn field_references(&self) -> BTreeSet<String> {
        self.tasks
            .values()
            .flatten()
            .flat_map(Method::field_references)
            .collect()
    }

    pub fn to_json(&self) -> String {
        let doc = AgentDocument {
            version: AGENT_SCHEMA,
            max_depth: self.max_depth,
            operators: self.operators.clone(),
            tasks: self.tasks.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("agent serializes")
    }

    pub fn from_json(doc: &str) -> Result<Self, HtnError> {
        let doc: AgentDocument = serde_json::from_str(doc)?;
        if doc.version != AGENT_SCHEMA {
            return Err(HtnError::Schema(doc.version));
        }
        for m in doc.tasks.values().flatten() {
            m.validate()?;
        }
        Ok(KnowledgeBase {
            max_depth: doc.max_depth,
            operators: doc.operators,
            tasks: doc.tasks,
            revision: 0,
        })
    }
}
