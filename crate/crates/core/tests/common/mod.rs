//! Reference implementations shared by the integration tests.
#![allow(dead_code)]

pub mod checks;

use std::collections::BTreeMap;

use atb_core::htn::{Arg, OperatorCall, Provenance, Subtask};
use atb_core::wm::Atom;
use atb_core::{
    BindingSet, FactTemplate, FieldAction, KnowledgeBase, Method, MethodKey, Operator, Pattern,
    TaskName, Term, Value, WorkingMemory,
};

pub fn unify(
    template: &FactTemplate,
    attrs: &BTreeMap<String, Atom>,
    vars: &mut BTreeMap<String, Atom>,
) -> bool {
    for (attr, term) in &template.attrs {
        let Some(got) = attrs.get(attr) else {
            return false;
        };
        match term {
            Term::Const(c) if c != got => return false,
            Term::Const(_) => {}
            Term::Var(v) => match vars.get(v) {
                Some(b) if b != got => return false,
                Some(_) => {}
                None => {
                    vars.insert(v.clone(), got.clone());
                }
            },
        }
    }
    true
}

/// Every injective assignment of positive clauses to facts, in
/// lexicographic order of fact ids, that unifies and survives negation.
pub fn naive_matches(pattern: &Pattern, wm: &WorkingMemory) -> Vec<BindingSet> {
    fn go(
        pattern: &Pattern,
        wm: &WorkingMemory,
        i: usize,
        cur: &mut BindingSet,
        out: &mut Vec<BindingSet>,
    ) {
        if i == pattern.clauses.len() {
            let blocked = pattern.negated.iter().any(|n| {
                wm.facts()
                    .iter()
                    .any(|f| f.kind == n.kind && unify(n, &f.attrs, &mut cur.vars.clone()))
            });
            if !blocked {
                out.push(cur.clone());
            }
            return;
        }
        let clause = &pattern.clauses[i];
        for f in wm.facts() {
            if f.kind != clause.kind || cur.facts.contains(&f.id) {
                continue;
            }
            let mut vars = cur.vars.clone();
            if unify(clause, &f.attrs, &mut vars) {
                let saved = std::mem::replace(&mut cur.vars, vars);
                cur.facts.push(f.id);
                go(pattern, wm, i + 1, cur, out);
                cur.facts.pop();
                cur.vars = saved;
            }
        }
    }
    let mut out = Vec::new();
    go(pattern, wm, 0, &mut BindingSet::default(), &mut out);
    out
}

enum Found {
    Action(FieldAction, Vec<MethodKey>),
    Done,
    Fail,
}

/// Straightforward AND-OR search: methods most-clauses-first (ties by
/// insertion), each binding in turn, subtasks left to right.
pub fn naive_plan(
    kb: &KnowledgeBase,
    wm: &WorkingMemory,
    task: &TaskName,
) -> Option<(FieldAction, Vec<MethodKey>)> {
    match solve(kb, wm, task) {
        Found::Action(a, keys) => Some((a, keys)),
        _ => None,
    }
}

fn solve(kb: &KnowledgeBase, wm: &WorkingMemory, task: &TaskName) -> Found {
    let Some((_, methods)) = kb.tasks().find(|(t, _)| *t == task) else {
        return Found::Fail;
    };
    let mut order: Vec<usize> = (0..methods.len()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(methods[i].conditions.clause_count()), i));
    let mut done = false;
    for i in order {
        let key = MethodKey {
            task: task.clone(),
            index: i,
        };
        for b in naive_matches(&methods[i].conditions, wm) {
            match run(kb, wm, &methods[i], &b) {
                Found::Action(a, mut keys) => {
                    keys.insert(0, key);
                    return Found::Action(a, keys);
                }
                Found::Done => done = true,
                Found::Fail => {}
            }
        }
    }
    if done {
        Found::Done
    } else {
        Found::Fail
    }
}

fn run(kb: &KnowledgeBase, wm: &WorkingMemory, m: &Method, b: &BindingSet) -> Found {
    let mut results: Vec<Option<Value>> = Vec::new();
    for st in &m.subtasks {
        let call = match st {
            Subtask::Task(t) => {
                results.push(None);
                match solve(kb, wm, t) {
                    Found::Done => continue,
                    other => return other,
                }
            }
            Subtask::OperatorCall(c) => c,
        };
        let mut args = Vec::new();
        for a in &call.args {
            let v = match a {
                Arg::Var(v) => match b.vars.get(v) {
                    Some(Atom::Value(x)) => x.clone(),
                    _ => return Found::Fail,
                },
                Arg::Const(c) => c.clone(),
                Arg::Step(j) => match results.get(*j) {
                    Some(Some(x)) => x.clone(),
                    _ => return Found::Fail,
                },
            };
            args.push(v);
        }
        match call.name {
            Operator::InputValue => {
                let target = call.target.clone().unwrap();
                match wm.field(&target).and_then(|f| f.value()) {
                    None => return Found::Fail,
                    Some(current) if !current.is_empty() => {
                        results.push(None);
                        continue;
                    }
                    Some(_) => {}
                }
                if args[0].is_empty() {
                    return Found::Fail;
                }
                return Found::Action(
                    FieldAction::InputValue {
                        field: target,
                        value: args[0].clone(),
                    },
                    Vec::new(),
                );
            }
            Operator::ClickDone => {
                let blank = wm
                    .fields()
                    .any(|f| f.is_input() && f.value().is_some_and(Value::is_empty));
                return if blank {
                    Found::Fail
                } else {
                    Found::Action(FieldAction::ClickDone, Vec::new())
                };
            }
            op => match op.apply(&args) {
                Some(v) => results.push(Some(v)),
                None => return Found::Fail,
            },
        }
    }
    Found::Done
}

pub fn task(name: &str) -> TaskName {
    TaskName::new(name).unwrap()
}

fn into(target: &str, op: Operator, a: &str, b: &str) -> Vec<Subtask> {
    vec![
        Subtask::OperatorCall(OperatorCall::new(
            op,
            vec![Arg::Var(a.into()), Arg::Var(b.into())],
        )),
        Subtask::OperatorCall(OperatorCall::input(target, Arg::Step(0))),
    ]
}

/// The hand-built fraction multiplication agent: "Solve Problem" splits into
/// multiplying numerators, multiplying denominators and clicking done.
pub fn multiplication_kb() -> KnowledgeBase {
    let mut kb = KnowledgeBase::new();
    let times = FactTemplate::field("op", Term::value(Value::symbol("x")));
    let fields = |x: &str, y: &str| {
        Pattern::new(vec![
            times.clone(),
            FactTemplate::field(x, Term::var("a")),
            FactTemplate::field(y, Term::var("b")),
        ])
    };
    let methods = [
        Method::new(
            TaskName::root(),
            Pattern::new(vec![times.clone()]),
            ["MultiplyNumerators", "MultiplyDenominators", "ClickDone"]
                .map(|t| Subtask::Task(task(t)))
                .to_vec(),
            Provenance::Authored,
        ),
        Method::new(
            task("MultiplyNumerators"),
            fields("num1", "num2"),
            into("ans-num", Operator::Multiply, "a", "b"),
            Provenance::Authored,
        ),
        Method::new(
            task("MultiplyDenominators"),
            fields("den1", "den2"),
            into("ans-den", Operator::Multiply, "a", "b"),
            Provenance::Authored,
        ),
        Method::new(
            task("ClickDone"),
            Pattern::default(),
            vec![Subtask::OperatorCall(OperatorCall::click_done())],
            Provenance::Authored,
        ),
    ];
    for m in methods {
        kb.add_method(m).unwrap();
    }
    kb
}
