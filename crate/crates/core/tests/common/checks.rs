//! Randomized checks against the reference implementations, shared by the
//! per-module tests and the acceptance run. Each returns a one-line summary
//! or the first counterexample.

use std::cell::Cell;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use atb_core::htn::{standard_operator_library, Operator};
use atb_core::layout::ROOT_ID;
use atb_core::learner::{explain, lgg_conditions, state_conditions, subsumes, Expr};
use atb_core::rete::{match_pattern, Rete};
use atb_core::wm::{
    Atom, FactKind, ATTR_ARG1, ATTR_ARG2, ATTR_CONTAINER, ATTR_NAME, ATTR_RELATION, ATTR_TYPE,
    ATTR_VALUE,
};
use atb_core::{Domain, FactTemplate, Pattern, Term, TutorState, Value, WorkingMemory};
use proptest::prelude::*;
use proptest::test_runner::{TestError, TestRunner};

use super::naive_matches;

pub type Outcome = Result<String, String>;

fn finish<T: std::fmt::Debug>(r: Result<(), TestError<T>>) -> Result<(), String> {
    r.map_err(|e| e.to_string())
}

fn closed(wm: WorkingMemory) -> WorkingMemory {
    wm.close_relations(&[Operator::Equals, Operator::LessThan])
}

// ---- rete ----

const REF_NAMES: [&str; 5] = ["f0", "f1", "f2", "f3", "f4"];
const VARS: [&str; 3] = ["x", "y", "z"];

fn small_value() -> impl Strategy<Value = Value> {
    prop_oneof![
        4 => (0i64..4).prop_map(Value::int),
        1 => Just(Value::Empty),
        1 => Just(Value::symbol("x")),
    ]
}

fn small_memory() -> impl Strategy<Value = WorkingMemory> {
    prop::collection::vec(small_value(), 1..=4)
        .prop_map(|vals| {
            closed(WorkingMemory::from_fields(
                REF_NAMES.iter().copied().zip(vals),
            ))
        })
        .prop_filter("at most 12 facts", |wm| wm.facts().len() <= 12)
}

fn atom() -> impl Strategy<Value = Atom> {
    prop_oneof![
        small_value().prop_map(Atom::Value),
        prop::sample::select(REF_NAMES.to_vec()).prop_map(|n| Atom::Ref(n.to_owned())),
        prop::sample::select(vec!["input", ROOT_ID, "equals", "less-than", "label"])
            .prop_map(Atom::text),
    ]
}

fn term() -> impl Strategy<Value = Term> {
    prop_oneof![
        2 => atom().prop_map(Term::Const),
        3 => prop::sample::select(VARS.to_vec()).prop_map(Term::var),
    ]
}

fn attr_name(names: &'static [&'static str]) -> impl Strategy<Value = &'static str> {
    // a rare attribute no fact carries
    prop_oneof![40 => prop::sample::select(names), 1 => Just("missing")]
}

fn template() -> impl Strategy<Value = FactTemplate> {
    const FIELD: &[&str] = &[ATTR_NAME, ATTR_VALUE, ATTR_CONTAINER, ATTR_TYPE];
    const RELATION: &[&str] = &[ATTR_RELATION, ATTR_ARG1, ATTR_ARG2];
    let attrs = |names| {
        prop::collection::btree_map(attr_name(names).prop_map(str::to_owned), term(), 0..=3)
    };
    prop_oneof![
        2 => attrs(FIELD).prop_map(|attrs| FactTemplate { kind: FactKind::Field, attrs }),
        1 => attrs(RELATION).prop_map(|attrs| FactTemplate { kind: FactKind::Relation, attrs }),
    ]
}

/// Up to four clauses, the last up to two negated.
pub fn pattern() -> impl Strategy<Value = Pattern> {
    (prop::collection::vec(template(), 1..=4), 0usize..=2).prop_map(|(mut clauses, negs)| {
        let negs = negs.min(clauses.len() - 1);
        let mut negated = clauses.split_off(clauses.len() - negs);
        let bound: BTreeSet<String> = clauses
            .iter()
            .flat_map(|c| c.variables().map(str::to_owned))
            .collect();
        // keep negations safe by turning their unbound variables into constants
        for n in &mut negated {
            for t in n.attrs.values_mut() {
                if t.as_var().is_some_and(|v| !bound.contains(v)) {
                    *t = Term::value(Value::int(0));
                }
            }
        }
        Pattern { clauses, negated }
    })
}

/// Each case compiles one to three patterns, alone and into one shared
/// network, and compares both against the naive unifier.
pub fn rete_equivalence(mut runner: TestRunner) -> Outcome {
    let (productions, matched) = (Cell::new(0usize), Cell::new(0usize));
    let strategy = (small_memory(), prop::collection::vec(pattern(), 1..=3));
    finish(runner.run(&strategy, |(wm, patterns)| {
        let mut shared = Rete::new();
        let ids: Vec<_> = patterns
            .iter()
            .map(|p| shared.add_production(p).unwrap())
            .collect();
        let activation = shared.activate(&wm).unwrap();
        for (p, id) in patterns.iter().zip(ids) {
            let expected = naive_matches(p, &wm);
            prop_assert_eq!(&match_pattern(p, &wm).unwrap(), &expected, "pattern {}", p);
            prop_assert_eq!(
                &activation.matches(id),
                &expected,
                "shared rete, pattern {}",
                p
            );
            productions.set(productions.get() + 1);
            matched.set(matched.get() + usize::from(!expected.is_empty()));
        }
        Ok(())
    }))?;
    // the generator must exercise both outcomes
    let (productions, matched) = (productions.get(), matched.get());
    if matched * 5 <= productions || matched * 5 >= productions * 4 {
        return Err(format!(
            "degenerate generator: {matched} of {productions} productions matched"
        ));
    }
    Ok(format!(
        "{} cases, {productions} productions, {matched} with matches",
        runner.config().cases
    ))
}

// ---- explanations ----

const FIELD_NAMES: [&str; 6] = ["a", "b", "c", "d", "e", "f"];

fn explain_value() -> impl Strategy<Value = Value> {
    prop_oneof![
        6 => (0i64..10).prop_map(Value::int),
        1 => (1i64..5, 2i64..5).prop_map(|(n, d)| Value::ratio(n, d)),
        1 => Just(Value::symbol("x")),
        1 => Just(Value::Empty),
        1 => (10i64..100).prop_map(Value::int),
    ]
}

/// Every operator expression over the non-empty fields with its depth,
/// copies included, built without sharing or pruning.
pub fn enumerate(
    wm: &WorkingMemory,
    ops: &[Operator],
    max_depth: usize,
) -> Vec<(Expr, usize, Value)> {
    let mut pool: Vec<(Expr, usize, Value)> = wm
        .fields()
        .filter_map(|f| {
            Some((
                Expr::Field(f.field_name()?.to_owned()),
                0,
                f.value()?.clone(),
            ))
        })
        .filter(|(_, _, v)| !v.is_empty())
        .collect();
    let mut out = Vec::new();
    if ops.contains(&Operator::Copy) {
        out.extend(
            pool.iter()
                .map(|(e, _, v)| (Expr::Apply(Operator::Copy, vec![e.clone()]), 0, v.clone())),
        );
    }
    for k in 1..=max_depth {
        let mut layer = Vec::new();
        for &op in ops
            .iter()
            .filter(|o| o.is_mental() && **o != Operator::Copy)
        {
            for (e1, d1, v1) in &pool {
                if op.arity() == 1 {
                    if *d1 == k - 1 {
                        if let Some(r) = op.apply(std::slice::from_ref(v1)) {
                            layer.push((Expr::Apply(op, vec![e1.clone()]), k, r));
                        }
                    }
                    continue;
                }
                for (e2, d2, v2) in &pool {
                    if (*d1).max(*d2) == k - 1 {
                        if let Some(r) = op.apply(&[v1.clone(), v2.clone()]) {
                            layer.push((Expr::Apply(op, vec![e1.clone(), e2.clone()]), k, r));
                        }
                    }
                }
            }
        }
        out.extend(layer.iter().cloned());
        pool.extend(layer);
    }
    out
}

fn explain_memory() -> impl Strategy<Value = WorkingMemory> {
    prop::collection::vec(explain_value(), 1..=6)
        .prop_map(|vals| WorkingMemory::from_fields(FIELD_NAMES.iter().copied().zip(vals)))
}

/// Explanations must be exactly the enumerated expressions producing the
/// target, each once, shallowest first, each replaying to the target.
pub fn explain_equivalence(mut runner: TestRunner) -> Outcome {
    let (cases, hits) = (Cell::new(0usize), Cell::new(0usize));
    let strategy = (
        explain_memory(),
        any::<prop::sample::Index>(),
        any::<bool>(),
        1usize..=2,
    );
    finish(runner.run(&strategy, |(wm, pick, with_copy, max_depth)| {
        let mut ops = standard_operator_library();
        if !with_copy {
            ops.retain(|o| *o != Operator::Copy);
        }
        let all = enumerate(&wm, &ops, max_depth);
        // aim at a value something produces, so most cases have answers
        let target = match all.len() {
            0 => Value::int(7),
            n => all[pick.index(n)].2.clone(),
        };
        let mut expected: Vec<(String, usize)> = all
            .iter()
            .filter(|(_, _, v)| *v == target)
            .map(|(e, d, _)| (e.to_string(), *d))
            .collect();
        expected.sort();

        let found = explain(&wm, &target, &ops, max_depth);
        for ex in &found {
            let replayed = ex.replay(&wm);
            prop_assert_eq!(
                replayed.as_ref(),
                Some(&target),
                "{} does not replay",
                ex.expr
            );
            prop_assert_eq!(&ex.output, &target);
        }
        prop_assert!(
            found.windows(2).all(|w| w[0].depth <= w[1].depth),
            "not shallowest first"
        );
        let mut got: Vec<(String, usize)> = found
            .iter()
            .map(|e| (e.expr.to_string(), e.depth))
            .collect();
        got.sort();
        prop_assert_eq!(got, expected);
        cases.set(cases.get() + 1);
        hits.set(hits.get() + usize::from(!found.is_empty()));
        Ok(())
    }))?;
    if hits.get() * 2 <= cases.get() {
        return Err(format!(
            "degenerate generator: only {} of {} cases had explanations",
            hits.get(),
            cases.get()
        ));
    }
    Ok(format!(
        "{} cases, {} with explanations",
        cases.get(),
        hits.get()
    ))
}

// ---- generalization ----

const TUTOR_FIELDS: [&str; 7] = ["num1", "den1", "op", "num2", "den2", "ans-num", "ans-den"];

fn fraction_state() -> impl Strategy<Value = TutorState> {
    let cell = prop_oneof![6 => (1i64..5).prop_map(Value::int), 1 => Just(Value::Empty)];
    (
        prop::collection::vec(cell, TUTOR_FIELDS.len()),
        any::<bool>(),
    )
        .prop_map(|(vals, times)| {
            let mut s: TutorState = TUTOR_FIELDS
                .iter()
                .map(|f| f.to_string())
                .zip(vals)
                .collect();
            s.insert("op".into(), Value::symbol(if times { "x" } else { "+" }));
            s
        })
}

/// A state together with the conditions a learned method would get from it:
/// every fact constant except some variablized field values.
pub fn instance() -> impl Strategy<Value = (WorkingMemory, Pattern)> {
    (
        fraction_state(),
        prop::collection::vec(any::<bool>(), TUTOR_FIELDS.len()),
    )
        .prop_map(|(s, mask)| {
            let wm = closed(
                WorkingMemory::from_tutor_state(&s, &Domain::FractionArithmetic.layout()).unwrap(),
            );
            let vars: BTreeMap<String, String> = TUTOR_FIELDS
                .iter()
                .zip(mask)
                .filter(|(f, m)| *m && !s[**f].is_empty())
                .enumerate()
                .map(|(i, (f, _))| (f.to_string(), format!("a{i}")))
                .collect();
            let p = state_conditions(&wm, &vars);
            (wm, p)
        })
}

fn same_up_to_renaming(p: &Pattern, q: &Pattern) -> bool {
    p.clauses.len() == q.clauses.len() && subsumes(p, q) && subsumes(q, p)
}

fn anchor(c: &FactTemplate) -> String {
    match c.kind {
        FactKind::Field => format!("{}", c.attrs[ATTR_NAME]),
        FactKind::Relation => c
            .attrs
            .iter()
            .map(|(k, t)| format!("{k}={t}"))
            .collect::<Vec<_>>()
            .join(","),
    }
}

pub fn lgg_idempotent(mut runner: TestRunner) -> Outcome {
    finish(runner.run(&instance(), |(_, p)| {
        prop_assert_eq!(lgg_conditions(&p, &p), p);
        Ok(())
    }))?;
    Ok(format!("idempotence {} cases", runner.config().cases))
}

pub fn lgg_commutative(mut runner: TestRunner) -> Outcome {
    finish(runner.run(&(instance(), instance()), |((_, p), (_, q))| {
        let pq = lgg_conditions(&p, &q);
        let qp = lgg_conditions(&q, &p);
        prop_assert!(same_up_to_renaming(&pq, &qp), "{}\nvs\n{}", pq, qp);
        Ok(())
    }))?;
    Ok(format!("commutativity {} cases", runner.config().cases))
}

/// The generalization subsumes and matches both sources, and folding in a
/// third keeps covering all of them.
pub fn lgg_covers(mut runner: TestRunner) -> Outcome {
    finish(runner.run(
        &(instance(), instance(), instance()),
        |((wp, p), (wq, q), (wr, r))| {
            let pq = lgg_conditions(&p, &q);
            prop_assert!(subsumes(&pq, &p) && subsumes(&pq, &q));
            prop_assert!(!match_pattern(&pq, &wp).unwrap().is_empty());
            prop_assert!(!match_pattern(&pq, &wq).unwrap().is_empty());
            let pqr = lgg_conditions(&pq, &r);
            prop_assert!(subsumes(&pqr, &pq) && subsumes(&pqr, &r));
            for wm in [&wp, &wq, &wr] {
                prop_assert!(!match_pattern(&pqr, wm).unwrap().is_empty());
            }
            Ok(())
        },
    ))?;
    Ok(format!("subsumption {} cases", runner.config().cases))
}

/// Clauses align by anchor; equal constants stay, and each distinct pair of
/// differing terms gets exactly one variable.
pub fn lgg_pair_memoization(mut runner: TestRunner) -> Outcome {
    finish(runner.run(&(instance(), instance()), |((_, p), (_, q))| {
        let g = lgg_conditions(&p, &q);
        let qs: HashMap<String, &FactTemplate> = q.clauses.iter().map(|c| (anchor(c), c)).collect();
        let ps: HashMap<String, &FactTemplate> = p.clauses.iter().map(|c| (anchor(c), c)).collect();
        let expected_anchors: Vec<String> = p
            .clauses
            .iter()
            .map(anchor)
            .filter(|a| qs.contains_key(a))
            .collect();
        let got_anchors: Vec<String> = g.clauses.iter().map(anchor).collect();
        prop_assert_eq!(&got_anchors, &expected_anchors);

        let mut var_of_pair: HashMap<(Term, Term), String> = HashMap::new();
        let mut pair_of_var: HashMap<String, (Term, Term)> = HashMap::new();
        for c in &g.clauses {
            let a = anchor(c);
            for (k, t) in &c.attrs {
                let pair = (ps[&a].attrs[k].clone(), qs[&a].attrs[k].clone());
                match t {
                    Term::Const(_) => prop_assert!(pair.0 == pair.1 && pair.0 == *t),
                    Term::Var(v) => {
                        prop_assert!(pair.0 != pair.1 || matches!(pair.0, Term::Var(_)));
                        if let Some(prev) = var_of_pair.insert(pair.clone(), v.clone()) {
                            prop_assert_eq!(&prev, v);
                        }
                        if let Some(prev) = pair_of_var.insert(v.clone(), pair.clone()) {
                            prop_assert_eq!(&prev, &pair);
                        }
                    }
                }
            }
        }
        Ok(())
    }))?;
    Ok(format!("pair memoization {} cases", runner.config().cases))
}

/// `[3,3] ⊔ [5,5]` shares one variable; `[3,3] ⊔ [5,6]` needs two.
pub fn lgg_shared_variable_case() -> Outcome {
    let p = |a: i64, b: i64| {
        let wm = WorkingMemory::from_fields([("num1", Value::int(a)), ("num2", Value::int(b))]);
        state_conditions(&wm, &BTreeMap::new())
    };
    let values = |g: &Pattern| -> Vec<Term> {
        g.clauses
            .iter()
            .map(|c| c.attrs[ATTR_VALUE].clone())
            .collect()
    };
    let same = values(&lgg_conditions(&p(3, 3), &p(5, 5)));
    if !(same[0].as_var().is_some() && same[0] == same[1]) {
        return Err(format!("[3,3] ⊔ [5,5] gave {same:?}"));
    }
    let diff = values(&lgg_conditions(&p(3, 3), &p(5, 6)));
    if !(diff[0].as_var().is_some() && diff[1].as_var().is_some() && diff[0] != diff[1]) {
        return Err(format!("[3,3] ⊔ [5,6] gave {diff:?}"));
    }
    Ok("shared-variable case".into())
}
