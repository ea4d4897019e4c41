//! Fixtures for the engine benchmarks.

use atb_core::evalsim::{generate, train};
use atb_core::htn::Operator;
use atb_core::{
    Domain, KnowledgeBase, LabelMode, ProblemSpec, ScriptedTeacher, StopRule, WorkingMemory,
};

pub const RELATIONS: [Operator; 2] = [Operator::Equals, Operator::LessThan];

/// An agent trained on `count` problems of `domain` with canonical labels.
pub fn trained(domain: Domain, count: usize) -> KnowledgeBase {
    let problems = generate(domain, count, 0);
    train(
        KnowledgeBase::new(),
        &domain.layout(),
        &mut ScriptedTeacher::new(LabelMode::Canonical),
        &problems,
        StopRule::Fixed(count),
    )
    .expect("training finishes")
    .kb
}

/// The closed working memory of a problem's starting state.
pub fn start_memory(domain: Domain, problem: &ProblemSpec) -> WorkingMemory {
    WorkingMemory::from_tutor_state(&problem.givens, &domain.layout())
        .expect("givens fit the layout")
        .close_relations(&RELATIONS)
}

/// Fractions-arithmetic starting states.
pub fn fraction_memories(count: usize) -> Vec<WorkingMemory> {
    generate(Domain::FractionArithmetic, count, 1)
        .iter()
        .map(|p| start_memory(Domain::FractionArithmetic, p))
        .collect()
}
