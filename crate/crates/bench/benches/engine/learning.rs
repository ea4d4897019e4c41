use std::hint::black_box;

use atb_bench::fraction_memories;
use atb_core::evalsim::{evaluate, generate, train};
use atb_core::htn::standard_operator_library;
use atb_core::learner::explain;
use atb_core::{Domain, KnowledgeBase, LabelMode, ScriptedTeacher, StopRule, Value};
use criterion::Criterion;

pub fn bench(c: &mut Criterion) {
    let ops = standard_operator_library();
    let memories = fraction_memories(4);
    let mut group = c.benchmark_group("explain");
    for depth in [1, 2] {
        group.bench_function(format!("depth {depth}"), |b| {
            b.iter(|| {
                for wm in &memories {
                    black_box(explain(wm, &Value::int(24), &ops, depth));
                }
            })
        });
    }
    group.finish();

    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    for domain in [Domain::FractionArithmetic, Domain::Square25] {
        let problems = generate(domain, 100, 0);
        let eval = generate(domain, 10, 1000);
        group.bench_function(
            format!("{} 100 problems + evaluate 10", domain.name()),
            |b| {
                b.iter(|| {
                    let run = train(
                        KnowledgeBase::new(),
                        &domain.layout(),
                        &mut ScriptedTeacher::new(LabelMode::Canonical),
                        &problems,
                        StopRule::Fixed(100),
                    )
                    .unwrap();
                    black_box(evaluate(&run.kb, &domain.layout(), &eval))
                })
            },
        );
    }
    group.finish();
}
