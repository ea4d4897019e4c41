use std::hint::black_box;

use atb_bench::{fraction_memories, trained};
use atb_core::planner::attempt;
use atb_core::{Domain, TaskName};
use criterion::Criterion;

pub fn bench(c: &mut Criterion) {
    let kb = trained(Domain::FractionArithmetic, 40);
    let memories = fraction_memories(16);
    c.bench_function("planner/attempt first step", |b| {
        b.iter(|| {
            for wm in &memories {
                black_box(attempt(&kb, wm, &TaskName::root()).unwrap());
            }
        })
    });
}
