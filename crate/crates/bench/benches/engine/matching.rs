use std::hint::black_box;

use atb_bench::{fraction_memories, trained};
use atb_core::rete::Rete;
use atb_core::Domain;
use criterion::Criterion;

pub fn bench(c: &mut Criterion) {
    let kb = trained(Domain::FractionArithmetic, 40);
    let mut rete = Rete::new();
    for (_, methods) in kb.tasks() {
        for m in methods {
            rete.add_production(&m.conditions).unwrap();
        }
    }
    let memories = fraction_memories(16);
    c.bench_function("rete/activate trained fraction agent", |b| {
        b.iter(|| {
            for wm in &memories {
                black_box(rete.activate(wm).unwrap());
            }
        })
    });
}
