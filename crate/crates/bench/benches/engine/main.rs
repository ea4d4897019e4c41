mod learning;
mod matching;
mod planning;

use criterion::{criterion_group, criterion_main};

criterion_group!(benches, matching::bench, planning::bench, learning::bench);
criterion_main!(benches);
