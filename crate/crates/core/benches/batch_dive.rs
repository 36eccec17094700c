use criterion::{criterion_group, criterion_main, Criterion};
use dhevo_core::diving::{default_d_max, dive, Scorer};
use dhevo_core::gen::{Family, FamilyParams, GenSpec};
use dhevo_core::parallel::{par_map, seq_map};
use std::hint::black_box;

fn batch_dive(c: &mut Criterion) {
    let params = FamilyParams::preset(Family::Cauctions, "tiny").unwrap();
    let instances = GenSpec::generate_batch(params, 1, 32).unwrap();
    let scorer = Scorer::builtin("pseudocost").unwrap();
    let run = |inst: &_| {
        let r = dive(inst, &scorer, default_d_max(inst));
        r.best_objective
    };
    let mut g = c.benchmark_group("batch_dive_32_cauctions");
    g.sample_size(20);
    g.bench_function("par_map", |b| b.iter(|| black_box(par_map(&instances, run))));
    g.bench_function("seq_map", |b| b.iter(|| black_box(seq_map(&instances, run))));
    g.finish();
}

criterion_group!(benches, batch_dive);
criterion_main!(benches);
