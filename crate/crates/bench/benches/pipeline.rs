use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use logicforge_bench::frozen_model;
use logicforge_core::simulator::random_inputs;
use logicforge_core::trainer::synthetic_blobs;
use logicforge_core::{
    build_netlist, eval_netlist, lut_cost, train, Knobs, NetworkSpec, TrainConfig,
};
use std::hint::black_box;

fn cost(c: &mut Criterion) {
    c.bench_function("lut_cost sweep", |b| {
        b.iter(|| {
            (1..=20u32)
                .map(|x| lut_cost(black_box(x), 2).unwrap())
                .sum::<u64>()
        })
    });
}

fn netlist(c: &mut Criterion) {
    let m = frozen_model(32, &[32, 32, 32], 32, Knobs::uniform(2, 6), 1);
    c.bench_function("build_netlist 32x32x32x32", |b| {
        b.iter(|| build_netlist(black_box(&m), 15).unwrap())
    });

    let net = build_netlist(&m, 15).unwrap();
    let inputs = random_inputs(32, 2, 1024, 9);
    c.bench_function("eval_netlist 1024 vectors", |b| {
        b.iter(|| {
            inputs
                .iter()
                .map(|x| eval_netlist(&net, x).unwrap()[0])
                .sum::<u32>()
        })
    });
}

fn training(c: &mut Criterion) {
    let spec = NetworkSpec::mlp(16, &[64, 32, 32, 32], 5, Knobs::uniform(2, 3), 1);
    let ds = synthetic_blobs(2048, 16, 5, 0.15, 2).unwrap();
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 256,
        ..TrainConfig::default()
    };
    let mut g = c.benchmark_group("train");
    g.sample_size(10);
    g.bench_function("one epoch jsc-s shape, 2048 samples", |b| {
        b.iter_batched(
            || cfg.clone(),
            |cfg| train(&spec, &ds, None, &cfg, |_| {}).unwrap(),
            BatchSize::SmallInput,
        )
    });
    g.finish();
}

criterion_group!(benches, cost, netlist, training);
criterion_main!(benches);
