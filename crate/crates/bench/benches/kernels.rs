use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use stoch_consensus::graph::laplacian;
use stoch_consensus::{decompose, simulate_path, Topology};
use stoch_consensus_bench::{four_agent_graph, ring_with_chord, short_run, unit_noise};

fn bench_decompose(c: &mut Criterion) {
    let mut group = c.benchmark_group("decompose");
    for n in [4, 8, 16, 32] {
        let l = laplacian(&ring_with_chord(n));
        group.bench_with_input(BenchmarkId::from_parameter(n), &l, |b, l| {
            b.iter(|| decompose(black_box(l)).unwrap())
        });
    }
    group.finish();
}

fn bench_path(c: &mut Criterion) {
    let g = four_agent_graph();
    let noise = unit_noise(&g);
    let topo = Topology::Fixed(g);
    let params = short_run(4, 1);
    c.bench_function("simulate_path/4 agents/1000 steps", |b| {
        b.iter(|| simulate_path(black_box(&topo), &noise, &params, 0).unwrap())
    });

    let g = ring_with_chord(16);
    let noise = unit_noise(&g);
    let topo = Topology::Fixed(g);
    let params = short_run(16, 1);
    c.bench_function("simulate_path/16 agents/1000 steps", |b| {
        b.iter(|| simulate_path(black_box(&topo), &noise, &params, 0).unwrap())
    });
}

criterion_group!(benches, bench_decompose, bench_path);
criterion_main!(benches);
