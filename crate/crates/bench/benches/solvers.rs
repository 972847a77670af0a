use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion, Throughput};
use onsink_bench::{cost, preset_pair};
use onsink_core::{
    batch_sinkhorn, soft_ctransform, MultiplicationCounter, OnlineState, PointSet, PotentialExpansion,
    SweepMode, WeightedSamples,
};

fn soft_transform(c: &mut Criterion) {
    let mut group = c.benchmark_group("soft_ctransform");
    for n in [256, 1024, 4096] {
        let (x, y) = preset_pair("2d-alpha", "2d-beta", n).unwrap();
        let mu = WeightedSamples::uniform(y).unwrap();
        let h = vec![0.0; n];
        let cost = cost(0.1);
        group.throughput(Throughput::Elements((n * n) as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| soft_ctransform(&h, &mu, &x, &cost).unwrap())
        });
    }
    group.finish();
}

fn expansion_eval(c: &mut Criterion) {
    let mut group = c.benchmark_group("expansion_eval");
    for n in [1024, 8192] {
        let (x, y) = preset_pair("2d-alpha", "2d-beta", n).unwrap();
        let weights: Vec<f64> = (0..n).map(|i| -(n as f64).ln() + (i % 7) as f64 * 0.01).collect();
        let f = PotentialExpansion::new(y, weights, cost(0.1)).unwrap();
        group.throughput(Throughput::Elements((n * n) as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| b.iter(|| f.eval(&x).unwrap()));
    }
    group.finish();
}

// Cost grows with the expansion length, so bench a step on top of a warm state.
fn online_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("online_step");
    let (x, y) = preset_pair("1d-alpha", "1d-beta", 4096).unwrap();
    let batch = 256;
    let part = |p: &PointSet, k: usize| p.select(&(k * batch..(k + 1) * batch).collect::<Vec<_>>()).unwrap();
    for warm in [0usize, 8] {
        let mut state = OnlineState::new(1, cost(0.1), 0);
        let mut counter = MultiplicationCounter::new();
        for t in 0..warm {
            let eta = if t == 0 { 1.0 } else { 0.5 };
            state.online_step(&part(&x, t), &part(&y, t), eta, &mut counter).unwrap();
        }
        let (bx, by) = (part(&x, warm), part(&y, warm));
        group.bench_with_input(BenchmarkId::new("after_steps", warm), &warm, |b, _| {
            b.iter_batched(
                || state.clone(),
                |mut s| s.online_step(&bx, &by, 0.5, &mut MultiplicationCounter::new()).unwrap(),
                BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

fn batch_sweeps(c: &mut Criterion) {
    let mut group = c.benchmark_group("batch_sinkhorn_10_sweeps");
    group.sample_size(10);
    for n in [500, 2000] {
        let (x, y) = preset_pair("2d-alpha", "2d-beta", n).unwrap();
        let (a, b) = (WeightedSamples::uniform(x).unwrap(), WeightedSamples::uniform(y).unwrap());
        let cost = cost(0.05);
        for mode in [SweepMode::Alternating, SweepMode::Simultaneous] {
            group.bench_with_input(BenchmarkId::new(format!("{mode:?}"), n), &n, |bench, _| {
                bench.iter(|| batch_sinkhorn(&a, &b, &cost, 10, mode).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, soft_transform, expansion_eval, online_step, batch_sweeps);
criterion_main!(benches);
