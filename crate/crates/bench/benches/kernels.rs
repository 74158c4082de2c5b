use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use zcnas::analysis::spearman;
use zcnas::engine::LossSpec;
use zcnas::proxy::{self, ParamScope};
use zcnas_bench::{conv_network, series};

fn engine(c: &mut Criterion) {
    let (mut net, batch) = conv_network(32);
    let loss = LossSpec::cross_entropy(&batch.targets);
    let mut g = c.benchmark_group("engine");
    g.sample_size(10);
    g.bench_function("forward", |b| b.iter(|| net.forward(&batch.inputs).unwrap()));
    g.bench_function("forward_backward", |b| b.iter(|| net.backward(&loss, &batch.inputs).unwrap()));
    g.finish();
}

fn proxies(c: &mut Criterion) {
    let (net, batch) = conv_network(32);
    let loss = LossSpec::cross_entropy(&batch.targets);
    let w = ParamScope::Weights;
    let mut g = c.benchmark_group("proxy");
    g.sample_size(10);
    let fresh = || net.clone();
    g.bench_function("grad_norm", |b| {
        b.iter_batched(fresh, |mut n| proxy::grad_norm(&mut n, &loss, &batch.inputs, w), BatchSize::LargeInput)
    });
    g.bench_function("snip", |b| {
        b.iter_batched(fresh, |mut n| proxy::snip(&mut n, &loss, &batch.inputs, w), BatchSize::LargeInput)
    });
    g.bench_function("grasp", |b| {
        b.iter_batched(fresh, |mut n| proxy::grasp(&mut n, &loss, &batch.inputs, w), BatchSize::LargeInput)
    });
    g.bench_function("fisher", |b| {
        b.iter_batched(fresh, |mut n| proxy::fisher(&mut n, &loss, &batch.inputs), BatchSize::LargeInput)
    });
    g.bench_function("synflow", |b| {
        b.iter_batched(fresh, |mut n| proxy::synflow(&mut n, w, false), BatchSize::LargeInput)
    });
    g.bench_function("jacob_cov", |b| {
        b.iter_batched(fresh, |mut n| proxy::jacob_cov(&mut n, &batch.inputs, 1e-5), BatchSize::LargeInput)
    });
    g.finish();
}

fn statistics(c: &mut Criterion) {
    let (xs, ys) = series(15625, 0);
    c.bench_function("spearman_15625", |b| b.iter(|| spearman(&xs, &ys).unwrap()));
}

criterion_group!(benches, engine, proxies, statistics);
criterion_main!(benches);
