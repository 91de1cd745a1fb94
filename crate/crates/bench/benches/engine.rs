use criterion::{criterion_group, criterion_main, Criterion};
use finslerlab_bench::{example, example_p0, flat, flat_sample};
use finslerlab_core::connections::connection_data;
use finslerlab_core::harness::{verify, VerifyConfig};
use finslerlab_core::matsumoto::{change_identities, Orientation};
use finslerlab_core::metric::metric_data;
use std::hint::black_box;

fn metric(c: &mut Criterion) {
    let (m, e) = (example(), flat());
    let (s, t) = (example_p0(&m), flat_sample(&e));
    c.bench_function("metric_data/example", |b| b.iter(|| metric_data(&m, black_box(&s)).unwrap()));
    c.bench_function("metric_data/flat", |b| b.iter(|| metric_data(&e, black_box(&t)).unwrap()));
}

fn connections(c: &mut Criterion) {
    let m = example();
    let s = example_p0(&m);
    let md = metric_data(&m, &s).unwrap();
    c.bench_function("connection_data/example", |b| {
        b.iter(|| connection_data(&m, black_box(&s), &md).unwrap())
    });
}

fn change(c: &mut Criterion) {
    let m = example();
    let s = example_p0(&m);
    c.bench_function("change_identities/example", |b| {
        b.iter(|| change_identities(&m, &m, black_box(&s), Orientation::Minus).unwrap())
    });
}

fn harness(c: &mut Criterion) {
    let mut group = c.benchmark_group("verify");
    group.sample_size(10);
    let cfg = VerifyConfig {
        samples: 20,
        ..VerifyConfig::default()
    };
    let e = flat();
    group.bench_function("flat_20", |b| b.iter(|| verify(&e, black_box(&cfg)).unwrap()));
    group.finish();
}

criterion_group!(benches, metric, connections, change, harness);
criterion_main!(benches);
