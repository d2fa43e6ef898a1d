use std::f64::consts::TAU;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use cohi::dynamics::ScaledEnergy;
use cohi::inversion::{invert, random_lines, InversionConfig};
use cohi::orbits::{census, SearchOptions};
use cohi::par::Execution;
use cohi::pipeline::parse_channel;
use cohi::signal::{build_signal, synth_quantum_signal};

fn modes() -> [(&'static str, Execution); 2] {
    [
        ("sequential", Execution::Sequential),
        ("parallel", Execution::Parallel { threads: None }),
    ]
}

fn bench_census(c: &mut Criterion) {
    let e = ScaledEnergy::new(-0.7).unwrap();
    let mut g = c.benchmark_group("census");
    g.sample_size(10);
    for (name, exec) in modes() {
        let opts = SearchOptions {
            n_seeds: 2000,
            exec,
            ..Default::default()
        };
        g.bench_function(BenchmarkId::new(name, "s/2pi=4"), |b| {
            b.iter(|| census(e, black_box(TAU * 4.0), &opts).unwrap())
        });
    }
    g.finish();
}

fn bench_signal(c: &mut Criterion) {
    let e = ScaledEnergy::new(-0.7).unwrap();
    let orbits = census(e, TAU * 10.0, &SearchOptions { n_seeds: 4000, ..Default::default() })
        .unwrap()
        .orbits;
    let channels = vec![
        parse_channel("2p0-parallel").unwrap(),
        parse_channel("s-wave").unwrap(),
    ];
    let mut g = c.benchmark_group("signal");
    for (name, exec) in modes() {
        g.bench_function(BenchmarkId::new(name, orbits.len()), |b| {
            b.iter(|| build_signal(black_box(&orbits), &channels, 0.1, 0.05, TAU * 10.0, exec).unwrap())
        });
    }
    g.finish();
}

fn bench_inversion(c: &mut Criterion) {
    let truth = random_lines(7, 40, (16.0, 21.0), (0.1, 2.0), 2, 0.03);
    let sig = synth_quantum_signal(&truth, 0.05, (TAU * 20.0 / 0.05) as usize + 1).unwrap();
    let cfg = InversionConfig::for_signal(&sig, (15.7, 21.3));
    let mut g = c.benchmark_group("inversion");
    g.sample_size(10);
    for (name, exec) in modes() {
        g.bench_function(BenchmarkId::new(name, "40 lines"), |b| {
            b.iter(|| invert(black_box(&sig), &cfg, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench_census, bench_signal, bench_inversion);
criterion_main!(benches);
