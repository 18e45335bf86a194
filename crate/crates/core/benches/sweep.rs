use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use flownet::dynamics::{integrate, IntegratorConfig, State};
use flownet::equilibria::equilibrium_set;
use flownet::exec::{map_indexed, ExecMode};
use flownet::transitions::{sweep, DemandPath};
use flownet::NetworkSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

const MODES: [(&str, ExecMode); 2] = [
    ("sequential", ExecMode::Sequential),
    ("parallel", ExecMode::Parallel),
];

fn three_cell() -> NetworkSpec {
    let r = vec![
        vec![0.0, 0.5, 0.5],
        vec![0.1, 0.0, 0.9],
        vec![0.2, 0.8, 0.0],
    ];
    NetworkSpec::new(r, vec![5.0, 4.0, 6.0], vec![1.0 / 3.0, -1.0, 2.0 / 3.0]).unwrap()
}

// stochastic ring with random chords, n cells
fn ring(n: usize, rng: &mut ChaCha8Rng) -> NetworkSpec {
    let mut r = vec![vec![0.0; n]; n];
    for (i, row) in r.iter_mut().enumerate() {
        let keep = rng.gen_range(0.3..0.9);
        row[(i + 1) % n] = keep;
        let mut j = rng.gen_range(0..n);
        while j == i || j == (i + 1) % n {
            j = rng.gen_range(0..n);
        }
        row[j] += 1.0 - keep;
    }
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..10.0)).collect();
    let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    NetworkSpec::new(r, w, c).unwrap()
}

fn bench_sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("sweep");
    group.sample_size(20);
    let base = three_cell();
    for samples in [101, 901] {
        let path = DemandPath::new(vec![0.0, -1.0, 0.0], vec![3.0, -1.0, 6.0], samples).unwrap();
        for (name, mode) in MODES {
            group.bench_with_input(BenchmarkId::new(name, samples), &path, |b, p| {
                b.iter(|| sweep(black_box(&base), p, mode).unwrap())
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let big = ring(8, &mut rng);
    let start: Vec<f64> = big.demand().iter().map(|v| v - 1.0).collect();
    let end: Vec<f64> = big.demand().iter().map(|v| v + 1.0).collect();
    let path = DemandPath::new(start, end, 401).unwrap();
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::new(name, "n8x401"), &path, |b, p| {
            b.iter(|| sweep(black_box(&big), p, mode).unwrap())
        });
    }
    group.finish();
}

fn bench_batch(c: &mut Criterion) {
    let mut group = c.benchmark_group("batch");
    group.sample_size(10);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let specs: Vec<NetworkSpec> = (0..64).map(|_| ring(6, &mut rng)).collect();
    let cfg = IntegratorConfig {
        t_end: 50.0,
        ..Default::default()
    };
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::new("integrate", name), |b| {
            b.iter(|| {
                map_indexed(mode, specs.len(), |i| {
                    integrate(&specs[i], &State::zero(&specs[i]), &cfg).unwrap()
                })
            })
        });
        group.bench_function(BenchmarkId::new("equilibrium_set", name), |b| {
            b.iter(|| map_indexed(mode, specs.len(), |i| equilibrium_set(&specs[i]).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_sweep, bench_batch);
criterion_main!(benches);
