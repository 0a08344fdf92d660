use ccmdp::generate::{generate_layered, GeneratorParams};
use ccmdp::{build_layers, solve, solve_mcminks, Algorithm, Choice, KnapsackInstance, SolverConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn layered(horizon: usize, psi: usize, seed: u64) -> ccmdp::MdpInstance {
    generate_layered(&GeneratorParams {
        n_states_per_level: 6,
        horizon,
        psi_target: psi,
        gamma_target: 2,
        seed,
        ..Default::default()
    })
    .expect("generator")
}

fn solvers(c: &mut Criterion) {
    let mut group = c.benchmark_group("solvers");
    group.sample_size(10);
    for h in [2usize, 3, 4] {
        let inst = layered(h, 1, 7);
        let g = build_layers(&inst);
        for alg in [Algorithm::Lim, Algorithm::Dis] {
            group.bench_with_input(BenchmarkId::new(alg.as_str(), h), &h, |b, _| {
                b.iter(|| solve(&inst, &g, &SolverConfig::with_eps(0.3), alg).ok())
            });
        }
        let inst = layered(h, 2, 7);
        let g = build_layers(&inst);
        group.bench_with_input(BenchmarkId::new("local", h), &h, |b, _| {
            b.iter(|| solve(&inst, &g, &SolverConfig::with_eps(0.3), Algorithm::Local).ok())
        });
    }
    group.finish();
}

fn knapsack(c: &mut Criterion) {
    let cats: Vec<Vec<Choice>> = (0..6)
        .map(|i| {
            (0..40)
                .map(|j| Choice::scalar(((i * 7 + j * 13) % 17) as f64 * 0.1, j as f64 * 0.5))
                .collect()
        })
        .collect();
    let inst = KnapsackInstance::new(cats, vec![60.0], 0.25);
    c.bench_function("mcminks_6x40", |b| b.iter(|| solve_mcminks(&inst).unwrap()));
}

criterion_group!(benches, solvers, knapsack);
criterion_main!(benches);
