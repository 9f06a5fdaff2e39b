use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use dlrc_core::dlrc::solve_lambda;
use dlrc_core::game::generate_random_game;
use dlrc_core::value::v_backward_pass;
use dlrc_core::{HyperParams, PolicyProfile, RunConfig, Trainer, ValueTables};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lambda_solver(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_lambda");
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for d in [2usize, 4, 16] {
        let params = HyperParams::theoretical(2, 2, d);
        let cap: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let interior: Vec<f64> = (0..d).map(|_| -params.alpha_tilde * rng.gen_range(2.0..20.0)).collect();
        group.bench_with_input(BenchmarkId::new("cap", d), &cap, |b, r| {
            b.iter(|| solve_lambda(black_box(r), &params).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("interior", d), &interior, |b, r| {
            b.iter(|| solve_lambda(black_box(r), &params).unwrap())
        });
    }
    group.finish();
}

fn training_round(c: &mut Criterion) {
    let mut group = c.benchmark_group("training_round");
    group.bench_function("paper", |b| {
        let config = RunConfig {
            metric_stride: 1 << 40,
            ..RunConfig::paper(0, 1 << 40)
        };
        let mut trainer = Trainer::new(config).unwrap();
        b.iter(|| trainer.step().unwrap())
    });
    group.bench_function("n3_s4_a4_h4", |b| {
        let game = generate_random_game(1, 3, 4, 4, 4, 0.8).unwrap();
        let config = RunConfig {
            hyperparams: HyperParams::theoretical(4, 3, 4),
            rounds: 1 << 40,
            metric_stride: 1 << 40,
            ..RunConfig::paper(1, 1)
        };
        let mut trainer = Trainer::with_game(game, config).unwrap();
        b.iter(|| trainer.step().unwrap())
    });
    group.finish();
}

fn value_pass(c: &mut Criterion) {
    let mut group = c.benchmark_group("v_backward_pass");
    for (n, s, a, h) in [(2, 2, 2, 2), (3, 4, 4, 4), (2, 16, 8, 8)] {
        let game = generate_random_game(3, n, s, a, h, 0.8).unwrap();
        let profile = PolicyProfile::uniform(&game);
        let prev = ValueTables::zeros(&game);
        group.bench_function(format!("n{n}_s{s}_a{a}_h{h}"), |b| {
            b.iter(|| v_backward_pass(&game, black_box(&profile), &prev, 0.5).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, lambda_solver, training_round, value_pass);
criterion_main!(benches);
