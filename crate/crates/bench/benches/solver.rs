use criterion::{black_box, criterion_group, criterion_main, Criterion};
use iobt_core::fse::solve_stackelberg;
use iobt_core::harness::ExperimentConfig;
use iobt_core::lp::solve_lp;
use iobt_core::oracles::{random_game, random_lp};
use iobt_core::{generate_instance, Solver};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn simplex(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let programs: Vec<_> = (0..64).map(|_| random_lp(&mut rng, 6, 10)).collect();
    c.bench_function("solve_lp 6x10", |b| {
        b.iter(|| programs.iter().map(|lp| solve_lp(black_box(lp)).value).sum::<f64>())
    });
}

fn stackelberg(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let game = random_game(&mut rng, 20, 20, true);
    c.bench_function("solve_stackelberg 20x20", |b| b.iter(|| solve_stackelberg(black_box(&game))));
}

fn stage(c: &mut Criterion) {
    let exp = ExperimentConfig::paper().scaled(0.05).expect("scaled config");
    let psi = generate_instance(&exp, 7).expect("instance");
    let mut cfg = exp.game_config().expect("config");
    cfg.horizon = 1;
    c.bench_function("last stage at scale 0.05", |b| {
        b.iter(|| Solver::new(&cfg).solve_stage_full(black_box(&psi), 1).map(|s| s.2.attacker_value))
    });
}

criterion_group!(benches, simplex, stackelberg, stage);
criterion_main!(benches);
