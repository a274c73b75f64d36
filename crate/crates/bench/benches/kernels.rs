//! Measures the four hot kernels: walk stepping, the coupled
//! excursion/branching replay, the closed-form hitting probability, and
//! the two-sample distribution test.

use criterion::{black_box, criterion_group, criterion_main, Criterion};

use cookiewalk::seedmix::{mix, unit_open};
use cookiewalk::{
    couple_excursion, hit_prob_closed, offspring_rng, run_walk, sample_generation_env,
    simulate_z, two_sample_test, CoinSource, CookieLaw, EnvWindow, Environment, EnvironmentSpec,
    HalfLineMask, PLaw, Site,
};

fn heavy_env(seed: u64) -> Environment {
    let spec = EnvironmentSpec::new(
        PLaw::Fixed { p: 1.0 / 3.0 },
        CookieLaw::ExampleLaw {
            lambda: 2.0,
            beta: 1.0,
        },
        HalfLineMask::Everywhere,
    )
    .unwrap();
    Environment::new(spec, seed).unwrap()
}

fn walk_stepping(c: &mut Criterion) {
    let env = heavy_env(7);
    let coins = CoinSource::new(7, 0);
    c.bench_function("walk_10k_steps", |b| {
        b.iter(|| run_walk(&env, &coins, black_box(0), 10_000, &[]).unwrap())
    });
}

fn coupled_excursion(c: &mut Criterion) {
    let spec = EnvironmentSpec::new(
        PLaw::Fixed { p: 1.0 / 3.0 },
        CookieLaw::ExampleLaw {
            lambda: 2.0,
            beta: 1.0,
        },
        HalfLineMask::PositiveOnly,
    )
    .unwrap();
    let env = Environment::new(spec, 11).unwrap();
    let coins = CoinSource::new(11, 0);
    c.bench_function("couple_excursion_10k_horizon", |b| {
        b.iter(|| couple_excursion(&env, &coins, black_box(10_000)).unwrap())
    });
}

fn closed_form_hitting(c: &mut Criterion) {
    let lo = -41i64;
    let sites: Vec<Site> = (lo..=2)
        .map(|z| Site {
            p: 0.2 + 0.6 * unit_open(mix(&[3, 0x51, z as u64])),
            m: 0,
        })
        .collect();
    let window = EnvWindow::new(lo, sites);
    c.bench_function("hit_prob_closed_depth_40", |b| {
        b.iter(|| hit_prob_closed(&window, black_box(2), black_box(40)).unwrap())
    });
}

fn branching_generation(c: &mut Criterion) {
    let spec = EnvironmentSpec::new(
        PLaw::Fixed { p: 1.0 / 3.0 },
        CookieLaw::ExampleLaw {
            lambda: 2.0,
            beta: 1.0,
        },
        HalfLineMask::Everywhere,
    )
    .unwrap();
    let (p_seq, m_seq) = sample_generation_env(&spec, 5, 0, 1_000);
    c.bench_function("simulate_z_1k_generations", |b| {
        b.iter(|| {
            let mut rng = offspring_rng(5, 0);
            simulate_z(black_box(&p_seq), black_box(&m_seq), &mut rng).unwrap()
        })
    });
}

fn distribution_test(c: &mut Criterion) {
    let a: Vec<f64> = (0..10_000u64).map(|i| unit_open(mix(&[1, i]))).collect();
    let b_sample: Vec<f64> = (0..10_000u64).map(|i| unit_open(mix(&[2, i]))).collect();
    c.bench_function("two_sample_test_10k", |b| {
        b.iter(|| two_sample_test(black_box(&a), black_box(&b_sample), 0.01).unwrap())
    });
}

criterion_group!(
    kernels,
    walk_stepping,
    coupled_excursion,
    closed_form_hitting,
    branching_generation,
    distribution_test
);
criterion_main!(kernels);
