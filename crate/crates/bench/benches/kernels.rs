use std::hint::black_box;

use cascade_bench::load_case;
use cascade_core::grid::{assign_limits, LimitRule};
use cascade_core::lingam::synthetic::{random_cyclic_scm, sample_scm};
use cascade_core::lingam::{learn_matrix, CausalModel, CausalModelSet, LingamOptions};
use cascade_core::power_flow::{solve_ac, solve_dc};
use cascade_core::predict::c_path;
use cascade_core::{cascade_sim::enumerate_ground_truth, LineSpace};
use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn power_flow(c: &mut Criterion) {
    for name in ["case14", "case39", "case118"] {
        let case = load_case(name);
        c.bench_function(&format!("solve_ac/{name}"), |b| {
            b.iter(|| solve_ac(black_box(&case), &[]).unwrap())
        });
        c.bench_function(&format!("solve_dc/{name}"), |b| {
            b.iter(|| solve_dc(black_box(&case), &[]).unwrap())
        });
    }
}

fn ground_truth(c: &mut Criterion) {
    let case = load_case("case14");
    let base = solve_ac(&case, &[]).unwrap();
    let limits = assign_limits(&case, &base, LimitRule::default()).unwrap();
    let space = LineSpace::viable(&case);
    let mut g = c.benchmark_group("ground_truth");
    g.sample_size(10);
    g.bench_function("case14_m4", |b| {
        b.iter(|| enumerate_ground_truth(&case, &limits, &space, 4, 1.0, "case14").unwrap())
    });
    g.finish();
}

fn lingam(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let b_true = random_cyclic_scm(10, 0.2, 0.7, &mut rng);
    let x = sample_scm(&b_true, 2000, &mut rng);
    let mut g = c.benchmark_group("lingam");
    g.sample_size(20);
    g.bench_function("learn_n10_2000", |b| {
        b.iter(|| learn_matrix(black_box(&x), &LingamOptions::default()).unwrap())
    });
    g.finish();
}

fn prediction(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 35;
    let mut set = CausalModelSet::default();
    for k in 0..n {
        let b = DMatrix::from_fn(n, n, |i, j| {
            if i != j && rng.random::<f64>() < 0.15 {
                rng.random_range(-0.8..0.8)
            } else {
                0.0
            }
        });
        set.models.insert(
            k,
            CausalModel {
                initiating_line: k,
                tau: 0.05,
                b,
                non_gaussianity: 1.0,
            },
        );
    }
    c.bench_function("c_path/n35_m3", |b| {
        b.iter(|| c_path(&set, black_box(&[4, 9, 17]), 15.0, 3).unwrap())
    });
}

criterion_group!(benches, power_flow, ground_truth, lingam, prediction);
criterion_main!(benches);
