//! Random linear cyclic SCMs with Laplace noise, and recovery scores.

use nalgebra::DMatrix;
use rand::Rng;

/// Standard Laplace draw by inverse CDF.
pub fn laplace<R: Rng>(rng: &mut R) -> f64 {
    let u: f64 = rng.random::<f64>() - 0.5;
    -u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

pub fn spectral_radius(b: &DMatrix<f64>) -> f64 {
    b.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// True if the graph with edge `j -> i` for every `b[i, j] != 0` has a directed cycle.
pub fn has_cycle(b: &DMatrix<f64>) -> bool {
    let n = b.nrows();
    // 0 = unvisited, 1 = on stack, 2 = done
    fn visit(b: &DMatrix<f64>, v: usize, state: &mut [u8]) -> bool {
        state[v] = 1;
        for child in 0..b.nrows() {
            if b[(child, v)] != 0.0 && (state[child] == 1 || (state[child] == 0 && visit(b, child, state))) {
                return true;
            }
        }
        state[v] = 2;
        false
    }
    let mut state = vec![0u8; n];
    (0..n).any(|v| state[v] == 0 && visit(b, v, &mut state))
}

/// Sparse `n × n` coefficient matrix with zero diagonal, at least one cycle,
/// and spectral radius at most `max_radius`. Each off-diagonal entry is an
/// edge with probability `density`, magnitude uniform in [0.3, 0.8], random sign.
pub fn random_cyclic_scm<R: Rng>(n: usize, density: f64, max_radius: f64, rng: &mut R) -> DMatrix<f64> {
    assert!(n >= 2, "a cycle needs two variables");
    loop {
        let b = DMatrix::from_fn(n, n, |i, j| {
            if i != j && rng.random::<f64>() < density {
                let mag = 0.3 + 0.5 * rng.random::<f64>();
                if rng.random::<bool>() {
                    mag
                } else {
                    -mag
                }
            } else {
                0.0
            }
        });
        if !has_cycle(&b) {
            continue;
        }
        let rho = spectral_radius(&b);
        return if rho > max_radius { b * (max_radius / rho) } else { b };
    }
}

/// `samples × n` draws of `x = (I - B)^{-1} e` with i.i.d. Laplace `e`.
pub fn sample_scm<R: Rng>(b: &DMatrix<f64>, samples: usize, rng: &mut R) -> DMatrix<f64> {
    let n = b.nrows();
    let mixing = (DMatrix::identity(n, n) - b)
        .try_inverse()
        .expect("I - B is invertible when the spectral radius is below 1");
    let noise = DMatrix::from_fn(n, samples, |_, _| laplace(rng));
    (mixing * noise).transpose()
}

/// F1 score of the off-diagonal support of `est` against `truth`.
pub fn support_f1(truth: &DMatrix<f64>, est: &DMatrix<f64>) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for i in 0..truth.nrows() {
        for j in 0..truth.ncols() {
            if i == j {
                continue;
            }
            match (truth[(i, j)] != 0.0, est[(i, j)] != 0.0) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
    }
    if tp == 0 {
        return if fp == 0 && fn_ == 0 { 1.0 } else { 0.0 };
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

/// Mean absolute coefficient error over the union of both supports.
pub fn coefficient_mae(truth: &DMatrix<f64>, est: &DMatrix<f64>) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..truth.nrows() {
        for j in 0..truth.ncols() {
            if i != j && (truth[(i, j)] != 0.0 || est[(i, j)] != 0.0) {
                total += (truth[(i, j)] - est[(i, j)]).abs();
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}
