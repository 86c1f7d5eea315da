//! Symmetric fixed-point ICA with a tanh contrast and hard thresholding.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::LearnError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcaOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Relative hard threshold: entries below `tau * max|row|` become 0.
    pub tau: f64,
    pub seed: u64,
    /// Fail at the iteration cap instead of keeping the last iterate.
    pub require_convergence: bool,
}

impl Default for IcaOptions {
    fn default() -> Self {
        IcaOptions {
            max_iterations: 500,
            tolerance: 1e-6,
            tau: 0.05,
            seed: 0,
            require_convergence: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IcaResult {
    /// Maps centered observations to sources: `s = W x`.
    pub unmixing: DMatrix<f64>,
    pub iterations: usize,
    /// Mean absolute excess kurtosis of the recovered sources.
    pub non_gaussianity: f64,
}

/// Below this, the recovered sources look Gaussian and the support is unreliable.
pub const NON_GAUSSIANITY_WARN: f64 = 0.1;

/// `(W Wᵀ)^{-1/2} W`.
fn symmetric_decorrelation(w: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(w * w.transpose());
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.max(1e-300).sqrt()));
    &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose() * w
}

fn excess_kurtosis(row: &[f64]) -> f64 {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let m2 = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m4 = row.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2) - 3.0
}

/// Hard-threshold each row relative to its largest magnitude.
pub fn sparsify(w: &mut DMatrix<f64>, tau: f64) {
    for mut row in w.row_iter_mut() {
        let max = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for v in row.iter_mut() {
            if v.abs() < tau * max {
                *v = 0.0;
            }
        }
    }
}

/// `data` is samples × variables. Returns the thresholded unmixing matrix.
pub fn sparse_ica(data: &DMatrix<f64>, opts: &IcaOptions) -> Result<IcaResult, LearnError> {
    let (n, p) = data.shape();
    if n < 2 || p == 0 {
        return Err(LearnError::SingularData(format!("{n} rows × {p} columns")));
    }
    let mean = data.row_mean();
    let mut xc = data.clone();
    for mut row in xc.row_iter_mut() {
        row -= &mean;
    }
    let cov = xc.transpose() * &xc / n as f64;
    let scale = cov.diagonal().max();
    for j in 0..p {
        if cov[(j, j)] <= 1e-12 * scale || scale <= 0.0 {
            return Err(LearnError::SingularData(format!("column {j} is constant")));
        }
    }
    let eig = SymmetricEigen::new(cov);
    let max_ev = eig.eigenvalues.max();
    if eig.eigenvalues.min() <= 1e-14 * max_ev {
        return Err(LearnError::SingularData("covariance is rank deficient".into()));
    }
    // K = D^{-1/2} Eᵀ, z = K x
    let k = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt())) * eig.eigenvectors.transpose();
    let z = &k * xc.transpose();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let init = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut w = symmetric_decorrelation(&init);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        iterations += 1;
        let g = (&w * &z).map(f64::tanh);
        let g_prime_mean = DVector::from_iterator(
            p,
            g.row_iter()
                .map(|r| r.iter().map(|v| 1.0 - v * v).sum::<f64>() / n as f64),
        );
        let w_new =
            symmetric_decorrelation(&(&g * z.transpose() / n as f64 - DMatrix::from_diagonal(&g_prime_mean) * &w));
        let lim = (&w_new * w.transpose())
            .diagonal()
            .iter()
            .map(|d| (d.abs() - 1.0).abs())
            .fold(0.0, f64::max);
        w = w_new;
        if lim < opts.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        if opts.require_convergence {
            return Err(LearnError::NonConvergence {
                iterations: opts.max_iterations,
            });
        }
        log::warn!(
            "ICA stopped at the {}-iteration cap without converging",
            opts.max_iterations
        );
    }
    let sources = &w * &z;
    let non_gaussianity = sources
        .row_iter()
        .map(|r| excess_kurtosis(r.clone_owned().as_slice()).abs())
        .sum::<f64>()
        / p as f64;
    if non_gaussianity < NON_GAUSSIANITY_WARN {
        log::warn!("recovered sources are close to Gaussian (mean |excess kurtosis| = {non_gaussianity:.3})");
    }
    let mut unmixing = w * k;
    sparsify(&mut unmixing, opts.tau);
    Ok(IcaResult {
        unmixing,
        iterations,
        non_gaussianity,
    })
}
