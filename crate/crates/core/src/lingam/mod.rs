//! Cyclic LiNGAM: unmixing by sparse ICA, row assignment, row scaling,
//! then `B = I - W*`.

pub mod assignment;
pub mod ica;
pub mod synthetic;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::ObservationalDataset;
use assignment::{best_assignment, permute_rows};
use ica::{sparse_ica, IcaOptions};

pub const ZERO_DIAGONAL_GUARD: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error("singular data: {0}")]
    SingularData(String),
    #[error("ICA did not converge in {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("diagonal entry {row} is zero after assignment")]
    ZeroDiagonal { row: usize },
    #[error("learning failed for {} of the datasets", failed.len())]
    PartialFailure {
        failed: Vec<(usize, String)>,
        learned: Box<CausalModelSet>,
    },
}

mod matrix_rows {
    use nalgebra::DMatrix;
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        super::matrix_from_rows(&rows).map_err(D::Error::custom)
    }
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != m) {
        return Err("ragged matrix rows".into());
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

/// Learned coefficients for one initiating line. `b[(i, j)] != 0` means
/// line `j` drives anomalies on line `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalModel {
    pub initiating_line: usize,
    pub tau: f64,
    #[serde(with = "matrix_rows")]
    pub b: DMatrix<f64>,
    pub non_gaussianity: f64,
}

impl CausalModel {
    pub fn n(&self) -> usize {
        self.b.nrows()
    }

    pub fn edge_count(&self) -> usize {
        self.b.iter().filter(|v| **v != 0.0).count()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CausalModelSet {
    pub models: BTreeMap<usize, CausalModel>,
}

impl CausalModelSet {
    pub fn get(&self, line: usize) -> Option<&CausalModel> {
        self.models.get(&line)
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Number of lines each model ranges over.
    pub fn n(&self) -> usize {
        self.models.values().next().map_or(0, CausalModel::n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LingamOptions {
    pub tau: f64,
    pub seed: u64,
    pub max_iterations: usize,
    /// Laplace measurement noise added before ICA, as a fraction of each
    /// column's standard deviation. Flow data has exact linear dependencies
    /// (lossless branches through buses without injection); this keeps the
    /// covariance invertible. 0 disables it.
    pub jitter: f64,
    /// Run ICA on unit-variance columns and map `B` back to the original
    /// units. Anomaly columns differ in scale by orders of magnitude.
    pub standardize: bool,
    /// Fail at the ICA iteration cap instead of keeping the last iterate
    /// with a warning. Near-Gaussian load-driven sources often stall just
    /// above the tolerance.
    pub require_convergence: bool,
}

impl Default for LingamOptions {
    fn default() -> Self {
        LingamOptions {
            tau: 0.05,
            seed: 0,
            max_iterations: 500,
            jitter: 5e-2,
            standardize: true,
            require_convergence: false,
        }
    }
}

/// Divide each row by its diagonal entry.
pub fn rescale_rows(w: &DMatrix<f64>) -> Result<DMatrix<f64>, LearnError> {
    let mut out = w.clone();
    for i in 0..w.nrows() {
        let d = w[(i, i)];
        if d.abs() < ZERO_DIAGONAL_GUARD {
            return Err(LearnError::ZeroDiagonal { row: i });
        }
        out.row_mut(i).scale_mut(1.0 / d);
    }
    Ok(out)
}

fn column_stds(data: &DMatrix<f64>) -> Vec<f64> {
    let n = data.nrows() as f64;
    data.column_iter()
        .map(|col| {
            let mean = col.sum() / n;
            (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
        })
        .collect()
}

/// `x + jitter · std_j · e` with seeded standard Laplace `e`.
pub fn add_jitter(data: &DMatrix<f64>, jitter: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let stds = column_stds(data);
    let mut out = data.clone();
    for (mut col, std) in out.column_iter_mut().zip(stds) {
        for v in col.iter_mut() {
            *v += jitter * std * synthetic::laplace(&mut rng);
        }
    }
    out
}

/// Learn `B` from a samples × variables matrix.
pub fn learn_matrix(data: &DMatrix<f64>, opts: &LingamOptions) -> Result<(DMatrix<f64>, f64), LearnError> {
    let mut data = if opts.jitter > 0.0 {
        add_jitter(data, opts.jitter, opts.seed)
    } else {
        data.clone()
    };
    // Constant columns keep scale 1 so ICA reports them as singular.
    let scales: Vec<f64> = if opts.standardize {
        column_stds(&data)
            .into_iter()
            .map(|s| if s > 0.0 { s } else { 1.0 })
            .collect()
    } else {
        vec![1.0; data.ncols()]
    };
    for (mut col, s) in data.column_iter_mut().zip(&scales) {
        col /= *s;
    }
    let ica = sparse_ica(
        &data,
        &IcaOptions {
            max_iterations: opts.max_iterations,
            tau: opts.tau,
            seed: opts.seed,
            require_convergence: opts.require_convergence,
            ..IcaOptions::default()
        },
    )?;
    let perm = best_assignment(&ica.unmixing);
    let w_star = rescale_rows(&permute_rows(&ica.unmixing, &perm))?;
    let n = w_star.nrows();
    let mut b = DMatrix::identity(n, n) - w_star;
    b.fill_diagonal(0.0);
    // z_i = x_i / s_i, so a standardized coefficient maps back as b_ij s_i / s_j.
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] *= scales[i] / scales[j];
        }
    }
    Ok((b, ica.non_gaussianity))
}

pub fn learn_model(data: &ObservationalDataset, opts: &LingamOptions) -> Result<CausalModel, LearnError> {
    if data.n_rows < crate::dataset::min_rows(data.n_cols) {
        return Err(LearnError::SingularData(format!(
            "{} rows for {} columns",
            data.n_rows, data.n_cols
        )));
    }
    let (b, non_gaussianity) = learn_matrix(&data.to_matrix(), opts)?;
    Ok(CausalModel {
        initiating_line: data.initiating_line,
        tau: opts.tau,
        b,
        non_gaussianity,
    })
}

/// One model per dataset; failures are collected, not fatal to the rest.
pub fn learn_model_set(datasets: &[ObservationalDataset], opts: &LingamOptions) -> Result<CausalModelSet, LearnError> {
    let results: Vec<(usize, Result<CausalModel, LearnError>)> = datasets
        .par_iter()
        .map(|d| (d.initiating_line, learn_model(d, opts)))
        .collect();
    let mut set = CausalModelSet::default();
    let mut failed = Vec::new();
    for (k, r) in results {
        match r {
            Ok(m) => {
                set.models.insert(k, m);
            }
            Err(e) => failed.push((k, e.to_string())),
        }
    }
    if failed.is_empty() {
        Ok(set)
    } else {
        Err(LearnError::PartialFailure {
            failed,
            learned: Box::new(set),
        })
    }
}
