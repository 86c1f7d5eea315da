//! Row permutation that makes the diagonal of an unmixing matrix as large as
//! possible, solved as a linear assignment problem.

use nalgebra::DMatrix;

pub const COST_GUARD: f64 = 1e-12;

/// `cost[i][j] = 1 / max(|w[i, j]|, guard)`: cost of placing row `i` at position `j`.
pub fn assignment_costs(w: &DMatrix<f64>) -> DMatrix<f64> {
    w.map(|v| 1.0 / v.abs().max(COST_GUARD))
}

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method
/// with potentials, O(n³)). Returns `col_of_row`.
pub fn hungarian(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "square cost matrix");
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays with a sentinel column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of_col[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of_row = vec![0; n];
    for j in 1..=n {
        col_of_row[row_of_col[j] - 1] = j - 1;
    }
    col_of_row
}

/// `perm[i]` is the row of `w` placed at position `i`, minimizing
/// `Σ_i 1/|w[perm[i], i]|`.
pub fn best_assignment(w: &DMatrix<f64>) -> Vec<usize> {
    let col_of_row = hungarian(&assignment_costs(w));
    let mut perm = vec![0; col_of_row.len()];
    for (row, &col) in col_of_row.iter().enumerate() {
        perm[col] = row;
    }
    perm
}

pub fn permute_rows(w: &DMatrix<f64>, perm: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(w.nrows(), w.ncols(), |i, j| w[(perm[i], j)])
}

/// `Σ_i 1/max(|w[perm[i], i]|, guard)`.
pub fn assignment_objective(w: &DMatrix<f64>, perm: &[usize]) -> f64 {
    perm.iter()
        .enumerate()
        .map(|(i, &r)| 1.0 / w[(r, i)].abs().max(COST_GUARD))
        .sum()
}
