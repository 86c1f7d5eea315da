//! Observational training data: smoothed random load profiles, each step
//! solved with and without the initiating outage.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anomaly::anomaly_from_flows;
use crate::grid::{GridCase, LineLimits};
use crate::power_flow::{solve_ac_with, AcOptions, FlowState};
use crate::topology::{is_islanding, LineSpace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("invalid profile parameters: {0}")]
    InvalidProfile(String),
    #[error("line {label} islands the network")]
    IslandingInitiator { label: usize },
    #[error("line {label}: only {rows} valid rows, need at least {needed}")]
    TooFewValidRows { label: usize, rows: usize, needed: usize },
    #[error("base case does not solve")]
    BaseNonConvergence,
    #[error("malformed dataset: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileParams {
    pub steps: usize,
    pub lo: f64,
    pub hi: f64,
    pub kernel_window: usize,
    pub seed: u64,
}

impl Default for ProfileParams {
    fn default() -> Self {
        ProfileParams {
            steps: 2000,
            lo: 0.9,
            hi: 1.1,
            kernel_window: 5,
            seed: 0,
        }
    }
}

/// Per-step demand scales for every load bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadProfile {
    pub params: ProfileParams,
    /// Bus positions that carry load, in case order.
    pub load_buses: Vec<usize>,
    /// `steps[l][b]` scales load bus `load_buses[b]` at step `l`.
    pub steps: Vec<Vec<f64>>,
}

impl LoadProfile {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Scale vector over all buses for step `l` (1.0 on buses without load).
    pub fn bus_scales(&self, l: usize, n_buses: usize) -> Vec<f64> {
        let mut out = vec![1.0; n_buses];
        for (&bus, &s) in self.load_buses.iter().zip(&self.steps[l]) {
            out[bus] = s;
        }
        out
    }
}

/// Centered moving average, indices clamped at both ends.
pub fn moving_average(x: &[f64], window: usize) -> Vec<f64> {
    let n = x.len() as isize;
    let before = (window as isize - 1) / 2;
    let after = window as isize - 1 - before;
    (0..n)
        .map(|t| {
            let sum: f64 = (t - before..=t + after).map(|j| x[j.clamp(0, n - 1) as usize]).sum();
            sum / window as f64
        })
        .collect()
}

pub fn make_load_profile(case: &GridCase, params: ProfileParams) -> Result<LoadProfile, DatasetError> {
    let ProfileParams {
        steps,
        lo,
        hi,
        kernel_window,
        seed,
    } = params;
    if kernel_window < 1 || steps < kernel_window || steps < 2 {
        return Err(DatasetError::InvalidProfile(format!(
            "need steps >= kernel_window >= 1 and steps >= 2 (steps = {steps}, window = {kernel_window})"
        )));
    }
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(DatasetError::InvalidProfile(format!(
            "need 0 < lo <= hi (lo = {lo}, hi = {hi})"
        )));
    }
    let load_buses = case.load_buses();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let series: Vec<Vec<f64>> = load_buses
        .iter()
        .map(|_| {
            let raw: Vec<f64> = (0..steps).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect();
            moving_average(&raw, kernel_window)
                .into_iter()
                .map(|v| v.clamp(lo, hi))
                .collect()
        })
        .collect();
    let steps = (0..steps).map(|l| series.iter().map(|s| s[l]).collect()).collect();
    Ok(LoadProfile {
        params,
        load_buses,
        steps,
    })
}

/// Anomaly rows for one initiating line, one per surviving profile step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationalDataset {
    /// Dense line id of the initiating outage.
    pub initiating_line: usize,
    pub n_rows: usize,
    pub n_cols: usize,
    /// Row-major `n_rows × n_cols`.
    pub samples: Vec<f64>,
    /// Profile step of each row.
    pub step_index: Vec<usize>,
    pub dropped: usize,
}

impl ObservationalDataset {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.samples[r * self.n_cols..(r + 1) * self.n_cols]
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_rows, self.n_cols, &self.samples)
    }

    pub fn from_rows(initiating_line: usize, rows: &[Vec<f64>]) -> Result<Self, DatasetError> {
        let n_cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(DatasetError::Malformed("ragged rows".into()));
        }
        Ok(ObservationalDataset {
            initiating_line,
            n_rows: rows.len(),
            n_cols,
            samples: rows.concat(),
            step_index: (0..rows.len()).collect(),
            dropped: 0,
        })
    }

    /// CSV with a header of 1-based line labels; values use shortest
    /// round-trip formatting so re-reading is exact.
    pub fn to_csv(&self, space: &LineSpace) -> String {
        let mut out = String::from("step");
        for j in 0..self.n_cols {
            out.push_str(&format!(",L{}", space.label(j)));
        }
        out.push('\n');
        for r in 0..self.n_rows {
            out.push_str(&self.step_index[r].to_string());
            for v in self.row(r) {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, initiating_line: usize, dropped: usize) -> Result<Self, DatasetError> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| DatasetError::Malformed("empty file".into()))?;
        let n_cols = header.split(',').count() - 1;
        let mut samples = Vec::new();
        let mut step_index = Vec::new();
        for (i, line) in lines.filter(|l| !l.is_empty()).enumerate() {
            let mut fields = line.split(',');
            let step = fields.next().unwrap_or_default();
            step_index.push(
                step.parse()
                    .map_err(|_| DatasetError::Malformed(format!("row {}: bad step {step:?}", i + 1)))?,
            );
            let before = samples.len();
            for f in fields {
                samples.push(
                    f.parse::<f64>()
                        .map_err(|_| DatasetError::Malformed(format!("row {}: bad value {f:?}", i + 1)))?,
                );
            }
            if samples.len() - before != n_cols {
                return Err(DatasetError::Malformed(format!(
                    "row {}: expected {n_cols} values",
                    i + 1
                )));
            }
        }
        Ok(ObservationalDataset {
            initiating_line,
            n_rows: step_index.len(),
            n_cols,
            samples,
            step_index,
            dropped,
        })
    }
}

/// Metadata written next to each dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub case_id: String,
    pub initiating_label: usize,
    pub profile: ProfileParams,
    pub n_rows: usize,
    pub n_cols: usize,
    pub dropped: usize,
}

/// Minimum surviving rows for a dataset over `n` lines.
pub fn min_rows(n: usize) -> usize {
    10 * n
}

/// For each profile step, the anomaly between the intact flows and the flows
/// with `line` removed. Steps where either solve fails are dropped.
pub fn generate_observational(
    case: &GridCase,
    limits: &LineLimits,
    space: &LineSpace,
    line: usize,
    profile: &LoadProfile,
) -> Result<ObservationalDataset, DatasetError> {
    let label = space.label(line);
    let branch = space.branch(line);
    if is_islanding(case, &[branch]) {
        return Err(DatasetError::IslandingInitiator { label });
    }
    let opts = AcOptions::default();
    let base = solve_ac_with(case, &[], &opts, None).map_err(|_| DatasetError::BaseNonConvergence)?;
    let p_max = space.project(&limits.p_max);
    let rows: Vec<Option<Vec<f64>>> = (0..profile.len())
        .into_par_iter()
        .map(|l| {
            let loaded = case.with_bus_load_scales(&profile.bus_scales(l, case.n_buses()));
            let intact: FlowState = solve_ac_with(&loaded, &[], &opts, Some(&base)).ok()?;
            let outaged = solve_ac_with(&loaded, &[branch], &opts, Some(&intact)).ok()?;
            anomaly_from_flows(&space.project(&outaged.p_line), &space.project(&intact.p_line), &p_max).ok()
        })
        .collect();
    let n_cols = space.len();
    let mut samples = Vec::with_capacity(rows.len() * n_cols);
    let mut step_index = Vec::with_capacity(rows.len());
    for (l, row) in rows.into_iter().enumerate() {
        if let Some(r) = row {
            samples.extend(r);
            step_index.push(l);
        }
    }
    let n_rows = step_index.len();
    let dropped = profile.len() - n_rows;
    if dropped > 0 {
        log::warn!("line {label}: dropped {dropped} of {} profile steps", profile.len());
    }
    if n_rows < min_rows(n_cols) {
        return Err(DatasetError::TooFewValidRows {
            label,
            rows: n_rows,
            needed: min_rows(n_cols),
        });
    }
    Ok(ObservationalDataset {
        initiating_line: line,
        n_rows,
        n_cols,
        samples,
        step_index,
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{assign_limits, parse_case, LimitRule};
    use crate::power_flow::solve_ac;

    const RING: &str = r#"
mpc.baseMVA = 100;
mpc.bus = [
 1 3 0 0 0 0 1 1 0 0 1 1.1 0.9;
 2 1 30 5 0 0 1 1 0 0 1 1.1 0.9;
 3 1 40 5 0 0 1 1 0 0 1 1.1 0.9;
 4 1 20 5 0 0 1 1 0 0 1 1.1 0.9;
];
mpc.gen = [ 1 90 0 100 -100 1 100 1 200 0; ];
mpc.branch = [
 1 2 0.01 0.1 0 0 0 0 0 0 1 -360 360;
 2 3 0.01 0.1 0 0 0 0 0 0 1 -360 360;
 3 4 0.01 0.1 0 0 0 0 0 0 1 -360 360;
 4 1 0.01 0.1 0 0 0 0 0 0 1 -360 360;
 1 3 0.01 0.1 0 0 0 0 0 0 1 -360 360;
];
"#;

    fn params(steps: usize, lo: f64, hi: f64, w: usize) -> ProfileParams {
        ProfileParams {
            steps,
            lo,
            hi,
            kernel_window: w,
            seed: 11,
        }
    }

    #[test]
    fn moving_average_examples() {
        assert_eq!(moving_average(&[1.0, 2.0, 3.0], 1), vec![1.0, 2.0, 3.0]);
        // window 3, clamped: (1+1+2)/3, (1+2+3)/3, (2+3+3)/3
        let m = moving_average(&[1.0, 2.0, 3.0], 3);
        assert!((m[0] - 4.0 / 3.0).abs() < 1e-15);
        assert!((m[1] - 2.0).abs() < 1e-15);
        assert!((m[2] - 8.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn profile_edge_cases() {
        let case = parse_case(RING).unwrap();
        let flat = make_load_profile(&case, params(10, 1.0, 1.0, 5)).unwrap();
        assert!(flat.steps.iter().flatten().all(|&s| s == 1.0));
        assert_eq!(flat.load_buses, vec![1, 2, 3]);

        let a = make_load_profile(&case, params(50, 0.9, 1.1, 5)).unwrap();
        let b = make_load_profile(&case, params(50, 0.9, 1.1, 5)).unwrap();
        assert_eq!(a, b);
        assert!(a.steps.iter().flatten().all(|&s| (0.9..=1.1).contains(&s)));

        // window 1 leaves the raw draws: same stream, no smoothing
        let raw = make_load_profile(&case, params(50, 0.9, 1.1, 1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let first: f64 = 0.9 + 0.2 * rng.random::<f64>();
        assert_eq!(raw.steps[0][0], first);

        assert!(make_load_profile(&case, params(3, 0.9, 1.1, 5)).is_err());
        assert!(make_load_profile(&case, params(10, 1.2, 1.1, 1)).is_err());
    }

    #[test]
    fn dataset_shape_and_sign() {
        let case = parse_case(RING).unwrap();
        let base = solve_ac(&case, &[]).unwrap();
        let limits = assign_limits(&case, &base, LimitRule::default()).unwrap();
        let space = LineSpace::viable(&case);
        let profile = make_load_profile(&case, params(80, 0.9, 1.1, 5)).unwrap();
        let d = generate_observational(&case, &limits, &space, 2, &profile).unwrap();
        assert_eq!(d.n_rows + d.dropped, 80);
        assert_eq!(d.n_cols, 5);
        for r in 0..d.n_rows {
            assert!(d.row(r)[2] < 0.0);
        }
        let scaled = generate_observational(&case, &limits.scaled(2.0), &space, 2, &profile).unwrap();
        for (a, b) in d.samples.iter().zip(&scaled.samples) {
            assert!((a / 2.0 - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
        let other = generate_observational(&case, &limits, &space, 0, &profile).unwrap();
        assert_ne!(d.samples, other.samples);

        let csv = d.to_csv(&space);
        let back = ObservationalDataset::from_csv(&csv, 2, d.dropped).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn constant_profile_gives_identical_rows() {
        let case = parse_case(RING).unwrap();
        let base = solve_ac(&case, &[]).unwrap();
        let limits = assign_limits(&case, &base, LimitRule::default()).unwrap();
        let space = LineSpace::viable(&case);
        let profile = make_load_profile(&case, params(60, 1.0, 1.0, 3)).unwrap();
        let d = generate_observational(&case, &limits, &space, 1, &profile).unwrap();
        for r in 1..d.n_rows {
            assert_eq!(d.row(r), d.row(0));
        }
    }

    #[test]
    fn too_few_rows() {
        let case = parse_case(RING).unwrap();
        let base = solve_ac(&case, &[]).unwrap();
        let limits = assign_limits(&case, &base, LimitRule::default()).unwrap();
        let space = LineSpace::viable(&case);
        let profile = make_load_profile(&case, params(20, 0.9, 1.1, 3)).unwrap();
        assert!(matches!(
            generate_observational(&case, &limits, &space, 1, &profile),
            Err(DatasetError::TooFewValidRows {
                rows: 20,
                needed: 50,
                ..
            })
        ));
    }
}
