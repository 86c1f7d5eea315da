//! Anomaly indices, discrete failure states, cascade cost and the
//! precision / regret metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::LineLimits;
use crate::power_flow::FlowState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("truth sequence has no stage after the initiating failure")]
    EmptyTruth,
    #[error("ground-truth sequences have zero total cost")]
    ZeroTruthCost,
}

/// Normalized per-line flow deviation between consecutive stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyVector {
    pub s: Vec<f64>,
    pub stage: usize,
}

impl AnomalyVector {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn l1(&self) -> f64 {
        self.s.iter().map(|v| v.abs()).sum()
    }
}

/// `s[i] = (now[i] - prev[i]) / p_max[i]` on plain slices.
pub fn anomaly_from_flows(now: &[f64], prev: &[f64], p_max: &[f64]) -> Result<Vec<f64>, MetricError> {
    for len in [prev.len(), p_max.len()] {
        if len != now.len() {
            return Err(MetricError::DimensionMismatch {
                expected: now.len(),
                got: len,
            });
        }
    }
    Ok(now.iter().zip(prev).zip(p_max).map(|((n, p), m)| (n - p) / m).collect())
}

pub fn anomaly_index(
    p_now: &FlowState,
    p_prev: &FlowState,
    limits: &LineLimits,
    stage: usize,
) -> Result<AnomalyVector, MetricError> {
    Ok(AnomalyVector {
        s: anomaly_from_flows(&p_now.p_line, &p_prev.p_line, &limits.p_max)?,
        stage,
    })
}

/// How continuous anomalies map onto the discrete levels `s_1..s_T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Discretization {
    /// T = 2: outage iff the flow reaches its limit or the line is already out.
    #[default]
    Outage,
    /// T = thresholds.len() + 2. `s_1` means no deviation; a nonzero |s|
    /// lands on `s_{2 + #(thresholds ≤ |s|)}`; removed lines sit at `s_T`.
    Graded { thresholds: Vec<f64> },
}

impl Discretization {
    pub fn levels(&self) -> usize {
        match self {
            Discretization::Outage => 2,
            Discretization::Graded { thresholds } => thresholds.len() + 2,
        }
    }
}

/// Discrete failure state; `levels[i]` is the 1-based label index (1 = healthy).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscreteAnomalyState {
    pub levels: Vec<u8>,
    pub t: usize,
}

impl DiscreteAnomalyState {
    pub const HEALTHY: u8 = 1;

    pub fn is_healthy(&self, line: usize) -> bool {
        self.levels[line] == Self::HEALTHY
    }

    /// Lines unhealthy now that were healthy in `prev`.
    pub fn newly_failed(&self, prev: &DiscreteAnomalyState) -> Vec<usize> {
        (0..self.levels.len())
            .filter(|&i| !self.is_healthy(i) && prev.is_healthy(i))
            .collect()
    }
}

/// Failed lines stay failed: anything in `removed` is forced to the top level.
pub fn discretize(
    s: &AnomalyVector,
    flows: &FlowState,
    limits: &LineLimits,
    removed: &[usize],
    scheme: &Discretization,
) -> DiscreteAnomalyState {
    let t = scheme.levels();
    let levels = (0..s.len())
        .map(|i| {
            if removed.contains(&i) {
                return t as u8;
            }
            match scheme {
                Discretization::Outage => {
                    if flows.p_line[i] >= limits.p_max[i] {
                        2
                    } else {
                        1
                    }
                }
                Discretization::Graded { thresholds } => {
                    let a = s.s[i].abs();
                    if a == 0.0 {
                        1
                    } else {
                        2 + thresholds.iter().filter(|&&th| a >= th).count() as u8
                    }
                }
            }
        })
        .collect();
    DiscreteAnomalyState { levels, t }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalReason {
    /// All flows back within limits.
    LimitsOk,
    Islanded,
    Horizon,
    NonConvergence,
    /// Predicted sequence stopped because the model proposed no next line.
    NoPrediction,
}

/// One cascade: a single failed line per stage (dense line ids), the anomaly
/// vector of each stage that could be solved, and the resulting cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeSequence {
    pub stages: Vec<usize>,
    pub stage_anomalies: Vec<AnomalyVector>,
    pub cost: f64,
    pub terminal: TerminalReason,
}

impl CascadeSequence {
    pub fn new(stages: Vec<usize>, stage_anomalies: Vec<AnomalyVector>, terminal: TerminalReason) -> Self {
        let cost = cascade_cost(&stage_anomalies);
        CascadeSequence {
            stages,
            stage_anomalies,
            cost,
            terminal,
        }
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }
}

/// Σ_m Σ_i |S_i[m]| over the recorded stages.
pub fn cascade_cost(stage_anomalies: &[AnomalyVector]) -> f64 {
    stage_anomalies.iter().map(AnomalyVector::l1).sum()
}

/// Fraction of stages 2..M whose true failure lies in the predicted set.
/// `predictions[m - 2]` is the set predicted for stage `m`.
pub fn precision(predictions: &[Vec<usize>], truth: &[usize]) -> Result<f64, MetricError> {
    if truth.len() < 2 {
        return Err(MetricError::EmptyTruth);
    }
    let stages = truth.len() - 1;
    if predictions.len() < stages {
        return Err(MetricError::DimensionMismatch {
            expected: stages,
            got: predictions.len(),
        });
    }
    let hits = truth[1..]
        .iter()
        .zip(predictions)
        .filter(|(u, pred)| pred.contains(u))
        .count();
    Ok(hits as f64 / stages as f64)
}

/// `1 - Σ predicted / Σ truth_top`.
pub fn regret(predicted_costs: &[f64], truth_top_costs: &[f64]) -> Result<f64, MetricError> {
    let truth: f64 = truth_top_costs.iter().sum();
    if truth == 0.0 {
        return Err(MetricError::ZeroTruthCost);
    }
    let predicted: f64 = predicted_costs.iter().sum();
    Ok(1.0 - predicted / truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn av(s: Vec<f64>, stage: usize) -> AnomalyVector {
        AnomalyVector { s, stage }
    }

    fn flows(p: Vec<f64>) -> FlowState {
        FlowState {
            p_line: p,
            converged: true,
            iterations: 0,
            max_mismatch: 0.0,
            v_mag: vec![],
            v_ang: vec![],
        }
    }

    #[test]
    fn anomaly_examples() {
        let lim = LineLimits {
            p_max: vec![100.0, 50.0],
        };
        let same = anomaly_index(&flows(vec![3.0, 4.0]), &flows(vec![3.0, 4.0]), &lim, 1).unwrap();
        assert_eq!(same.s, vec![0.0, 0.0]);
        let full = anomaly_from_flows(&[150.0], &[50.0], &[100.0]).unwrap();
        assert_eq!(full, vec![1.0]);
        let s = anomaly_index(&flows(vec![60.0, 10.0]), &flows(vec![40.0, 20.0]), &lim, 1).unwrap();
        assert!((s.s[0] - 0.2).abs() < 1e-15 && (s.s[1] + 0.2).abs() < 1e-15);
    }

    #[test]
    fn anomaly_dimension_mismatch() {
        assert_eq!(
            anomaly_from_flows(&[1.0, 2.0], &[1.0], &[1.0, 1.0]),
            Err(MetricError::DimensionMismatch { expected: 2, got: 1 })
        );
    }

    #[test]
    fn outage_threshold() {
        let lim = LineLimits {
            p_max: vec![100.0, 100.0, 100.0],
        };
        let s = av(vec![0.0; 3], 1);
        let st = discretize(&s, &flows(vec![101.0, 99.0, 0.0]), &lim, &[2], &Discretization::Outage);
        assert_eq!(st.levels, vec![2, 1, 2]);
        assert_eq!(st.t, 2);
    }

    #[test]
    fn graded_levels() {
        let scheme = Discretization::Graded { thresholds: vec![0.5] };
        let lim = LineLimits { p_max: vec![1.0; 3] };
        let s = av(vec![0.6, 0.2, 0.0], 1);
        let st = discretize(&s, &flows(vec![0.0; 3]), &lim, &[], &scheme);
        assert_eq!(st.t, 3);
        assert_eq!(st.levels, vec![3, 2, 1]);
    }

    #[test]
    fn newly_failed_requires_healthy_before() {
        let prev = DiscreteAnomalyState {
            levels: vec![1, 2, 1],
            t: 2,
        };
        let now = DiscreteAnomalyState {
            levels: vec![2, 2, 1],
            t: 2,
        };
        assert_eq!(now.newly_failed(&prev), vec![0]);
    }

    #[test]
    fn cost_examples() {
        assert_eq!(cascade_cost(&[av(vec![0.0, 0.0], 1), av(vec![0.0, 0.0], 2)]), 0.0);
        let two = [av(vec![0.5, -0.5], 1), av(vec![1.0, 0.0], 2)];
        assert!((cascade_cost(&two) - 2.0).abs() < 1e-15);
        assert!((cascade_cost(&[av(vec![0.2], 1)]) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn precision_examples() {
        let truth = [3, 1, 4, 5];
        let all = vec![vec![1], vec![4, 9], vec![5]];
        assert_eq!(precision(&all, &truth).unwrap(), 1.0);
        let none = vec![vec![0], vec![0], vec![0]];
        assert_eq!(precision(&none, &truth).unwrap(), 0.0);
        let two_of_three = vec![vec![1], vec![0], vec![5]];
        assert!((precision(&two_of_three, &truth).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(precision(&[], &[3]), Err(MetricError::EmptyTruth));
        // truncated truth: only realized stages count
        assert_eq!(precision(&all, &[3, 1]).unwrap(), 1.0);
    }

    #[test]
    fn regret_examples() {
        assert_eq!(regret(&[5.0, 3.0], &[5.0, 3.0]).unwrap(), 0.0);
        assert!((regret(&[30.0, 20.0], &[60.0, 40.0]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(regret(&[], &[1.0]).unwrap(), 1.0);
        assert_eq!(regret(&[1.0], &[0.0]), Err(MetricError::ZeroTruthCost));
    }

    proptest! {
        #[test]
        fn anomaly_antisymmetric(
            a in prop::collection::vec(0.0f64..500.0, 1..12),
            seed in 0.0f64..500.0,
        ) {
            let b: Vec<f64> = a.iter().map(|x| (x * 7.0 + seed) % 500.0).collect();
            let pmax: Vec<f64> = a.iter().map(|x| x + 1.0).collect();
            let fwd = anomaly_from_flows(&a, &b, &pmax).unwrap();
            let back = anomaly_from_flows(&b, &a, &pmax).unwrap();
            for (f, r) in fwd.iter().zip(back) {
                prop_assert_eq!(*f, -r);
            }
        }

        #[test]
        fn cost_ignores_stage_order(rows in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 4), 1..6)) {
            let stages: Vec<AnomalyVector> = rows.iter().cloned().enumerate().map(|(i, s)| av(s, i + 1)).collect();
            let mut rev = stages.clone();
            rev.reverse();
            prop_assert!((cascade_cost(&stages) - cascade_cost(&rev)).abs() < 1e-12);
        }

        #[test]
        fn precision_in_unit_interval(
            truth in prop::collection::vec(0usize..10, 2..6),
            preds in prop::collection::vec(prop::collection::vec(0usize..10, 0..4), 5),
        ) {
            let p = precision(&preds, &truth).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
        }

        #[test]
        fn regret_nonnegative_against_true_top(costs in prop::collection::vec(0.01f64..10.0, 3..12), d in 1usize..3) {
            // any d-subset of the pool has regret >= 0 against the true top d
            let mut sorted = costs.clone();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let top = &sorted[..d];
            for start in 0..=costs.len() - d {
                let r = regret(&costs[start..start + d], top).unwrap();
                prop_assert!((-1e-12..=1.0).contains(&r));
            }
        }
    }
}
