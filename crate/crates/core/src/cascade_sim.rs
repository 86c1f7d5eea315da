//! Cascading-failure simulation.
//!
//! [`enumerate_ground_truth`] expands every overload-driven outage sequence
//! (one removal per stage, branching on each overloaded line),
//! [`enumerate_worst_case`] walks every no-repeat line ordering regardless of
//! overloads, and [`sample_stochastic_cascades`] draws DC cascades that pick a
//! single overloaded line per stage by fractional overload.
//!
//! Every stage re-solves the network with all removals so far, warm-started
//! from the previous stage. A stage whose removal islands the network or whose
//! flow fails to converge ends the sequence; its line is kept in the sequence
//! but contributes no anomaly vector.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anomaly::{anomaly_from_flows, AnomalyVector, CascadeSequence, TerminalReason};
use crate::grid::{GridCase, LineLimits};
use crate::power_flow::{solve_ac_with, solve_dc, AcOptions, FlowError, FlowModel, FlowState};
use crate::topology::{is_islanding, LineSpace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("base case does not solve: {0}")]
    BaseCaseNonConvergence(FlowError),
    #[error("limits cover {got} lines, case has {expected}")]
    LimitsMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthSet {
    pub sequences: Vec<CascadeSequence>,
    pub horizon: usize,
    pub case_id: String,
    pub load_scale: f64,
}

impl GroundTruthSet {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// The `d` costliest sequences, ties broken by lexicographic line order.
    pub fn top_by_cost(&self, d: usize) -> Vec<&CascadeSequence> {
        let mut refs: Vec<&CascadeSequence> = self.sequences.iter().collect();
        sort_by_cost(&mut refs);
        refs.truncate(d);
        refs
    }
}

/// Cost descending, then lexicographic line order.
pub fn sort_by_cost(seqs: &mut [&CascadeSequence]) {
    seqs.sort_by(|a, b| b.cost.total_cmp(&a.cost).then_with(|| a.stages.cmp(&b.stages)));
}

/// Stage-by-stage network re-solver shared by enumeration and replay.
pub struct CascadeEngine<'a> {
    case: &'a GridCase,
    space: &'a LineSpace,
    model: FlowModel,
    p_max: Vec<f64>,
    base: FlowState,
    base_flows: Vec<f64>,
}

impl<'a> CascadeEngine<'a> {
    /// `case` must already carry the intended loading.
    pub fn new(
        case: &'a GridCase,
        limits: &LineLimits,
        space: &'a LineSpace,
        model: FlowModel,
    ) -> Result<Self, SimError> {
        if limits.len() != case.n_lines() {
            return Err(SimError::LimitsMismatch {
                expected: case.n_lines(),
                got: limits.len(),
            });
        }
        let base = match model {
            FlowModel::Ac => solve_ac_with(case, &[], &AcOptions::default(), None),
            FlowModel::Dc => solve_dc(case, &[]),
        }
        .map_err(SimError::BaseCaseNonConvergence)?;
        let base_flows = space.project(&base.p_line);
        Ok(CascadeEngine {
            case,
            space,
            model,
            p_max: space.project(&limits.p_max),
            base,
            base_flows,
        })
    }

    pub fn space(&self) -> &LineSpace {
        self.space
    }

    pub fn base_state(&self) -> &FlowState {
        &self.base
    }

    /// Base-case flows on the line space.
    pub fn base_flows(&self) -> &[f64] {
        &self.base_flows
    }

    pub fn p_max(&self) -> &[f64] {
        &self.p_max
    }

    /// Solve with `lines` (dense ids) removed.
    pub fn solve(&self, lines: &[usize], warm: Option<&FlowState>) -> Result<FlowState, FlowError> {
        let removed = self.space.to_branches(lines);
        match self.model {
            FlowModel::Ac => solve_ac_with(self.case, &removed, &AcOptions::default(), warm),
            FlowModel::Dc => solve_dc(self.case, &removed),
        }
    }

    pub fn islands(&self, lines: &[usize]) -> bool {
        is_islanding(self.case, &self.space.to_branches(lines))
    }

    /// Advance one stage: remove `lines` (the last one is new) and return the
    /// new state with the stage anomaly vector, or the terminal reason.
    fn advance(
        &self,
        lines: &[usize],
        prev: &FlowState,
        prev_flows: &[f64],
    ) -> Result<(FlowState, Vec<f64>, AnomalyVector), TerminalReason> {
        if self.islands(lines) {
            return Err(TerminalReason::Islanded);
        }
        let state = match self.solve(lines, Some(prev)) {
            Ok(s) => s,
            Err(FlowError::Islanded) => return Err(TerminalReason::Islanded),
            Err(_) => return Err(TerminalReason::NonConvergence),
        };
        let flows = self.space.project(&state.p_line);
        let s = anomaly_from_flows(&flows, prev_flows, &self.p_max).expect("same line space");
        Ok((state, flows, AnomalyVector { s, stage: lines.len() }))
    }

    /// Lines (dense ids, ascending) at or above their limit, excluding `failed`.
    pub fn overloaded(&self, flows: &[f64], failed: &[usize]) -> Vec<usize> {
        (0..flows.len())
            .filter(|i| !failed.contains(i) && flows[*i] >= self.p_max[*i])
            .collect()
    }

    /// Replay a fixed failure order from the base case. Stops early on
    /// islanding or non-convergence; otherwise ends with `complete`.
    pub fn replay(&self, lines: &[usize], complete: TerminalReason) -> CascadeSequence {
        let mut prev = self.base.clone();
        let mut prev_flows = self.base_flows.clone();
        let mut anomalies = Vec::with_capacity(lines.len());
        for m in 1..=lines.len() {
            match self.advance(&lines[..m], &prev, &prev_flows) {
                Ok((state, flows, s)) => {
                    anomalies.push(s);
                    prev = state;
                    prev_flows = flows;
                }
                Err(reason) => {
                    return CascadeSequence::new(lines[..m].to_vec(), anomalies, reason);
                }
            }
        }
        CascadeSequence::new(lines.to_vec(), anomalies, complete)
    }

    /// Depth-first expansion from one initiating line; `children` picks the
    /// next lines to branch on from a solved stage (empty = stop, limits ok).
    fn expand<F>(&self, initiating: usize, horizon: usize, children: &F, out: &mut Vec<CascadeSequence>)
    where
        F: Fn(&Self, &[usize], &[f64]) -> Vec<usize>,
    {
        let mut lines = vec![initiating];
        let mut anomalies = Vec::new();
        self.expand_from(
            &mut lines,
            &mut anomalies,
            &self.base,
            &self.base_flows,
            horizon,
            children,
            out,
        );
    }

    #[allow(clippy::too_many_arguments)]
    fn expand_from<F>(
        &self,
        lines: &mut Vec<usize>,
        anomalies: &mut Vec<AnomalyVector>,
        prev: &FlowState,
        prev_flows: &[f64],
        horizon: usize,
        children: &F,
        out: &mut Vec<CascadeSequence>,
    ) where
        F: Fn(&Self, &[usize], &[f64]) -> Vec<usize>,
    {
        let (state, flows, s) = match self.advance(lines, prev, prev_flows) {
            Ok(v) => v,
            Err(reason) => {
                out.push(CascadeSequence::new(lines.clone(), anomalies.clone(), reason));
                return;
            }
        };
        anomalies.push(s);
        if lines.len() >= horizon {
            out.push(CascadeSequence::new(
                lines.clone(),
                anomalies.clone(),
                TerminalReason::Horizon,
            ));
        } else {
            let next = children(self, lines, &flows);
            if next.is_empty() {
                out.push(CascadeSequence::new(
                    lines.clone(),
                    anomalies.clone(),
                    TerminalReason::LimitsOk,
                ));
            }
            for j in next {
                lines.push(j);
                self.expand_from(lines, anomalies, &state, &flows, horizon, children, out);
                lines.pop();
            }
        }
        anomalies.pop();
    }
}

fn check_horizon(horizon: usize) -> Result<(), SimError> {
    if horizon == 0 {
        Err(SimError::InvalidParameter("horizon M must be >= 1".into()))
    } else {
        Ok(())
    }
}

/// All overload-dependent cascades of up to `horizon` stages, one tree per
/// initiating line, at `load_scale` × base demand.
pub fn enumerate_ground_truth(
    case: &GridCase,
    limits: &LineLimits,
    space: &LineSpace,
    horizon: usize,
    load_scale: f64,
    case_id: &str,
) -> Result<GroundTruthSet, SimError> {
    check_horizon(horizon)?;
    let loaded = case.with_load_scale(load_scale);
    let engine = CascadeEngine::new(&loaded, limits, space, FlowModel::Ac)?;
    let children = |e: &CascadeEngine, lines: &[usize], flows: &[f64]| e.overloaded(flows, lines);
    let sequences = (0..space.len())
        .into_par_iter()
        .map(|k| {
            let mut out = Vec::new();
            engine.expand(k, horizon, &children, &mut out);
            out
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    Ok(GroundTruthSet {
        sequences,
        horizon,
        case_id: case_id.to_string(),
        load_scale,
    })
}

/// Every no-repeat ordering of up to `horizon` lines of the line space,
/// truncated only where a prefix islands the network or fails to solve.
pub fn enumerate_worst_case(
    case: &GridCase,
    limits: &LineLimits,
    space: &LineSpace,
    horizon: usize,
    model: FlowModel,
    case_id: &str,
) -> Result<GroundTruthSet, SimError> {
    check_horizon(horizon)?;
    let engine = CascadeEngine::new(case, limits, space, model)?;
    let n = space.len();
    let children =
        move |_: &CascadeEngine, lines: &[usize], _: &[f64]| (0..n).filter(|j| !lines.contains(j)).collect::<Vec<_>>();
    let sequences = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut out = Vec::new();
            engine.expand(k, horizon, &children, &mut out);
            out
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    Ok(GroundTruthSet {
        sequences,
        horizon,
        case_id: case_id.to_string(),
        load_scale: 1.0,
    })
}

/// Count of all worst-case sequences plus the `d` costliest, without holding
/// the full set in memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseSummary {
    pub count: usize,
    pub top: Vec<CascadeSequence>,
}

pub fn worst_case_top(
    case: &GridCase,
    limits: &LineLimits,
    space: &LineSpace,
    horizon: usize,
    model: FlowModel,
    d: usize,
) -> Result<WorstCaseSummary, SimError> {
    check_horizon(horizon)?;
    let engine = CascadeEngine::new(case, limits, space, model)?;
    let n = space.len();
    let children =
        move |_: &CascadeEngine, lines: &[usize], _: &[f64]| (0..n).filter(|j| !lines.contains(j)).collect::<Vec<_>>();
    let per_root: Vec<(usize, Vec<CascadeSequence>)> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut out = Vec::new();
            engine.expand(k, horizon, &children, &mut out);
            let count = out.len();
            let mut refs: Vec<&CascadeSequence> = out.iter().collect();
            sort_by_cost(&mut refs);
            (count, refs.into_iter().take(d).cloned().collect())
        })
        .collect();
    let count = per_root.iter().map(|(c, _)| c).sum();
    let pool: Vec<CascadeSequence> = per_root.into_iter().flat_map(|(_, t)| t).collect();
    let mut refs: Vec<&CascadeSequence> = pool.iter().collect();
    sort_by_cost(&mut refs);
    let top = refs.into_iter().take(d).cloned().collect();
    Ok(WorstCaseSummary { count, top })
}

/// Selection probabilities proportional to fractional overload `P_i / p_max_i`.
pub fn overload_choice_probabilities(fractional: &[f64]) -> Vec<f64> {
    let total: f64 = fractional.iter().sum();
    fractional.iter().map(|f| f / total).collect()
}

fn sample_index<R: Rng>(probabilities: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probabilities.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probabilities.len() - 1
}

/// Stochastic DC cascades for influence-graph training. Each sample starts
/// from a uniformly drawn line; when several lines overload, one is removed,
/// drawn in proportion to its fractional overload.
pub fn sample_stochastic_cascades(
    case: &GridCase,
    limits: &LineLimits,
    space: &LineSpace,
    horizon: usize,
    count: usize,
    seed: u64,
    case_id: &str,
) -> Result<GroundTruthSet, SimError> {
    check_horizon(horizon)?;
    if count == 0 {
        return Err(SimError::InvalidParameter("count must be >= 1".into()));
    }
    let engine = CascadeEngine::new(case, limits, space, FlowModel::Dc)?;
    let n = space.len();
    let sequences = (0..count)
        .into_par_iter()
        .map(|idx| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(idx as u64);
            let mut lines = vec![rng.random_range(0..n)];
            let mut prev = engine.base.clone();
            let mut prev_flows = engine.base_flows.clone();
            let mut anomalies = Vec::new();
            loop {
                let (state, flows, s) = match engine.advance(&lines, &prev, &prev_flows) {
                    Ok(v) => v,
                    Err(reason) => return CascadeSequence::new(lines, anomalies, reason),
                };
                anomalies.push(s);
                if lines.len() >= horizon {
                    return CascadeSequence::new(lines, anomalies, TerminalReason::Horizon);
                }
                let over = engine.overloaded(&flows, &lines);
                if over.is_empty() {
                    return CascadeSequence::new(lines, anomalies, TerminalReason::LimitsOk);
                }
                let fractional: Vec<f64> = over.iter().map(|&i| flows[i] / engine.p_max[i]).collect();
                let pick = sample_index(&overload_choice_probabilities(&fractional), &mut rng);
                lines.push(over[pick]);
                prev = state;
                prev_flows = flows;
            }
        })
        .collect();
    Ok(GroundTruthSet {
        sequences,
        horizon,
        case_id: case_id.to_string(),
        load_scale: 1.0,
    })
}

/// One JSON-lines record; lines are 1-based branch labels, anomaly rows follow
/// the line-space order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub lines: Vec<usize>,
    pub cost: f64,
    pub terminal_reason: TerminalReason,
    pub stage_anomalies: Vec<Vec<f64>>,
}

impl SequenceRecord {
    pub fn from_sequence(seq: &CascadeSequence, space: &LineSpace) -> Self {
        SequenceRecord {
            lines: seq.stages.iter().map(|&l| space.label(l)).collect(),
            cost: seq.cost,
            terminal_reason: seq.terminal,
            stage_anomalies: seq.stage_anomalies.iter().map(|a| a.s.clone()).collect(),
        }
    }

    pub fn to_sequence(&self, space: &LineSpace) -> Result<CascadeSequence, String> {
        let stages = self
            .lines
            .iter()
            .map(|&label| {
                space
                    .line_of_label(label)
                    .ok_or_else(|| format!("line {label} is not in the line space"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(CascadeSequence {
            stages,
            stage_anomalies: self
                .stage_anomalies
                .iter()
                .enumerate()
                .map(|(i, s)| AnomalyVector {
                    s: s.clone(),
                    stage: i + 1,
                })
                .collect(),
            cost: self.cost,
            terminal: self.terminal_reason,
        })
    }
}

pub fn to_jsonl(sequences: &[CascadeSequence], space: &LineSpace) -> String {
    let mut out = String::new();
    for seq in sequences {
        out.push_str(&serde_json::to_string(&SequenceRecord::from_sequence(seq, space)).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn from_jsonl(text: &str, space: &LineSpace) -> Result<Vec<CascadeSequence>, String> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            let rec: SequenceRecord = serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1))?;
            rec.to_sequence(space)
        })
        .collect()
}
