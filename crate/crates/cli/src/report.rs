//! Evaluation report and its CSV plot data.

use std::fmt::Write;

use cascade_core::cascade_sim::SequenceRecord;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRow {
    pub load_scale: f64,
    pub kappa: f64,
    pub causal: f64,
    pub influence_graph: f64,
    pub random: f64,
    /// Ground-truth sequences with at least two stages.
    pub evaluated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretRow {
    pub load_scale: f64,
    pub kappa: f64,
    pub causal: f64,
    pub influence_graph: f64,
    pub causal_candidates: usize,
    pub ig_candidates: usize,
    pub causal_costliest: Option<SequenceRecord>,
    pub ig_costliest: Option<SequenceRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub case_id: String,
    pub n_lines: usize,
    pub d: usize,
    pub horizon: usize,
    /// (load scale, |Z|)
    pub ground_truth_sizes: Vec<(f64, usize)>,
    pub precision: Vec<PrecisionRow>,
    pub regret: Vec<RegretRow>,
}

impl EvaluationReport {
    pub fn precision_csv(&self) -> String {
        let mut out = String::from("load_scale,kappa,causal,influence_graph,random,evaluated\n");
        for r in &self.precision {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.load_scale, r.kappa, r.causal, r.influence_graph, r.random, r.evaluated
            )
            .unwrap();
        }
        out
    }

    pub fn regret_csv(&self) -> String {
        let mut out = String::from("load_scale,kappa,causal,influence_graph\n");
        for r in &self.regret {
            writeln!(out, "{},{},{},{}", r.load_scale, r.kappa, r.causal, r.influence_graph).unwrap();
        }
        out
    }

    pub fn candidates_csv(&self) -> String {
        let mut out = String::from("load_scale,kappa,causal,influence_graph\n");
        for r in &self.regret {
            writeln!(
                out,
                "{},{},{},{}",
                r.load_scale, r.kappa, r.causal_candidates, r.ig_candidates
            )
            .unwrap();
        }
        out
    }

    pub fn precision_at(&self, load_scale: f64, kappa: f64) -> Option<&PrecisionRow> {
        self.precision
            .iter()
            .find(|r| r.load_scale == load_scale && r.kappa == kappa)
    }

    pub fn regret_rows(&self, load_scale: f64) -> Vec<&RegretRow> {
        self.regret.iter().filter(|r| r.load_scale == load_scale).collect()
    }
}
