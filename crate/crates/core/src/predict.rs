//! Next-failure prediction from intervened causal matrices (C-Path) and
//! critical-cascade search over predicted sequences (CCI).
//!
//! Edge convention: `b[(i, j)] != 0` is an edge `j -> i` with that
//! coefficient, so a path `u -> a -> j` has weight `b[(a, u)] * b[(j, a)]`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anomaly::{CascadeSequence, TerminalReason};
use crate::cascade_sim::{sort_by_cost, CascadeEngine};
use crate::lingam::CausalModelSet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictError {
    #[error("no causal model for initiating line {line}")]
    UnknownInitiator { line: usize },
    #[error("failure sequence is empty")]
    EmptyFailureSet,
    #[error("kappa must be in (0, 100], got {0}")]
    InvalidKappa(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Prediction budget `⌈n · κ / 100⌉`, at least 1.
pub fn budget(n: usize, kappa: f64) -> usize {
    // guard against 19 * 25 / 100 style products landing a hair above an integer
    let exact = n as f64 * kappa / 100.0;
    ((exact - 1e-9).ceil() as usize).max(1)
}

fn check_kappa(kappa: f64) -> Result<(), PredictError> {
    if kappa > 0.0 && kappa <= 100.0 {
        Ok(())
    } else {
        Err(PredictError::InvalidKappa(kappa))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterventionState {
    pub failed: Vec<usize>,
    pub b: DMatrix<f64>,
}

/// `B(N_m)`: the latest failure's matrix with the rows of earlier failures zeroed.
pub fn intervene(models: &CausalModelSet, failed: &[usize]) -> Result<InterventionState, PredictError> {
    let (&last, earlier) = failed.split_last().ok_or(PredictError::EmptyFailureSet)?;
    let model = models.get(last).ok_or(PredictError::UnknownInitiator { line: last })?;
    let mut b = model.b.clone();
    for &i in earlier {
        b.row_mut(i).fill(0.0);
    }
    Ok(InterventionState {
        failed: failed.to_vec(),
        b,
    })
}

/// Normalized total effects `D_m(j)` of the latest failure on every line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalEffects {
    /// Indexed by line; 0 for failed lines.
    pub scores: Vec<f64>,
    /// No directed path reaches a healthy line.
    pub all_zero: bool,
}

/// Sum of edge-weight products over simple paths of at most `max_path_len`
/// edges from the latest failure, taken in absolute value and normalized
/// over healthy lines.
pub fn total_causal_effects(state: &InterventionState, max_path_len: usize) -> CausalEffects {
    let n = state.b.nrows();
    let source = *state.failed.last().expect("intervention has a failure");
    let children: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|from| {
            (0..n)
                .filter(|&to| to != from && state.b[(to, from)] != 0.0)
                .map(|to| (to, state.b[(to, from)]))
                .collect()
        })
        .collect();
    let mut sums = vec![0.0; n];
    let mut on_path = vec![false; n];
    on_path[source] = true;
    fn walk(
        node: usize,
        weight: f64,
        depth: usize,
        cap: usize,
        children: &[Vec<(usize, f64)>],
        on_path: &mut [bool],
        sums: &mut [f64],
    ) {
        if depth == cap {
            return;
        }
        for &(next, coef) in &children[node] {
            if on_path[next] {
                continue;
            }
            let w = weight * coef;
            sums[next] += w;
            on_path[next] = true;
            walk(next, w, depth + 1, cap, children, on_path, sums);
            on_path[next] = false;
        }
    }
    walk(source, 1.0, 0, max_path_len, &children, &mut on_path, &mut sums);

    let mut raw: Vec<f64> = sums.iter().map(|s| s.abs()).collect();
    for &f in &state.failed {
        raw[f] = 0.0;
    }
    let total: f64 = raw.iter().sum();
    if total == 0.0 {
        return CausalEffects {
            scores: vec![0.0; n],
            all_zero: true,
        };
    }
    CausalEffects {
        scores: raw.iter().map(|r| r / total).collect(),
        all_zero: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    /// Healthy lines with their scores, highest first, ties by line index.
    pub ranked: Vec<(usize, f64)>,
    pub kappa: f64,
    pub selected: Vec<usize>,
    /// Nothing could be scored; `selected` is empty.
    pub all_zero: bool,
}

impl PredictionSet {
    /// Rank healthy lines by `scores` and take the top `budget(n, kappa)`
    /// among those with a nonzero score.
    pub fn from_scores(scores: &[f64], failed: &[usize], kappa: f64) -> Self {
        let n = scores.len();
        let mut ranked: Vec<(usize, f64)> = (0..n).filter(|j| !failed.contains(j)).map(|j| (j, scores[j])).collect();
        ranked.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
        let selected: Vec<usize> = ranked
            .iter()
            .filter(|(_, s)| *s != 0.0)
            .take(budget(n, kappa))
            .map(|(j, _)| *j)
            .collect();
        PredictionSet {
            all_zero: selected.is_empty(),
            ranked,
            kappa,
            selected,
        }
    }
}

/// Anything that can propose the next failures of a partial cascade.
pub trait NextFailurePredictor: Sync {
    /// Number of lines.
    fn n(&self) -> usize;
    /// Lines a cascade may start from.
    fn initiators(&self) -> Vec<usize>;
    fn predict(&self, failed: &[usize], kappa: f64) -> Result<PredictionSet, PredictError>;
}

/// C-Path over a learned model set.
pub struct CausalPredictor<'a> {
    pub models: &'a CausalModelSet,
    pub max_path_len: usize,
}

impl<'a> CausalPredictor<'a> {
    pub fn new(models: &'a CausalModelSet, max_path_len: usize) -> Self {
        CausalPredictor { models, max_path_len }
    }
}

pub fn c_path(
    models: &CausalModelSet,
    failed: &[usize],
    kappa: f64,
    max_path_len: usize,
) -> Result<PredictionSet, PredictError> {
    check_kappa(kappa)?;
    if max_path_len == 0 {
        return Err(PredictError::InvalidParameter("max_path_len must be >= 1".into()));
    }
    let state = intervene(models, failed)?;
    let effects = total_causal_effects(&state, max_path_len);
    Ok(PredictionSet::from_scores(&effects.scores, failed, kappa))
}

impl NextFailurePredictor for CausalPredictor<'_> {
    fn n(&self) -> usize {
        self.models.n()
    }

    fn initiators(&self) -> Vec<usize> {
        self.models.models.keys().copied().collect()
    }

    fn predict(&self, failed: &[usize], kappa: f64) -> Result<PredictionSet, PredictError> {
        c_path(self.models, failed, kappa, self.max_path_len)
    }
}

fn explore_from<P: NextFailurePredictor + ?Sized>(
    predictor: &P,
    seq: &mut Vec<usize>,
    kappa: f64,
    horizon: usize,
    out: &mut Vec<Vec<usize>>,
) -> Result<(), PredictError> {
    if seq.len() >= horizon {
        out.push(seq.clone());
        return Ok(());
    }
    let next = predictor.predict(seq, kappa)?;
    if next.selected.is_empty() {
        out.push(seq.clone());
        return Ok(());
    }
    for j in next.selected {
        seq.push(j);
        explore_from(predictor, seq, kappa, horizon, out)?;
        seq.pop();
    }
    Ok(())
}

/// Every sequence reachable by repeatedly following the predicted sets, from
/// every initiating line, up to `horizon` stages. Sequences whose prediction
/// comes back empty are kept at their current length.
pub fn cci_explore<P: NextFailurePredictor + ?Sized>(
    predictor: &P,
    kappa: f64,
    horizon: usize,
) -> Result<Vec<Vec<usize>>, PredictError> {
    check_kappa(kappa)?;
    if horizon < 2 {
        return Err(PredictError::InvalidParameter("horizon M must be >= 2".into()));
    }
    let per_root: Vec<Result<Vec<Vec<usize>>, PredictError>> = predictor
        .initiators()
        .into_par_iter()
        .map(|k| {
            let mut out = Vec::new();
            explore_from(predictor, &mut vec![k], kappa, horizon, &mut out)?;
            Ok(out)
        })
        .collect();
    let mut all = Vec::new();
    for r in per_root {
        all.extend(r?);
    }
    Ok(all)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CciResult {
    pub kappa: f64,
    /// `|C|`, the number of explored candidate sequences.
    pub candidates: usize,
    /// Costliest replayed candidates, at most `d`.
    pub top: Vec<CascadeSequence>,
    /// Fewer than `d` candidates existed.
    pub short: bool,
}

/// Replay every explored candidate through the engine and keep the `d`
/// costliest (ties by lexicographic line order).
pub fn cci<P: NextFailurePredictor + ?Sized>(
    predictor: &P,
    engine: &CascadeEngine,
    kappa: f64,
    horizon: usize,
    d: usize,
) -> Result<CciResult, PredictError> {
    if d == 0 {
        return Err(PredictError::InvalidParameter("d must be >= 1".into()));
    }
    let candidates = cci_explore(predictor, kappa, horizon)?;
    let replayed: Vec<CascadeSequence> = candidates
        .par_iter()
        .map(|c| {
            let complete = if c.len() >= horizon {
                TerminalReason::Horizon
            } else {
                TerminalReason::NoPrediction
            };
            engine.replay(c, complete)
        })
        .collect();
    let mut refs: Vec<&CascadeSequence> = replayed.iter().collect();
    sort_by_cost(&mut refs);
    let top: Vec<CascadeSequence> = refs.into_iter().take(d).cloned().collect();
    Ok(CciResult {
        kappa,
        candidates: candidates.len(),
        short: top.len() < d,
        top,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lingam::CausalModel;
    use proptest::prelude::*;

    fn set_of(mats: Vec<(usize, DMatrix<f64>)>) -> CausalModelSet {
        let mut s = CausalModelSet::default();
        for (k, b) in mats {
            s.models.insert(
                k,
                CausalModel {
                    initiating_line: k,
                    tau: 0.05,
                    b,
                    non_gaussianity: 1.0,
                },
            );
        }
        s
    }

    /// Independent oracle: enumerate every node sequence from `source` and
    /// keep the simple ones whose consecutive edges all exist.
    fn brute_force_effects(b: &DMatrix<f64>, failed: &[usize], cap: usize) -> Option<Vec<f64>> {
        let n = b.nrows();
        let source = *failed.last().unwrap();
        let mut sums = vec![0.0; n];
        let mut frontier: Vec<Vec<usize>> = vec![vec![source]];
        for _ in 0..cap {
            let mut next = Vec::new();
            for path in &frontier {
                for v in 0..n {
                    if path.contains(&v) {
                        continue;
                    }
                    let mut p = path.clone();
                    p.push(v);
                    let w: f64 = p.windows(2).map(|e| b[(e[1], e[0])]).product();
                    if w != 0.0 {
                        sums[v] += w;
                    }
                    next.push(p);
                }
            }
            frontier = next;
        }
        let mut raw: Vec<f64> = sums.iter().map(|s| s.abs()).collect();
        for &f in failed {
            raw[f] = 0.0;
        }
        let total: f64 = raw.iter().sum();
        (total > 0.0).then(|| raw.iter().map(|r| r / total).collect())
    }

    #[test]
    fn budget_arithmetic() {
        assert_eq!(budget(19, 25.0), 5);
        assert_eq!(budget(20, 25.0), 5);
        assert_eq!(budget(19, 100.0), 19);
        assert_eq!(budget(35, 15.0), 6);
        assert_eq!(budget(10, 0.01), 1);
    }

    #[test]
    fn intervention_zeroes_earlier_rows() {
        let b = DMatrix::from_fn(4, 4, |i, j| if i == j { 0.0 } else { (i * 4 + j) as f64 });
        let models = set_of(vec![(0, b.clone()), (1, b.clone()), (2, b.clone())]);
        assert_eq!(intervene(&models, &[2]).unwrap().b, b);
        let s = intervene(&models, &[0, 1, 2]).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i < 2 { 0.0 } else { b[(i, j)] };
                assert_eq!(s.b[(i, j)], want);
            }
        }
        assert_eq!(intervene(&models, &[0, 1, 2]).unwrap(), s);
        assert_eq!(
            intervene(&models, &[3]),
            Err(PredictError::UnknownInitiator { line: 3 })
        );
        assert_eq!(intervene(&models, &[]), Err(PredictError::EmptyFailureSet));
    }

    #[test]
    fn single_edge_and_two_path_examples() {
        let mut b = DMatrix::zeros(3, 3);
        b[(1, 0)] = 0.4;
        let s = InterventionState { failed: vec![0], b };
        let e = total_causal_effects(&s, 3);
        assert_eq!(e.scores, vec![0.0, 1.0, 0.0]);

        // u = 0, a = 1, j = 2: u->j 0.5, u->a 0.5, a->j 0.2
        let mut b = DMatrix::zeros(3, 3);
        b[(2, 0)] = 0.5;
        b[(1, 0)] = 0.5;
        b[(2, 1)] = 0.2;
        let e = total_causal_effects(&InterventionState { failed: vec![0], b }, 3);
        assert!((e.scores[2] - 6.0 / 11.0).abs() < 1e-15);
        assert!((e.scores[1] - 5.0 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn isolated_source_is_all_zero() {
        let mut b = DMatrix::zeros(3, 3);
        b[(0, 1)] = 0.7;
        let models = set_of(vec![(0, b)]);
        let p = c_path(&models, &[0], 50.0, 3).unwrap();
        assert!(p.all_zero && p.selected.is_empty());
    }

    #[test]
    fn c_path_ranking_and_caps() {
        let mut b = DMatrix::zeros(6, 6);
        b[(1, 0)] = 0.1;
        b[(2, 0)] = -0.3;
        b[(3, 0)] = 0.3;
        b[(4, 0)] = 0.05;
        let models = set_of(vec![(0, b)]);
        let p = c_path(&models, &[0], 100.0, 3).unwrap();
        assert_eq!(p.selected, vec![2, 3, 1, 4]);
        let p = c_path(&models, &[0], 34.0, 3).unwrap();
        assert_eq!(p.selected, vec![2, 3, 1]);
        assert!(c_path(&models, &[0], 0.0, 3).is_err());
        assert!(c_path(&models, &[0], 101.0, 3).is_err());
    }

    struct Chain;
    impl NextFailurePredictor for Chain {
        fn n(&self) -> usize {
            5
        }
        fn initiators(&self) -> Vec<usize> {
            (0..5).collect()
        }
        fn predict(&self, failed: &[usize], kappa: f64) -> Result<PredictionSet, PredictError> {
            let last = *failed.last().unwrap();
            let mut scores = vec![0.0; 5];
            scores[(last + 1) % 5] = 1.0;
            Ok(PredictionSet::from_scores(&scores, failed, kappa))
        }
    }

    #[test]
    fn singleton_predictions_give_one_chain_per_initiator() {
        let c = cci_explore(&Chain, 20.0, 4).unwrap();
        assert_eq!(c.len(), 5);
        assert_eq!(c[0], vec![0, 1, 2, 3]);
        assert_eq!(c[4], vec![4, 0, 1, 2]);
    }

    fn random_graph(n: usize, density: f64, vals: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| {
            let v = vals[(i * 10 + j) % vals.len()];
            let keep = vals[(j * 10 + i + 7) % vals.len()].abs() < density;
            if i != j && keep {
                v
            } else {
                0.0
            }
        })
    }

    proptest! {
        #[test]
        fn effects_match_brute_force(
            n in 2usize..=10,
            density in 0.1f64..0.8,
            cap in 1usize..=3,
            n_failed in 1usize..=3,
            vals in proptest::collection::vec(-1.0f64..1.0, 100),
        ) {
            let b = random_graph(n, density, &vals);
            let failed: Vec<usize> = (0..n_failed.min(n)).map(|i| (i * 3) % n).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
            let models = set_of(vec![(*failed.last().unwrap(), b)]);
            let state = intervene(&models, &failed).unwrap();
            let e = total_causal_effects(&state, cap);
            match brute_force_effects(&state.b, &failed, cap) {
                None => prop_assert!(e.all_zero),
                Some(want) => {
                    prop_assert!(!e.all_zero);
                    for j in 0..n {
                        prop_assert!((e.scores[j] - want[j]).abs() <= 1e-12);
                    }
                    let sum: f64 = e.scores.iter().sum();
                    prop_assert!((sum - 1.0).abs() <= 1e-12);
                    for f in &failed {
                        prop_assert_eq!(e.scores[*f], 0.0);
                    }
                }
            }
        }

        #[test]
        fn selection_is_monotone_in_kappa(
            scores in proptest::collection::vec(0.0f64..1.0, 12),
            k1 in 1.0f64..100.0,
            k2 in 1.0f64..100.0,
        ) {
            let (lo, hi) = if k1 <= k2 { (k1, k2) } else { (k2, k1) };
            let a = PredictionSet::from_scores(&scores, &[0], lo);
            let b = PredictionSet::from_scores(&scores, &[0], hi);
            prop_assert!(a.selected.iter().all(|j| b.selected.contains(j)));
            prop_assert!(!b.selected.contains(&0));
            prop_assert!(b.selected.len() <= budget(12, hi));
        }

        #[test]
        fn explore_respects_bound(
            vals in proptest::collection::vec(-1.0f64..1.0, 100),
            density in 0.2f64..0.9,
            kappa in 5.0f64..40.0,
        ) {
            let n = 8;
            let mats = (0..n).map(|k| (k, random_graph(n, density, &vals[k..].iter().chain(&vals[..k]).copied().collect::<Vec<_>>()))).collect();
            let models = set_of(mats);
            let pred = CausalPredictor::new(&models, 3);
            let c = cci_explore(&pred, kappa, 3).unwrap();
            prop_assert!(c.len() <= n * budget(n, kappa).pow(2));
            for seq in &c {
                let mut s = seq.clone();
                s.sort();
                s.dedup();
                prop_assert_eq!(s.len(), seq.len());
            }
        }
    }
}
