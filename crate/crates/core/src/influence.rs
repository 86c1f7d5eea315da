//! Influence-graph baseline: one-step transition frequencies between
//! consecutive failures.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anomaly::CascadeSequence;
use crate::predict::{NextFailurePredictor, PredictError, PredictionSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceGraph {
    /// `counts[i][j]`: times line `j` failed right after line `i`.
    pub counts: Vec<Vec<u64>>,
    /// Row-normalized counts; all-zero rows stay zero.
    pub probs: Vec<Vec<f64>>,
}

fn normalize(counts: &[Vec<u64>]) -> Vec<Vec<f64>> {
    counts
        .iter()
        .map(|row| {
            let total: u64 = row.iter().sum();
            row.iter()
                .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
                .collect()
        })
        .collect()
}

pub fn train_ig(sequences: &[CascadeSequence], n: usize) -> InfluenceGraph {
    let counts = sequences
        .par_iter()
        .fold(
            || vec![vec![0u64; n]; n],
            |mut acc, seq| {
                for w in seq.stages.windows(2) {
                    acc[w[0]][w[1]] += 1;
                }
                acc
            },
        )
        .reduce(
            || vec![vec![0u64; n]; n],
            |mut a, b| {
                for (ra, rb) in a.iter_mut().zip(b) {
                    for (x, y) in ra.iter_mut().zip(rb) {
                        *x += y;
                    }
                }
                a
            },
        );
    InfluenceGraph {
        probs: normalize(&counts),
        counts,
    }
}

impl InfluenceGraph {
    pub fn n(&self) -> usize {
        self.counts.len()
    }

    /// Transition row of the latest failure with earlier failures removed,
    /// renormalized; all zeros when nothing remains.
    pub fn conditional(&self, failed: &[usize]) -> Vec<f64> {
        let last = *failed.last().expect("nonempty failure sequence");
        let mut row = self.probs[last].clone();
        for &f in failed {
            row[f] = 0.0;
        }
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row.iter_mut().for_each(|p| *p /= total);
        }
        row
    }
}

pub fn ig_predict(ig: &InfluenceGraph, failed: &[usize], kappa: f64) -> Result<PredictionSet, PredictError> {
    if !(kappa > 0.0 && kappa <= 100.0) {
        return Err(PredictError::InvalidKappa(kappa));
    }
    if failed.is_empty() {
        return Err(PredictError::EmptyFailureSet);
    }
    Ok(PredictionSet::from_scores(&ig.conditional(failed), failed, kappa))
}

impl NextFailurePredictor for InfluenceGraph {
    fn n(&self) -> usize {
        self.counts.len()
    }

    fn initiators(&self) -> Vec<usize> {
        (0..self.counts.len()).collect()
    }

    fn predict(&self, failed: &[usize], kappa: f64) -> Result<PredictionSet, PredictError> {
        ig_predict(self, failed, kappa)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anomaly::TerminalReason;
    use crate::predict::cci_explore;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seq(lines: &[usize]) -> CascadeSequence {
        CascadeSequence::new(lines.to_vec(), Vec::new(), TerminalReason::LimitsOk)
    }

    #[test]
    fn hand_counts() {
        let ig = train_ig(&[seq(&[0, 1]), seq(&[0, 2])], 3);
        assert_eq!(ig.probs[0], vec![0.0, 0.5, 0.5]);
        assert_eq!(ig.probs[1], vec![0.0; 3]);
        let singles = train_ig(&[seq(&[0]), seq(&[2])], 3);
        assert!(singles.counts.iter().flatten().all(|&c| c == 0));
    }

    #[test]
    fn prediction_zeroes_failed_lines() {
        let ig = train_ig(&[seq(&[0, 1]), seq(&[1, 0]), seq(&[1, 2]), seq(&[1, 2])], 4);
        let p = ig_predict(&ig, &[0, 1], 50.0).unwrap();
        assert_eq!(p.selected, vec![2]);
        assert_eq!(ig.conditional(&[0, 1]), vec![0.0, 0.0, 1.0, 0.0]);
        let only = ig_predict(&ig, &[2], 50.0).unwrap();
        assert!(only.all_zero && only.selected.is_empty());
        let first = ig_predict(&ig, &[1], 100.0).unwrap();
        assert_eq!(first.selected, vec![2, 0]);
    }

    #[test]
    fn markov_chain_is_recovered() {
        let p = [[0.0, 0.7, 0.3], [0.2, 0.0, 0.8], [0.5, 0.5, 0.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let seqs: Vec<CascadeSequence> = (0..10_000)
            .map(|_| {
                let mut s = vec![rng.random_range(0..3)];
                let mut cur = s[0];
                for _ in 0..3 {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    cur = (0..3)
                        .find(|&j| {
                            acc += p[cur][j];
                            u < acc
                        })
                        .unwrap_or(2);
                    s.push(cur);
                }
                CascadeSequence::new(s, Vec::new(), TerminalReason::Horizon)
            })
            .collect();
        let ig = train_ig(&seqs, 3);
        for i in 0..3 {
            for j in 0..3 {
                assert!((ig.probs[i][j] - p[i][j]).abs() <= 0.05);
            }
        }
    }

    #[test]
    fn shared_explorer_bound() {
        let ig = train_ig(&[seq(&[0, 1, 2]), seq(&[0, 2]), seq(&[1, 0, 3]), seq(&[3, 1])], 4);
        let c = cci_explore(&ig, 50.0, 3).unwrap();
        assert!(c.len() <= 4 * 2 * 2);
    }

    proptest! {
        #[test]
        fn training_ignores_order_and_rows_normalize(
            raw in proptest::collection::vec(proptest::collection::vec(0usize..6, 1..5), 1..40),
        ) {
            let seqs: Vec<CascadeSequence> = raw.iter().map(|s| {
                let mut seen = Vec::new();
                for &x in s { if !seen.contains(&x) { seen.push(x); } }
                seq(&seen)
            }).collect();
            let a = train_ig(&seqs, 6);
            let mut rev = seqs.clone();
            rev.reverse();
            prop_assert_eq!(&a, &train_ig(&rev, 6));
            for (c, p) in a.counts.iter().zip(&a.probs) {
                let s: f64 = p.iter().sum();
                if c.iter().sum::<u64>() > 0 {
                    prop_assert!((s - 1.0).abs() < 1e-12);
                } else {
                    prop_assert_eq!(s, 0.0);
                }
            }
        }
    }
}
