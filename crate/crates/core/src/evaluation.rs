//! Precision and regret of predictors against enumerated ground truth.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anomaly::{precision, regret, CascadeSequence, MetricError};
use crate::cascade_sim::GroundTruthSet;
use crate::predict::{budget, NextFailurePredictor, PredictError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionSummary {
    pub mean: f64,
    /// Sequences with at least two stages, the only ones precision is defined on.
    pub evaluated: usize,
}

fn multi_stage(truth: &[CascadeSequence]) -> impl ParallelIterator<Item = &CascadeSequence> {
    truth.par_iter().filter(|s| s.len() >= 2)
}

fn summarize(values: Vec<f64>) -> PrecisionSummary {
    let evaluated = values.len();
    let mean = if evaluated == 0 {
        0.0
    } else {
        values.iter().sum::<f64>() / evaluated as f64
    };
    PrecisionSummary { mean, evaluated }
}

/// Stagewise hit rate of `predictor` along every multi-stage truth sequence,
/// averaged over sequences.
pub fn mean_precision<P: NextFailurePredictor + ?Sized>(
    predictor: &P,
    truth: &[CascadeSequence],
    kappa: f64,
) -> Result<PrecisionSummary, PredictError> {
    let values: Result<Vec<f64>, PredictError> = multi_stage(truth)
        .map(|seq| {
            let preds = (1..seq.len())
                .map(|m| predictor.predict(&seq.stages[..m], kappa).map(|p| p.selected))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(precision(&preds, &seq.stages).expect("multi-stage sequence"))
        })
        .collect();
    Ok(summarize(values?))
}

/// Expected precision of picking `budget(n, κ)` healthy lines uniformly at
/// random at every stage: `min(1, k / (n - m))` after `m` failures.
pub fn random_baseline_precision(n: usize, kappa: f64, truth: &[CascadeSequence]) -> PrecisionSummary {
    let k = budget(n, kappa) as f64;
    let values = multi_stage(truth)
        .map(|seq| {
            let stages = seq.len() - 1;
            (1..seq.len()).map(|m| (k / (n - m) as f64).min(1.0)).sum::<f64>() / stages as f64
        })
        .collect();
    summarize(values)
}

/// Monte-Carlo estimate of the same baseline.
pub fn random_baseline_monte_carlo(
    n: usize,
    kappa: f64,
    truth: &[CascadeSequence],
    trials: usize,
    seed: u64,
) -> PrecisionSummary {
    let k = budget(n, kappa);
    let values = truth
        .par_iter()
        .enumerate()
        .filter(|(_, s)| s.len() >= 2)
        .map(|(idx, seq)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(idx as u64);
            let mut total = 0.0;
            for _ in 0..trials {
                let preds: Vec<Vec<usize>> = (1..seq.len())
                    .map(|m| {
                        let healthy: Vec<usize> = (0..n).filter(|j| !seq.stages[..m].contains(j)).collect();
                        sample(&mut rng, healthy.len(), k.min(healthy.len()))
                            .into_iter()
                            .map(|i| healthy[i])
                            .collect()
                    })
                    .collect();
                total += precision(&preds, &seq.stages).expect("multi-stage sequence");
            }
            total / trials as f64
        })
        .collect();
    summarize(values)
}

/// Regret of predicted sequences against the `d` costliest truth sequences.
pub fn regret_vs_truth(predicted: &[CascadeSequence], truth: &GroundTruthSet, d: usize) -> Result<f64, MetricError> {
    let pred: Vec<f64> = predicted.iter().take(d).map(|s| s.cost).collect();
    let best: Vec<f64> = truth.top_by_cost(d).iter().map(|s| s.cost).collect();
    regret(&pred, &best)
}
