//! One function per subcommand. Each reads its inputs through the manifests
//! of earlier commands and writes its own directory plus manifest.

use std::collections::BTreeMap;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use cascade_core::cascade_sim::{
    enumerate_ground_truth, from_jsonl, sample_stochastic_cascades, to_jsonl, worst_case_top, CascadeEngine,
    SequenceRecord,
};
use cascade_core::dataset::{generate_observational, make_load_profile, DatasetSidecar, ObservationalDataset};
use cascade_core::evaluation::{mean_precision, random_baseline_precision, regret_vs_truth};
use cascade_core::grid::{assign_limits, parse_case, GridCase, LineLimits};
use cascade_core::influence::train_ig;
use cascade_core::lingam::{learn_model_set, LearnError};
use cascade_core::power_flow::{solve_ac, FlowModel};
use cascade_core::predict::{cci, CausalPredictor, CciResult, NextFailurePredictor, PredictionSet};
use cascade_core::{CascadeSequence, CausalModelSet, InfluenceGraph, LineSpace, LingamOptions, TerminalReason};
use serde::{Deserialize, Serialize};

use crate::artifacts::Stage;
use crate::config::{FlowChoice, RunConfig};
use crate::report::{EvaluationReport, PrecisionRow, RegretRow};
use crate::ValidationError;

/// Case, limits and line space shared by every command.
pub struct Grid {
    pub case: GridCase,
    pub limits: LineLimits,
    pub space: LineSpace,
}

impl Grid {
    pub fn load(cfg: &RunConfig) -> Result<Grid> {
        cfg.validate()?;
        let text = std::fs::read_to_string(&cfg.case).with_context(|| format!("reading {}", cfg.case.display()))?;
        let case = parse_case(&text).map_err(|e| ValidationError(format!("{}: {e}", cfg.case.display())))?;
        let base = solve_ac(&case, &[]).context("base-case AC power flow")?;
        let limits = assign_limits(&case, &base, cfg.limit_rule())?;
        let space = LineSpace::viable(&case);
        Ok(Grid { case, limits, space })
    }

    pub fn labels(&self, lines: &[usize]) -> Vec<usize> {
        lines.iter().map(|&l| self.space.label(l)).collect()
    }

    fn line_of_label(&self, label: usize) -> Result<usize> {
        self.space
            .line_of_label(label)
            .ok_or_else(|| ValidationError(format!("branch {label} is not a non-islanding line of this case")).into())
    }
}

fn dataset_name(label: usize) -> String {
    format!("L{label}.csv")
}

fn sidecar_name(label: usize) -> String {
    format!("L{label}.json")
}

fn truth_name(load_scale: f64) -> String {
    format!("z_load_{load_scale:.2}.jsonl")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub case_id: String,
    /// Branch labels of the line space, in column order.
    pub lines: Vec<usize>,
    /// Initiating labels whose dataset could not be built, with the reason.
    pub failed: BTreeMap<usize, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub case_id: String,
    pub lines: Vec<usize>,
    pub options: LingamOptions,
    pub models: CausalModelSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IgFile {
    pub case_id: String,
    pub lines: Vec<usize>,
    pub training_sequences: usize,
    pub seed: u64,
    pub graph: InfluenceGraph,
}

pub fn cmd_gen_data(cfg: &RunConfig) -> Result<DatasetIndex> {
    let grid = Grid::load(cfg)?;
    let profile = make_load_profile(&grid.case, cfg.profile_params())?;
    let mut stage = Stage::new(cfg, "gen-data", "datasets")?;
    let mut failed = BTreeMap::new();
    for line in 0..grid.space.len() {
        let label = grid.space.label(line);
        match generate_observational(&grid.case, &grid.limits, &grid.space, line, &profile) {
            Ok(ds) => {
                stage.write(&dataset_name(label), ds.to_csv(&grid.space).as_bytes())?;
                let sidecar = DatasetSidecar {
                    case_id: cfg.case_id.clone(),
                    initiating_label: label,
                    profile: profile.params,
                    n_rows: ds.n_rows,
                    n_cols: ds.n_cols,
                    dropped: ds.dropped,
                };
                stage.write_json(&sidecar_name(label), &sidecar)?;
                log::info!("line {label}: {} rows, {} dropped", ds.n_rows, ds.dropped);
            }
            Err(e) => {
                log::error!("line {label}: {e}");
                failed.insert(label, e.to_string());
            }
        }
    }
    if failed.len() == grid.space.len() {
        return Err(anyhow!("no dataset could be generated"));
    }
    let index = DatasetIndex {
        case_id: cfg.case_id.clone(),
        lines: grid.labels(&(0..grid.space.len()).collect::<Vec<_>>()),
        failed,
    };
    stage.write_json("index.json", &index)?;
    stage.finish()?;
    Ok(index)
}

pub struct LearnSummary {
    pub models: usize,
    pub ig_sequences: usize,
}

pub fn cmd_learn(cfg: &RunConfig) -> Result<LearnSummary> {
    let grid = Grid::load(cfg)?;
    let mut stage = Stage::new(cfg, "learn", "models")?;
    let index: DatasetIndex = serde_json::from_str(&stage.read_string("gen-data", "datasets", "index.json")?)?;
    if !index.failed.is_empty() {
        return Err(anyhow!(
            "datasets missing for initiating lines {:?}; every line needs a model",
            index.failed.keys().collect::<Vec<_>>()
        ));
    }
    let mut datasets = Vec::with_capacity(grid.space.len());
    for line in 0..grid.space.len() {
        let label = grid.space.label(line);
        let sidecar: DatasetSidecar =
            serde_json::from_str(&stage.read_string("gen-data", "datasets", &sidecar_name(label))?)?;
        let csv = stage.read_string("gen-data", "datasets", &dataset_name(label))?;
        datasets.push(ObservationalDataset::from_csv(&csv, line, sidecar.dropped)?);
    }
    let options = cfg.lingam_options();
    let models = match learn_model_set(&datasets, &options) {
        Ok(m) => m,
        Err(LearnError::PartialFailure { failed, .. }) => {
            let detail: Vec<String> = failed
                .iter()
                .map(|(line, msg)| format!("line {}: {msg}", grid.space.label(*line)))
                .collect();
            return Err(anyhow!(
                "learning failed for {} lines: {}",
                failed.len(),
                detail.join("; ")
            ));
        }
        Err(e) => return Err(e.into()),
    };
    let lines = grid.labels(&(0..grid.space.len()).collect::<Vec<_>>());
    let n_models = models.len();
    stage.write_json(
        "causal_models.json",
        &ModelFile {
            case_id: cfg.case_id.clone(),
            lines: lines.clone(),
            options,
            models,
        },
    )?;

    let training = sample_stochastic_cascades(
        &grid.case,
        &grid.limits,
        &grid.space,
        cfg.predict.horizon,
        cfg.learn.ig_samples,
        cfg.seed,
        &cfg.case_id,
    )?;
    stage.write(
        "ig_training.jsonl",
        to_jsonl(&training.sequences, &grid.space).as_bytes(),
    )?;
    let graph = train_ig(&training.sequences, grid.space.len());
    stage.write_json(
        "influence_graph.json",
        &IgFile {
            case_id: cfg.case_id.clone(),
            lines,
            training_sequences: training.len(),
            seed: cfg.seed,
            graph,
        },
    )?;
    stage.finish()?;
    Ok(LearnSummary {
        models: n_models,
        ig_sequences: training.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSummary {
    pub load_scale: f64,
    pub sequences: usize,
    pub terminal_reasons: BTreeMap<String, usize>,
}

pub fn cmd_ground_truth(cfg: &RunConfig) -> Result<Vec<TruthSummary>> {
    let grid = Grid::load(cfg)?;
    let mut stage = Stage::new(cfg, "ground-truth", "truth")?;
    let mut summaries = Vec::new();
    for &scale in &cfg.load_scales {
        let z = enumerate_ground_truth(
            &grid.case,
            &grid.limits,
            &grid.space,
            cfg.predict.horizon,
            scale,
            &cfg.case_id,
        )?;
        stage.write(&truth_name(scale), to_jsonl(&z.sequences, &grid.space).as_bytes())?;
        let mut reasons = BTreeMap::new();
        for s in &z.sequences {
            *reasons.entry(terminal_name(s.terminal)).or_insert(0) += 1;
        }
        log::info!("load {scale}: |Z| = {}", z.len());
        summaries.push(TruthSummary {
            load_scale: scale,
            sequences: z.len(),
            terminal_reasons: reasons,
        });
    }
    stage.write_json("summary.json", &summaries)?;
    stage.finish()?;
    Ok(summaries)
}

fn terminal_name(t: TerminalReason) -> String {
    serde_json::to_value(t)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn load_models(stage: &mut Stage, grid: &Grid) -> Result<(CausalModelSet, InfluenceGraph)> {
    let models: ModelFile = serde_json::from_str(&stage.read_string("learn", "models", "causal_models.json")?)?;
    let ig: IgFile = serde_json::from_str(&stage.read_string("learn", "models", "influence_graph.json")?)?;
    let lines = grid.labels(&(0..grid.space.len()).collect::<Vec<_>>());
    if models.lines != lines || ig.lines != lines {
        return Err(
            ValidationError("learned models were built for a different case; rerun `cascade learn`".into()).into(),
        );
    }
    Ok((models.models, ig.graph))
}

fn load_truth(stage: &mut Stage, grid: &Grid, scale: f64) -> Result<Vec<CascadeSequence>> {
    let text = stage.read_string("ground-truth", "truth", &truth_name(scale))?;
    from_jsonl(&text, &grid.space).map_err(|e| anyhow!("{}: {e}", truth_name(scale)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPrediction {
    /// (branch label, score), highest first.
    pub ranked: Vec<(usize, f64)>,
    pub selected: Vec<usize>,
    pub all_zero: bool,
}

impl LabeledPrediction {
    fn new(p: &PredictionSet, grid: &Grid) -> Self {
        LabeledPrediction {
            ranked: p.ranked.iter().map(|&(l, s)| (grid.space.label(l), s)).collect(),
            selected: grid.labels(&p.selected),
            all_zero: p.all_zero,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictOutput {
    pub failed: Vec<usize>,
    pub kappa: f64,
    pub causal: LabeledPrediction,
    pub influence_graph: LabeledPrediction,
}

/// Next-failure predictions for a failure sequence given as branch labels.
pub fn cmd_predict(cfg: &RunConfig, failed: &[usize], kappa: f64) -> Result<PredictOutput> {
    let grid = Grid::load(cfg)?;
    if failed.is_empty() {
        return Err(ValidationError("--failed needs at least one line".into()).into());
    }
    if !(kappa > 0.0 && kappa <= 100.0) {
        return Err(ValidationError(format!("kappa {kappa} is outside (0, 100]")).into());
    }
    let lines = failed
        .iter()
        .map(|&l| grid.line_of_label(l))
        .collect::<Result<Vec<_>>>()?;
    let mut stage = Stage::new(cfg, "predict", "predict")?;
    let (models, ig) = load_models(&mut stage, &grid)?;
    let causal = CausalPredictor::new(&models, cfg.predict.max_path_len).predict(&lines, kappa)?;
    let ig_pred = ig.predict(&lines, kappa)?;
    let out = PredictOutput {
        failed: failed.to_vec(),
        kappa,
        causal: LabeledPrediction::new(&causal, &grid),
        influence_graph: LabeledPrediction::new(&ig_pred, &grid),
    };
    let name = format!(
        "prediction_{}_k{kappa}.json",
        failed.iter().map(|l| l.to_string()).collect::<Vec<_>>().join("-")
    );
    stage.write_json(&name, &out)?;
    stage.finish()?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CciOutput {
    pub predictor: String,
    pub kappa: f64,
    pub load_scale: f64,
    pub candidates: usize,
    pub short: bool,
    pub top: Vec<SequenceRecord>,
}

impl CciOutput {
    fn new(predictor: &str, load_scale: f64, r: &CciResult, space: &LineSpace) -> Self {
        CciOutput {
            predictor: predictor.to_string(),
            kappa: r.kappa,
            load_scale,
            candidates: r.candidates,
            short: r.short,
            top: r.top.iter().map(|s| SequenceRecord::from_sequence(s, space)).collect(),
        }
    }
}

fn run_cci(
    grid: &Grid,
    cfg: &RunConfig,
    predictor: &dyn NextFailurePredictor,
    load_scale: f64,
    kappa: f64,
) -> Result<CciResult> {
    let scaled = grid.case.with_load_scale(load_scale);
    let engine = CascadeEngine::new(&scaled, &grid.limits, &grid.space, FlowModel::Ac)?;
    Ok(cci(predictor, &engine, kappa, cfg.predict.horizon, cfg.predict.d)?)
}

/// Top-d critical sequences from both predictors at every configured κ,
/// replayed at the first load scale.
pub fn cmd_cci(cfg: &RunConfig) -> Result<Vec<CciOutput>> {
    let grid = Grid::load(cfg)?;
    let mut stage = Stage::new(cfg, "cci", "cci")?;
    let (models, ig) = load_models(&mut stage, &grid)?;
    let causal = CausalPredictor::new(&models, cfg.predict.max_path_len);
    let scale = cfg.load_scales[0];
    let mut outputs = Vec::new();
    for &kappa in &cfg.predict.cci_kappas {
        for (name, p) in [
            ("causal", &causal as &dyn NextFailurePredictor),
            ("influence_graph", &ig),
        ] {
            let out = CciOutput::new(name, scale, &run_cci(&grid, cfg, p, scale, kappa)?, &grid.space);
            stage.write_json(&format!("{name}_k{kappa}.json"), &out)?;
            outputs.push(out);
        }
    }
    stage.finish()?;
    Ok(outputs)
}

pub fn cmd_evaluate(cfg: &RunConfig) -> Result<EvaluationReport> {
    let grid = Grid::load(cfg)?;
    let mut stage = Stage::new(cfg, "evaluate", "evaluate")?;
    let (models, ig) = load_models(&mut stage, &grid)?;
    let causal = CausalPredictor::new(&models, cfg.predict.max_path_len);
    let n = grid.space.len();
    let mut timings = BTreeMap::new();
    let mut precision = Vec::new();
    let mut regret = Vec::new();
    let mut truth_sizes = Vec::new();
    for &scale in &cfg.load_scales {
        let truth = load_truth(&mut stage, &grid, scale)?;
        truth_sizes.push((scale, truth.len()));
        let t = Instant::now();
        for &kappa in &cfg.predict.kappas {
            let c = mean_precision(&causal, &truth, kappa)?;
            let g = mean_precision(&ig, &truth, kappa)?;
            let r = random_baseline_precision(n, kappa, &truth);
            precision.push(PrecisionRow {
                load_scale: scale,
                kappa,
                causal: c.mean,
                influence_graph: g.mean,
                random: r.mean,
                evaluated: c.evaluated,
            });
        }
        timings.insert(format!("precision_load_{scale:.2}_s"), t.elapsed().as_secs_f64());

        let truth_set = cascade_core::GroundTruthSet {
            sequences: truth,
            horizon: cfg.predict.horizon,
            case_id: cfg.case_id.clone(),
            load_scale: scale,
        };
        for &kappa in &cfg.predict.cci_kappas {
            let t = Instant::now();
            let c = run_cci(&grid, cfg, &causal, scale, kappa)?;
            let causal_s = t.elapsed().as_secs_f64();
            let t = Instant::now();
            let g = run_cci(&grid, cfg, &ig, scale, kappa)?;
            let ig_s = t.elapsed().as_secs_f64();
            timings.insert(format!("cci_causal_load_{scale:.2}_k{kappa}_s"), causal_s);
            timings.insert(format!("cci_ig_load_{scale:.2}_k{kappa}_s"), ig_s);
            let best = |r: &CciResult| r.top.first().map(|s| SequenceRecord::from_sequence(s, &grid.space));
            regret.push(RegretRow {
                load_scale: scale,
                kappa,
                causal: regret_vs_truth(&c.top, &truth_set, cfg.predict.d)?,
                influence_graph: regret_vs_truth(&g.top, &truth_set, cfg.predict.d)?,
                causal_candidates: c.candidates,
                ig_candidates: g.candidates,
                causal_costliest: best(&c),
                ig_costliest: best(&g),
            });
        }
    }
    let report = EvaluationReport {
        case_id: cfg.case_id.clone(),
        n_lines: n,
        d: cfg.predict.d,
        horizon: cfg.predict.horizon,
        ground_truth_sizes: truth_sizes,
        precision,
        regret,
    };
    stage.write("precision.csv", report.precision_csv().as_bytes())?;
    stage.write("regret.csv", report.regret_csv().as_bytes())?;
    stage.write("candidates.csv", report.candidates_csv().as_bytes())?;
    stage.write_json("report.json", &report)?;
    stage.finish()?;
    // Wall-clock numbers differ run to run, so they stay out of the manifest.
    let path = cfg.out_dir.join("evaluate/timings.json");
    std::fs::write(&path, serde_json::to_string_pretty(&timings)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseOutput {
    pub flow: FlowChoice,
    pub horizon: usize,
    pub count: usize,
    pub top: Vec<SequenceRecord>,
}

pub fn cmd_worst_case(cfg: &RunConfig) -> Result<WorstCaseOutput> {
    let grid = Grid::load(cfg)?;
    let mut stage = Stage::new(cfg, "worst-case", "worst_case")?;
    let model = match cfg.worst_case.flow {
        FlowChoice::Ac => FlowModel::Ac,
        FlowChoice::Dc => FlowModel::Dc,
    };
    let summary = worst_case_top(
        &grid.case,
        &grid.limits,
        &grid.space,
        cfg.predict.horizon,
        model,
        cfg.worst_case.top,
    )?;
    let out = WorstCaseOutput {
        flow: cfg.worst_case.flow,
        horizon: cfg.predict.horizon,
        count: summary.count,
        top: summary
            .top
            .iter()
            .map(|s| SequenceRecord::from_sequence(s, &grid.space))
            .collect(),
    };
    stage.write_json("summary.json", &out)?;
    stage.finish()?;
    Ok(out)
}
