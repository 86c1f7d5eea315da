//! Run configuration, loaded from TOML.

use std::path::{Path, PathBuf};

use cascade_core::dataset::ProfileParams;
use cascade_core::grid::LimitRule;
use cascade_core::lingam::LingamOptions;
use serde::{Deserialize, Serialize};

use crate::ValidationError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitsConfig {
    pub alpha: f64,
    pub floor_mw: f64,
}

impl Default for LimitsConfig {
    fn default() -> Self {
        let r = LimitRule::default();
        LimitsConfig {
            alpha: r.alpha,
            floor_mw: r.floor_mw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileConfig {
    pub steps: usize,
    pub lo: f64,
    pub hi: f64,
    pub kernel_window: usize,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        let p = ProfileParams::default();
        ProfileConfig {
            steps: p.steps,
            lo: p.lo,
            hi: p.hi,
            kernel_window: p.kernel_window,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnConfig {
    pub tau: f64,
    pub jitter: f64,
    pub standardize: bool,
    pub max_iterations: usize,
    pub require_convergence: bool,
    /// Stochastic DC cascades used to train the influence graph.
    pub ig_samples: usize,
}

impl Default for LearnConfig {
    fn default() -> Self {
        let o = LingamOptions::default();
        LearnConfig {
            tau: o.tau,
            jitter: o.jitter,
            standardize: o.standardize,
            max_iterations: o.max_iterations,
            require_convergence: o.require_convergence,
            ig_samples: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    /// κ values (percent) for precision curves.
    pub kappas: Vec<f64>,
    /// κ values (percent) for CCI regret and candidate counts.
    pub cci_kappas: Vec<f64>,
    pub max_path_len: usize,
    pub horizon: usize,
    pub d: usize,
}

impl Default for PredictConfig {
    fn default() -> Self {
        PredictConfig {
            kappas: vec![10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0],
            cci_kappas: vec![15.0, 20.0, 25.0, 30.0, 35.0],
            max_path_len: 3,
            horizon: 4,
            d: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowChoice {
    Ac,
    Dc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorstCaseConfig {
    pub flow: FlowChoice,
    pub top: usize,
}

impl Default for WorstCaseConfig {
    fn default() -> Self {
        WorstCaseConfig {
            flow: FlowChoice::Dc,
            top: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// MATPOWER case file; relative paths resolve against the config file.
    pub case: PathBuf,
    pub case_id: String,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Load multipliers for ground truth; the first one is the evaluation baseline.
    pub load_scales: Vec<f64>,
    pub limits: LimitsConfig,
    pub profile: ProfileConfig,
    pub learn: LearnConfig,
    pub predict: PredictConfig,
    pub worst_case: WorstCaseConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            case: PathBuf::from("cases/case14.m"),
            case_id: "case14".into(),
            seed: 0,
            out_dir: PathBuf::from("out"),
            load_scales: vec![1.0, 1.1],
            limits: LimitsConfig::default(),
            profile: ProfileConfig::default(),
            learn: LearnConfig::default(),
            predict: PredictConfig::default(),
            worst_case: WorstCaseConfig::default(),
        }
    }
}

fn invalid(msg: impl Into<String>) -> ValidationError {
    ValidationError(msg.into())
}

impl RunConfig {
    /// Parse a config file and resolve its relative paths.
    pub fn load(path: &Path) -> Result<Self, ValidationError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| invalid(format!("config {}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        if cfg.case.is_relative() {
            cfg.case = dir.join(&cfg.case);
        }
        if cfg.out_dir.is_relative() {
            cfg.out_dir = dir.join(&cfg.out_dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if !self.case.is_file() {
            return Err(invalid(format!("case file {} does not exist", self.case.display())));
        }
        if self.case_id.is_empty() {
            return Err(invalid("case_id must not be empty"));
        }
        let kappa_ok = |k: &f64| *k > 0.0 && *k <= 100.0;
        if self.predict.kappas.is_empty() || !self.predict.kappas.iter().all(kappa_ok) {
            return Err(invalid("predict.kappas must be nonempty with values in (0, 100]"));
        }
        if self.predict.cci_kappas.is_empty() || !self.predict.cci_kappas.iter().all(kappa_ok) {
            return Err(invalid("predict.cci_kappas must be nonempty with values in (0, 100]"));
        }
        if self.predict.horizon < 2 {
            return Err(invalid("predict.horizon must be at least 2"));
        }
        if self.predict.max_path_len == 0 || self.predict.d == 0 {
            return Err(invalid("predict.max_path_len and predict.d must be at least 1"));
        }
        if self.load_scales.is_empty() || !self.load_scales.iter().all(|s| *s > 0.0) {
            return Err(invalid("load_scales must be nonempty and positive"));
        }
        let p = &self.profile;
        if !(p.lo > 0.0 && p.lo <= p.hi) || p.kernel_window == 0 || p.steps < p.kernel_window.max(2) {
            return Err(invalid("profile needs 0 < lo <= hi and steps >= kernel_window >= 1"));
        }
        if !(self.limits.alpha > 0.0) || self.limits.floor_mw < 0.0 {
            return Err(invalid("limits.alpha must be positive and limits.floor_mw nonnegative"));
        }
        if !(self.learn.tau >= 0.0 && self.learn.tau < 1.0) || self.learn.jitter < 0.0 {
            return Err(invalid("learn.tau must be in [0, 1) and learn.jitter nonnegative"));
        }
        if self.learn.ig_samples == 0 || self.learn.max_iterations == 0 {
            return Err(invalid("learn.ig_samples and learn.max_iterations must be at least 1"));
        }
        if self.worst_case.top == 0 {
            return Err(invalid("worst_case.top must be at least 1"));
        }
        Ok(())
    }

    pub fn limit_rule(&self) -> LimitRule {
        LimitRule {
            alpha: self.limits.alpha,
            floor_mw: self.limits.floor_mw,
        }
    }

    pub fn profile_params(&self) -> ProfileParams {
        ProfileParams {
            steps: self.profile.steps,
            lo: self.profile.lo,
            hi: self.profile.hi,
            kernel_window: self.profile.kernel_window,
            seed: self.seed,
        }
    }

    pub fn lingam_options(&self) -> LingamOptions {
        LingamOptions {
            tau: self.learn.tau,
            seed: self.seed,
            max_iterations: self.learn.max_iterations,
            jitter: self.learn.jitter,
            standardize: self.learn.standardize,
            require_convergence: self.learn.require_convergence,
        }
    }

    /// Config content that determines artifacts; the output location does not.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c.case = PathBuf::new();
        crate::artifacts::sha256_hex(serde_json::to_string(&c).expect("config serializes").as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_toml_keeps_defaults() {
        let cfg: RunConfig = toml::from_str("seed = 7\n[predict]\nd = 5\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.predict.d, 5);
        assert_eq!(cfg.predict.horizon, 4);
        assert_eq!(cfg.limits, LimitsConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("sede = 7\n").is_err());
    }

    #[test]
    fn fingerprint_ignores_paths() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.out_dir = "elsewhere".into();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.seed = 1;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn bad_kappa_fails_validation() {
        let mut cfg = RunConfig {
            case: PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../cases/case14.m"),
            ..RunConfig::default()
        };
        assert!(cfg.validate().is_ok());
        cfg.predict.kappas.push(120.0);
        assert!(cfg.validate().is_err());
    }
}
