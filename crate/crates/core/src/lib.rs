pub mod anomaly;
pub mod cascade_sim;
pub mod dataset;
pub mod evaluation;
pub mod grid;
pub mod influence;
pub mod lingam;
pub mod power_flow;
pub mod predict;
pub mod topology;

pub use anomaly::{AnomalyVector, CascadeSequence, TerminalReason};
pub use cascade_sim::{CascadeEngine, GroundTruthSet};
pub use dataset::{LoadProfile, ObservationalDataset, ProfileParams};
pub use grid::{parse_case, GridCase, LimitRule, LineLimits};
pub use influence::InfluenceGraph;
pub use lingam::{CausalModel, CausalModelSet, LingamOptions};
pub use power_flow::{AcOptions, FlowModel, FlowState};
pub use predict::{CausalPredictor, NextFailurePredictor, PredictionSet};
pub use topology::LineSpace;
