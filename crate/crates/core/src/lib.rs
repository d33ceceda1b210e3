//! Frontier exploration with calibrated pruning on 2D gridworlds.
//!
//! A simulated agent explores an occupancy grid. At every step a scorer
//! assigns confidences to the detected frontiers; the confidences are turned
//! into p-values against a calibration pool of known-bad frontiers, a
//! step-down test prunes unpromising frontiers, and the agent heads for the
//! closest survivor.

pub mod calibration;
pub mod gridworld;
pub mod harness;
pub mod metrics;
pub mod planner;
pub mod pruning;
pub mod scorer;

pub use calibration::{normalize_step, CalibrationSample, EcdfModel, LabelerConfig};
pub use gridworld::{AgentState, Cell, CellState, Frontier, GroundTruthGrid, OccupancyGrid, SceneConfig, Terrain};
pub use harness::{run_episode, EpisodeLog, EpisodeOptions, ExperimentConfig, Scorer, StrategyConfig, StrategyKind};
pub use metrics::{curvature, EpisodeMetrics};
pub use planner::{geodesic_field, select_frontier, DistanceField};
pub use pruning::{holm_prune, prune_step, PruneDecision};
pub use scorer::{OracleScorerConfig, ScoreVector};
