//! Episode orchestration, experiment sweeps and persistence.

mod episode;
mod experiment;
mod log;
mod report;

pub use episode::{run_episode, EpisodeOptions, Scorer};
pub use experiment::{
    calibrate, collect_calibration, derive_seed, generate_phase, noise_ablation, run_ensemble, scene_seeds, sweep_alpha, AlphaRow,
    EnsembleRun, ExperimentConfig, NoiseRow, Phase, Stream,
};
pub use log::{EpisodeLog, StepRecord, Termination};
pub use report::{
    alpha_rows_to_csv, hash_hex, noise_rows_to_csv, parse_metrics_csv, summarize, summary_to_csv, write_jsonl,
    Manifest, MetricsRow, StrategySummary, METRICS_CSV_HEADER,
};

use crate::calibration::{CalibrationError, EcdfModel};
use crate::gridworld::GridError;
use crate::metrics::MetricsError;
use crate::planner::PlanError;
use crate::pruning::{PruneError, DEFAULT_ALPHA};
use crate::scorer::ScoreError;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("scene ensemble is empty")]
    EmptyEnsemble,
    #[error("prune_then_plan needs a fitted ECDF model")]
    MissingModel,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Prune(#[from] PruneError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
}

impl HarnessError {
    /// Whether the error stems from bad user input rather than a failure while running.
    pub fn is_config(&self) -> bool {
        matches!(self, HarnessError::Config(_) | HarnessError::EmptyEnsemble | HarnessError::MissingModel)
            || matches!(self, HarnessError::Grid(GridError::InvalidConfig(_)))
            || matches!(self, HarnessError::Score(ScoreError::InvalidConfig(_)))
            || matches!(self, HarnessError::Prune(PruneError::InvalidAlpha(_)))
            || matches!(self, HarnessError::Calibration(CalibrationError::InvalidFraction(_)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    VlmOnly,
    ClosestFrontier,
    PruneThenPlan,
}

impl StrategyKind {
    pub fn label(self) -> &'static str {
        match self {
            StrategyKind::VlmOnly => "vlm_only",
            StrategyKind::ClosestFrontier => "closest_frontier",
            StrategyKind::PruneThenPlan => "prune_then_plan",
        }
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vlm_only" => Ok(StrategyKind::VlmOnly),
            "closest_frontier" => Ok(StrategyKind::ClosestFrontier),
            "prune_then_plan" => Ok(StrategyKind::PruneThenPlan),
            other => Err(HarnessError::Config(format!("unknown strategy {other:?}"))),
        }
    }
}

/// One evaluation arm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ecdf_path: Option<PathBuf>,
}

impl StrategyConfig {
    pub fn vlm_only() -> Self {
        Self { kind: StrategyKind::VlmOnly, alpha: None, ecdf_path: None }
    }

    pub fn closest_frontier() -> Self {
        Self { kind: StrategyKind::ClosestFrontier, alpha: None, ecdf_path: None }
    }

    pub fn prune_then_plan(alpha: f64) -> Self {
        Self { kind: StrategyKind::PruneThenPlan, alpha: Some(alpha), ecdf_path: None }
    }

    /// Alpha in effect for pruning; `None` for strategies that never prune.
    pub fn effective_alpha(&self) -> Option<f64> {
        match self.kind {
            StrategyKind::PruneThenPlan => Some(self.alpha.unwrap_or(DEFAULT_ALPHA)),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a <= 1.0) {
                return Err(HarnessError::Config(format!("alpha {a} outside (0, 1]")));
            }
        }
        if self.kind != StrategyKind::PruneThenPlan && (self.alpha.is_some() || self.ecdf_path.is_some()) {
            return Err(HarnessError::Config(format!("{} takes no alpha or ecdf_path", self.kind.label())));
        }
        Ok(())
    }

    /// Short name used in episode ids and reports, e.g. `prune_then_plan@0.5`.
    pub fn tag(&self) -> String {
        match self.effective_alpha() {
            Some(a) => format!("{}@{a}", self.kind.label()),
            None => self.kind.label().to_string(),
        }
    }
}

/// A strategy bound to the resources it needs at run time.
#[derive(Clone, Copy, Debug)]
pub enum Strategy<'a> {
    VlmOnly,
    ClosestFrontier,
    PruneThenPlan { alpha: f64, model: &'a EcdfModel },
}

impl<'a> Strategy<'a> {
    pub fn bind(config: &StrategyConfig, model: Option<&'a EcdfModel>) -> Result<Self, HarnessError> {
        config.validate()?;
        Ok(match config.kind {
            StrategyKind::VlmOnly => Strategy::VlmOnly,
            StrategyKind::ClosestFrontier => Strategy::ClosestFrontier,
            StrategyKind::PruneThenPlan => Strategy::PruneThenPlan {
                alpha: config.effective_alpha().unwrap_or(DEFAULT_ALPHA),
                model: model.ok_or(HarnessError::MissingModel)?,
            },
        })
    }
}
