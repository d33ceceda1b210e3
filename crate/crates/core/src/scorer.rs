//! Per-frontier logits and confidences for one decision step.
//!
//! Two sources are supported: a synthetic oracle whose miscalibration is
//! controlled by temperature, logit noise and "distractor" boosts of bad
//! frontiers, and a replay log holding logits recorded elsewhere.

use crate::calibration::{oracle_label, LabelerConfig};
use crate::gridworld::{sensor_footprint, AgentState, CellState, Frontier, OccupancyGrid};
use crate::planner::DistanceField;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("logit vector is empty")]
    Empty,
    #[error("logit {index} is not finite")]
    NonFinite { index: usize },
    #[error("invalid oracle scorer config: {0}")]
    InvalidConfig(String),
    #[error("replay log has no entry for episode {episode:?} step {step}")]
    MissingKey { episode: String, step: usize },
    #[error("replay log stores {stored} logits but {detected} frontiers were detected")]
    CountMismatch { stored: usize, detected: usize },
    #[error("replay log line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Numerically stable softmax. Confidences that underflow are floored at the
/// smallest positive double so every entry stays strictly positive.
pub fn softmax_confidences(logits: &[f64]) -> Result<Vec<f64>, ScoreError> {
    if logits.is_empty() {
        return Err(ScoreError::Empty);
    }
    if let Some(index) = logits.iter().position(|z| !z.is_finite()) {
        return Err(ScoreError::NonFinite { index });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| (e / total).max(f64::MIN_POSITIVE)).collect())
}

/// Logits and softmax confidences for the frontiers of one step, indexed by
/// frontier id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub step_index: usize,
    pub logits: Vec<f64>,
    pub confidences: Vec<f64>,
}

impl ScoreVector {
    pub fn from_logits(step_index: usize, logits: Vec<f64>) -> Result<Self, ScoreError> {
        let confidences = softmax_confidences(&logits)?;
        Ok(Self { step_index, logits, confidences })
    }

    pub fn len(&self) -> usize {
        self.confidences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.confidences.is_empty()
    }

    /// Highest-confidence frontier id; ties go to the lowest id.
    pub fn argmax(&self) -> Option<usize> {
        argmax_lowest(&self.confidences)
    }
}

pub(crate) fn argmax_lowest(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// What the oracle scorer and labeler know about a frontier. `goal_delta` is
/// computed on the ground truth and never reaches the planner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierObservation {
    pub frontier_id: usize,
    pub unknown_mass: usize,
    /// Goal distance from the representative minus goal distance from the agent.
    /// Positive values lead away from the goal.
    pub goal_delta: f64,
    /// Fraction of the sensor footprint around the representative that is still unknown.
    pub novelty: f64,
}

/// Build observations for each detected frontier. `goal_field` holds ground
/// truth distances to the nearest goal cell.
pub fn describe_frontiers(
    frontiers: &[Frontier],
    belief: &OccupancyGrid,
    agent: &AgentState,
    goal_field: &DistanceField,
    sensor_range: usize,
) -> Vec<FrontierObservation> {
    let agent_goal = goal_field.distance(agent.position).unwrap_or(0.0);
    frontiers
        .iter()
        .map(|f| {
            let (mut unknown, mut total) = (0usize, 0usize);
            for c in sensor_footprint(f.representative, sensor_range, belief.width(), belief.height()) {
                total += 1;
                if belief.get(c) == CellState::Unknown {
                    unknown += 1;
                }
            }
            FrontierObservation {
                frontier_id: f.id,
                unknown_mass: f.unknown_mass.max(1),
                goal_delta: goal_field.distance(f.representative).unwrap_or(agent_goal) - agent_goal,
                novelty: unknown as f64 / total as f64,
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleScorerConfig {
    pub rng_seed: u64,
    pub relevance_weight: f64,
    pub novelty_weight: f64,
    /// Below 1 sharpens the softmax (overconfidence).
    pub temperature: f64,
    /// Standard deviation of the Gaussian added to each logit.
    pub noise_sigma: f64,
    /// Probability that a bad frontier's logit is raised to the step maximum.
    pub distractor_prob: f64,
    /// Decides which frontiers count as bad for the distractor boost.
    pub labeler: LabelerConfig,
}

impl Default for OracleScorerConfig {
    fn default() -> Self {
        Self {
            rng_seed: 0,
            relevance_weight: 4.0,
            novelty_weight: 1.0,
            temperature: 0.3,
            noise_sigma: 0.5,
            distractor_prob: 0.3,
            labeler: LabelerConfig::default(),
        }
    }
}

impl OracleScorerConfig {
    pub fn validate(&self) -> Result<(), ScoreError> {
        let bad = |m: &str| Err(ScoreError::InvalidConfig(m.to_string()));
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be positive");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.distractor_prob) {
            return bad("distractor_prob must lie in [0, 1]");
        }
        if !self.relevance_weight.is_finite() || !self.novelty_weight.is_finite() {
            return bad("weights must be finite");
        }
        Ok(())
    }
}

/// Noise-free logit before temperature scaling.
pub fn base_logit(obs: &FrontierObservation, config: &OracleScorerConfig, diameter: f64) -> f64 {
    config.relevance_weight * (-obs.goal_delta / diameter) + config.novelty_weight * obs.novelty
}

/// Synthetic stand-in for a vision-language model scoring the step's frontiers.
///
/// Base logits get Gaussian noise, then each bad frontier is raised to the step
/// maximum with probability `distractor_prob`, then everything is divided by
/// the temperature. `rng` fully determines the perturbations.
pub fn oracle_score<R: Rng + ?Sized>(
    step_index: usize,
    step: &[FrontierObservation],
    config: &OracleScorerConfig,
    diameter: f64,
    rng: &mut R,
) -> Result<ScoreVector, ScoreError> {
    if step.is_empty() {
        return Err(ScoreError::Empty);
    }
    let noise = Normal::new(0.0, config.noise_sigma).map_err(|e| ScoreError::InvalidConfig(e.to_string()))?;
    let mut logits: Vec<f64> = step
        .iter()
        .map(|o| base_logit(o, config, diameter) + noise.sample(rng))
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let boosts: Vec<bool> = step.iter().map(|_| rng.random_bool(config.distractor_prob)).collect();
    for ((z, o), boost) in logits.iter_mut().zip(step).zip(boosts) {
        if boost && oracle_label(o, &config.labeler) {
            *z = max;
        }
    }
    for z in &mut logits {
        *z /= config.temperature;
    }
    ScoreVector::from_logits(step_index, logits)
}

/// One line of a replay file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub episode_id: String,
    pub step_index: usize,
    pub frontier_count: usize,
    pub logits: Vec<f64>,
}

/// Externally recorded logits keyed by `(episode_id, step_index)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReplayLog {
    entries: BTreeMap<(String, usize), Vec<f64>>,
}

impl ReplayLog {
    pub fn insert(&mut self, record: ReplayRecord) {
        self.entries.insert((record.episode_id, record.step_index), record.logits);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parse line-delimited JSON records. Blank lines are skipped.
    pub fn from_jsonl(text: &str) -> Result<Self, ScoreError> {
        let mut log = Self::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: ReplayRecord = serde_json::from_str(line)
                .map_err(|e| ScoreError::Parse { line: i + 1, message: e.to_string() })?;
            if rec.frontier_count != rec.logits.len() {
                return Err(ScoreError::Parse {
                    line: i + 1,
                    message: format!("frontier_count {} but {} logits", rec.frontier_count, rec.logits.len()),
                });
            }
            log.insert(rec);
        }
        Ok(log)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for ((episode_id, step_index), logits) in &self.entries {
            let rec = ReplayRecord {
                episode_id: episode_id.clone(),
                step_index: *step_index,
                frontier_count: logits.len(),
                logits: logits.clone(),
            };
            out.push_str(&serde_json::to_string(&rec).expect("replay records serialize"));
            out.push('\n');
        }
        out
    }
}

/// Look up recorded logits and recompute confidences, checking the recorded
/// frontier count against the live detector.
pub fn replay_score(episode_id: &str, step_index: usize, detected: usize, log: &ReplayLog) -> Result<ScoreVector, ScoreError> {
    let logits = log
        .entries
        .get(&(episode_id.to_string(), step_index))
        .ok_or_else(|| ScoreError::MissingKey { episode: episode_id.to_string(), step: step_index })?;
    if logits.len() != detected {
        return Err(ScoreError::CountMismatch { stored: logits.len(), detected });
    }
    ScoreVector::from_logits(step_index, logits.clone())
}
