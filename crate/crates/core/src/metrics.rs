//! Exploration-behaviour and answer-quality metrics computed from episode logs.

use crate::gridworld::{Cell, GroundTruthGrid};
use crate::harness::EpisodeLog;
use crate::planner::truth_field;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Credit for having the goal inside the sensor footprint without seeing it.
pub const PARTIAL_CREDIT_SCALE: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("goal region is unreachable from the start cell")]
    GoalUnreachable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub coverage_curve: Vec<f64>,
    pub coverage_auc: f64,
    pub curvature_deg: f64,
    pub spl: f64,
    pub success_score: f64,
    pub steps_used: usize,
    pub oscillation_count: usize,
}

/// Fraction of start-reachable free cells known after each step's observation.
pub fn coverage_curve(log: &EpisodeLog, truth: &GroundTruthGrid) -> Vec<f64> {
    let total = truth.reachable_free_count().max(1) as f64;
    log.steps.iter().map(|s| (s.known_free as f64 / total).clamp(0.0, 1.0)).collect()
}

/// Mean of the curve over `budget` steps, padding a short curve with its last value.
pub fn coverage_auc(curve: &[f64], budget: usize) -> f64 {
    let Some(&last) = curve.last() else { return 0.0 };
    let len = budget.max(curve.len());
    let sum: f64 = curve.iter().sum::<f64>() + last * (len - curve.len()) as f64;
    sum / len as f64
}

/// Mean absolute turning angle in degrees between successive nonzero
/// displacements of `path`. Zero when fewer than two segments remain.
pub fn curvature(path: &[Cell]) -> f64 {
    let segments: Vec<(f64, f64)> = path
        .windows(2)
        .map(|w| (w[1].row as f64 - w[0].row as f64, w[1].col as f64 - w[0].col as f64))
        .filter(|&(dr, dc)| dr != 0.0 || dc != 0.0)
        .collect();
    if segments.len() < 2 {
        return 0.0;
    }
    let total: f64 = segments
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let cross = a.0 * b.1 - a.1 * b.0;
            let dot = a.0 * b.0 + a.1 * b.1;
            cross.abs().atan2(dot).to_degrees()
        })
        .sum();
    total / (segments.len() - 1) as f64
}

/// Graded success and success-weighted path length.
///
/// Success is 1 once any goal cell has been observed; otherwise it is
/// [`PARTIAL_CREDIT_SCALE`] times the best fraction of goal cells that fell
/// inside the sensor footprint. The path length is measured up to the point
/// where a goal-stopping agent would have stopped.
pub fn graded_spl(log: &EpisodeLog, truth: &GroundTruthGrid) -> Result<(f64, f64), MetricsError> {
    let shortest = truth_field(truth, truth.goal())
        .distance(truth.start())
        .ok_or(MetricsError::GoalUnreachable)?;
    let success = if log.goal_first_seen.is_some() {
        1.0
    } else {
        PARTIAL_CREDIT_SCALE * log.steps.iter().map(|s| s.goal_in_footprint).fold(0.0, f64::max)
    };
    Ok((success, spl_from(success, shortest, log.answer_path_length())))
}

/// `success * L / max(L, P)`; equals `success` when the shortest path is zero.
pub fn spl_from(success: f64, shortest: f64, travelled: f64) -> f64 {
    if shortest <= 0.0 {
        return success;
    }
    success * shortest / shortest.max(travelled)
}

fn bearing_angle(a: (f64, f64), b: (f64, f64)) -> f64 {
    let cross = a.0 * b.1 - a.1 * b.0;
    let dot = a.0 * b.0 + a.1 * b.1;
    cross.abs().atan2(dot).to_degrees()
}

/// Steps whose chosen frontier lies more than 90 degrees of bearing away from
/// the previous step's choice.
pub fn oscillation_count(log: &EpisodeLog) -> usize {
    let bearings: Vec<(Cell, (f64, f64))> = log
        .steps
        .iter()
        .filter_map(|s| {
            let f = s.selected_frontier()?;
            let v = (
                f.representative.row as f64 - s.position.row as f64,
                f.representative.col as f64 - s.position.col as f64,
            );
            Some((f.representative, v))
        })
        .collect();
    bearings
        .windows(2)
        .filter(|w| {
            let ((ra, va), (rb, vb)) = (w[0], w[1]);
            ra != rb && va != (0.0, 0.0) && vb != (0.0, 0.0) && bearing_angle(va, vb) > 90.0
        })
        .count()
}

pub fn evaluate_episode(log: &EpisodeLog, truth: &GroundTruthGrid) -> Result<EpisodeMetrics, MetricsError> {
    let curve = coverage_curve(log, truth);
    let (success_score, spl) = graded_spl(log, truth)?;
    Ok(EpisodeMetrics {
        coverage_auc: coverage_auc(&curve, log.step_budget),
        coverage_curve: curve,
        curvature_deg: curvature(&log.decision_positions()),
        spl,
        success_score,
        steps_used: log.steps_used(),
        oscillation_count: oscillation_count(log),
    })
}

/// Mean with a percentile bootstrap interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub low: f64,
    pub high: f64,
    pub n: usize,
}

impl MeanCi {
    /// Intervals share no point.
    pub fn disjoint(&self, other: &MeanCi) -> bool {
        self.high < other.low || other.high < self.low
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Percentile bootstrap of the mean at confidence `level` (e.g. 0.95).
pub fn bootstrap_mean_ci<R: Rng + ?Sized>(values: &[f64], resamples: usize, level: f64, rng: &mut R) -> MeanCi {
    let n = values.len();
    let m = mean(values);
    if n == 0 || resamples == 0 {
        return MeanCi { mean: m, low: m, high: m, n };
    }
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let pick = |q: f64| means[((q * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    MeanCi { mean: m, low: pick(tail), high: pick(1.0 - tail), n }
}
