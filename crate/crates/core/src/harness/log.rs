use super::StrategyConfig;
use crate::gridworld::{Cell, Frontier, SceneConfig};
use crate::pruning::PruneDecision;
use crate::scorer::{FrontierObservation, ReplayRecord, ScoreVector};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    BudgetExhausted,
    NoFrontiers,
    GoalObservedAndStop,
}

/// Everything that happened at one decision step. The final record of an
/// early-terminated episode has no frontier choice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step_index: usize,
    /// Agent cell when the step's observation was taken.
    pub position: Cell,
    /// Octile path length travelled before this step.
    pub travelled: f64,
    /// Known-free cells after this step's observation.
    pub known_free: usize,
    /// Fraction of goal cells inside the sensor footprint, occlusion ignored.
    pub goal_in_footprint: f64,
    pub frontiers: Vec<Frontier>,
    /// What the scorer was told about each frontier.
    pub observations: Vec<FrontierObservation>,
    pub scores: Option<ScoreVector>,
    pub normalized: Vec<f64>,
    pub decision: Option<PruneDecision>,
    pub selected: Option<usize>,
    /// The accepted set was empty or unreachable.
    pub fallback: bool,
}

impl StepRecord {
    pub fn selected_frontier(&self) -> Option<&Frontier> {
        self.selected.and_then(|id| self.frontiers.iter().find(|f| f.id == id))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode_id: String,
    pub scene: SceneConfig,
    pub strategy: StrategyConfig,
    pub step_budget: usize,
    pub start: Cell,
    pub steps: Vec<StepRecord>,
    pub termination: Termination,
    pub final_position: Cell,
    pub final_travelled: f64,
    /// Step whose observation first revealed a goal cell.
    pub goal_first_seen: Option<usize>,
}

impl EpisodeLog {
    /// Records where a frontier was chosen and the agent moved.
    pub fn steps_used(&self) -> usize {
        self.steps.iter().filter(|s| s.selected.is_some()).count()
    }

    /// Decision-step positions followed by the final position.
    pub fn decision_positions(&self) -> Vec<Cell> {
        let mut out: Vec<Cell> = self.steps.iter().map(|s| s.position).collect();
        if self.steps.last().is_none_or(|s| s.selected.is_some()) {
            out.push(self.final_position);
        }
        out
    }

    /// Path length at the moment an agent that stops after seeing the goal for
    /// one full step would have stopped; the whole path if that never happens.
    pub fn answer_path_length(&self) -> f64 {
        match self.goal_first_seen {
            Some(t) => self.steps.get(t + 1).map_or(self.final_travelled, |s| s.travelled),
            None => self.final_travelled,
        }
    }

    /// Logged logits in replay format, one record per step with a score vector.
    pub fn replay_records(&self) -> Vec<ReplayRecord> {
        self.steps
            .iter()
            .filter_map(|s| {
                s.scores.as_ref().map(|sv| ReplayRecord {
                    episode_id: self.episode_id.clone(),
                    step_index: s.step_index,
                    frontier_count: sv.logits.len(),
                    logits: sv.logits.clone(),
                })
            })
            .collect()
    }
}
