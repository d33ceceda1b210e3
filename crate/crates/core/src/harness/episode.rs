use super::experiment::derive_seed;
use super::{EpisodeLog, HarnessError, StepRecord, Strategy, StrategyConfig, Termination};
use crate::calibration::{normalize_step, EcdfModel};
use crate::gridworld::{
    detect_frontiers_in_field, observe_in_place, AgentState, CellState, GroundTruthGrid, OccupancyGrid, SceneConfig,
    DEFAULT_MIN_CLUSTER,
};
use crate::planner::{advance, closest_frontier, geodesic_field, select_frontier, truth_field, DEFAULT_STRIDE};
use crate::pruning::prune_step;
use crate::scorer::{describe_frontiers, oracle_score, replay_score, OracleScorerConfig, ReplayLog, ScoreVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Source of per-step frontier logits.
#[derive(Clone, Copy, Debug)]
pub enum Scorer<'a> {
    /// Synthetic scorer; step `t` draws from its own stream seeded by
    /// `rng_seed` and `t`, so identical frontier sets get identical noise.
    Oracle(&'a OracleScorerConfig),
    /// Logits recorded elsewhere, looked up by episode id and step.
    Replay(&'a ReplayLog),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeOptions {
    pub step_budget: usize,
    pub stride: usize,
    pub min_cluster: usize,
    /// End the episode once the goal has been observed for one full step.
    pub stop_on_goal: bool,
}

impl Default for EpisodeOptions {
    fn default() -> Self {
        Self { step_budget: 50, stride: DEFAULT_STRIDE, min_cluster: DEFAULT_MIN_CLUSTER, stop_on_goal: false }
    }
}

/// Run one navigation episode.
///
/// Each step observes, detects frontiers, scores them, lets the strategy pick
/// one and advances up to `stride` cells towards it. The loop ends when the
/// budget is spent, no frontier remains, or (if enabled) one step after the
/// goal was first observed.
pub fn run_episode(
    episode_id: &str,
    truth: &GroundTruthGrid,
    scene: &SceneConfig,
    strategy: &StrategyConfig,
    model: Option<&EcdfModel>,
    scorer: Scorer<'_>,
    options: &EpisodeOptions,
) -> Result<EpisodeLog, HarnessError> {
    let bound = Strategy::bind(strategy, model)?;
    if options.stride == 0 {
        return Err(HarnessError::Config("stride must be at least 1".into()));
    }
    let goal_field = truth_field(truth, truth.goal());
    if goal_field.distance(truth.start()).is_none() {
        return Err(crate::gridworld::GridError::GoalUnreachable.into());
    }
    let diameter = truth.diameter();
    let goal_cells = truth.goal();

    let mut belief = OccupancyGrid::unknown(truth.width(), truth.height());
    let mut agent = AgentState::at(truth.start());
    let mut travelled = 0.0;
    let mut goal_first_seen = None;
    let mut steps = Vec::new();
    let mut termination = Termination::BudgetExhausted;

    for t in 0..options.step_budget {
        observe_in_place(truth, &mut belief, &agent, scene);
        if goal_first_seen.is_none() && goal_cells.iter().any(|&g| belief.get(g) != CellState::Unknown) {
            goal_first_seen = Some(t);
        }
        let in_range = goal_cells.iter().filter(|g| g.chebyshev(agent.position) <= scene.sensor_range).count();
        let mut record = StepRecord {
            step_index: t,
            position: agent.position,
            travelled,
            known_free: belief.known_free_count(),
            goal_in_footprint: in_range as f64 / goal_cells.len() as f64,
            frontiers: Vec::new(),
            observations: Vec::new(),
            scores: None,
            normalized: Vec::new(),
            decision: None,
            selected: None,
            fallback: false,
        };
        if options.stop_on_goal && goal_first_seen.is_some_and(|s| s < t) {
            steps.push(record);
            termination = Termination::GoalObservedAndStop;
            break;
        }

        let field = geodesic_field(&belief, agent.position)?;
        let frontiers = detect_frontiers_in_field(&belief, &field, options.min_cluster);
        if frontiers.is_empty() {
            steps.push(record);
            termination = Termination::NoFrontiers;
            break;
        }
        let observations = describe_frontiers(&frontiers, &belief, &agent, &goal_field, scene.sensor_range);
        let scores: ScoreVector = match scorer {
            Scorer::Oracle(cfg) => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.rng_seed, 0, t as u64));
                oracle_score(t, &observations, cfg, diameter, &mut rng)?
            }
            Scorer::Replay(log) => replay_score(episode_id, t, frontiers.len(), log)?,
        };

        let chosen = match bound {
            Strategy::VlmOnly => {
                let id = scores.argmax().expect("nonempty scores");
                frontiers.iter().find(|f| f.id == id).expect("ids index frontiers")
            }
            Strategy::ClosestFrontier => closest_frontier(frontiers.iter().map(|f| f.id), &frontiers, &field)
                .ok_or(crate::planner::PlanError::NoReachableFrontier)?,
            Strategy::PruneThenPlan { alpha, model } => {
                let normalized = normalize_step(&scores.confidences)?;
                let decision = prune_step(&normalized, model, alpha)?;
                let selection = select_frontier(&decision, &frontiers, &field, &scores)?;
                record.normalized = normalized;
                record.decision = Some(decision);
                record.fallback = selection.fallback;
                selection.frontier
            }
        };
        if record.normalized.is_empty() {
            record.normalized = normalize_step(&scores.confidences)?;
        }

        let next = advance(&agent, chosen, &field, options.stride);
        travelled += next.path[agent.path.len() - 1..].windows(2).map(|w| w[0].step_cost(w[1])).sum::<f64>();
        record.selected = Some(chosen.id);
        record.frontiers = frontiers.clone();
        record.observations = observations;
        record.scores = Some(scores);
        steps.push(record);
        agent = next;
    }

    Ok(EpisodeLog {
        episode_id: episode_id.to_string(),
        scene: scene.clone(),
        strategy: strategy.clone(),
        step_budget: options.step_budget,
        start: truth.start(),
        steps,
        termination,
        final_position: agent.position,
        final_travelled: travelled,
        goal_first_seen,
    })
}
