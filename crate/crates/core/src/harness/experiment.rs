use super::report::MetricsRow;
use super::{run_episode, EpisodeLog, EpisodeOptions, HarnessError, Scorer, StrategyConfig, StrategyKind};
use crate::calibration::{
    build_pool, inject_label_noise, oracle_label, step_samples, CalibrationSample, EcdfModel, LabelerConfig,
};
use crate::gridworld::{generate_scene, GroundTruthGrid, SceneConfig, DEFAULT_MIN_CLUSTER};
use crate::metrics::{evaluate_episode, mean};
use crate::planner::DEFAULT_STRIDE;
use crate::pruning::DEFAULT_ALPHA;
use crate::scorer::OracleScorerConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Independent random streams derived from the master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Scene = 1,
    Scorer = 2,
    Noise = 3,
    Bootstrap = 4,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Calibration,
    Evaluation,
}

impl Phase {
    fn prefix(self) -> &'static str {
        match self {
            Phase::Calibration => "cal",
            Phase::Evaluation => "eval",
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for item `index` of stream `stream` under `master`.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93)).wrapping_add(index))
}

/// Full description of an experiment. Every field has a default, so a config
/// file only needs the values it changes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    /// Template for every scene; its `rng_seed` is replaced per scene.
    pub scene: SceneConfig,
    pub calibration_scenes: usize,
    pub eval_scenes: usize,
    pub strategies: Vec<StrategyConfig>,
    pub step_budget: usize,
    pub stride: usize,
    pub min_cluster: usize,
    pub stop_on_goal: bool,
    /// Scorer settings; `rng_seed` is replaced per scene from the scorer stream.
    pub oracle: OracleScorerConfig,
    /// Labeler used to build calibration samples.
    pub labeler: LabelerConfig,
    /// Alpha used by the label-noise ablation.
    pub ablation_alpha: f64,
    pub alpha_grid: Vec<f64>,
    pub noise_fractions: Vec<f64>,
    pub bootstrap_resamples: usize,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            scene: SceneConfig::default(),
            calibration_scenes: 40,
            eval_scenes: 100,
            strategies: vec![
                StrategyConfig::vlm_only(),
                StrategyConfig::closest_frontier(),
                StrategyConfig::prune_then_plan(DEFAULT_ALPHA),
            ],
            step_budget: 50,
            stride: DEFAULT_STRIDE,
            min_cluster: DEFAULT_MIN_CLUSTER,
            stop_on_goal: false,
            oracle: OracleScorerConfig::default(),
            labeler: LabelerConfig::default(),
            ablation_alpha: DEFAULT_ALPHA,
            alpha_grid: (1..=9).map(|i| i as f64 / 10.0).collect(),
            noise_fractions: vec![0.0, 0.05, 0.10],
            bootstrap_resamples: 2000,
            output_dir: PathBuf::from("runs"),
        }
    }
}

impl ExperimentConfig {
    /// Parse without validating, for callers that apply overrides first.
    pub fn parse_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let config = Self::parse_toml(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        self.scene.validate()?;
        self.oracle.validate()?;
        if self.step_budget == 0 {
            return bad("step_budget must be at least 1".into());
        }
        if self.stride == 0 {
            return bad("stride must be at least 1".into());
        }
        if self.min_cluster == 0 {
            return bad("min_cluster must be at least 1".into());
        }
        if self.eval_scenes == 0 {
            return Err(HarnessError::EmptyEnsemble);
        }
        for s in &self.strategies {
            s.validate()?;
        }
        for &a in self.alpha_grid.iter().chain([&self.ablation_alpha]) {
            if !(a > 0.0 && a <= 1.0) {
                return bad(format!("alpha {a} outside (0, 1]"));
            }
        }
        if let Some(f) = self.noise_fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return bad(format!("noise fraction {f} outside [0, 1]"));
        }
        Ok(())
    }

    pub fn episode_options(&self) -> EpisodeOptions {
        EpisodeOptions {
            step_budget: self.step_budget,
            stride: self.stride,
            min_cluster: self.min_cluster,
            stop_on_goal: self.stop_on_goal,
        }
    }
}

/// `(scene_index, scene_seed)` pairs of a phase. Calibration takes indices
/// `0..calibration_scenes` of the scene stream and evaluation the indices after
/// them, so the two phases never share a scene.
pub fn scene_seeds(config: &ExperimentConfig, phase: Phase) -> Vec<(usize, u64)> {
    let range = match phase {
        Phase::Calibration => 0..config.calibration_scenes,
        Phase::Evaluation => config.calibration_scenes..config.calibration_scenes + config.eval_scenes,
    };
    range.map(|i| (i, derive_seed(config.master_seed, Stream::Scene as u64, i as u64))).collect()
}

struct Scene {
    index: usize,
    config: SceneConfig,
    truth: GroundTruthGrid,
}

fn build_scenes(config: &ExperimentConfig, phase: Phase) -> Result<Vec<Scene>, HarnessError> {
    let seeds = scene_seeds(config, phase);
    if seeds.is_empty() {
        return Err(HarnessError::EmptyEnsemble);
    }
    seeds
        .into_iter()
        .map(|(index, seed)| {
            let scene = config.scene.clone().with_seed(seed);
            Ok(Scene { index, truth: generate_scene(&scene)?, config: scene })
        })
        .collect()
}

/// Ground-truth grids of a phase, in index order.
pub fn generate_phase(config: &ExperimentConfig, phase: Phase) -> Result<Vec<(SceneConfig, GroundTruthGrid)>, HarnessError> {
    Ok(build_scenes(config, phase)?.into_iter().map(|s| (s.config, s.truth)).collect())
}

fn episode_id(phase: Phase, index: usize, strategy: &StrategyConfig) -> String {
    format!("{}-{index:04}/{}", phase.prefix(), strategy.tag())
}

fn run_on(
    config: &ExperimentConfig,
    phase: Phase,
    scene: &Scene,
    strategy: &StrategyConfig,
    model: Option<&EcdfModel>,
) -> Result<EpisodeLog, HarnessError> {
    let oracle = OracleScorerConfig {
        rng_seed: derive_seed(config.master_seed, Stream::Scorer as u64, scene.index as u64),
        ..config.oracle.clone()
    };
    run_episode(
        &episode_id(phase, scene.index, strategy),
        &scene.truth,
        &scene.config,
        strategy,
        model,
        Scorer::Oracle(&oracle),
        &config.episode_options(),
    )
}

/// Run the `vlm_only` baseline over the calibration scenes and label every
/// scored frontier.
pub fn collect_calibration(config: &ExperimentConfig) -> Result<Vec<CalibrationSample>, HarnessError> {
    let strategy = StrategyConfig::vlm_only();
    let mut samples = Vec::new();
    for scene in build_scenes(config, Phase::Calibration)? {
        let log = run_on(config, Phase::Calibration, &scene, &strategy, None)?;
        for step in log.steps.iter().filter(|s| s.scores.is_some()) {
            let bad: Vec<bool> = step.observations.iter().map(|o| oracle_label(o, &config.labeler)).collect();
            samples.extend(step_samples(&log.episode_id, step.step_index, &step.normalized, &bad));
        }
    }
    Ok(samples)
}

/// Calibration samples and the ECDF fitted to them.
pub fn calibrate(config: &ExperimentConfig) -> Result<(Vec<CalibrationSample>, EcdfModel), HarnessError> {
    let samples = collect_calibration(config)?;
    let model = build_pool(&samples)?;
    Ok((samples, model))
}

/// Logs and per-episode metric rows of an evaluation run, ordered by scene and
/// then by strategy.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleRun {
    pub logs: Vec<EpisodeLog>,
    pub rows: Vec<MetricsRow>,
}

/// Evaluate `strategies` on the evaluation scenes. A `prune_then_plan` arm uses
/// the model at its `ecdf_path` when set, otherwise `model`.
pub fn run_ensemble(
    config: &ExperimentConfig,
    strategies: &[StrategyConfig],
    model: Option<&EcdfModel>,
) -> Result<EnsembleRun, HarnessError> {
    if strategies.is_empty() {
        return Err(HarnessError::Config("no strategies to run".into()));
    }
    let mut loaded: BTreeMap<&Path, EcdfModel> = BTreeMap::new();
    for s in strategies {
        s.validate()?;
        if let Some(p) = s.ecdf_path.as_deref() {
            if !loaded.contains_key(p) {
                loaded.insert(p, EcdfModel::load(p)?);
            }
        }
    }
    let scenes = build_scenes(config, Phase::Evaluation)?;
    let mut run = EnsembleRun { logs: Vec::new(), rows: Vec::new() };
    for scene in &scenes {
        for s in strategies {
            let m = s.ecdf_path.as_deref().and_then(|p| loaded.get(p)).or(model);
            let log = run_on(config, Phase::Evaluation, scene, s, m)?;
            let metrics = evaluate_episode(&log, &scene.truth)?;
            run.rows.push(MetricsRow::new(&log, scene.config.rng_seed, &metrics));
            run.logs.push(log);
        }
    }
    Ok(run)
}

/// Mean metrics of one alpha value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaRow {
    pub alpha: f64,
    pub episodes: usize,
    pub coverage_auc: f64,
    pub curvature_deg: f64,
    pub spl: f64,
    pub success_score: f64,
    /// Frontiers removed by the test, averaged over decision steps.
    pub mean_pruned_per_step: f64,
}

/// Run `prune_then_plan` for every alpha over the same scenes and seeds.
pub fn sweep_alpha(config: &ExperimentConfig, model: &EcdfModel, alphas: &[f64]) -> Result<Vec<AlphaRow>, HarnessError> {
    alphas
        .iter()
        .map(|&alpha| {
            let run = run_ensemble(config, &[StrategyConfig::prune_then_plan(alpha)], Some(model))?;
            let (pruned, decisions) = run
                .logs
                .iter()
                .flat_map(|l| &l.steps)
                .filter_map(|s| s.decision.as_ref())
                .fold((0usize, 0usize), |(p, n), d| (p + d.pruned_count(), n + 1));
            let col = |f: fn(&MetricsRow) -> f64| mean(&run.rows.iter().map(f).collect::<Vec<_>>());
            Ok(AlphaRow {
                alpha,
                episodes: run.rows.len(),
                coverage_auc: col(|r| r.coverage_auc),
                curvature_deg: col(|r| r.curvature_deg),
                spl: col(|r| r.spl),
                success_score: col(|r| r.success_score),
                mean_pruned_per_step: if decisions == 0 { 0.0 } else { pruned as f64 / decisions as f64 },
            })
        })
        .collect()
}

/// Mean metrics of one label-flip fraction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub fraction: f64,
    pub flipped: usize,
    pub pool_size: usize,
    pub coverage_auc: f64,
    pub curvature_deg: f64,
    pub spl: f64,
    pub success_score: f64,
}

/// Rebuild the ECDF from label-flipped copies of `samples` and re-run
/// `prune_then_plan` at `ablation_alpha`. Every fraction uses the same noise
/// seed, so the fraction is the only thing that changes.
pub fn noise_ablation(
    config: &ExperimentConfig,
    samples: &[CalibrationSample],
    fractions: &[f64],
) -> Result<Vec<(NoiseRow, EnsembleRun)>, HarnessError> {
    let strategy = StrategyConfig { kind: StrategyKind::PruneThenPlan, alpha: Some(config.ablation_alpha), ecdf_path: None };
    fractions
        .iter()
        .map(|&fraction| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.master_seed, Stream::Noise as u64, 0));
            let noisy = inject_label_noise(samples, fraction, &mut rng)?;
            let flipped = noisy.iter().zip(samples).filter(|(a, b)| a.is_bad != b.is_bad).count();
            let model = build_pool(&noisy)?;
            let run = run_ensemble(config, std::slice::from_ref(&strategy), Some(&model))?;
            let col = |f: fn(&MetricsRow) -> f64| mean(&run.rows.iter().map(f).collect::<Vec<_>>());
            let row = NoiseRow {
                fraction,
                flipped,
                pool_size: model.len(),
                coverage_auc: col(|r| r.coverage_auc),
                curvature_deg: col(|r| r.curvature_deg),
                spl: col(|r| r.spl),
                success_score: col(|r| r.success_score),
            };
            Ok((row, run))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            calibration_scenes: 3,
            eval_scenes: 3,
            step_budget: 15,
            bootstrap_resamples: 100,
            ..Default::default()
        }
    }

    #[test]
    fn phases_are_disjoint() {
        let c = ExperimentConfig { calibration_scenes: 200, eval_scenes: 200, ..Default::default() };
        let cal: Vec<u64> = scene_seeds(&c, Phase::Calibration).into_iter().map(|(_, s)| s).collect();
        let eval: Vec<u64> = scene_seeds(&c, Phase::Evaluation).into_iter().map(|(_, s)| s).collect();
        assert!(cal.iter().all(|s| !eval.contains(s)));
        assert_eq!(eval.len(), 200);
    }

    #[test]
    fn streams_differ() {
        let a = derive_seed(1, Stream::Scene as u64, 0);
        assert_ne!(a, derive_seed(1, Stream::Scorer as u64, 0));
        assert_ne!(a, derive_seed(2, Stream::Scene as u64, 0));
        assert_ne!(a, derive_seed(1, Stream::Scene as u64, 1));
    }

    #[test]
    fn config_validation_and_toml() {
        let c = ExperimentConfig::default();
        assert!(c.validate().is_ok());
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        let partial = ExperimentConfig::from_toml("master_seed = 9\n[scene]\nroom_count = 3\n").unwrap();
        assert_eq!(partial.master_seed, 9);
        assert_eq!(partial.scene.room_count, 3);
        assert_eq!(partial.step_budget, 50);
        assert!(ExperimentConfig::from_toml("step_budget = 0").is_err());
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
        assert!(matches!(ExperimentConfig::from_toml("eval_scenes = 0"), Err(HarnessError::EmptyEnsemble)));
    }

    #[test]
    fn empty_calibration_ensemble_is_an_error() {
        let c = ExperimentConfig { calibration_scenes: 0, ..small() };
        assert!(matches!(collect_calibration(&c), Err(HarnessError::EmptyEnsemble)));
    }

    #[test]
    fn saturated_labeler_marks_everything_bad() {
        let c = ExperimentConfig { labeler: LabelerConfig { novelty_floor: 1.01, ..Default::default() }, ..small() };
        let samples = collect_calibration(&c).unwrap();
        assert!(!samples.is_empty());
        assert!(samples.iter().all(|s| s.is_bad));
    }

    #[test]
    fn ensemble_rows_follow_scene_then_strategy() {
        let c = small();
        let (_, model) = calibrate(&c).unwrap();
        let run = run_ensemble(&c, &c.strategies, Some(&model)).unwrap();
        assert_eq!(run.rows.len(), 9);
        assert_eq!(run.rows[0].strategy, "vlm_only");
        assert_eq!(run.rows[2].strategy, "prune_then_plan");
        assert_eq!(run.rows[0].seed, run.rows[2].seed);
        assert_ne!(run.rows[0].seed, run.rows[3].seed);
    }
}
