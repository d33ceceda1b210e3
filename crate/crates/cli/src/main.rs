use clap::{Args, Parser, Subcommand};
use ptp_core::calibration::{build_pool, samples_from_jsonl, samples_to_jsonl, EcdfModel};
use ptp_core::gridworld::write_scene;
use ptp_core::harness::{
    alpha_rows_to_csv, calibrate, generate_phase, noise_ablation, noise_rows_to_csv, parse_metrics_csv, run_ensemble,
    summarize, summary_to_csv, sweep_alpha, write_jsonl, ExperimentConfig, HarnessError, Manifest, MetricsRow, Phase,
    StrategyConfig, StrategySummary,
};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ptp", version, about = "Frontier pruning experiments on synthetic gridworlds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the calibration and evaluation scenes as text grids
    GenScenes(Common),
    /// Collect labelled calibration samples and fit the ECDF
    Calibrate(Common),
    /// Evaluate the configured strategies on the evaluation scenes
    Run {
        #[command(flatten)]
        common: Common,
        /// Fitted ECDF file; calibrates from scratch when omitted
        #[arg(long)]
        ecdf: Option<PathBuf>,
    },
    /// Evaluate prune_then_plan over a grid of alpha values
    SweepAlpha {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ecdf: Option<PathBuf>,
    },
    /// Rebuild the ECDF from label-flipped samples and re-evaluate
    NoiseAblation {
        #[command(flatten)]
        common: Common,
        /// Calibration samples (JSON lines); collected from scratch when omitted
        #[arg(long)]
        samples: Option<PathBuf>,
    },
    /// Aggregate one or more per-episode metrics CSV files
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

/// Overrides for `ExperimentConfig`; anything left unset keeps the value
/// from `--config` or the built-in default.
#[derive(Args, Clone, Default)]
struct Common {
    /// TOML file with experiment settings
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    master_seed: Option<u64>,
    #[arg(long)]
    calibration_scenes: Option<usize>,
    #[arg(long)]
    eval_scenes: Option<usize>,
    /// Comma-separated, e.g. `vlm_only,closest_frontier,prune_then_plan@0.5`
    #[arg(long)]
    strategies: Option<String>,
    #[arg(long)]
    step_budget: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    min_cluster: Option<usize>,
    #[arg(long)]
    stop_on_goal: Option<bool>,
    #[arg(long)]
    room_count: Option<usize>,
    #[arg(long)]
    corridor_width: Option<usize>,
    #[arg(long)]
    dead_end_count: Option<usize>,
    #[arg(long)]
    grid_width: Option<usize>,
    #[arg(long)]
    grid_height: Option<usize>,
    #[arg(long)]
    sensor_range: Option<usize>,
    #[arg(long)]
    sensor_fov: Option<f64>,
    #[arg(long)]
    relevance_weight: Option<f64>,
    #[arg(long)]
    novelty_weight: Option<f64>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    distractor_prob: Option<f64>,
    #[arg(long)]
    relevance_margin: Option<f64>,
    #[arg(long)]
    novelty_floor: Option<f64>,
    #[arg(long)]
    ablation_alpha: Option<f64>,
    /// Comma-separated alpha values
    #[arg(long)]
    alpha_grid: Option<String>,
    /// Comma-separated label-flip fractions
    #[arg(long)]
    noise_fractions: Option<String>,
    #[arg(long)]
    bootstrap_resamples: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

fn parse_list(text: &str, what: &str) -> Result<Vec<f64>, HarnessError> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| invalid(format!("bad {what} value {s:?}"))))
        .collect()
}

fn parse_strategy(text: &str) -> Result<StrategyConfig, HarnessError> {
    let (kind, alpha) = match text.trim().split_once('@') {
        Some((k, a)) => (k, Some(a.parse::<f64>().map_err(|_| invalid(format!("bad alpha in {text:?}")))?)),
        None => (text.trim(), None),
    };
    let mut s = StrategyConfig { kind: kind.parse()?, alpha: None, ecdf_path: None };
    if s.kind == ptp_core::harness::StrategyKind::PruneThenPlan {
        s.alpha = alpha.or(Some(ptp_core::pruning::DEFAULT_ALPHA));
    } else if alpha.is_some() {
        return Err(invalid(format!("{kind} takes no alpha")));
    }
    Ok(s)
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut c = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
                ExperimentConfig::parse_toml(&text)?
            }
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag.clone() { c.$($field).+ = v; })*
            };
        }
        set! {
            master_seed => master_seed,
            calibration_scenes => calibration_scenes,
            eval_scenes => eval_scenes,
            step_budget => step_budget,
            stride => stride,
            min_cluster => min_cluster,
            stop_on_goal => stop_on_goal,
            room_count => scene.room_count,
            corridor_width => scene.corridor_width,
            dead_end_count => scene.dead_end_count,
            sensor_range => scene.sensor_range,
            sensor_fov => scene.sensor_fov,
            relevance_weight => oracle.relevance_weight,
            novelty_weight => oracle.novelty_weight,
            temperature => oracle.temperature,
            noise_sigma => oracle.noise_sigma,
            distractor_prob => oracle.distractor_prob,
            relevance_margin => labeler.relevance_margin,
            novelty_floor => labeler.novelty_floor,
            ablation_alpha => ablation_alpha,
            bootstrap_resamples => bootstrap_resamples,
            output_dir => output_dir,
        }
        if let Some(w) = self.grid_width {
            c.scene.grid_size.0 = w;
        }
        if let Some(h) = self.grid_height {
            c.scene.grid_size.1 = h;
        }
        if let Some(s) = &self.strategies {
            c.strategies = s.split(',').map(parse_strategy).collect::<Result<_, _>>()?;
        }
        if let Some(s) = &self.alpha_grid {
            c.alpha_grid = parse_list(s, "alpha")?;
        }
        if let Some(s) = &self.noise_fractions {
            c.noise_fractions = parse_list(s, "noise fraction")?;
        }
        c.validate()?;
        Ok(c)
    }
}

fn load_model(path: &Path, manifest: &mut Manifest) -> Result<EcdfModel, HarnessError> {
    let bytes = manifest.read_input(path)?;
    let text = String::from_utf8(bytes).map_err(|_| HarnessError::Parse(format!("{} is not UTF-8", path.display())))?;
    Ok(EcdfModel::from_text(&text)?)
}

fn model_for(
    config: &ExperimentConfig,
    ecdf: Option<&Path>,
    manifest: &mut Manifest,
) -> Result<EcdfModel, HarnessError> {
    match ecdf {
        Some(p) => load_model(p, manifest),
        None => {
            let (samples, model) = calibrate(config)?;
            manifest.write_output(&config.output_dir, "calibration_samples.jsonl", samples_to_jsonl(&samples).as_bytes())?;
            manifest.write_output(&config.output_dir, "ecdf.txt", model.to_text().as_bytes())?;
            Ok(model)
        }
    }
}

fn print_summary(summaries: &[StrategySummary]) {
    for s in summaries {
        println!(
            "{:<22} n={:<4} coverage_auc {:.4} [{:.4}, {:.4}]  curvature {:.2} [{:.2}, {:.2}]  spl {:.4} [{:.4}, {:.4}]",
            s.alpha.map_or(s.strategy.clone(), |a| format!("{}@{a}", s.strategy)),
            s.episodes,
            s.coverage_auc.mean,
            s.coverage_auc.low,
            s.coverage_auc.high,
            s.curvature_deg.mean,
            s.curvature_deg.low,
            s.curvature_deg.high,
            s.spl.mean,
            s.spl.low,
            s.spl.high,
        );
    }
}

fn execute(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::GenScenes(common) => {
            let config = common.resolve()?;
            let mut manifest = Manifest::new("gen-scenes", &config);
            let mut written = 0;
            for phase in [Phase::Calibration, Phase::Evaluation] {
                let prefix = if phase == Phase::Calibration { "cal" } else { "eval" };
                let scenes = if phase == Phase::Calibration && config.calibration_scenes == 0 {
                    Vec::new()
                } else {
                    generate_phase(&config, phase)?
                };
                for (i, (scene, truth)) in scenes.iter().enumerate() {
                    let name = format!("scenes/{prefix}-{i:04}-seed{}.grid", scene.rng_seed);
                    manifest.write_output(&config.output_dir, &name, write_scene(truth).as_bytes())?;
                    written += 1;
                }
            }
            manifest.finish(&config.output_dir)?;
            println!("wrote {written} scenes to {}", config.output_dir.join("scenes").display());
        }
        Command::Calibrate(common) => {
            let config = common.resolve()?;
            let mut manifest = Manifest::new("calibrate", &config);
            let (samples, model) = calibrate(&config)?;
            manifest.write_output(&config.output_dir, "calibration_samples.jsonl", samples_to_jsonl(&samples).as_bytes())?;
            manifest.write_output(&config.output_dir, "ecdf.txt", model.to_text().as_bytes())?;
            manifest.finish(&config.output_dir)?;
            let bad = samples.iter().filter(|s| s.is_bad).count();
            println!("{} samples ({bad} labelled bad), pool size {}", samples.len(), model.len());
        }
        Command::Run { common, ecdf } => {
            let config = common.resolve()?;
            let mut manifest = Manifest::new("run", &config);
            let needs_model = config
                .strategies
                .iter()
                .any(|s| s.kind == ptp_core::harness::StrategyKind::PruneThenPlan && s.ecdf_path.is_none());
            let model = if needs_model { Some(model_for(&config, ecdf.as_deref(), &mut manifest)?) } else { None };
            for path in config.strategies.iter().filter_map(|s| s.ecdf_path.as_deref()) {
                manifest.read_input(path)?;
            }
            let run = run_ensemble(&config, &config.strategies, model.as_ref())?;
            let summaries = summarize(&run.rows, config.bootstrap_resamples, config.master_seed);
            manifest.write_output(&config.output_dir, "metrics.csv", MetricsRow::to_csv(&run.rows).as_bytes())?;
            manifest.write_output(&config.output_dir, "summary.csv", summary_to_csv(&summaries).as_bytes())?;
            manifest.write_output(&config.output_dir, "episodes.jsonl", write_jsonl(&run.logs).as_bytes())?;
            manifest.finish(&config.output_dir)?;
            print_summary(&summaries);
        }
        Command::SweepAlpha { common, ecdf } => {
            let config = common.resolve()?;
            let mut manifest = Manifest::new("sweep-alpha", &config);
            let model = model_for(&config, ecdf.as_deref(), &mut manifest)?;
            let rows = sweep_alpha(&config, &model, &config.alpha_grid)?;
            let csv = alpha_rows_to_csv(&rows);
            manifest.write_output(&config.output_dir, "alpha_sweep.csv", csv.as_bytes())?;
            manifest.finish(&config.output_dir)?;
            print!("{csv}");
        }
        Command::NoiseAblation { common, samples } => {
            let config = common.resolve()?;
            let mut manifest = Manifest::new("noise-ablation", &config);
            let samples = match samples {
                Some(path) => {
                    let bytes = manifest.read_input(&path)?;
                    samples_from_jsonl(&String::from_utf8_lossy(&bytes))?
                }
                None => calibrate(&config)?.0,
            };
            // fail early on a pool with no bad samples
            build_pool(&samples)?;
            let rows: Vec<_> = noise_ablation(&config, &samples, &config.noise_fractions)?
                .into_iter()
                .map(|(row, _)| row)
                .collect();
            let csv = noise_rows_to_csv(&rows);
            manifest.write_output(&config.output_dir, "noise_ablation.csv", csv.as_bytes())?;
            manifest.finish(&config.output_dir)?;
            print!("{csv}");
        }
        Command::Report { common, inputs } => {
            let config = common.resolve()?;
            let mut manifest = Manifest::new("report", &config);
            let mut rows = Vec::new();
            for path in &inputs {
                let bytes = manifest.read_input(path)?;
                rows.extend(parse_metrics_csv(&String::from_utf8_lossy(&bytes))?);
            }
            if rows.is_empty() {
                return Err(HarnessError::Parse("no metric rows in the inputs".into()));
            }
            let summaries = summarize(&rows, config.bootstrap_resamples, config.master_seed);
            manifest.write_output(&config.output_dir, "report.csv", summary_to_csv(&summaries).as_bytes())?;
            manifest.finish(&config.output_dir)?;
            print_summary(&summaries);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
