use super::experiment::{derive_seed, AlphaRow, NoiseRow, Stream};
use super::{EpisodeLog, HarnessError};
use crate::metrics::{bootstrap_mean_ci, mean, EpisodeMetrics, MeanCi};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;

pub const METRICS_CSV_HEADER: &str =
    "episode_id,strategy,alpha,seed,coverage_auc,curvature_deg,spl,success_score,steps_used,oscillation_count";

/// One CSV row per episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub episode_id: String,
    pub strategy: String,
    pub alpha: Option<f64>,
    /// Scene seed.
    pub seed: u64,
    pub coverage_auc: f64,
    pub curvature_deg: f64,
    pub spl: f64,
    pub success_score: f64,
    pub steps_used: usize,
    pub oscillation_count: usize,
}

impl MetricsRow {
    pub fn new(log: &EpisodeLog, seed: u64, m: &EpisodeMetrics) -> Self {
        Self {
            episode_id: log.episode_id.clone(),
            strategy: log.strategy.kind.label().to_string(),
            alpha: log.strategy.effective_alpha(),
            seed,
            coverage_auc: m.coverage_auc,
            curvature_deg: m.curvature_deg,
            spl: m.spl,
            success_score: m.success_score,
            steps_used: m.steps_used,
            oscillation_count: m.oscillation_count,
        }
    }

    fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.episode_id,
            self.strategy,
            self.alpha.map(|a| a.to_string()).unwrap_or_default(),
            self.seed,
            self.coverage_auc,
            self.curvature_deg,
            self.spl,
            self.success_score,
            self.steps_used,
            self.oscillation_count
        )
    }

    /// Render rows with a header. Floats use the shortest round-trip form, so
    /// parsing the output gives back identical values.
    pub fn to_csv(rows: &[MetricsRow]) -> String {
        let mut out = String::from(METRICS_CSV_HEADER);
        out.push('\n');
        for r in rows {
            out.push_str(&r.to_csv_line());
            out.push('\n');
        }
        out
    }
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>, HarnessError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == METRICS_CSV_HEADER => {}
        _ => return Err(HarnessError::Parse("metrics csv: missing or wrong header".into())),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let err = |what: &str| HarnessError::Parse(format!("metrics csv line {}: bad {what}", i + 1));
            let f: Vec<&str> = line.trim_end().split(',').collect();
            if f.len() != 10 {
                return Err(err("field count"));
            }
            let num = |idx: usize, what: &str| f[idx].parse::<f64>().map_err(|_| err(what));
            Ok(MetricsRow {
                episode_id: f[0].to_string(),
                strategy: f[1].to_string(),
                alpha: if f[2].is_empty() { None } else { Some(num(2, "alpha")?) },
                seed: f[3].parse().map_err(|_| err("seed"))?,
                coverage_auc: num(4, "coverage_auc")?,
                curvature_deg: num(5, "curvature_deg")?,
                spl: num(6, "spl")?,
                success_score: num(7, "success_score")?,
                steps_used: f[8].parse().map_err(|_| err("steps_used"))?,
                oscillation_count: f[9].parse().map_err(|_| err("oscillation_count"))?,
            })
        })
        .collect()
}

/// Per-strategy means with bootstrap intervals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: String,
    pub alpha: Option<f64>,
    pub episodes: usize,
    pub coverage_auc: MeanCi,
    pub curvature_deg: MeanCi,
    pub spl: MeanCi,
    pub success_score: MeanCi,
    pub steps_used: f64,
    pub oscillation_count: f64,
}

/// Group rows by `(strategy, alpha)` in order of first appearance and compute
/// 95% percentile-bootstrap intervals. Every interval is drawn from the same
/// seeded stream, so equal-sized groups are resampled with the same indices.
pub fn summarize(rows: &[MetricsRow], resamples: usize, master_seed: u64) -> Vec<StrategySummary> {
    let mut groups: Vec<((String, Option<f64>), Vec<&MetricsRow>)> = Vec::new();
    for r in rows {
        let key = (r.strategy.clone(), r.alpha);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    let seed = derive_seed(master_seed, Stream::Bootstrap as u64, 0);
    groups
        .into_iter()
        .map(|((strategy, alpha), g)| {
            let ci = |f: fn(&MetricsRow) -> f64| {
                let v: Vec<f64> = g.iter().map(|r| f(r)).collect();
                bootstrap_mean_ci(&v, resamples, 0.95, &mut ChaCha8Rng::seed_from_u64(seed))
            };
            StrategySummary {
                episodes: g.len(),
                coverage_auc: ci(|r| r.coverage_auc),
                curvature_deg: ci(|r| r.curvature_deg),
                spl: ci(|r| r.spl),
                success_score: ci(|r| r.success_score),
                steps_used: mean(&g.iter().map(|r| r.steps_used as f64).collect::<Vec<_>>()),
                oscillation_count: mean(&g.iter().map(|r| r.oscillation_count as f64).collect::<Vec<_>>()),
                strategy,
                alpha,
            }
        })
        .collect()
}

fn ci_cols(out: &mut String, c: &MeanCi) {
    let _ = write!(out, ",{},{},{}", c.mean, c.low, c.high);
}

pub fn summary_to_csv(summaries: &[StrategySummary]) -> String {
    let mut out = String::from(
        "strategy,alpha,episodes,coverage_auc,coverage_auc_low,coverage_auc_high,curvature_deg,curvature_deg_low,\
         curvature_deg_high,spl,spl_low,spl_high,success_score,success_score_low,success_score_high,steps_used,\
         oscillation_count\n",
    );
    for s in summaries {
        let alpha = s.alpha.map(|a| a.to_string()).unwrap_or_default();
        let _ = write!(out, "{},{},{}", s.strategy, alpha, s.episodes);
        for c in [&s.coverage_auc, &s.curvature_deg, &s.spl, &s.success_score] {
            ci_cols(&mut out, c);
        }
        let _ = writeln!(out, ",{},{}", s.steps_used, s.oscillation_count);
    }
    out
}

pub fn alpha_rows_to_csv(rows: &[AlphaRow]) -> String {
    let mut out = String::from("alpha,episodes,coverage_auc,curvature_deg,spl,success_score,mean_pruned_per_step\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.alpha, r.episodes, r.coverage_auc, r.curvature_deg, r.spl, r.success_score, r.mean_pruned_per_step
        );
    }
    out
}

pub fn noise_rows_to_csv(rows: &[NoiseRow]) -> String {
    let mut out = String::from("fraction,flipped,pool_size,coverage_auc,curvature_deg,spl,success_score\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.fraction, r.flipped, r.pool_size, r.coverage_auc, r.curvature_deg, r.spl, r.success_score
        );
    }
    out
}

/// One JSON document per line.
pub fn write_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("log items serialize"));
        out.push('\n');
    }
    out
}

pub fn hash_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Machine-readable record of a run: the configuration used and SHA-256
/// hashes of every input read and output written.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new<C: Serialize>(command: &str, config: &C) -> Self {
        Self {
            command: command.to_string(),
            config: serde_json::to_value(config).expect("config serializes"),
            ..Default::default()
        }
    }

    pub fn read_input(&mut self, path: &std::path::Path) -> Result<Vec<u8>, HarnessError> {
        let bytes = std::fs::read(path).map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })?;
        self.inputs.insert(path.display().to_string(), hash_hex(&bytes));
        Ok(bytes)
    }

    /// Write `contents` to `dir/name` and record its hash.
    pub fn write_output(&mut self, dir: &std::path::Path, name: &str, contents: &[u8]) -> Result<(), HarnessError> {
        let path = dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|source| HarnessError::Io { path: parent.to_path_buf(), source })?;
        }
        std::fs::write(&path, contents).map_err(|source| HarnessError::Io { path: path.clone(), source })?;
        self.outputs.insert(name.to_string(), hash_hex(contents));
        Ok(())
    }

    /// Write the manifest itself as `manifest-<command>.json` in `dir`.
    pub fn finish(&self, dir: &std::path::Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io { path: dir.to_path_buf(), source })?;
        let path = dir.join(format!("manifest-{}.json", self.command));
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|source| HarnessError::Io { path, source })
    }
}
