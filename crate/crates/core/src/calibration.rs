//! Bad-frontier score calibration.
//!
//! Confidences are first made relative to the step maximum, so the top frontier
//! always scores 1. Scores of frontiers labelled bad (minus each step's argmax)
//! form the pool of an empirical CDF, and a live score `s` is mapped to the
//! smoothed right-tail p-value
//!
//! ```text
//! p(s) = (1 + N * (1 - F(s))) / (1 + N)
//! ```
//!
//! where `F` is the pool's right-continuous ECDF and `N` its size. A small
//! p-value means the score is unusually high for a bad frontier.

use crate::scorer::FrontierObservation;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const ECDF_HEADER: &str = "ecdf-v1";

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("empty confidence vector")]
    EmptyStep,
    #[error("confidence {index} is {value}, expected a positive finite number")]
    NonPositiveConfidence { index: usize, value: f64 },
    #[error("score {0} outside (0, 1]")]
    ScoreOutOfRange(f64),
    #[error("calibration pool is empty: no non-argmax bad frontiers")]
    EmptyPool,
    #[error("flip fraction {0} outside [0, 1]")]
    InvalidFraction(f64),
    #[error("ecdf file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("sample log line {line}: {message}")]
    SampleLog { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Divide every confidence by the step maximum. The argmax maps to exactly 1.
pub fn normalize_step(confidences: &[f64]) -> Result<Vec<f64>, CalibrationError> {
    if confidences.is_empty() {
        return Err(CalibrationError::EmptyStep);
    }
    if let Some((index, &value)) = confidences.iter().enumerate().find(|(_, &c)| !(c > 0.0 && c.is_finite())) {
        return Err(CalibrationError::NonPositiveConfidence { index, value });
    }
    let max = confidences.iter().copied().fold(f64::MIN_POSITIVE, f64::max);
    Ok(confidences.iter().map(|c| c / max).collect())
}

/// One labelled frontier from a calibration run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub episode_id: String,
    pub step_index: usize,
    pub frontier_id: usize,
    /// Step-normalized score in (0, 1].
    pub score: f64,
    pub is_bad: bool,
    /// The lowest-id frontier attaining score 1 in its step.
    pub is_step_argmax: bool,
}

/// Build one sample per frontier of a step; `bad[i]` is the label of frontier `i`.
pub fn step_samples(episode_id: &str, step_index: usize, scores: &[f64], bad: &[bool]) -> Vec<CalibrationSample> {
    let argmax = crate::scorer::argmax_lowest(scores);
    scores
        .iter()
        .zip(bad)
        .enumerate()
        .map(|(i, (&score, &is_bad))| CalibrationSample {
            episode_id: episode_id.to_string(),
            step_index,
            frontier_id: i,
            score,
            is_bad,
            is_step_argmax: argmax == Some(i),
        })
        .collect()
}

/// Sorted pool of bad-frontier scores.
#[derive(Clone, Debug, PartialEq)]
pub struct EcdfModel {
    scores: Vec<f64>,
}

impl EcdfModel {
    /// Build from any order of scores; each must lie in (0, 1].
    pub fn from_scores(mut scores: Vec<f64>) -> Result<Self, CalibrationError> {
        if scores.is_empty() {
            return Err(CalibrationError::EmptyPool);
        }
        if let Some(&s) = scores.iter().find(|&&s| !(s > 0.0 && s <= 1.0)) {
            return Err(CalibrationError::ScoreOutOfRange(s));
        }
        scores.sort_by(f64::total_cmp);
        Ok(Self { scores })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Pool size `N`.
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Fraction of the pool at or below `x`.
    pub fn ecdf(&self, x: f64) -> f64 {
        let count = self.scores.partition_point(|&s| s <= x);
        count as f64 / self.scores.len() as f64
    }

    /// Smoothed right-tail p-value of a step-normalized score; always in
    /// `[1/(N+1), 1]` and non-increasing in `score`.
    pub fn p_value(&self, score: f64) -> Result<f64, CalibrationError> {
        if !(score > 0.0 && score <= 1.0) {
            return Err(CalibrationError::ScoreOutOfRange(score));
        }
        let n = self.scores.len() as f64;
        Ok((1.0 + n * (1.0 - self.ecdf(score))) / (1.0 + n))
    }

    /// `ecdf-v1 <N>` followed by one score per line in shortest round-trip form.
    pub fn to_text(&self) -> String {
        let mut out = format!("{ECDF_HEADER} {}\n", self.scores.len());
        for s in &self.scores {
            out.push_str(&format!("{s:?}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, CalibrationError> {
        let err = |line: usize, message: String| CalibrationError::Format { line, message };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
        let n: usize = match header.split_once(' ') {
            Some((tag, n)) if tag == ECDF_HEADER => n.parse().map_err(|e| err(1, format!("count: {e}")))?,
            _ => return Err(err(1, format!("expected '{ECDF_HEADER} <N>'"))),
        };
        let mut scores = Vec::with_capacity(n);
        for (i, line) in lines.enumerate() {
            let v: f64 = line.trim().parse().map_err(|e| err(i + 2, format!("{e}")))?;
            if !(v > 0.0 && v <= 1.0) {
                return Err(err(i + 2, format!("score {v} outside (0, 1]")));
            }
            if scores.last().is_some_and(|&prev| v < prev) {
                return Err(err(i + 2, "scores are not ascending".into()));
            }
            scores.push(v);
        }
        if scores.len() != n || n == 0 {
            return Err(err(0, format!("header declares {n} scores, found {}", scores.len())));
        }
        Ok(Self { scores })
    }

    pub fn save(&self, path: &Path) -> Result<(), CalibrationError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CalibrationError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Pool the scores of bad, non-argmax samples.
pub fn build_pool(samples: &[CalibrationSample]) -> Result<EcdfModel, CalibrationError> {
    let scores: Vec<f64> = samples
        .iter()
        .filter(|s| s.is_bad && !s.is_step_argmax)
        .map(|s| s.score)
        .collect();
    EcdfModel::from_scores(scores)
}

/// Invert `is_bad` on exactly `round(fraction * len)` samples chosen uniformly
/// without replacement.
pub fn inject_label_noise<R: Rng + ?Sized>(
    samples: &[CalibrationSample],
    fraction: f64,
    rng: &mut R,
) -> Result<Vec<CalibrationSample>, CalibrationError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(CalibrationError::InvalidFraction(fraction));
    }
    let mut out = samples.to_vec();
    let flips = (fraction * samples.len() as f64).round() as usize;
    for i in sample(rng, samples.len(), flips.min(samples.len())) {
        out[i].is_bad = !out[i].is_bad;
    }
    Ok(out)
}

/// Thresholds of the oracle labeler.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelerConfig {
    /// A frontier whose goal distance grows by more than this many cells is irrelevant.
    pub relevance_margin: f64,
    /// A frontier with less unknown area than this fraction adds nothing new.
    pub novelty_floor: f64,
}

impl Default for LabelerConfig {
    fn default() -> Self {
        Self { relevance_margin: 0.0, novelty_floor: 0.05 }
    }
}

/// Ground-truth bad-frontier label: leads away from the goal or reveals
/// too little.
pub fn oracle_label(obs: &FrontierObservation, config: &LabelerConfig) -> bool {
    obs.goal_delta > config.relevance_margin || obs.novelty < config.novelty_floor
}

pub fn samples_to_jsonl(samples: &[CalibrationSample]) -> String {
    let mut out = String::new();
    for s in samples {
        out.push_str(&serde_json::to_string(s).expect("samples serialize"));
        out.push('\n');
    }
    out
}

pub fn samples_from_jsonl(text: &str) -> Result<Vec<CalibrationSample>, CalibrationError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CalibrationError::SampleLog { line: i + 1, message: e.to_string() })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pool4() -> EcdfModel {
        EcdfModel::from_scores(vec![0.8, 0.2, 0.6, 0.4]).unwrap()
    }

    #[test]
    fn normalize_examples() {
        let s = normalize_step(&[0.5, 0.3, 0.2]).unwrap();
        for (a, b) in s.iter().zip([1.0, 0.6, 0.4]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(normalize_step(&[0.25; 4]).unwrap(), vec![1.0; 4]);
        assert_eq!(normalize_step(&[0.9]).unwrap(), vec![1.0]);
        assert!(matches!(normalize_step(&[]), Err(CalibrationError::EmptyStep)));
        assert!(matches!(normalize_step(&[0.5, 0.0]), Err(CalibrationError::NonPositiveConfidence { index: 1, .. })));
        assert!(normalize_step(&[0.5, -0.1]).is_err());
    }

    proptest! {
        #[test]
        fn normalize_is_scale_invariant(c in proptest::collection::vec(1e-6f64..1.0, 1..10), k in 0u32..8) {
            // powers of two scale exactly
            let lambda = 2f64.powi(k as i32 - 4);
            let scaled: Vec<f64> = c.iter().map(|x| x * lambda).collect();
            prop_assert_eq!(normalize_step(&c).unwrap(), normalize_step(&scaled).unwrap());
            let s = normalize_step(&c).unwrap();
            prop_assert!(s.iter().all(|&v| v > 0.0 && v <= 1.0));
            prop_assert!(s.contains(&1.0));
        }

        #[test]
        fn normalize_nearly_scale_invariant(c in proptest::collection::vec(1e-6f64..1.0, 1..10), lambda in 1e-3f64..1e3) {
            let scaled: Vec<f64> = c.iter().map(|x| x * lambda).collect();
            for (a, b) in normalize_step(&c).unwrap().iter().zip(normalize_step(&scaled).unwrap()) {
                prop_assert!((a - b).abs() <= 4.0 * f64::EPSILON);
            }
        }
    }

    #[test]
    fn pool_filters_bad_non_argmax() {
        let mk = |score, is_bad, is_step_argmax| CalibrationSample {
            episode_id: "e".into(),
            step_index: 0,
            frontier_id: 0,
            score,
            is_bad,
            is_step_argmax,
        };
        let m = build_pool(&[mk(0.4, true, false), mk(1.0, true, true), mk(0.7, true, false), mk(0.9, false, false)]).unwrap();
        assert_eq!(m.scores(), &[0.4, 0.7]);
        assert_eq!(m.len(), 2);
        assert!(matches!(build_pool(&[mk(0.5, false, false)]), Err(CalibrationError::EmptyPool)));
    }

    #[test]
    fn step_samples_mark_lowest_id_maximum() {
        let s = step_samples("e", 3, &[0.5, 1.0, 1.0], &[true, true, true]);
        assert!(!s[0].is_step_argmax && s[1].is_step_argmax && !s[2].is_step_argmax);
        let m = build_pool(&s).unwrap();
        // the tied second maximum still enters the pool
        assert_eq!(m.scores(), &[0.5, 1.0]);
    }

    #[test]
    fn ecdf_examples() {
        let m = pool4();
        assert_eq!(m.ecdf(0.5), 0.5);
        assert_eq!(m.ecdf(0.1), 0.0);
        assert_eq!(m.ecdf(0.8), 1.0);
        assert_eq!(m.ecdf(0.4), 0.5);
    }

    #[test]
    fn p_value_examples() {
        let m = pool4();
        assert!((m.p_value(0.5).unwrap() - 0.6).abs() < 1e-15);
        assert!((m.p_value(1.0).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(m.p_value(0.1).unwrap(), 1.0);
        assert!(m.p_value(0.0).is_err());
        assert!(m.p_value(1.5).is_err());
        assert!(m.p_value(f64::NAN).is_err());
    }

    fn naive_ecdf(pool: &[f64], x: f64) -> f64 {
        pool.iter().filter(|&&s| s <= x).count() as f64 / pool.len() as f64
    }

    proptest! {
        #[test]
        fn ecdf_matches_naive_count(pool in proptest::collection::vec(0.001f64..=1.0, 1..=20), xs in proptest::collection::vec(-0.5f64..1.5, 1..20)) {
            let m = EcdfModel::from_scores(pool.clone()).unwrap();
            for x in xs {
                prop_assert_eq!(m.ecdf(x), naive_ecdf(&pool, x));
            }
            for &x in &pool {
                prop_assert_eq!(m.ecdf(x), naive_ecdf(&pool, x));
            }
        }

        #[test]
        fn p_value_laws(pool in proptest::collection::vec(0.001f64..=1.0, 1..=50), mut qs in proptest::collection::vec(1e-6f64..=1.0, 2..30)) {
            let m = EcdfModel::from_scores(pool).unwrap();
            let n = m.len() as f64;
            qs.sort_by(f64::total_cmp);
            let ps: Vec<f64> = qs.iter().map(|&q| m.p_value(q).unwrap()).collect();
            for (&q, &p) in qs.iter().zip(&ps) {
                prop_assert!(p >= 1.0 / (n + 1.0) && p <= 1.0);
                prop_assert_eq!(p, (1.0 + n * (1.0 - m.ecdf(q))) / (1.0 + n));
            }
            prop_assert!(ps.windows(2).all(|w| w[0] >= w[1]));
            prop_assert_eq!(m.p_value(1.0).unwrap(), 1.0 / (n + 1.0));
        }
    }

    #[test]
    fn ecdf_file_round_trip_and_validation() {
        let m = EcdfModel::from_scores(vec![0.1, 1.0 / 3.0, 0.7, 0.7, 1.0]).unwrap();
        let text = m.to_text();
        assert!(text.starts_with("ecdf-v1 5\n"));
        assert_eq!(EcdfModel::from_text(&text).unwrap(), m);
        assert!(EcdfModel::from_text("ecdf-v1 2\n0.5\n0.4\n").is_err());
        assert!(EcdfModel::from_text("ecdf-v1 3\n0.5\n0.6\n").is_err());
        assert!(EcdfModel::from_text("ecdf-v2 1\n0.5\n").is_err());
        assert!(EcdfModel::from_text("ecdf-v1 1\n0.0\n").is_err());
        assert!(EcdfModel::from_text("ecdf-v1 0\n").is_err());
    }

    fn samples(n: usize) -> Vec<CalibrationSample> {
        (0..n)
            .map(|i| CalibrationSample {
                episode_id: format!("e{}", i / 10),
                step_index: i % 10,
                frontier_id: 0,
                score: 0.5,
                is_bad: i % 3 == 0,
                is_step_argmax: false,
            })
            .collect()
    }

    #[test]
    fn label_noise_counts() {
        let s = samples(100);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        assert_eq!(inject_label_noise(&s, 0.0, &mut rng).unwrap(), s);
        let all = inject_label_noise(&s, 1.0, &mut rng).unwrap();
        assert!(all.iter().zip(&s).all(|(a, b)| a.is_bad != b.is_bad));
        let five = inject_label_noise(&s, 0.05, &mut rng).unwrap();
        assert_eq!(five.iter().zip(&s).filter(|(a, b)| a.is_bad != b.is_bad).count(), 5);
        assert!(inject_label_noise(&s, 1.2, &mut rng).is_err());
        let again = |seed| inject_label_noise(&s, 0.3, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        assert_eq!(again(4), again(4));
    }

    #[test]
    fn labeler_examples() {
        let cfg = LabelerConfig::default();
        let o = |goal_delta, novelty| FrontierObservation { frontier_id: 0, unknown_mass: 3, goal_delta, novelty };
        assert!(oracle_label(&o(10.0, 0.9), &cfg));
        assert!(oracle_label(&o(-5.0, 0.01), &cfg));
        assert!(!oracle_label(&o(-5.0, 0.5), &cfg));
        assert!(oracle_label(&o(-5.0, 0.5), &LabelerConfig { novelty_floor: 1.01, ..cfg }));
    }

    #[test]
    fn sample_log_round_trip() {
        let s = samples(7);
        assert_eq!(samples_from_jsonl(&samples_to_jsonl(&s)).unwrap(), s);
        assert!(samples_from_jsonl("{oops}\n").is_err());
    }
}
