//! Holm–Bonferroni style step-down pruning.
//!
//! Each frontier carries the null hypothesis "this frontier is bad". Sorting
//! the step's `K` p-values ascending, the longest prefix with
//! `p_(j) <= alpha / (K - j + 1)` for every `j` in it is rejected, and the
//! rejected frontiers are the ones kept. `alpha` is a behavioural knob here:
//! larger values keep more frontiers.

use crate::calibration::{CalibrationError, EcdfModel};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Pruning strictness used unless configured otherwise.
pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Error)]
pub enum PruneError {
    #[error("no p-values to test")]
    Empty,
    #[error("alpha {0} outside (0, 1]")]
    InvalidAlpha(f64),
    #[error("p-value {p} for frontier {id} outside (0, 1]")]
    InvalidPValue { id: usize, p: f64 },
    #[error("frontier id {0} appears twice")]
    DuplicateId(usize),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
}

/// Outcome of one step's pruning test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneDecision {
    pub alpha: f64,
    /// `(frontier_id, p)` sorted by p ascending, ties by lower id.
    pub ordered_pvalues: Vec<(usize, f64)>,
    /// Length of the rejected prefix `m`.
    pub reject_count: usize,
    /// Ids of the first `m` entries of `ordered_pvalues`, in that order.
    pub accepted_ids: Vec<usize>,
}

impl PruneDecision {
    pub fn is_accepted(&self, id: usize) -> bool {
        self.accepted_ids.contains(&id)
    }

    /// Number of frontiers removed by the test.
    pub fn pruned_count(&self) -> usize {
        self.ordered_pvalues.len() - self.reject_count
    }

    /// A decision that keeps every frontier, used by strategies that do not prune.
    pub fn accept_all(ids: impl IntoIterator<Item = usize>) -> Self {
        let accepted_ids: Vec<usize> = ids.into_iter().collect();
        Self {
            alpha: 1.0,
            ordered_pvalues: Vec::new(),
            reject_count: accepted_ids.len(),
            accepted_ids,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<(), PruneError> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(PruneError::InvalidAlpha(alpha))
    }
}

fn validate(pvalues: &[(usize, f64)], alpha: f64) -> Result<(), PruneError> {
    if pvalues.is_empty() {
        return Err(PruneError::Empty);
    }
    check_alpha(alpha)?;
    if let Some(&(id, p)) = pvalues.iter().find(|(_, p)| !(*p > 0.0 && *p <= 1.0)) {
        return Err(PruneError::InvalidPValue { id, p });
    }
    let mut ids: Vec<usize> = pvalues.iter().map(|(id, _)| *id).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(PruneError::DuplicateId(w[0]));
    }
    Ok(())
}

/// Step-down over p-values that are already in test order.
fn step_down(ordered: Vec<(usize, f64)>, alpha: f64) -> PruneDecision {
    let k = ordered.len();
    let reject_count = ordered
        .iter()
        .enumerate()
        .take_while(|(j, (_, p))| *p <= alpha / (k - j) as f64)
        .count();
    PruneDecision {
        alpha,
        accepted_ids: ordered[..reject_count].iter().map(|(id, _)| *id).collect(),
        ordered_pvalues: ordered,
        reject_count,
    }
}

/// Sort by p ascending (ties: lower id first) and keep the longest prefix
/// passing the step-down thresholds.
pub fn holm_prune(pvalues: &[(usize, f64)], alpha: f64) -> Result<PruneDecision, PruneError> {
    validate(pvalues, alpha)?;
    let mut ordered = pvalues.to_vec();
    ordered.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    Ok(step_down(ordered, alpha))
}

/// Map each step-normalized score (indexed by frontier id) to its p-value
/// under `model` and run the step-down test.
///
/// Scores above every pool value all get the floor p-value `1/(N+1)`, so
/// distinct scores can tie. Such ties go to the higher score first and only
/// then to the lower id, which keeps the step's argmax at the head of the
/// order.
pub fn prune_step(scores: &[f64], model: &EcdfModel, alpha: f64) -> Result<PruneDecision, PruneError> {
    check_alpha(alpha)?;
    let pvalues = scores
        .iter()
        .enumerate()
        .map(|(id, &s)| Ok((id, model.p_value(s)?)))
        .collect::<Result<Vec<_>, CalibrationError>>()?;
    validate(&pvalues, alpha)?;
    let mut ordered = pvalues;
    ordered.sort_by(|a, b| a.1.total_cmp(&b.1).then(scores[b.0].total_cmp(&scores[a.0])).then(a.0.cmp(&b.0)));
    Ok(step_down(ordered, alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn step_down_examples() {
        let d = holm_prune(&[(0, 0.01), (1, 0.2), (2, 0.9)], 0.5).unwrap();
        assert_eq!(d.reject_count, 2);
        assert_eq!(d.accepted_ids, vec![0, 1]);
        assert_eq!(d.pruned_count(), 1);

        let d = holm_prune(&[(0, 0.9), (1, 0.95)], 0.5).unwrap();
        assert_eq!(d.reject_count, 0);
        assert!(d.accepted_ids.is_empty());

        let d = holm_prune(&[(0, 0.3)], 0.5).unwrap();
        assert_eq!(d.accepted_ids, vec![0]);
    }

    #[test]
    fn stops_at_first_failure() {
        // p_(2) fails even though p_(3) alone would pass its own threshold
        let d = holm_prune(&[(0, 0.01), (1, 0.3), (2, 0.31)], 0.5).unwrap();
        assert_eq!(d.reject_count, 1);
    }

    #[test]
    fn rejects_invalid_inputs() {
        assert!(matches!(holm_prune(&[], 0.5), Err(PruneError::Empty)));
        assert!(matches!(holm_prune(&[(0, 0.2)], 0.0), Err(PruneError::InvalidAlpha(_))));
        assert!(matches!(holm_prune(&[(0, 0.2)], 1.5), Err(PruneError::InvalidAlpha(_))));
        assert!(matches!(holm_prune(&[(0, 0.0)], 0.5), Err(PruneError::InvalidPValue { .. })));
        assert!(matches!(holm_prune(&[(0, f64::NAN)], 0.5), Err(PruneError::InvalidPValue { .. })));
        assert!(matches!(holm_prune(&[(1, 0.2), (1, 0.3)], 0.5), Err(PruneError::DuplicateId(1))));
    }

    #[test]
    fn ties_sort_by_id() {
        let d = holm_prune(&[(2, 0.1), (0, 0.1), (1, 0.05)], 1.0).unwrap();
        assert_eq!(d.ordered_pvalues, vec![(1, 0.05), (0, 0.1), (2, 0.1)]);
    }

    fn pool4() -> EcdfModel {
        EcdfModel::from_scores(vec![0.2, 0.4, 0.6, 0.8]).unwrap()
    }

    #[test]
    fn prune_step_examples() {
        let d = prune_step(&[1.0], &pool4(), 0.5).unwrap();
        assert_eq!(d.ordered_pvalues, vec![(0, 0.2)]);
        assert_eq!(d.accepted_ids, vec![0]);

        // uniform confidences: every p is 0.2 > 0.5 / 3
        let d = prune_step(&[1.0, 1.0, 1.0], &pool4(), 0.5).unwrap();
        assert_eq!(d.reject_count, 0);

        let d = prune_step(&[1.0, 1.0, 1.0], &pool4(), 1.0).unwrap();
        assert_eq!(d.accepted_ids, vec![0, 1, 2]);

        assert!(prune_step(&[0.0], &pool4(), 0.5).is_err());
    }

    #[test]
    fn floor_ties_put_the_argmax_first() {
        // both scores exceed the whole pool and share p = 1/4
        let pool = EcdfModel::from_scores(vec![0.001; 3]).unwrap();
        let d = prune_step(&[0.975, 1.0], &pool, 0.52).unwrap();
        assert_eq!(d.ordered_pvalues, vec![(1, 0.25), (0, 0.25)]);
        assert_eq!(d.accepted_ids, vec![1, 0]);
        // holm_prune alone only sees p-values and falls back to the id order
        let d = holm_prune(&[(0, 0.25), (1, 0.25)], 0.52).unwrap();
        assert_eq!(d.accepted_ids, vec![0, 1]);
    }

    fn brute_force_m(p: &[f64], alpha: f64) -> usize {
        let mut sorted = p.to_vec();
        sorted.sort_by(f64::total_cmp);
        let k = sorted.len();
        (0..=k)
            .rev()
            .find(|&m| (1..=m).all(|j| sorted[j - 1] <= alpha / (k - j + 1) as f64))
            .unwrap()
    }

    fn pvec() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(prop_oneof![0.001f64..=1.0, Just(0.1), Just(0.25), Just(1.0)], 1..=8)
    }

    proptest! {
        #[test]
        fn matches_brute_force(p in pvec(), alpha in 0.001f64..=1.0) {
            let pairs: Vec<(usize, f64)> = p.iter().copied().enumerate().collect();
            let d = holm_prune(&pairs, alpha).unwrap();
            prop_assert_eq!(d.reject_count, brute_force_m(&p, alpha));
            // invariants of the decision
            let k = p.len();
            for j in 1..=d.reject_count {
                prop_assert!(d.ordered_pvalues[j - 1].1 <= alpha / (k - j + 1) as f64);
            }
            if d.reject_count < k {
                prop_assert!(d.ordered_pvalues[d.reject_count].1 > alpha / (k - d.reject_count) as f64);
            }
        }

        #[test]
        fn alpha_monotone(p in pvec(), a in 0.001f64..=1.0, b in 0.001f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let pairs: Vec<(usize, f64)> = p.iter().copied().enumerate().collect();
            let small = holm_prune(&pairs, lo).unwrap();
            let large = holm_prune(&pairs, hi).unwrap();
            prop_assert!(small.accepted_ids.iter().all(|id| large.is_accepted(*id)));
        }

        #[test]
        fn permutation_invariant(p in pvec(), alpha in 0.001f64..=1.0, seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let pairs: Vec<(usize, f64)> = p.iter().copied().enumerate().collect();
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(holm_prune(&pairs, alpha).unwrap(), holm_prune(&shuffled, alpha).unwrap());
        }

        #[test]
        fn accepted_set_is_a_p_prefix(p in pvec(), alpha in 0.001f64..=1.0) {
            let pairs: Vec<(usize, f64)> = p.iter().copied().enumerate().collect();
            let d = holm_prune(&pairs, alpha).unwrap();
            let max_kept = d.accepted_ids.iter().map(|&i| p[i]).fold(0.0, f64::max);
            for (i, &pi) in p.iter().enumerate() {
                if !d.is_accepted(i) {
                    prop_assert!(pi >= max_kept);
                }
            }
        }

        #[test]
        fn argmax_survives_when_anything_does(
            scores in proptest::collection::vec(0.001f64..=1.0, 1..=8),
            pool in proptest::collection::vec(0.001f64..=1.0, 1..=40),
            alpha in 0.01f64..=1.0,
        ) {
            let normalized = crate::calibration::normalize_step(&scores).unwrap();
            let argmax = crate::scorer::argmax_lowest(&normalized).unwrap();
            let d = prune_step(&normalized, &EcdfModel::from_scores(pool).unwrap(), alpha).unwrap();
            if d.reject_count > 0 {
                prop_assert!(d.is_accepted(argmax));
                prop_assert_eq!(d.accepted_ids[0], argmax);
            }
        }
    }
}
