//! Exact AUC evaluation.
//!
//! For each user the held-out item is compared against every candidate item
//! the user has never interacted with (training, validation, and test items
//! are all excluded from the candidate pool):
//!
//! ```text
//! AUC = (1/|U|) sum_u (1/|E(u)|) sum_{(i,j) in E(u)} [x_ui > x_uj]
//! ```
//!
//! The comparison is strict, so ties score zero. Users with an empty pair
//! set are excluded from the average rather than counted as zero.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{InteractionSet, SplitAssignment};
use crate::error::EvalError;
use crate::math::{hash_to_unit, splitmix64};
use crate::models::{project_features, PopularityTable, VbprParams};
use crate::features::ItemFeatures;

/// A scoring function over (user, item) pairs.
///
/// Scorers must be pure: evaluation may fan out across threads and assumes
/// `score(u, i)` always returns the same value.
pub trait Scorer: Sync {
    fn score(&self, user: usize, item: usize) -> f64;
}

impl<F: Fn(usize, usize) -> f64 + Sync> Scorer for F {
    fn score(&self, user: usize, item: usize) -> f64 {
        self(user, item)
    }
}

/// Model scorer with per-item visual factors and visual biases precomputed,
/// so a single score costs O(K + D).
pub struct ModelScorer<'a> {
    params: &'a VbprParams,
    /// Flattened `|I| x D` projected item factors (`theta_i = E f_i`).
    item_visual: Vec<f64>,
    /// Per-item visual bias contribution (`beta' . f_i`).
    item_vbias: Vec<f64>,
}

impl<'a> ModelScorer<'a> {
    /// Precompute item-side visual terms. `features` may be `None` only for
    /// a pure MF model (`visual_dim == 0`).
    pub fn new(params: &'a VbprParams, features: Option<&ItemFeatures>) -> Self {
        let d = params.visual_dim();
        let items = params.item_count();
        let mut item_visual = vec![0.0; items * d];
        let mut item_vbias = vec![0.0; items];
        if d > 0 {
            let features = features.expect("visual model requires features");
            for i in 0..items {
                let f = features.get(i);
                let theta_i =
                    project_features(params, f).expect("feature dimension checked at load");
                item_visual[i * d..(i + 1) * d].copy_from_slice(&theta_i);
                item_vbias[i] = f.dot_dense(&params.visual_bias);
            }
        }
        ModelScorer {
            params,
            item_visual,
            item_vbias,
        }
    }

    /// The projected visual factors of one item.
    pub fn item_visual_factors(&self, item: usize) -> &[f64] {
        let d = self.params.visual_dim();
        &self.item_visual[item * d..(item + 1) * d]
    }
}

impl Scorer for ModelScorer<'_> {
    fn score(&self, user: usize, item: usize) -> f64 {
        let p = self.params;
        let mut x = p.alpha
            + p.beta_user[user]
            + p.beta_item[item]
            + crate::math::dot(p.gamma_user.row(user), p.gamma_item.row(item));
        let d = p.visual_dim();
        if d > 0 {
            x += crate::math::dot(p.theta_user.row(user), self.item_visual_factors(item));
            x += self.item_vbias[item];
        }
        x
    }
}

/// Non-personalized popularity baseline: the score of an item is its count
/// of training positives.
pub struct PopularityScorer(pub PopularityTable);

impl Scorer for PopularityScorer {
    fn score(&self, _user: usize, item: usize) -> f64 {
        self.0.count(item) as f64
    }
}

/// Random baseline: a stateless per-pair hash mapped to [0, 1), so scores
/// are deterministic given the seed.
pub struct RandomScorer(pub u64);

impl Scorer for RandomScorer {
    fn score(&self, user: usize, item: usize) -> f64 {
        let h = splitmix64(splitmix64(self.0 ^ user as u64).wrapping_add(item as u64));
        hash_to_unit(h)
    }
}

/// Which held-out item per user to rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeldOut {
    Validation,
    Test,
}

/// Evaluation summary. `auc_cold` is absent when no user's held-out item is
/// cold (fewer than `cold_threshold` training positives).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc_all: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc_cold: Option<f64>,
    pub users_evaluated: usize,
    pub cold_users: usize,
    pub cold_threshold: usize,
    /// Per-user records: (user index, AUC, number of evaluation pairs).
    #[serde(skip)]
    pub per_user: Vec<(usize, f64, usize)>,
}

/// AUC for one user's held-out test item: the fraction of candidate items
/// scored strictly below it, along with the candidate count |E(u)|.
pub fn auc_user<S: Scorer + ?Sized>(
    scorer: &S,
    user: usize,
    data: &InteractionSet,
    split: &SplitAssignment,
) -> Result<(f64, usize), EvalError> {
    auc_user_target(scorer, user, data, split, HeldOut::Test)
}

fn auc_user_target<S: Scorer + ?Sized>(
    scorer: &S,
    user: usize,
    data: &InteractionSet,
    split: &SplitAssignment,
    target: HeldOut,
) -> Result<(f64, usize), EvalError> {
    let held = match target {
        HeldOut::Validation => split.validation_item(user),
        HeldOut::Test => split.test_item(user),
    }
    .ok_or(EvalError::NoTestItem { user })?;

    let target_score = scorer.score(user, held);
    let mut wins = 0usize;
    let mut pairs = 0usize;
    for j in 0..data.item_count() {
        if data.is_positive(user, j) {
            continue;
        }
        pairs += 1;
        if target_score > scorer.score(user, j) {
            wins += 1;
        }
    }
    if pairs == 0 {
        return Ok((0.0, 0));
    }
    Ok((wins as f64 / pairs as f64, pairs))
}

/// Evaluate test-set AUC over all users, plus the cold-start subset of users
/// whose test item has fewer than `cold_threshold` training positives.
pub fn evaluate<S: Scorer + ?Sized>(
    scorer: &S,
    data: &InteractionSet,
    split: &SplitAssignment,
    cold_threshold: usize,
) -> EvalReport {
    evaluate_target(scorer, data, split, cold_threshold, HeldOut::Test)
}

/// Evaluate against the validation items instead of the test items (used
/// for model selection during training).
pub fn evaluate_validation<S: Scorer + ?Sized>(
    scorer: &S,
    data: &InteractionSet,
    split: &SplitAssignment,
) -> EvalReport {
    evaluate_target(scorer, data, split, usize::MAX, HeldOut::Validation)
}

/// Sampled AUC estimate: every user is ranked against `candidates` items
/// drawn uniformly (with replacement) from their non-observed pool instead
/// of the full pool. Intended for very large corpora; [`evaluate`] is exact
/// and is what the tests pin.
pub fn evaluate_sampled<S: Scorer + ?Sized>(
    scorer: &S,
    data: &InteractionSet,
    split: &SplitAssignment,
    cold_threshold: usize,
    candidates: usize,
    seed: u64,
) -> EvalReport {
    assert!(candidates > 0, "candidate sample must be nonempty");
    evaluate_inner(
        scorer,
        data,
        split,
        cold_threshold,
        HeldOut::Test,
        Some((candidates, seed)),
    )
}

fn evaluate_target<S: Scorer + ?Sized>(
    scorer: &S,
    data: &InteractionSet,
    split: &SplitAssignment,
    cold_threshold: usize,
    target: HeldOut,
) -> EvalReport {
    evaluate_inner(scorer, data, split, cold_threshold, target, None)
}

fn sampled_auc_user<S: Scorer + ?Sized>(
    scorer: &S,
    user: usize,
    data: &InteractionSet,
    split: &SplitAssignment,
    candidates: usize,
    seed: u64,
) -> Result<(f64, usize), EvalError> {
    use rand::Rng;
    let held = split.test_item(user).ok_or(EvalError::NoTestItem { user })?;
    if data.positives(user).len() >= data.item_count() {
        return Ok((0.0, 0));
    }
    // per-user stream: deterministic and independent of evaluation order
    let mut rng = crate::rng::sub_rng_indexed(seed, "eval-sample", user as u64);
    let target_score = scorer.score(user, held);
    let mut wins = 0usize;
    for _ in 0..candidates {
        let j = loop {
            let j = rng.random_range(0..data.item_count());
            if !data.is_positive(user, j) {
                break j;
            }
        };
        if target_score > scorer.score(user, j) {
            wins += 1;
        }
    }
    Ok((wins as f64 / candidates as f64, candidates))
}

fn evaluate_inner<S: Scorer + ?Sized>(
    scorer: &S,
    data: &InteractionSet,
    split: &SplitAssignment,
    cold_threshold: usize,
    target: HeldOut,
    sampling: Option<(usize, u64)>,
) -> EvalReport {
    let popularity = PopularityTable::from_split(split, data.item_count());

    // Per-user results are computed in parallel but collected in user order
    // and reduced sequentially, so the report is thread-count invariant.
    let per_user: Vec<(usize, f64, usize)> = (0..data.user_count())
        .into_par_iter()
        .filter_map(|u| {
            let outcome = match sampling {
                Some((candidates, seed)) => {
                    sampled_auc_user(scorer, u, data, split, candidates, seed)
                }
                None => auc_user_target(scorer, u, data, split, target),
            };
            match outcome {
                Ok((_, 0)) => None,
                Ok((auc, pairs)) => Some((u, auc, pairs)),
                Err(_) => None,
            }
        })
        .collect();

    let mut sum = 0.0;
    let mut cold_sum = 0.0;
    let mut cold_users = 0usize;
    for &(u, auc, _) in &per_user {
        sum += auc;
        let held = match target {
            HeldOut::Validation => split.validation_item(u),
            HeldOut::Test => split.test_item(u),
        }
        .expect("user was evaluated");
        if cold_threshold != usize::MAX && (popularity.count(held) as usize) < cold_threshold {
            cold_sum += auc;
            cold_users += 1;
        }
    }
    let users_evaluated = per_user.len();
    EvalReport {
        auc_all: if users_evaluated > 0 {
            sum / users_evaluated as f64
        } else {
            0.0
        },
        auc_cold: if cold_users > 0 {
            Some(cold_sum / cold_users as f64)
        } else {
            None
        },
        users_evaluated,
        cold_users,
        cold_threshold: if cold_threshold == usize::MAX {
            0
        } else {
            cold_threshold
        },
        per_user,
    }
}
