//! Training-triple sampling.
//!
//! A triple `(u, i, j)` pairs a user with one of their training positives
//! and a sampled negative: an item outside the user's *full* positive set,
//! so held-out validation/test items are never treated as negatives.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{InteractionSet, SplitAssignment};
use crate::error::SampleError;

/// One stochastic-gradient training unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triple {
    pub user: usize,
    pub pos_item: usize,
    pub neg_item: usize,
}

/// Draw one triple: the user uniformly, the positive uniformly from the
/// user's training positives, the negative uniformly by rejection from the
/// items outside the user's full positive set.
pub fn sample_triple(
    data: &InteractionSet,
    split: &SplitAssignment,
    rng: &mut ChaCha8Rng,
) -> Result<Triple, SampleError> {
    if data.user_count() == 0 || split.train_size() == 0 {
        return Err(SampleError::NoTrainingData);
    }
    let user = rng.random_range(0..data.user_count());
    let train = split.train_positives(user);
    if train.is_empty() {
        // Cannot happen after a leave-one-out split (every user keeps at
        // least one training positive), but guard anyway.
        return Err(SampleError::NoTrainingData);
    }
    let pos_item = train[rng.random_range(0..train.len())];

    if data.positives(user).len() >= data.item_count() {
        return Err(SampleError::DegenerateCorpus { user });
    }
    let neg_item = loop {
        let j = rng.random_range(0..data.item_count());
        if !data.is_positive(user, j) {
            break j;
        }
    };
    Ok(Triple {
        user,
        pos_item,
        neg_item,
    })
}

/// Number of training positives; one epoch draws this many triples.
pub fn epoch_size(split: &SplitAssignment) -> usize {
    split.train_size()
}
