//! Implicit-feedback corpora: ingestion, user filtering, and the per-user
//! leave-one-out split into train/validation/test.
//!
//! The feedback file format is one `user_id<TAB>item_id` pair per line; ids
//! are arbitrary non-empty strings without tabs or newlines. Repeated pairs
//! collapse to one (implicit feedback is a set).

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;

use crate::error::DataError;
use crate::rng::sub_rng;

/// An indexed implicit-feedback corpus: dense user/item indices assigned in
/// first-appearance order, plus each user's positive item set `I_u^+`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionSet {
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    user_index: HashMap<String, usize>,
    item_index: HashMap<String, usize>,
    /// Per-user sorted, deduplicated item indices.
    positives: Vec<Vec<usize>>,
    feedback_count: usize,
}

impl InteractionSet {
    /// Build from (user id, item id) pairs. Duplicates are collapsed.
    pub fn from_pairs<I, S>(pairs: I) -> Result<Self, DataError>
    where
        I: IntoIterator<Item = (S, S)>,
        S: Into<String>,
    {
        Self::build(pairs, Vec::new())
    }

    /// Like [`InteractionSet::from_pairs`], but pre-registers an item
    /// universe so items keep their position as dense index even when no
    /// user interacted with them (they stay candidates for ranking).
    pub fn from_pairs_with_items<I, S>(pairs: I, items: Vec<String>) -> Result<Self, DataError>
    where
        I: IntoIterator<Item = (S, S)>,
        S: Into<String>,
    {
        Self::build(pairs, items)
    }

    fn build<I, S>(pairs: I, universe: Vec<String>) -> Result<Self, DataError>
    where
        I: IntoIterator<Item = (S, S)>,
        S: Into<String>,
    {
        let mut user_ids = Vec::new();
        let mut item_ids = Vec::new();
        let mut user_index = HashMap::new();
        let mut item_index = HashMap::new();
        let mut positives: Vec<Vec<usize>> = Vec::new();

        for item in universe {
            item_index.entry(item.clone()).or_insert_with(|| {
                item_ids.push(item);
                item_ids.len() - 1
            });
        }

        for (user, item) in pairs {
            let user = user.into();
            let item = item.into();
            let u = *user_index.entry(user.clone()).or_insert_with(|| {
                user_ids.push(user);
                positives.push(Vec::new());
                user_ids.len() - 1
            });
            let i = *item_index.entry(item.clone()).or_insert_with(|| {
                item_ids.push(item);
                item_ids.len() - 1
            });
            positives[u].push(i);
        }

        let mut feedback_count = 0;
        for set in &mut positives {
            set.sort_unstable();
            set.dedup();
            feedback_count += set.len();
        }

        Ok(InteractionSet {
            user_ids,
            item_ids,
            user_index,
            item_index,
            positives,
            feedback_count,
        })
    }

    pub fn user_count(&self) -> usize {
        self.user_ids.len()
    }

    pub fn item_count(&self) -> usize {
        self.item_ids.len()
    }

    /// Total number of (user, item) positives after deduplication.
    pub fn feedback_count(&self) -> usize {
        self.feedback_count
    }

    pub fn user_id(&self, u: usize) -> &str {
        &self.user_ids[u]
    }

    pub fn item_id(&self, i: usize) -> &str {
        &self.item_ids[i]
    }

    pub fn user_index(&self, id: &str) -> Option<usize> {
        self.user_index.get(id).copied()
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.item_index.get(id).copied()
    }

    /// The user's full positive set `I_u^+` (sorted).
    pub fn positives(&self, u: usize) -> &[usize] {
        &self.positives[u]
    }

    /// Membership test against the user's full positive set.
    pub fn is_positive(&self, u: usize, i: usize) -> bool {
        self.positives[u].binary_search(&i).is_ok()
    }
}

/// Read a feedback file into an [`InteractionSet`].
pub fn load_feedback(path: impl AsRef<Path>) -> Result<InteractionSet, DataError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| DataError::Io {
        path: display.clone(),
        source,
    })?;
    let reader = BufReader::new(file);

    let mut pairs: Vec<(String, String)> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| DataError::Io {
            path: display.clone(),
            source,
        })?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 || fields[0].is_empty() || fields[1].is_empty() {
            return Err(DataError::MalformedFeedbackLine {
                path: display,
                line: lineno + 1,
                found: fields.len(),
            });
        }
        pairs.push((fields[0].to_string(), fields[1].to_string()));
    }
    if pairs.is_empty() {
        return Err(DataError::EmptyFeedback { path: display });
    }
    InteractionSet::from_pairs(pairs)
}

/// Write a corpus back out in the feedback file format (one pair per line,
/// users in index order).
pub fn write_feedback(
    path: impl AsRef<Path>,
    data: &InteractionSet,
) -> Result<(), std::io::Error> {
    let mut out = BufWriter::new(File::create(path)?);
    for u in 0..data.user_count() {
        for &i in data.positives(u) {
            writeln!(out, "{}\t{}", data.user_id(u), data.item_id(i))?;
        }
    }
    out.flush()
}

/// Drop users with fewer than `min_count` positives. Item indices are left
/// untouched (items may become orphaned); user indices are re-densified in
/// original order.
pub fn filter_min_feedback(
    data: &InteractionSet,
    min_count: usize,
) -> Result<InteractionSet, DataError> {
    assert!(min_count >= 1, "min_count must be at least 1");
    let mut user_ids = Vec::new();
    let mut user_index = HashMap::new();
    let mut positives = Vec::new();
    let mut feedback_count = 0;

    for u in 0..data.user_count() {
        let set = data.positives(u);
        if set.len() >= min_count {
            user_index.insert(data.user_id(u).to_string(), user_ids.len());
            user_ids.push(data.user_id(u).to_string());
            positives.push(set.to_vec());
            feedback_count += set.len();
        }
    }
    if user_ids.is_empty() {
        return Err(DataError::AllUsersFiltered { min_count });
    }
    Ok(InteractionSet {
        user_ids,
        item_ids: data.item_ids.clone(),
        user_index,
        item_index: data.item_index.clone(),
        positives,
        feedback_count,
    })
}

/// Per-user train/validation/test designation: one held-out validation item
/// `V_u`, one held-out test item `T_u`, and the remaining training positives.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    validation: Vec<Option<usize>>,
    test: Vec<Option<usize>>,
    /// Per-user sorted training positives.
    train: Vec<Vec<usize>>,
}

impl SplitAssignment {
    /// Assignment with every positive in the training part and nothing held
    /// out. Useful for corpora too small to split, or for fitting a final
    /// model on all feedback; evaluation requires a real split.
    pub fn all_train(data: &InteractionSet) -> Self {
        SplitAssignment {
            validation: vec![None; data.user_count()],
            test: vec![None; data.user_count()],
            train: (0..data.user_count())
                .map(|u| data.positives(u).to_vec())
                .collect(),
        }
    }

    pub fn user_count(&self) -> usize {
        self.train.len()
    }

    pub fn validation_item(&self, u: usize) -> Option<usize> {
        self.validation[u]
    }

    pub fn test_item(&self, u: usize) -> Option<usize> {
        self.test[u]
    }

    /// The user's training positives (sorted).
    pub fn train_positives(&self, u: usize) -> &[usize] {
        &self.train[u]
    }

    pub fn is_train_positive(&self, u: usize, i: usize) -> bool {
        self.train[u].binary_search(&i).is_ok()
    }

    /// Total number of training positives across users; one training epoch
    /// samples this many triples.
    pub fn train_size(&self) -> usize {
        self.train.iter().map(|t| t.len()).sum()
    }
}

/// Leave-one-out split: for each user draw a validation item and a test item
/// uniformly without replacement from their positives; the rest train.
/// Deterministic given `seed`.
pub fn split_leave_one_out(
    data: &InteractionSet,
    seed: u64,
) -> Result<SplitAssignment, DataError> {
    let mut rng = sub_rng(seed, "split");
    let mut validation = Vec::with_capacity(data.user_count());
    let mut test = Vec::with_capacity(data.user_count());
    let mut train = Vec::with_capacity(data.user_count());

    for u in 0..data.user_count() {
        let set = data.positives(u);
        if set.len() < 3 {
            return Err(DataError::TooFewPositives {
                user: data.user_id(u).to_string(),
                count: set.len(),
            });
        }
        let v_pos = rng.random_range(0..set.len());
        let mut t_pos = rng.random_range(0..set.len() - 1);
        if t_pos >= v_pos {
            t_pos += 1;
        }
        let v_item = set[v_pos];
        let t_item = set[t_pos];
        let rest: Vec<usize> = set
            .iter()
            .copied()
            .filter(|&i| i != v_item && i != t_item)
            .collect();
        validation.push(Some(v_item));
        test.push(Some(t_item));
        train.push(rest);
    }
    Ok(SplitAssignment {
        validation,
        test,
        train,
    })
}
