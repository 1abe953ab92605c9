//! Pairwise personalized ranking from implicit feedback, with optional
//! visual-feature factors.
//!
//! The crate trains matrix-factorization rankers with stochastic gradient
//! ascent on a pairwise logistic (or hinge) objective, scores items with an
//! optional learned embedding of raw item features, and evaluates rankings
//! with exact per-user AUC including a cold-start breakdown. A synthetic
//! corpus generator with planted preference structure supports end-to-end
//! verification at desk scale.

pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod evaluator;
pub mod features;
pub mod math;
pub mod models;
pub mod rng;
pub mod sampler;
pub mod synthgen;
pub mod trainer;

pub use dataset::{
    filter_min_feedback, load_feedback, split_leave_one_out, InteractionSet, SplitAssignment,
};
pub use evaluator::{auc_user, evaluate, EvalReport, Scorer};
pub use features::{load_features, FeatureStore, FeatureVec, ItemFeatures};
pub use models::{init_params, score_diff, score_mf, score_vbpr, ParamShape, VbprParams};
pub use sampler::{epoch_size, sample_triple, Triple};
pub use trainer::{train, Loss, TrainConfig};
