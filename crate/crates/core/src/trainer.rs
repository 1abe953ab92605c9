//! Stochastic gradient ascent on the pairwise ranking objective.
//!
//! Each sampled triple `(u, i, j)` contributes `ln sigma(x_uij)` (or a hinge
//! term) to the objective; every touched tensor moves along
//! `eta * (s * dx_uij/dTheta - lambda * Theta)` where `s = sigma(-x_uij)`
//! for the logistic loss and the subgradient slope for the hinge loss. The
//! global offset and user bias cancel in `x_uij` and are never updated.
//!
//! Regularization is grouped per update rule: `lambda_theta` covers the item
//! bias and all factor vectors, `lambda_beta` covers the visual bias, and
//! `lambda_embed` covers the embedding matrix.
//!
//! The per-triple cost is `O(K + D*F)` dense and `O(K + D*nnz)` for sparse
//! features (plus an `O(F)` visual-bias decay when `lambda_beta > 0`).

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{InteractionSet, SplitAssignment};
use crate::error::TrainError;
use crate::evaluator::{evaluate_validation, ModelScorer};
use crate::features::ItemFeatures;
use crate::math::{dot, ln_sigmoid, sigmoid};
use crate::models::{
    feature_diff, init_params, project_diff, project_diff_into, FeatureDiff, ParamShape,
    VbprParams,
};
use crate::rng::sub_rng;
use crate::sampler::{epoch_size, sample_triple, Triple};

/// Pairwise loss variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    /// Logistic pairwise loss (maximizes `ln sigma(x_uij)`).
    BprSigmoid,
    /// Hinge ranking loss (maximizes `-max(0, 1 - x_uij)`).
    Hinge,
}

impl Loss {
    pub fn as_str(self) -> &'static str {
        match self {
            Loss::BprSigmoid => "bpr-sigmoid",
            Loss::Hinge => "hinge",
        }
    }
}

/// Training hyperparameters and dimensions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub latent_dim: usize,
    pub visual_dim: usize,
    pub learning_rate: f64,
    pub lambda_theta: f64,
    pub lambda_beta: f64,
    pub lambda_embed: f64,
    pub epochs: usize,
    pub loss: Loss,
    pub seed: u64,
    /// Epochs between validation evaluations (model selection points).
    pub eval_every: usize,
    pub init_scale: f64,
}

impl TrainConfig {
    pub fn new(latent_dim: usize, visual_dim: usize) -> Self {
        TrainConfig {
            latent_dim,
            visual_dim,
            learning_rate: 0.005,
            lambda_theta: 0.1,
            lambda_beta: 0.1,
            lambda_embed: 0.0,
            epochs: 100,
            loss: Loss::BprSigmoid,
            seed: 42,
            eval_every: 1,
            init_scale: 0.01,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, l) in [
            ("lambda_theta", self.lambda_theta),
            ("lambda_beta", self.lambda_beta),
            ("lambda_embed", self.lambda_embed),
        ] {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(TrainError::InvalidConfig(format!(
                    "{name} must be non-negative, got {l}"
                )));
            }
        }
        if self.epochs == 0 {
            return Err(TrainError::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.eval_every == 0 {
            return Err(TrainError::InvalidConfig("eval_every must be >= 1".into()));
        }
        if self.init_scale <= 0.0 || !self.init_scale.is_finite() {
            return Err(TrainError::InvalidConfig(format!(
                "init_scale must be positive, got {}",
                self.init_scale
            )));
        }
        Ok(())
    }
}

/// Reusable buffers for the per-triple update, so the hot loop allocates
/// nothing.
pub struct SgdStepper {
    gamma_buf: Vec<f64>,
    theta_buf: Vec<f64>,
    proj: Vec<f64>,
}

impl SgdStepper {
    pub fn new(latent_dim: usize, visual_dim: usize) -> Self {
        SgdStepper {
            gamma_buf: vec![0.0; latent_dim],
            theta_buf: vec![0.0; visual_dim],
            proj: vec![0.0; visual_dim],
        }
    }

    /// One logistic-loss ascent step.
    pub fn step_bpr(
        &mut self,
        params: &mut VbprParams,
        t: &Triple,
        features: Option<&ItemFeatures>,
        cfg: &TrainConfig,
    ) -> Result<(), TrainError> {
        self.step_with_loss(params, t, features, cfg, Loss::BprSigmoid)
    }

    /// One hinge-loss ascent step: inactive margins apply only the
    /// regularization decay.
    pub fn step_hinge(
        &mut self,
        params: &mut VbprParams,
        t: &Triple,
        features: Option<&ItemFeatures>,
        cfg: &TrainConfig,
    ) -> Result<(), TrainError> {
        self.step_with_loss(params, t, features, cfg, Loss::Hinge)
    }

    fn step(
        &mut self,
        params: &mut VbprParams,
        t: &Triple,
        features: Option<&ItemFeatures>,
        cfg: &TrainConfig,
    ) -> Result<(), TrainError> {
        self.step_with_loss(params, t, features, cfg, cfg.loss)
    }

    fn step_with_loss(
        &mut self,
        params: &mut VbprParams,
        t: &Triple,
        features: Option<&ItemFeatures>,
        cfg: &TrainConfig,
        loss: Loss,
    ) -> Result<(), TrainError> {
        let (u, i, j) = (t.user, t.pos_item, t.neg_item);
        let eta = cfg.learning_rate;
        let l_theta = cfg.lambda_theta;
        let d = params.visual_dim();

        // x_uij from pre-update parameters (alpha and beta_u cancel)
        let mut x = params.beta_item[i] - params.beta_item[j];
        {
            let gu = params.gamma_user.row(u);
            let gi = params.gamma_item.row(i);
            let gj = params.gamma_item.row(j);
            for k in 0..gu.len() {
                x += gu[k] * (gi[k] - gj[k]);
            }
        }
        let diff = if d > 0 {
            let features = features.ok_or(TrainError::MissingFeatures)?;
            let diff = feature_diff(features.get(i), features.get(j), params.feature_dim());
            project_diff_into(params, &diff, &mut self.proj);
            x += dot(params.theta_user.row(u), &self.proj);
            x += diff.dot_dense(&params.visual_bias);
            Some(diff)
        } else {
            None
        };
        if !x.is_finite() {
            return Err(TrainError::NonFinite {
                parameter: "x_uij",
                user: u,
                pos_item: i,
                neg_item: j,
            });
        }

        // slope of the fit term; all gradients below use this shared factor
        let s = match loss {
            Loss::BprSigmoid => sigmoid(-x),
            Loss::Hinge => {
                if x >= 1.0 {
                    0.0
                } else {
                    1.0
                }
            }
        };

        // latent factors: buffer gamma_u's gradient so every update sees
        // pre-step values
        {
            let k_dim = params.latent_dim();
            for k in 0..k_dim {
                let gu = params.gamma_user.row(u)[k];
                let gi = params.gamma_item.row(i)[k];
                let gj = params.gamma_item.row(j)[k];
                self.gamma_buf[k] = s * (gi - gj) - l_theta * gu;
                params.gamma_item.row_mut(i)[k] += eta * (s * gu - l_theta * gi);
                params.gamma_item.row_mut(j)[k] += eta * (-s * gu - l_theta * gj);
            }
            let gu_row = params.gamma_user.row_mut(u);
            for (g, grad) in gu_row.iter_mut().zip(&self.gamma_buf) {
                *g += eta * grad;
            }
        }

        // item biases
        params.beta_item[i] += eta * (s - l_theta * params.beta_item[i]);
        params.beta_item[j] += eta * (-s - l_theta * params.beta_item[j]);

        // visual parameters
        if let Some(diff) = diff {
            for r in 0..d {
                self.theta_buf[r] = s * self.proj[r] - l_theta * params.theta_user.row(u)[r];
            }

            // embedding: decay (if any) over the full matrix, then the rank-1
            // term on the touched coordinates, both from pre-step theta_u
            if cfg.lambda_embed > 0.0 {
                let decay = eta * cfg.lambda_embed;
                for e in params.embedding.as_mut_slice() {
                    *e -= decay * *e;
                }
            }
            for r in 0..d {
                let coef = eta * s * params.theta_user.row(u)[r];
                let row = params.embedding.row_mut(r);
                match &diff {
                    FeatureDiff::Dense(v) => {
                        for (e, x) in row.iter_mut().zip(v) {
                            *e += coef * x;
                        }
                    }
                    FeatureDiff::Sparse(entries) => {
                        for &(c, x) in entries {
                            row[c as usize] += coef * x;
                        }
                    }
                }
            }

            // visual bias: decay every coordinate, gradient on touched ones
            if cfg.lambda_beta > 0.0 {
                let decay = eta * cfg.lambda_beta;
                for b in &mut params.visual_bias {
                    *b -= decay * *b;
                }
            }
            match &diff {
                FeatureDiff::Dense(v) => {
                    for (b, x) in params.visual_bias.iter_mut().zip(v) {
                        *b += eta * s * x;
                    }
                }
                FeatureDiff::Sparse(entries) => {
                    for &(c, x) in entries {
                        params.visual_bias[c as usize] += eta * s * x;
                    }
                }
            }

            let tu_row = params.theta_user.row_mut(u);
            for (t, grad) in tu_row.iter_mut().zip(&self.theta_buf) {
                *t += eta * grad;
            }
        }
        Ok(())
    }
}

/// One logistic-loss step with fresh scratch buffers; the training loop uses
/// [`SgdStepper`] directly to avoid per-step allocation.
pub fn sgd_step_bpr(
    params: &mut VbprParams,
    t: &Triple,
    features: Option<&ItemFeatures>,
    cfg: &TrainConfig,
) -> Result<(), TrainError> {
    SgdStepper::new(params.latent_dim(), params.visual_dim()).step_bpr(params, t, features, cfg)
}

/// One hinge-loss step with fresh scratch buffers.
pub fn sgd_step_hinge(
    params: &mut VbprParams,
    t: &Triple,
    features: Option<&ItemFeatures>,
    cfg: &TrainConfig,
) -> Result<(), TrainError> {
    SgdStepper::new(params.latent_dim(), params.visual_dim()).step_hinge(params, t, features, cfg)
}

/// Estimate the pairwise logistic objective on a sample of triples: the mean
/// of `ln sigma(x_uij)` minus the lambda-weighted squared norms of the
/// trained parameter groups (item biases and factors under `lambda_theta`,
/// visual bias under `lambda_beta`, embedding under `lambda_embed`).
pub fn estimate_bpr_objective(
    params: &VbprParams,
    triples: &[Triple],
    features: Option<&ItemFeatures>,
    cfg: &TrainConfig,
) -> f64 {
    estimate_objective(params, triples, features, cfg, Loss::BprSigmoid)
}

fn estimate_objective(
    params: &VbprParams,
    triples: &[Triple],
    features: Option<&ItemFeatures>,
    cfg: &TrainConfig,
    loss: Loss,
) -> f64 {
    assert!(!triples.is_empty(), "objective sample must be nonempty");
    let mut fit = 0.0;
    for t in triples {
        let x = pair_score(params, t, features);
        fit += match loss {
            Loss::BprSigmoid => ln_sigmoid(x),
            Loss::Hinge => -(1.0 - x).max(0.0),
        };
    }
    fit / triples.len() as f64 - regularization(params, cfg)
}

fn pair_score(params: &VbprParams, t: &Triple, features: Option<&ItemFeatures>) -> f64 {
    let (u, i, j) = (t.user, t.pos_item, t.neg_item);
    let mut x = params.beta_item[i] - params.beta_item[j];
    let gu = params.gamma_user.row(u);
    let gi = params.gamma_item.row(i);
    let gj = params.gamma_item.row(j);
    for k in 0..gu.len() {
        x += gu[k] * (gi[k] - gj[k]);
    }
    if params.visual_dim() > 0 {
        let features = features.expect("visual model requires features");
        let diff = feature_diff(features.get(i), features.get(j), params.feature_dim());
        let proj = project_diff(params, &diff);
        x += dot(params.theta_user.row(u), &proj);
        x += diff.dot_dense(&params.visual_bias);
    }
    x
}

fn norm_sq(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x * x).sum()
}

fn regularization(params: &VbprParams, cfg: &TrainConfig) -> f64 {
    cfg.lambda_theta
        * (norm_sq(&params.beta_item)
            + norm_sq(params.gamma_user.as_slice())
            + norm_sq(params.gamma_item.as_slice())
            + norm_sq(params.theta_user.as_slice()))
        + cfg.lambda_beta * norm_sq(&params.visual_bias)
        + cfg.lambda_embed * norm_sq(params.embedding.as_slice())
}

/// One row of the training log.
#[derive(Debug, Clone, Serialize)]
pub struct TrainLogRow {
    pub epoch: usize,
    pub objective: f64,
    pub val_auc: f64,
    pub wall_seconds: f64,
}

/// Per-evaluation-point log plus the model-selection outcome.
#[derive(Debug, Clone)]
pub struct TrainLog {
    pub rows: Vec<TrainLogRow>,
    pub best_epoch: usize,
    pub best_val_auc: f64,
}

impl TrainLog {
    /// CSV with columns `epoch,objective_estimate,val_auc,wall_seconds`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,objective_estimate,val_auc,wall_seconds")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{}",
                r.epoch, r.objective, r.val_auc, r.wall_seconds
            )?;
        }
        Ok(())
    }
}

/// Run stochastic gradient ascent for `cfg.epochs` epochs of
/// `epoch_size(split)` sampled triples each, evaluating validation AUC every
/// `cfg.eval_every` epochs, and return the parameters from the epoch with
/// the best validation AUC (early selection, not early stopping) together
/// with the training log.
pub fn train(
    data: &InteractionSet,
    split: &SplitAssignment,
    features: Option<&ItemFeatures>,
    cfg: &TrainConfig,
) -> Result<(VbprParams, TrainLog), TrainError> {
    cfg.validate()?;
    if cfg.visual_dim > 0 && features.is_none() {
        return Err(TrainError::MissingFeatures);
    }
    let feature_dim = if cfg.visual_dim == 0 {
        0
    } else {
        features.map(|f| f.dimension()).unwrap_or(0)
    };
    let shape = ParamShape {
        users: data.user_count(),
        items: data.item_count(),
        latent_dim: cfg.latent_dim,
        visual_dim: cfg.visual_dim,
        feature_dim,
    };
    let mut params = init_params(shape, cfg.seed, cfg.init_scale);

    let steps = epoch_size(split);
    if steps == 0 {
        return Err(TrainError::InvalidConfig(
            "corpus has no training positives".into(),
        ));
    }

    // fixed objective sample, drawn once from its own stream
    let obj_triples: Vec<Triple> = {
        let mut rng = sub_rng(cfg.seed, "objective");
        let n = steps.min(2048);
        (0..n)
            .map(|_| sample_triple(data, split, &mut rng))
            .collect::<Result<_, _>>()?
    };

    let has_validation = (0..split.user_count()).any(|u| split.validation_item(u).is_some());
    let mut sampler_rng = sub_rng(cfg.seed, "sampler");
    let mut stepper = SgdStepper::new(cfg.latent_dim, cfg.visual_dim);
    let mut rows = Vec::new();
    let mut best: Option<(f64, usize, VbprParams)> = None;
    let started = Instant::now();

    for epoch in 1..=cfg.epochs {
        for _ in 0..steps {
            let t = sample_triple(data, split, &mut sampler_rng)?;
            if let Err(err) = stepper.step(&mut params, &t, features, cfg) {
                // a blown-up x_uij is divergence; report it with the epoch
                return Err(match err {
                    TrainError::NonFinite { .. } => TrainError::Diverged {
                        epoch,
                        detail: err.to_string(),
                    },
                    other => other,
                });
            }
        }

        if epoch % cfg.eval_every == 0 || epoch == cfg.epochs {
            if let Err(tensor) = params.validate_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    detail: format!("non-finite values in {tensor}"),
                });
            }
            let objective = estimate_objective(&params, &obj_triples, features, cfg, cfg.loss);
            if !objective.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    detail: format!("objective estimate is {objective}"),
                });
            }
            let val_auc = if has_validation {
                let scorer = ModelScorer::new(&params, features);
                evaluate_validation(&scorer, data, split).auc_all
            } else {
                f64::NAN
            };
            if has_validation && best.as_ref().is_none_or(|(b, _, _)| val_auc > *b) {
                best = Some((val_auc, epoch, params.clone()));
            }
            rows.push(TrainLogRow {
                epoch,
                objective,
                val_auc,
                wall_seconds: started.elapsed().as_secs_f64(),
            });
        }
    }

    let (best_val_auc, best_epoch, best_params) = match best {
        Some((auc, epoch, p)) => (auc, epoch, p),
        None => (f64::NAN, cfg.epochs, params),
    };
    Ok((
        best_params,
        TrainLog {
            rows,
            best_epoch,
            best_val_auc,
        },
    ))
}

/// Finite-difference verification of the analytic per-triple update.
pub mod gradcheck {
    use super::*;

    /// Outcome of checking every touched scalar of one triple's update.
    #[derive(Debug, Clone)]
    pub struct GradCheckReport {
        pub checked: usize,
        pub max_rel_error: f64,
        /// Slot with the worst error: (tensor, analytic, numeric).
        pub worst: Option<(String, f64, f64)>,
    }

    /// The per-triple objective whose exact gradient the update follows:
    /// the fit term minus `(lambda/2) * ||.||^2` over the touched tensors
    /// (the update's `-lambda * Theta` decay is the gradient of the halved
    /// penalty).
    pub fn per_triple_objective(
        params: &VbprParams,
        t: &Triple,
        features: Option<&ItemFeatures>,
        cfg: &TrainConfig,
    ) -> f64 {
        let x = pair_score(params, t, features);
        let fit = match cfg.loss {
            Loss::BprSigmoid => ln_sigmoid(x),
            Loss::Hinge => -(1.0 - x).max(0.0),
        };
        let (u, i, j) = (t.user, t.pos_item, t.neg_item);
        let reg_theta = params.beta_item[i].powi(2)
            + params.beta_item[j].powi(2)
            + norm_sq(params.gamma_user.row(u))
            + norm_sq(params.gamma_item.row(i))
            + norm_sq(params.gamma_item.row(j))
            + norm_sq(params.theta_user.row(u));
        fit - 0.5 * cfg.lambda_theta * reg_theta
            - 0.5 * cfg.lambda_beta * norm_sq(&params.visual_bias)
            - 0.5 * cfg.lambda_embed * norm_sq(params.embedding.as_slice())
    }

    /// Every scalar the update touches, addressable for perturbation.
    #[derive(Debug, Clone, Copy)]
    enum Slot {
        BetaItem(usize),
        GammaUser(usize, usize),
        GammaItem(usize, usize),
        ThetaUser(usize, usize),
        VisualBias(usize),
        Embedding(usize, usize),
    }

    impl Slot {
        fn get(self, p: &VbprParams) -> f64 {
            match self {
                Slot::BetaItem(i) => p.beta_item[i],
                Slot::GammaUser(u, k) => p.gamma_user.row(u)[k],
                Slot::GammaItem(i, k) => p.gamma_item.row(i)[k],
                Slot::ThetaUser(u, r) => p.theta_user.row(u)[r],
                Slot::VisualBias(c) => p.visual_bias[c],
                Slot::Embedding(r, c) => p.embedding.row(r)[c],
            }
        }

        fn set(self, p: &mut VbprParams, v: f64) {
            match self {
                Slot::BetaItem(i) => p.beta_item[i] = v,
                Slot::GammaUser(u, k) => p.gamma_user.row_mut(u)[k] = v,
                Slot::GammaItem(i, k) => p.gamma_item.row_mut(i)[k] = v,
                Slot::ThetaUser(u, r) => p.theta_user.row_mut(u)[r] = v,
                Slot::VisualBias(c) => p.visual_bias[c] = v,
                Slot::Embedding(r, c) => p.embedding.row_mut(r)[c] = v,
            }
        }

        fn name(self) -> String {
            match self {
                Slot::BetaItem(i) => format!("beta_item[{i}]"),
                Slot::GammaUser(u, k) => format!("gamma_user[{u},{k}]"),
                Slot::GammaItem(i, k) => format!("gamma_item[{i},{k}]"),
                Slot::ThetaUser(u, r) => format!("theta_user[{u},{r}]"),
                Slot::VisualBias(c) => format!("visual_bias[{c}]"),
                Slot::Embedding(r, c) => format!("embedding[{r},{c}]"),
            }
        }
    }

    fn touched_slots(params: &VbprParams, t: &Triple) -> Vec<Slot> {
        let (u, i, j) = (t.user, t.pos_item, t.neg_item);
        let mut slots = vec![Slot::BetaItem(i), Slot::BetaItem(j)];
        for k in 0..params.latent_dim() {
            slots.push(Slot::GammaUser(u, k));
            slots.push(Slot::GammaItem(i, k));
            slots.push(Slot::GammaItem(j, k));
        }
        for r in 0..params.visual_dim() {
            slots.push(Slot::ThetaUser(u, r));
        }
        for c in 0..params.feature_dim() {
            slots.push(Slot::VisualBias(c));
        }
        for r in 0..params.visual_dim() {
            for c in 0..params.feature_dim() {
                slots.push(Slot::Embedding(r, c));
            }
        }
        slots
    }

    /// Compare the analytic update of one step against central finite
    /// differences of [`per_triple_objective`] at step `h`.
    ///
    /// Relative error per slot is `|a - g| / max(|a|, |g|, 1e-4)`; the floor
    /// keeps finite-difference roundoff (~1e-10 absolute) from dominating
    /// slots whose true gradient is at or near zero.
    pub fn check_step_gradients(
        params: &VbprParams,
        t: &Triple,
        features: Option<&ItemFeatures>,
        cfg: &TrainConfig,
        h: f64,
    ) -> Result<GradCheckReport, TrainError> {
        // analytic side: one unit-rate step, recovered as after - before
        let mut unit_cfg = cfg.clone();
        unit_cfg.learning_rate = 1.0;
        let mut stepped = params.clone();
        let mut stepper = SgdStepper::new(params.latent_dim(), params.visual_dim());
        stepper.step_with_loss(&mut stepped, t, features, &unit_cfg, cfg.loss)?;

        let mut work = params.clone();
        let mut report = GradCheckReport {
            checked: 0,
            max_rel_error: 0.0,
            worst: None,
        };
        for slot in touched_slots(params, t) {
            let base = slot.get(params);
            let analytic = slot.get(&stepped) - base;

            slot.set(&mut work, base + h);
            let plus = per_triple_objective(&work, t, features, cfg);
            slot.set(&mut work, base - h);
            let minus = per_triple_objective(&work, t, features, cfg);
            slot.set(&mut work, base);
            let numeric = (plus - minus) / (2.0 * h);

            let denom = analytic.abs().max(numeric.abs()).max(1e-4);
            let rel = (analytic - numeric).abs() / denom;
            report.checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((slot.name(), analytic, numeric));
            }
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::split_leave_one_out;
    use crate::features::FeatureVec;
    use crate::models::{score_mf, VbprParams};
    use rand::Rng;

    fn shape(users: usize, items: usize, k: usize, d: usize, f: usize) -> ParamShape {
        ParamShape {
            users,
            items,
            latent_dim: k,
            visual_dim: d,
            feature_dim: f,
        }
    }

    fn random_features(items: usize, dim: usize, seed: u64, sparse: bool) -> ItemFeatures {
        let mut rng = sub_rng(seed, "trainer-test-features");
        let vectors = (0..items)
            .map(|_| {
                if sparse {
                    let coords: Vec<u32> = (0..dim as u32).filter(|_| rng.random_range(0..3) == 0).collect();
                    let values = coords.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
                    FeatureVec::Sparse { coords, values }
                } else {
                    FeatureVec::Dense((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
                }
            })
            .collect();
        ItemFeatures::from_vectors(dim, vectors)
    }

    fn random_params(sh: ParamShape, seed: u64) -> VbprParams {
        let mut p = init_params(sh, seed, 0.5);
        let mut rng = sub_rng(seed, "trainer-test-biases");
        p.alpha = rng.random_range(-1.0..1.0);
        for b in &mut p.beta_user {
            *b = rng.random_range(-1.0..1.0);
        }
        for b in &mut p.beta_item {
            *b = rng.random_range(-1.0..1.0);
        }
        for b in &mut p.visual_bias {
            *b = rng.random_range(-1.0..1.0);
        }
        p
    }

    fn test_cfg(k: usize, d: usize) -> TrainConfig {
        let mut cfg = TrainConfig::new(k, d);
        cfg.learning_rate = 0.1;
        cfg.lambda_theta = 0.05;
        cfg.lambda_beta = 0.02;
        cfg.lambda_embed = 0.01;
        cfg
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        // train() validates lr > 0, but the raw step op honors eta = 0
        let sh = shape(3, 4, 2, 2, 3);
        let params = random_params(sh, 1);
        let features = random_features(4, 3, 1, false);
        let mut cfg = test_cfg(2, 2);
        cfg.learning_rate = 0.0;
        let t = Triple {
            user: 0,
            pos_item: 1,
            neg_item: 2,
        };
        let mut stepped = params.clone();
        sgd_step_bpr(&mut stepped, &t, Some(&features), &cfg).unwrap();
        assert_eq!(stepped, params);
    }

    #[test]
    fn first_step_from_zero_params() {
        // x_uij = 0 so s = 1/2; the item biases move by +/- eta/2, every
        // factor update is a product of zeros, and the visual bias follows
        // the feature difference.
        let sh = shape(2, 3, 2, 2, 3);
        let mut params = VbprParams::zeros(sh);
        let features = random_features(3, 3, 2, false);
        let mut cfg = test_cfg(2, 2);
        cfg.learning_rate = 0.2;
        cfg.lambda_theta = 0.0;
        cfg.lambda_beta = 0.0;
        cfg.lambda_embed = 0.0;
        let t = Triple {
            user: 1,
            pos_item: 0,
            neg_item: 2,
        };
        sgd_step_bpr(&mut params, &t, Some(&features), &cfg).unwrap();
        assert_eq!(params.beta_item[0], 0.5 * 0.2);
        assert_eq!(params.beta_item[2], -0.5 * 0.2);
        assert!(params.gamma_user.as_slice().iter().all(|&x| x == 0.0));
        assert!(params.gamma_item.as_slice().iter().all(|&x| x == 0.0));
        assert!(params.theta_user.as_slice().iter().all(|&x| x == 0.0));
        assert!(params.embedding.as_slice().iter().all(|&x| x == 0.0));
        let fi = features.get(0).to_dense(3);
        let fj = features.get(2).to_dense(3);
        for c in 0..3 {
            let expected = 0.2 * 0.5 * (fi[c] - fj[c]);
            assert!((params.visual_bias[c] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let mut rng = sub_rng(33, "gradcheck-instances");
        for case in 0..30 {
            let k = rng.random_range(1..=4usize);
            let d = rng.random_range(0..=4usize);
            let f = rng.random_range(1..=8usize);
            let sh = shape(3, 5, k, d, f);
            let params = random_params(sh, 100 + case);
            let features = random_features(5, f, 200 + case, case % 2 == 0);
            let cfg = test_cfg(k, d);
            let t = Triple {
                user: rng.random_range(0..3),
                pos_item: 0,
                neg_item: rng.random_range(1..5),
            };
            let report =
                gradcheck::check_step_gradients(&params, &t, Some(&features), &cfg, 1e-6).unwrap();
            assert!(
                report.max_rel_error <= 1e-5,
                "case {case}: max rel error {} at {:?}",
                report.max_rel_error,
                report.worst
            );
        }
    }

    #[test]
    fn hinge_inactive_margin_is_decay_only() {
        let sh = shape(2, 3, 1, 0, 0);
        let mut params = VbprParams::zeros(sh);
        params.beta_item[0] = 5.0; // x_uij = 5 >= 1
        let mut cfg = test_cfg(1, 0);
        cfg.loss = Loss::Hinge;
        cfg.lambda_theta = 0.0;
        let before = params.clone();
        let t = Triple {
            user: 0,
            pos_item: 0,
            neg_item: 1,
        };
        sgd_step_hinge(&mut params, &t, None, &cfg).unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn hinge_active_margin_has_unit_slope() {
        let sh = shape(2, 3, 2, 0, 0);
        let mut params = VbprParams::zeros(sh);
        let mut cfg = test_cfg(2, 0);
        cfg.loss = Loss::Hinge;
        cfg.learning_rate = 0.3;
        cfg.lambda_theta = 0.0;
        let t = Triple {
            user: 0,
            pos_item: 1,
            neg_item: 2,
        };
        sgd_step_hinge(&mut params, &t, None, &cfg).unwrap();
        assert_eq!(params.beta_item[1], 0.3);
        assert_eq!(params.beta_item[2], -0.3);
    }

    #[test]
    fn hinge_gradients_match_away_from_kink() {
        let mut rng = sub_rng(44, "hinge-gradcheck");
        let mut checked = 0;
        while checked < 10 {
            let k = rng.random_range(1..=3usize);
            let d = rng.random_range(0..=3usize);
            let f = rng.random_range(1..=6usize);
            let sh = shape(3, 4, k, d, f);
            let params = random_params(sh, 300 + checked);
            let features = random_features(4, f, 400 + checked, false);
            let mut cfg = test_cfg(k, d);
            cfg.loss = Loss::Hinge;
            let t = Triple {
                user: rng.random_range(0..3),
                pos_item: rng.random_range(0..2),
                neg_item: rng.random_range(2..4),
            };
            let x = pair_score(&params, &t, Some(&features));
            if (x - 1.0).abs() <= 1e-3 {
                continue; // subgradient undefined near the kink
            }
            let report =
                gradcheck::check_step_gradients(&params, &t, Some(&features), &cfg, 1e-6).unwrap();
            assert!(
                report.max_rel_error <= 1e-5,
                "x={x}: max rel error {} at {:?}",
                report.max_rel_error,
                report.worst
            );
            checked += 1;
        }
    }

    #[test]
    fn objective_of_zero_params_is_ln_half() {
        let sh = shape(2, 3, 2, 0, 0);
        let params = VbprParams::zeros(sh);
        let mut cfg = test_cfg(2, 0);
        cfg.lambda_theta = 0.0;
        let triples = vec![
            Triple {
                user: 0,
                pos_item: 0,
                neg_item: 1,
            };
            5
        ];
        let obj = estimate_bpr_objective(&params, &triples, None, &cfg);
        assert!((obj - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn objective_saturates_to_zero_when_separated() {
        let sh = shape(1, 2, 1, 0, 0);
        let mut params = VbprParams::zeros(sh);
        params.beta_item[0] = 40.0; // x_uij = +40 on the only triple
        let mut cfg = test_cfg(1, 0);
        cfg.lambda_theta = 0.0;
        let triples = vec![Triple {
            user: 0,
            pos_item: 0,
            neg_item: 1,
        }];
        let obj = estimate_bpr_objective(&params, &triples, None, &cfg);
        assert!(obj.abs() < 1e-15, "objective {obj}");
    }

    #[test]
    fn objective_matches_naive_reimplementation() {
        let sh = shape(4, 6, 3, 2, 4);
        let params = random_params(sh, 55);
        let features = random_features(6, 4, 56, false);
        let cfg = test_cfg(3, 2);
        let mut rng = sub_rng(57, "objective-triples");
        let triples: Vec<Triple> = (0..100)
            .map(|_| {
                let i = rng.random_range(0..6);
                let mut j = rng.random_range(0..5);
                if j >= i {
                    j += 1;
                }
                Triple {
                    user: rng.random_range(0..4),
                    pos_item: i,
                    neg_item: j,
                }
            })
            .collect();

        // oracle: naive term-by-term re-implementation over full scores
        let mut fit = 0.0;
        for t in &triples {
            let xi =
                crate::models::score_vbpr(&params, t.user, t.pos_item, features.get(t.pos_item))
                    .unwrap();
            let xj =
                crate::models::score_vbpr(&params, t.user, t.neg_item, features.get(t.neg_item))
                    .unwrap();
            let x = xi - xj;
            fit += (1.0 / (1.0 + (-x).exp())).ln();
        }
        let mut reg = 0.0;
        for &b in &params.beta_item {
            reg += cfg.lambda_theta * b * b;
        }
        for &g in params.gamma_user.as_slice() {
            reg += cfg.lambda_theta * g * g;
        }
        for &g in params.gamma_item.as_slice() {
            reg += cfg.lambda_theta * g * g;
        }
        for &th in params.theta_user.as_slice() {
            reg += cfg.lambda_theta * th * th;
        }
        for &b in &params.visual_bias {
            reg += cfg.lambda_beta * b * b;
        }
        for &e in params.embedding.as_slice() {
            reg += cfg.lambda_embed * e * e;
        }
        let expected = fit / triples.len() as f64 - reg;

        let got = estimate_bpr_objective(&params, &triples, Some(&features), &cfg);
        assert!(
            (got - expected).abs() <= 1e-10,
            "got {got}, expected {expected}"
        );
    }

    #[test]
    fn alpha_and_user_bias_never_move() {
        let mut pairs = Vec::new();
        for u in 0..6 {
            for i in 0..5 {
                pairs.push((format!("u{u}"), format!("i{}", (u + i) % 12)));
            }
        }
        let data = InteractionSet::from_pairs(pairs).unwrap();
        let split = split_leave_one_out(&data, 3).unwrap();
        let features = random_features(data.item_count(), 4, 9, false);
        let mut cfg = test_cfg(3, 2);
        cfg.epochs = 3;
        cfg.seed = 11;
        let (params, _) = train(&data, &split, Some(&features), &cfg).unwrap();

        let fresh = init_params(params.shape(), cfg.seed, cfg.init_scale);
        assert_eq!(params.alpha.to_bits(), fresh.alpha.to_bits());
        for (a, b) in params.beta_user.iter().zip(&fresh.beta_user) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn epochs_zero_is_rejected() {
        let data = InteractionSet::from_pairs(vec![("a", "x"), ("a", "y"), ("a", "z")]).unwrap();
        let split = split_leave_one_out(&data, 1).unwrap();
        let mut cfg = test_cfg(2, 0);
        cfg.epochs = 0;
        assert!(matches!(
            train(&data, &split, None, &cfg),
            Err(TrainError::InvalidConfig(_))
        ));
    }

    #[test]
    fn separable_toy_reaches_training_auc_one() {
        // two items, each user positive on exactly one: every sampled triple
        // is forced, and one epoch of ascent separates them
        let data = InteractionSet::from_pairs(vec![("a", "x"), ("b", "y")]).unwrap();
        let split = SplitAssignment::all_train(&data);
        let mut cfg = test_cfg(2, 0);
        cfg.learning_rate = 0.5;
        cfg.lambda_theta = 0.0;
        cfg.epochs = 20;
        let (params, _) = train(&data, &split, None, &cfg).unwrap();
        // each user's positive outranks the other item: training AUC 1.0
        assert!(score_mf(&params, 0, 0).unwrap() > score_mf(&params, 0, 1).unwrap());
        assert!(score_mf(&params, 1, 1).unwrap() > score_mf(&params, 1, 0).unwrap());
    }

    #[test]
    fn training_is_deterministic() {
        let mut pairs = Vec::new();
        for u in 0..8 {
            for i in 0..5 {
                pairs.push((format!("u{u}"), format!("i{}", (u * 2 + i) % 14)));
            }
        }
        let data = InteractionSet::from_pairs(pairs).unwrap();
        let split = split_leave_one_out(&data, 5).unwrap();
        let features = random_features(data.item_count(), 6, 5, true);
        let mut cfg = test_cfg(2, 2);
        cfg.epochs = 4;
        let (a, _) = train(&data, &split, Some(&features), &cfg).unwrap();
        let (b, _) = train(&data, &split, Some(&features), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_is_reported_with_epoch() {
        let mut pairs = Vec::new();
        for u in 0..5 {
            for i in 0..4 {
                pairs.push((format!("u{u}"), format!("i{}", (u + i) % 8)));
            }
        }
        let data = InteractionSet::from_pairs(pairs).unwrap();
        let split = split_leave_one_out(&data, 2).unwrap();
        let mut cfg = test_cfg(2, 0);
        cfg.learning_rate = 1e150; // guaranteed overflow within one epoch
        cfg.epochs = 3;
        match train(&data, &split, None, &cfg) {
            Err(TrainError::Diverged { epoch, .. }) => assert_eq!(epoch, 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn missing_features_for_visual_model_is_an_error() {
        let data = InteractionSet::from_pairs(vec![("a", "x"), ("a", "y"), ("a", "z")]).unwrap();
        let split = split_leave_one_out(&data, 1).unwrap();
        let cfg = test_cfg(2, 2);
        assert!(matches!(
            train(&data, &split, None, &cfg),
            Err(TrainError::MissingFeatures)
        ));
    }
}
