//! Parameter stores and scoring functions.
//!
//! The MF predictor is
//! `x_ui = alpha + beta_u + beta_i + gamma_u . gamma_i`,
//! and the visual-aware predictor extends it with
//! `theta_u . (E f_i) + beta' . f_i`, where `E` is a `D x F` embedding that
//! projects raw item features into the `D`-dimensional visual space. Setting
//! `D = 0` degenerates the store to exactly the MF parameter set.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dataset::SplitAssignment;
use crate::error::ModelError;
use crate::features::{FeatureVec, ItemFeatures};
use crate::math::dot;
use crate::rng::sub_rng;

/// Row-major dense matrix of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Flat row-major view of the whole matrix.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn fill_gaussian(&mut self, rng: &mut impl Rng, scale: f64) {
        for x in &mut self.data {
            let z: f64 = rng.sample(StandardNormal);
            *x = z * scale;
        }
    }
}

/// Model shape: corpus sizes plus latent (`K`), visual (`D`), and raw
/// feature (`F`) dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamShape {
    pub users: usize,
    pub items: usize,
    pub latent_dim: usize,
    pub visual_dim: usize,
    pub feature_dim: usize,
}

/// All trainable tensors of the visual-aware predictor.
///
/// With `visual_dim = 0` the visual tensors are empty and the store is
/// exactly an MF parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct VbprParams {
    /// Global offset; cancels in pairwise differences and is never trained.
    pub alpha: f64,
    /// Per-user bias; cancels in pairwise differences and is never trained.
    pub beta_user: Vec<f64>,
    pub beta_item: Vec<f64>,
    /// `|U| x K` latent user factors.
    pub gamma_user: Matrix,
    /// `|I| x K` latent item factors.
    pub gamma_item: Matrix,
    /// `|U| x D` visual user factors.
    pub theta_user: Matrix,
    /// `D x F` embedding from raw feature space into visual space.
    pub embedding: Matrix,
    /// Length-`F` visual bias vector.
    pub visual_bias: Vec<f64>,
}

impl VbprParams {
    /// Zero-initialized store of the given shape. A `visual_dim` of 0 forces
    /// `feature_dim` to 0 (no visual tensors at all).
    pub fn zeros(shape: ParamShape) -> Self {
        let f = if shape.visual_dim == 0 {
            0
        } else {
            shape.feature_dim
        };
        VbprParams {
            alpha: 0.0,
            beta_user: vec![0.0; shape.users],
            beta_item: vec![0.0; shape.items],
            gamma_user: Matrix::zeros(shape.users, shape.latent_dim),
            gamma_item: Matrix::zeros(shape.items, shape.latent_dim),
            theta_user: Matrix::zeros(shape.users, shape.visual_dim),
            embedding: Matrix::zeros(shape.visual_dim, f),
            visual_bias: vec![0.0; f],
        }
    }

    pub fn user_count(&self) -> usize {
        self.beta_user.len()
    }

    pub fn item_count(&self) -> usize {
        self.beta_item.len()
    }

    pub fn latent_dim(&self) -> usize {
        self.gamma_user.cols()
    }

    pub fn visual_dim(&self) -> usize {
        self.theta_user.cols()
    }

    pub fn feature_dim(&self) -> usize {
        self.visual_bias.len()
    }

    pub fn shape(&self) -> ParamShape {
        ParamShape {
            users: self.user_count(),
            items: self.item_count(),
            latent_dim: self.latent_dim(),
            visual_dim: self.visual_dim(),
            feature_dim: self.feature_dim(),
        }
    }

    /// Check every tensor for NaN/Inf; returns the name of the first
    /// offending tensor.
    pub fn validate_finite(&self) -> Result<(), &'static str> {
        fn ok(xs: &[f64]) -> bool {
            xs.iter().all(|x| x.is_finite())
        }
        if !self.alpha.is_finite() {
            return Err("alpha");
        }
        if !ok(&self.beta_user) {
            return Err("beta_user");
        }
        if !ok(&self.beta_item) {
            return Err("beta_item");
        }
        if !ok(self.gamma_user.as_slice()) {
            return Err("gamma_user");
        }
        if !ok(self.gamma_item.as_slice()) {
            return Err("gamma_item");
        }
        if !ok(self.theta_user.as_slice()) {
            return Err("theta_user");
        }
        if !ok(self.embedding.as_slice()) {
            return Err("embedding");
        }
        if !ok(&self.visual_bias) {
            return Err("visual_bias");
        }
        Ok(())
    }

    fn check_user(&self, u: usize) -> Result<(), ModelError> {
        if u >= self.user_count() {
            return Err(ModelError::IndexOutOfRange {
                kind: "user",
                index: u,
                size: self.user_count(),
            });
        }
        Ok(())
    }

    fn check_item(&self, i: usize) -> Result<(), ModelError> {
        if i >= self.item_count() {
            return Err(ModelError::IndexOutOfRange {
                kind: "item",
                index: i,
                size: self.item_count(),
            });
        }
        Ok(())
    }
}

/// Gaussian-initialized parameters: factor matrices and the embedding are
/// i.i.d. N(0, scale^2); the offset, biases, and visual bias start at zero.
/// Deterministic given `seed`.
pub fn init_params(shape: ParamShape, seed: u64, scale: f64) -> VbprParams {
    assert!(scale > 0.0, "init scale must be positive");
    let mut rng = sub_rng(seed, "init");
    let mut params = VbprParams::zeros(shape);
    params.gamma_user.fill_gaussian(&mut rng, scale);
    params.gamma_item.fill_gaussian(&mut rng, scale);
    params.theta_user.fill_gaussian(&mut rng, scale);
    params.embedding.fill_gaussian(&mut rng, scale);
    params
}

/// MF score `alpha + beta_u + beta_i + gamma_u . gamma_i`.
pub fn score_mf(params: &VbprParams, u: usize, i: usize) -> Result<f64, ModelError> {
    params.check_user(u)?;
    params.check_item(i)?;
    Ok(params.alpha
        + params.beta_user[u]
        + params.beta_item[i]
        + dot(params.gamma_user.row(u), params.gamma_item.row(i)))
}

/// Project raw features into visual space: `theta_i = E f_i`.
pub fn project_features(params: &VbprParams, f: &FeatureVec) -> Result<Vec<f64>, ModelError> {
    check_feature_dim(params, f)?;
    let d = params.visual_dim();
    let mut out = Vec::with_capacity(d);
    for r in 0..d {
        out.push(f.dot_dense(params.embedding.row(r)));
    }
    Ok(out)
}

/// Visual-aware score
/// `alpha + beta_u + beta_i + gamma_u . gamma_i + theta_u . (E f_i) + beta' . f_i`.
pub fn score_vbpr(
    params: &VbprParams,
    u: usize,
    i: usize,
    f_i: &FeatureVec,
) -> Result<f64, ModelError> {
    let base = score_mf(params, u, i)?;
    if params.visual_dim() == 0 {
        return Ok(base);
    }
    let theta_i = project_features(params, f_i)?;
    Ok(base + dot(params.theta_user.row(u), &theta_i) + f_i.dot_dense(&params.visual_bias))
}

/// Compact form of the feature difference `f_i - f_j`, kept sparse when both
/// inputs are sparse.
#[derive(Debug, Clone)]
pub enum FeatureDiff {
    Dense(Vec<f64>),
    Sparse(Vec<(u32, f64)>),
}

impl FeatureDiff {
    pub fn nnz(&self) -> usize {
        match self {
            FeatureDiff::Dense(v) => v.len(),
            FeatureDiff::Sparse(v) => v.len(),
        }
    }

    pub fn dot_dense(&self, w: &[f64]) -> f64 {
        match self {
            FeatureDiff::Dense(v) => dot(v, w),
            FeatureDiff::Sparse(v) => v.iter().map(|&(c, x)| w[c as usize] * x).sum(),
        }
    }
}

/// Compute `f_i - f_j`. Sparse/sparse pairs merge-join on coordinates; any
/// dense operand forces a dense result.
pub fn feature_diff(f_i: &FeatureVec, f_j: &FeatureVec, dimension: usize) -> FeatureDiff {
    match (f_i, f_j) {
        (
            FeatureVec::Sparse {
                coords: ci,
                values: vi,
            },
            FeatureVec::Sparse {
                coords: cj,
                values: vj,
            },
        ) => {
            let mut out = Vec::with_capacity(ci.len() + cj.len());
            let (mut a, mut b) = (0usize, 0usize);
            while a < ci.len() && b < cj.len() {
                match ci[a].cmp(&cj[b]) {
                    std::cmp::Ordering::Less => {
                        out.push((ci[a], vi[a]));
                        a += 1;
                    }
                    std::cmp::Ordering::Greater => {
                        out.push((cj[b], -vj[b]));
                        b += 1;
                    }
                    std::cmp::Ordering::Equal => {
                        let d = vi[a] - vj[b];
                        if d != 0.0 {
                            out.push((ci[a], d));
                        }
                        a += 1;
                        b += 1;
                    }
                }
            }
            out.extend(ci[a..].iter().zip(&vi[a..]).map(|(&c, &v)| (c, v)));
            out.extend(cj[b..].iter().zip(&vj[b..]).map(|(&c, &v)| (c, -v)));
            FeatureDiff::Sparse(out)
        }
        _ => {
            let mut out = f_i.to_dense(dimension);
            match f_j {
                FeatureVec::Dense(v) => {
                    for (o, x) in out.iter_mut().zip(v) {
                        *o -= x;
                    }
                }
                FeatureVec::Sparse { coords, values } => {
                    for (&c, &v) in coords.iter().zip(values) {
                        out[c as usize] -= v;
                    }
                }
            }
            FeatureDiff::Dense(out)
        }
    }
}

/// Project a feature difference into visual space: `E (f_i - f_j)`.
pub fn project_diff(params: &VbprParams, diff: &FeatureDiff) -> Vec<f64> {
    let mut out = vec![0.0; params.visual_dim()];
    project_diff_into(params, diff, &mut out);
    out
}

/// [`project_diff`] into a caller-provided buffer of length `D`.
pub fn project_diff_into(params: &VbprParams, diff: &FeatureDiff, out: &mut [f64]) {
    debug_assert_eq!(out.len(), params.visual_dim());
    match diff {
        FeatureDiff::Dense(v) => {
            for (r, o) in out.iter_mut().enumerate() {
                *o = dot(params.embedding.row(r), v);
            }
        }
        FeatureDiff::Sparse(v) => {
            for (r, o) in out.iter_mut().enumerate() {
                let row = params.embedding.row(r);
                *o = v.iter().map(|&(c, x)| row[c as usize] * x).sum();
            }
        }
    }
}

/// Pairwise score difference `x_ui - x_uj`, computed with the global offset
/// and user bias algebraically removed so the result is exactly invariant
/// under shifts of either.
pub fn score_diff(
    params: &VbprParams,
    u: usize,
    i: usize,
    j: usize,
    features: &ItemFeatures,
) -> Result<f64, ModelError> {
    params.check_user(u)?;
    params.check_item(i)?;
    params.check_item(j)?;
    let mut x = params.beta_item[i] - params.beta_item[j];
    let gu = params.gamma_user.row(u);
    let gi = params.gamma_item.row(i);
    let gj = params.gamma_item.row(j);
    for k in 0..gu.len() {
        x += gu[k] * (gi[k] - gj[k]);
    }
    if params.visual_dim() > 0 {
        check_feature_dim(params, features.get(i))?;
        check_feature_dim(params, features.get(j))?;
        let diff = feature_diff(features.get(i), features.get(j), params.feature_dim());
        let proj = project_diff(params, &diff);
        x += dot(params.theta_user.row(u), &proj);
        x += diff.dot_dense(&params.visual_bias);
    }
    Ok(x)
}

fn check_feature_dim(params: &VbprParams, f: &FeatureVec) -> Result<(), ModelError> {
    let expected = params.feature_dim();
    match f {
        FeatureVec::Dense(v) => {
            if v.len() != expected {
                return Err(ModelError::DimensionMismatch {
                    expected,
                    found: v.len(),
                });
            }
        }
        FeatureVec::Sparse { coords, .. } => {
            if let Some(&max) = coords.last() {
                if max as usize >= expected {
                    return Err(ModelError::DimensionMismatch {
                        expected,
                        found: max as usize + 1,
                    });
                }
            }
        }
    }
    Ok(())
}

/// Per-item counts of training positives, for the popularity baseline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PopularityTable {
    counts: Vec<u32>,
}

impl PopularityTable {
    /// Count training positives only; validation and test items never
    /// contribute.
    pub fn from_split(split: &SplitAssignment, item_count: usize) -> Self {
        let mut counts = vec![0u32; item_count];
        for u in 0..split.user_count() {
            for &i in split.train_positives(u) {
                counts[i] += 1;
            }
        }
        PopularityTable { counts }
    }

    pub fn count(&self, item: usize) -> u32 {
        self.counts[item]
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }
}
