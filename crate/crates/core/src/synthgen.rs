//! Synthetic corpora with planted preference structure.
//!
//! Each user and item gets true latent and visual factors; the mixed
//! affinity drives feedback selection through a softmax over items, and raw
//! feature vectors are a fixed linear encoding of the item's true visual
//! factors (so a linear projection of `f_i` recovers them — exactly the
//! model class the learned embedding can express). Designated cold items
//! keep their affinity structure but have their exposure suppressed, which
//! makes cold-start behavior testable at desk scale.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::InteractionSet;
use crate::error::SynthError;
use crate::features::{FeatureStore, FeatureVec};
use crate::rng::sub_rng;

/// Generator configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub users: usize,
    pub items: usize,
    pub feature_dim: usize,
    /// Planted latent dimensionality (K*).
    pub true_latent_dim: usize,
    /// Planted visual dimensionality (D*).
    pub true_visual_dim: usize,
    /// Mix of visual vs latent affinity in [0, 1]: 0 = features carry no
    /// preference signal, 1 = preferences are purely visual.
    pub visual_weight: f64,
    pub feedback_per_user: usize,
    /// Fraction of items designated cold (suppressed exposure).
    pub cold_fraction: f64,
    pub seed: u64,
    /// Fraction of feature coordinates that carry signal; the rest are
    /// structurally zero.
    pub feature_density: f64,
    /// Std-dev of Gaussian noise added to the encoded features (0 = exact).
    pub feature_noise: f64,
    /// Softmax temperature for feedback selection; 0 picks each user's
    /// top-scoring items deterministically.
    pub temperature: f64,
    /// Multiplier on cold items' selection weight (temperature > 0 only).
    pub cold_exposure: f64,
    /// Scale applied to affinities before the softmax; larger values
    /// concentrate feedback on each user's favorite items.
    pub affinity_gain: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            users: 1000,
            items: 500,
            feature_dim: 64,
            true_latent_dim: 4,
            true_visual_dim: 4,
            visual_weight: 0.7,
            feedback_per_user: 8,
            cold_fraction: 0.5,
            seed: 42,
            feature_density: 1.0,
            feature_noise: 0.0,
            temperature: 1.0,
            cold_exposure: 0.08,
            affinity_gain: 4.0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<(), SynthError> {
        if self.users == 0 || self.items == 0 {
            return Err(SynthError::InvalidConfig(
                "users and items must be positive".into(),
            ));
        }
        if self.feedback_per_user == 0 {
            return Err(SynthError::InvalidConfig(
                "feedback_per_user must be positive".into(),
            ));
        }
        if self.feedback_per_user >= self.items {
            return Err(SynthError::InvalidConfig(format!(
                "feedback_per_user ({}) must be smaller than items ({})",
                self.feedback_per_user, self.items
            )));
        }
        if !(0.0..=1.0).contains(&self.visual_weight) {
            return Err(SynthError::InvalidConfig(format!(
                "visual_weight must be in [0, 1], got {}",
                self.visual_weight
            )));
        }
        if !(0.0..=1.0).contains(&self.cold_fraction) {
            return Err(SynthError::InvalidConfig(format!(
                "cold_fraction must be in [0, 1], got {}",
                self.cold_fraction
            )));
        }
        if !(self.feature_density > 0.0 && self.feature_density <= 1.0) {
            return Err(SynthError::InvalidConfig(format!(
                "feature_density must be in (0, 1], got {}",
                self.feature_density
            )));
        }
        let active = (self.feature_density * self.feature_dim as f64).ceil() as usize;
        if active < self.true_visual_dim {
            return Err(SynthError::InvalidConfig(format!(
                "feature_density {} leaves {} active coordinates; need at least true_visual_dim ({})",
                self.feature_density, active, self.true_visual_dim
            )));
        }
        if self.temperature < 0.0 || self.cold_exposure < 0.0 || self.affinity_gain <= 0.0 {
            return Err(SynthError::InvalidConfig(
                "temperature and cold_exposure must be >= 0, affinity_gain > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Planted structure, kept for oracle scorers and sidecar export.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub user_latent: Vec<Vec<f64>>,
    pub item_latent: Vec<Vec<f64>>,
    pub user_visual: Vec<Vec<f64>>,
    pub item_visual: Vec<Vec<f64>>,
    /// Per-item cold designation.
    pub cold: Vec<bool>,
    pub visual_weight: f64,
    pub affinity_gain: f64,
    /// `F x D*` encoder with orthonormal columns: `f_i = decoder * v_i`, so
    /// its transpose is an exact linear projection back onto the planted
    /// visual factors at zero noise.
    pub decoder: Vec<Vec<f64>>,
    /// Coordinates that carry signal (sorted).
    pub active_coords: Vec<u32>,
}

impl GroundTruth {
    /// Mixed true affinity of user `u` for item `i` (dense indices coincide
    /// with generator indices).
    pub fn affinity(&self, u: usize, i: usize) -> f64 {
        let latent = dot_norm(&self.user_latent[u], &self.item_latent[i]);
        let visual = dot_norm(&self.user_visual[u], &self.item_visual[i]);
        self.affinity_gain * ((1.0 - self.visual_weight) * latent + self.visual_weight * visual)
    }
}

fn dot_norm(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    d / (a.len() as f64).sqrt()
}

/// A generated corpus: interactions (item universe preserved, indices equal
/// generator indices), features, and the planted ground truth.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub interactions: InteractionSet,
    pub features: FeatureStore,
    pub truth: GroundTruth,
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect()
}

/// Generate a corpus. Deterministic given the seed.
pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput, SynthError> {
    cfg.validate()?;

    let mut factor_rng = sub_rng(cfg.seed, "synth-factors");
    let user_latent = gaussian_matrix(&mut factor_rng, cfg.users, cfg.true_latent_dim);
    let item_latent = gaussian_matrix(&mut factor_rng, cfg.items, cfg.true_latent_dim);
    let user_visual = gaussian_matrix(&mut factor_rng, cfg.users, cfg.true_visual_dim);
    let item_visual = gaussian_matrix(&mut factor_rng, cfg.items, cfg.true_visual_dim);

    // cold designation: a random subset of the items
    let cold = {
        let mut rng = sub_rng(cfg.seed, "synth-cold");
        let n_cold = (cfg.cold_fraction * cfg.items as f64).round() as usize;
        let mut order: Vec<usize> = (0..cfg.items).collect();
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut cold = vec![false; cfg.items];
        for &i in order.iter().take(n_cold) {
            cold[i] = true;
        }
        cold
    };

    // feature encoder: orthonormal columns supported on the active coords
    let mut feat_rng = sub_rng(cfg.seed, "synth-features");
    let n_active = (cfg.feature_density * cfg.feature_dim as f64).ceil() as usize;
    let active_coords: Vec<u32> = {
        let mut order: Vec<u32> = (0..cfg.feature_dim as u32).collect();
        for i in (1..order.len()).rev() {
            let j = feat_rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut chosen: Vec<u32> = order.into_iter().take(n_active).collect();
        chosen.sort_unstable();
        chosen
    };
    let decoder = {
        let mut cols: Vec<Vec<f64>> = (0..cfg.true_visual_dim)
            .map(|_| {
                let mut col = vec![0.0; cfg.feature_dim];
                for &c in &active_coords {
                    col[c as usize] = feat_rng.sample::<f64, _>(StandardNormal);
                }
                col
            })
            .collect();
        // Gram-Schmidt
        for k in 0..cols.len() {
            for l in 0..k {
                let proj: f64 = cols[k].iter().zip(&cols[l]).map(|(a, b)| a * b).sum();
                let prev = cols[l].clone();
                for (x, p) in cols[k].iter_mut().zip(&prev) {
                    *x -= proj * p;
                }
            }
            let norm: f64 = cols[k].iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in &mut cols[k] {
                *x /= norm;
            }
        }
        // store row-major F x D*
        (0..cfg.feature_dim)
            .map(|r| cols.iter().map(|c| c[r]).collect::<Vec<f64>>())
            .collect::<Vec<_>>()
    };

    let mut features = FeatureStore::new(cfg.feature_dim);
    for (i, visual) in item_visual.iter().enumerate() {
        let mut values: Vec<f64> = active_coords
            .iter()
            .map(|&c| {
                let mut x: f64 = decoder[c as usize]
                    .iter()
                    .zip(visual)
                    .map(|(b, v)| b * v)
                    .sum();
                if cfg.feature_noise > 0.0 {
                    x += cfg.feature_noise * feat_rng.sample::<f64, _>(StandardNormal);
                }
                x
            })
            .collect();
        let vec = if n_active == cfg.feature_dim {
            FeatureVec::Dense(std::mem::take(&mut values))
        } else {
            FeatureVec::Sparse {
                coords: active_coords.clone(),
                values: std::mem::take(&mut values),
            }
        };
        features
            .insert(format!("i{i}"), vec)
            .expect("generated coordinates are in range");
    }

    let truth = GroundTruth {
        user_latent,
        item_latent,
        user_visual,
        item_visual,
        cold,
        visual_weight: cfg.visual_weight,
        affinity_gain: cfg.affinity_gain,
        decoder,
        active_coords,
    };

    // feedback: per-user selection without replacement
    let mut fb_rng = sub_rng(cfg.seed, "synth-feedback");
    let mut pairs: Vec<(String, String)> = Vec::with_capacity(cfg.users * cfg.feedback_per_user);
    let mut weights = vec![0.0f64; cfg.items];
    for u in 0..cfg.users {
        if cfg.temperature == 0.0 {
            // deterministic top-k by affinity (exposure plays no role in the
            // zero-temperature limit)
            let mut order: Vec<usize> = (0..cfg.items).collect();
            order.sort_by(|&a, &b| {
                truth
                    .affinity(u, b)
                    .partial_cmp(&truth.affinity(u, a))
                    .unwrap()
                    .then(a.cmp(&b))
            });
            for &i in order.iter().take(cfg.feedback_per_user) {
                pairs.push((format!("u{u}"), format!("i{i}")));
            }
        } else {
            let logits: Vec<f64> = (0..cfg.items)
                .map(|i| truth.affinity(u, i) / cfg.temperature)
                .collect();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for i in 0..cfg.items {
                let exposure = if truth.cold[i] { cfg.cold_exposure } else { 1.0 };
                weights[i] = exposure * (logits[i] - max).exp();
            }
            for _ in 0..cfg.feedback_per_user {
                let total: f64 = weights.iter().sum();
                let mut r = fb_rng.random::<f64>() * total;
                let mut chosen = None;
                let mut last_live = None;
                for (i, &w) in weights.iter().enumerate() {
                    if w <= 0.0 {
                        continue;
                    }
                    last_live = Some(i);
                    r -= w;
                    if r <= 0.0 {
                        chosen = Some(i);
                        break;
                    }
                }
                // rounding can leave r slightly positive after the scan;
                // fall back to the last item that is still drawable
                let chosen = chosen
                    .or(last_live)
                    .expect("feedback_per_user < items leaves drawable items");
                weights[chosen] = 0.0;
                pairs.push((format!("u{u}"), format!("i{chosen}")));
            }
        }
    }

    let items: Vec<String> = (0..cfg.items).map(|i| format!("i{i}")).collect();
    let interactions = InteractionSet::from_pairs_with_items(pairs, items)
        .expect("generated pairs are well-formed");
    Ok(SynthOutput {
        interactions,
        features,
        truth,
    })
}
