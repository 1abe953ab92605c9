//! Checkpoint serialization.
//!
//! A checkpoint is one JSON metadata line (dimensions, seed, epoch, loss
//! variant) followed by raw little-endian 8-byte floats for each tensor in
//! declared order: alpha, beta_user, beta_item, gamma_user (row-major),
//! gamma_item, theta_user, embedding, visual_bias. Writing is bit-exact, so
//! identical parameters produce identical files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CheckpointError;
use crate::models::{ParamShape, VbprParams};
use crate::trainer::Loss;

/// The JSON metadata line at the head of a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub users: usize,
    pub items: usize,
    pub latent_dim: usize,
    pub visual_dim: usize,
    pub feature_dim: usize,
    pub seed: u64,
    /// Epoch whose parameters these are (the best validation epoch).
    pub epoch: usize,
    pub loss: Loss,
    /// Whether feature vectors were L2-normalized before training.
    #[serde(default)]
    pub normalized_features: bool,
}

impl CheckpointMeta {
    pub fn shape(&self) -> ParamShape {
        ParamShape {
            users: self.users,
            items: self.items,
            latent_dim: self.latent_dim,
            visual_dim: self.visual_dim,
            feature_dim: self.feature_dim,
        }
    }
}

fn tensor_len(meta: &CheckpointMeta) -> usize {
    1 + meta.users
        + meta.items
        + meta.users * meta.latent_dim
        + meta.items * meta.latent_dim
        + meta.users * meta.visual_dim
        + meta.visual_dim * meta.feature_dim
        + meta.feature_dim
}

/// Write `params` with `meta` to `path`.
pub fn save(
    path: impl AsRef<Path>,
    meta: &CheckpointMeta,
    params: &VbprParams,
) -> Result<(), CheckpointError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let io_err = |source| CheckpointError::Io {
        path: display.clone(),
        source,
    };
    assert_eq!(meta.shape(), params.shape(), "metadata/parameter mismatch");

    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    let header = serde_json::to_string(meta).expect("metadata serializes");
    out.write_all(header.as_bytes()).map_err(io_err)?;
    out.write_all(b"\n").map_err(io_err)?;

    let mut write_f64s = |xs: &[f64]| -> std::io::Result<()> {
        for x in xs {
            out.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    };
    write_f64s(&[params.alpha]).map_err(io_err)?;
    write_f64s(&params.beta_user).map_err(io_err)?;
    write_f64s(&params.beta_item).map_err(io_err)?;
    write_f64s(params.gamma_user.as_slice()).map_err(io_err)?;
    write_f64s(params.gamma_item.as_slice()).map_err(io_err)?;
    write_f64s(params.theta_user.as_slice()).map_err(io_err)?;
    write_f64s(params.embedding.as_slice()).map_err(io_err)?;
    write_f64s(&params.visual_bias).map_err(io_err)?;
    Ok(())
}

/// Read a checkpoint back; the inverse of [`save`], bit-exact.
pub fn load(path: impl AsRef<Path>) -> Result<(CheckpointMeta, VbprParams), CheckpointError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let io_err = |source| CheckpointError::Io {
        path: display.clone(),
        source,
    };

    let mut reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut header = Vec::new();
    {
        // read up to the first newline
        let mut byte = [0u8; 1];
        loop {
            let n = reader.read(&mut byte).map_err(io_err)?;
            if n == 0 || byte[0] == b'\n' {
                break;
            }
            header.push(byte[0]);
        }
    }
    let meta: CheckpointMeta =
        serde_json::from_slice(&header).map_err(|e| CheckpointError::BadMetadata {
            path: display.clone(),
            detail: e.to_string(),
        })?;

    let expected = tensor_len(&meta);
    let mut payload = Vec::new();
    reader.read_to_end(&mut payload).map_err(io_err)?;
    if payload.len() != expected * 8 {
        return Err(CheckpointError::Truncated {
            path: display,
            expected,
            found: payload.len() / 8,
        });
    }
    let mut floats = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut take = |n: usize| -> Vec<f64> { floats.by_ref().take(n).collect() };

    let mut params = VbprParams::zeros(meta.shape());
    params.alpha = take(1)[0];
    params.beta_user = take(meta.users);
    params.beta_item = take(meta.items);
    params
        .gamma_user
        .as_mut_slice()
        .copy_from_slice(&take(meta.users * meta.latent_dim));
    params
        .gamma_item
        .as_mut_slice()
        .copy_from_slice(&take(meta.items * meta.latent_dim));
    params
        .theta_user
        .as_mut_slice()
        .copy_from_slice(&take(meta.users * meta.visual_dim));
    params
        .embedding
        .as_mut_slice()
        .copy_from_slice(&take(meta.visual_dim * meta.feature_dim));
    params.visual_bias = take(meta.feature_dim);
    Ok((meta, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::init_params;

    fn meta(users: usize, items: usize, k: usize, d: usize, f: usize) -> CheckpointMeta {
        CheckpointMeta {
            users,
            items,
            latent_dim: k,
            visual_dim: d,
            feature_dim: f,
            seed: 7,
            epoch: 3,
            loss: Loss::BprSigmoid,
            normalized_features: false,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = meta(4, 6, 3, 2, 5);
        let mut params = init_params(m.shape(), 7, 0.3);
        params.alpha = 0.123456789;
        params.beta_user[2] = -9.75e-11;
        params.visual_bias[4] = f64::MIN_POSITIVE;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&path, &m, &params).unwrap();
        let (m2, p2) = load(&path).unwrap();
        assert_eq!(m, m2);
        assert_eq!(params, p2);
    }

    #[test]
    fn identical_params_identical_bytes() {
        let m = meta(3, 3, 2, 1, 4);
        let params = init_params(m.shape(), 1, 0.01);
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.ckpt");
        let b = dir.path().join("b.ckpt");
        save(&a, &m, &params).unwrap();
        save(&b, &m, &params).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }

    #[test]
    fn truncated_payload_is_detected() {
        let m = meta(2, 2, 2, 0, 0);
        let params = init_params(m.shape(), 2, 0.01);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&path, &m, &params).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(
            load(&path),
            Err(CheckpointError::Truncated { .. })
        ));
    }

    #[test]
    fn garbage_header_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        std::fs::write(&path, b"not json\n").unwrap();
        assert!(matches!(
            load(&path),
            Err(CheckpointError::BadMetadata { .. })
        ));
    }

    #[test]
    fn mf_checkpoint_has_no_visual_payload() {
        // visual_dim 0 forces feature_dim 0, so MF and degenerate visual
        // checkpoints are byte-compatible
        let m = meta(3, 4, 2, 0, 0);
        let params = init_params(m.shape(), 3, 0.01);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mf.ckpt");
        save(&path, &m, &params).unwrap();
        let (m2, p2) = load(&path).unwrap();
        assert_eq!(p2.visual_dim(), 0);
        assert_eq!(p2.feature_dim(), 0);
        assert_eq!(m2.feature_dim, 0);
    }
}
