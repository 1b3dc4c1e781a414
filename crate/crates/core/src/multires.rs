//! Two-scale feature sequences: patches of the half-resolution image first,
//! then patches of the original, each group ordered on its own.

use serde::{Deserialize, Serialize};

use crate::activity::{apply_ordering, spatial_activity, Ordering};
use crate::downscale::downscale_half;
use crate::error::{Error, Result};
use crate::features::FeatureBackend;
use crate::par::Exec;
use crate::patch::{compute_grid, extract_patches};
use crate::types::{derive_seed, FeatureSequence, FeatureVector, ImageBuffer, ScaleGroup};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultiresConfig {
    pub enable_low_scale: bool,
    pub patch_size: usize,
    pub ordering: Ordering,
    /// Fail with `LowScaleTooSmall` instead of skipping the LOW group.
    pub strict_low_scale: bool,
    /// Seed for `Ordering::Random`.
    pub seed: u64,
}

impl Default for MultiresConfig {
    fn default() -> Self {
        Self {
            enable_low_scale: true,
            patch_size: 224,
            ordering: Ordering::AscSi,
            strict_low_scale: false,
            seed: 0,
        }
    }
}

fn encode_group(
    image: &ImageBuffer,
    group: ScaleGroup,
    cfg: &MultiresConfig,
    backend: &FeatureBackend,
    exec: Exec,
) -> Result<Vec<FeatureVector>> {
    let grid = compute_grid(image.width(), image.height(), cfg.patch_size)?;
    let patches = extract_patches(image, &grid, group)?;
    let encoded = exec.map(&patches, |_, p| -> Result<FeatureVector> {
        Ok(FeatureVector {
            values: backend.extract_features(p)?,
            si: spatial_activity(p)?,
            scale_group: group,
            source_index: p.source_index,
        })
    });
    let vectors = encoded.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(apply_ordering(
        vectors,
        cfg.ordering,
        derive_seed(cfg.seed, &[group.tag() as u64]),
    ))
}

pub fn build_sequence(
    image_id: &str,
    image: &ImageBuffer,
    cfg: &MultiresConfig,
    backend: &FeatureBackend,
) -> Result<FeatureSequence> {
    build_sequence_with(image_id, image, cfg, backend, Exec::default())
}

/// [`build_sequence`] with an explicit executor for the per-patch work.
pub fn build_sequence_with(
    image_id: &str,
    image: &ImageBuffer,
    cfg: &MultiresConfig,
    backend: &FeatureBackend,
    exec: Exec,
) -> Result<FeatureSequence> {
    let p = cfg.patch_size;
    if image.width() < p || image.height() < p {
        return Err(Error::DimensionTooSmall {
            what: "image side",
            actual: image.width().min(image.height()),
            min: p,
        });
    }
    let mut vectors = Vec::new();
    if cfg.enable_low_scale {
        let low = downscale_half(image)?;
        if low.width() < p || low.height() < p {
            if cfg.strict_low_scale {
                return Err(Error::LowScaleTooSmall {
                    width: low.width(),
                    height: low.height(),
                    patch: p,
                });
            }
            log::warn!(
                "{image_id}: downscaled image {}x{} is smaller than patch size {p}, skipping low scale",
                low.width(),
                low.height()
            );
        } else {
            vectors.extend(encode_group(&low, ScaleGroup::Low, cfg, backend, exec)?);
        }
    }
    vectors.extend(encode_group(image, ScaleGroup::High, cfg, backend, exec)?);
    Ok(FeatureSequence {
        image_id: image_id.to_owned(),
        dim: backend.dim(),
        vectors,
    })
}
