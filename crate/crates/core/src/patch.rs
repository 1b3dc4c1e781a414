//! Regular overlapping patch grid covering the whole image.
//!
//! Along each axis of length `L` with patch size `P`, the number of patches
//! is `n = ceil(L / P)` and the nominal stride is `floor((L - P) / (n - 1))`.
//! Origin `i` is `floor(i * (L - P) / (n - 1))`: the nominal stride with the
//! division remainder spread over the steps, so the last origin is exactly
//! `L - P` and consecutive patches never leave a gap. Stepping by the floored
//! stride alone can fall short (768 gives 543 + 224 = 767), and pinning only
//! the last origin is not enough either: 895 would give origins 0, 223, 446,
//! 671 and leave column 670 uncovered. Whenever `i * remainder < n - 1` the
//! origin equals `i * stride`, which covers every published resolution.

use crate::error::{Error, Result};
use crate::types::{ImageBuffer, Patch, ScaleGroup};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchGrid {
    pub width: usize,
    pub height: usize,
    pub patch_size: usize,
    /// Horizontal stride (0 when there is a single column).
    pub s_h: usize,
    /// Vertical stride (0 when there is a single row).
    pub s_v: usize,
    pub n_cols: usize,
    pub n_rows: usize,
    /// Patch origins `(x, y)` in row-major order.
    pub positions: Vec<(usize, usize)>,
}

impl PatchGrid {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Stride and origins for one axis.
fn axis(len: usize, patch: usize) -> (usize, Vec<usize>) {
    let n = len.div_ceil(patch);
    if n == 1 {
        return (0, vec![0]);
    }
    let span = len - patch;
    let stride = span / (n - 1);
    (stride, (0..n).map(|i| i * span / (n - 1)).collect())
}

pub fn compute_grid(width: usize, height: usize, patch_size: usize) -> Result<PatchGrid> {
    if patch_size == 0 {
        return Err(Error::Validation("patch size must be positive".into()));
    }
    if width < patch_size {
        return Err(Error::DimensionTooSmall {
            what: "image width",
            actual: width,
            min: patch_size,
        });
    }
    if height < patch_size {
        return Err(Error::DimensionTooSmall {
            what: "image height",
            actual: height,
            min: patch_size,
        });
    }
    let (s_h, xs) = axis(width, patch_size);
    let (s_v, ys) = axis(height, patch_size);
    let positions = ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
        .collect();
    Ok(PatchGrid {
        width,
        height,
        patch_size,
        s_h,
        s_v,
        n_cols: xs.len(),
        n_rows: ys.len(),
        positions,
    })
}

pub fn extract_patches(
    image: &ImageBuffer,
    grid: &PatchGrid,
    scale_group: ScaleGroup,
) -> Result<Vec<Patch>> {
    if grid.width != image.width() || grid.height != image.height() {
        return Err(Error::GridMismatch {
            grid_w: grid.width,
            grid_h: grid.height,
            image_w: image.width(),
            image_h: image.height(),
        });
    }
    let p = grid.patch_size;
    Ok(grid
        .positions
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| Patch {
            pixels: image.crop(x, y, p, p),
            origin_x: x,
            origin_y: y,
            scale_group,
            source_index: i,
        })
        .collect())
}
