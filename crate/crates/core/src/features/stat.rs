use crate::activity::{population_std, sobel_magnitude, to_luma};
use crate::error::{Error, Result};
use crate::types::Patch;

/// Cells per side.
pub const STAT_CELLS: usize = 4;
pub const STAT_DIM: usize = STAT_CELLS * STAT_CELLS * 3;
/// Each cell needs a 3x3 interior for its own Sobel response.
pub const STAT_MIN_PATCH: usize = 3 * STAT_CELLS;

/// 48 statistics of a square patch: for each of the 4x4 cells in row-major
/// order, `[luma mean, luma population std, mean Sobel magnitude]`. The
/// Sobel response is the valid convolution of the cell alone, so every
/// triple depends only on its own cell's pixels.
pub fn stat_features(patch: &Patch) -> Result<Vec<f64>> {
    let (w, h) = (patch.pixels.width(), patch.pixels.height());
    if w.min(h) < STAT_MIN_PATCH {
        return Err(Error::DimensionTooSmall {
            what: "patch side for statistical features",
            actual: w.min(h),
            min: STAT_MIN_PATCH,
        });
    }
    if w % STAT_CELLS != 0 || h % STAT_CELLS != 0 {
        return Err(Error::Validation(format!(
            "patch {w}x{h} does not divide into a {STAT_CELLS}x{STAT_CELLS} cell grid"
        )));
    }
    let luma = to_luma(patch);
    let (cw, ch) = (w / STAT_CELLS, h / STAT_CELLS);
    let mut out = Vec::with_capacity(STAT_DIM);
    for cy in 0..STAT_CELLS {
        for cx in 0..STAT_CELLS {
            let cell = luma.window(cx * cw, cy * ch, cw, ch);
            let n = cell.values.len() as f64;
            let mean = cell.values.iter().sum::<f64>() / n;
            let grad = sobel_magnitude(&cell)?;
            out.push(mean);
            out.push(population_std(&cell.values));
            out.push(grad.iter().sum::<f64>() / grad.len() as f64);
        }
    }
    Ok(out)
}
