//! Spatial activity (SI): population standard deviation of the Sobel
//! gradient magnitude of a patch's luma, and the ordering of patch
//! features by it.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{rng_from_seed, FeatureVector, ImageBuffer, Patch};

/// BT.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Per-pixel luma on the 0–255 scale.
#[derive(Debug, Clone, PartialEq)]
pub struct LumaField {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl LumaField {
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Sub-window copy; caller guarantees bounds.
    pub(crate) fn window(&self, x0: usize, y0: usize, w: usize, h: usize) -> LumaField {
        let mut values = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            values.extend_from_slice(&self.values[y * self.width + x0..y * self.width + x0 + w]);
        }
        LumaField {
            width: w,
            height: h,
            values,
        }
    }
}

pub fn image_luma(img: &ImageBuffer) -> LumaField {
    let values = match img.channels() {
        1 => img.data().iter().map(|&v| v as f64).collect(),
        _ => img
            .data()
            .chunks_exact(3)
            .map(|p| {
                LUMA_WEIGHTS[0] * p[0] as f64
                    + LUMA_WEIGHTS[1] * p[1] as f64
                    + LUMA_WEIGHTS[2] * p[2] as f64
            })
            .collect(),
    };
    LumaField {
        width: img.width(),
        height: img.height(),
        values,
    }
}

pub fn to_luma(patch: &Patch) -> LumaField {
    image_luma(&patch.pixels)
}

/// Gradient magnitude over the interior (valid convolution), shape
/// `(height - 2) x (width - 2)`, row-major.
pub fn sobel_magnitude(luma: &LumaField) -> Result<Vec<f64>> {
    let (w, h) = (luma.width, luma.height);
    if w < 3 || h < 3 {
        return Err(Error::DimensionTooSmall {
            what: "luma field side",
            actual: w.min(h),
            min: 3,
        });
    }
    let v = &luma.values;
    let mut out = Vec::with_capacity((w - 2) * (h - 2));
    for y in 1..h - 1 {
        let (up, mid, down) = (&v[(y - 1) * w..y * w], &v[y * w..(y + 1) * w], &v[(y + 1) * w..(y + 2) * w]);
        for x in 1..w - 1 {
            // Outer taps are added before the doubled centre tap so that a
            // mirrored neighbourhood yields exactly the negated response.
            let right = (up[x + 1] + down[x + 1]) + 2.0 * mid[x + 1];
            let left = (up[x - 1] + down[x - 1]) + 2.0 * mid[x - 1];
            let bottom = (down[x - 1] + down[x + 1]) + 2.0 * down[x];
            let top = (up[x - 1] + up[x + 1]) + 2.0 * up[x];
            let gx = right - left;
            let gy = bottom - top;
            out.push((gx * gx + gy * gy).sqrt());
        }
    }
    Ok(out)
}

/// Sum that pairs element `i` with element `n - 1 - i`; the result is
/// bitwise invariant under reversal of the input.
fn mirrored_sum(values: impl ExactSizeIterator<Item = f64> + DoubleEndedIterator + Clone) -> f64 {
    let n = values.len();
    let mut fwd = values.clone();
    let mut back = values.rev();
    let mut acc = 0.0;
    for _ in 0..n / 2 {
        acc += fwd.next().unwrap() + back.next().unwrap();
    }
    if n % 2 == 1 {
        acc += fwd.next().unwrap();
    }
    acc
}

/// Population standard deviation (divides by N).
pub fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = mirrored_sum(values.iter().copied()) / n;
    let var = mirrored_sum(values.iter().map(|v| (v - mean) * (v - mean))) / n;
    var.sqrt()
}

pub fn luma_activity(luma: &LumaField) -> Result<f64> {
    Ok(population_std(&sobel_magnitude(luma)?))
}

pub fn spatial_activity(patch: &Patch) -> Result<f64> {
    luma_activity(&to_luma(patch))
}

/// How feature vectors within a scale group are sequenced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ordering {
    /// Ascending SI, ties by grid position.
    #[default]
    AscSi,
    /// Grid (row-major) order.
    Raster,
    /// Seeded shuffle.
    Random,
}

impl std::str::FromStr for Ordering {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "asc-si" => Ok(Ordering::AscSi),
            "raster" => Ok(Ordering::Raster),
            "random" => Ok(Ordering::Random),
            other => Err(Error::Validation(format!("unknown ordering '{other}'"))),
        }
    }
}

/// Stable ascending sort by SI; equal SI keeps `source_index` order.
pub fn order_by_si(mut vectors: Vec<FeatureVector>) -> Vec<FeatureVector> {
    vectors.sort_by(|a, b| a.si.total_cmp(&b.si).then(a.source_index.cmp(&b.source_index)));
    vectors
}

pub fn apply_ordering(vectors: Vec<FeatureVector>, ordering: Ordering, seed: u64) -> Vec<FeatureVector> {
    match ordering {
        Ordering::AscSi => order_by_si(vectors),
        Ordering::Raster => {
            let mut v = vectors;
            v.sort_by_key(|f| f.source_index);
            v
        }
        Ordering::Random => {
            let mut v = vectors;
            v.sort_by_key(|f| f.source_index);
            v.shuffle(&mut rng_from_seed(seed));
            v
        }
    }
}
