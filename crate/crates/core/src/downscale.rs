//! Half-resolution area resampling.

use crate::error::{Error, Result};
use crate::types::ImageBuffer;

pub const SCALE_FACTOR: f64 = 0.5;

/// Halves both dimensions (rounding up). Each output sample is the mean of
/// the source pixels its footprint covers: a 2x2 box in the interior, a
/// 1x2, 2x1 or 1x1 remainder on odd trailing edges. Means are rounded to
/// the nearest integer with ties away from zero.
pub fn downscale_half(image: &ImageBuffer) -> Result<ImageBuffer> {
    let (w, h, ch) = (image.width(), image.height(), image.channels());
    if w < 2 || h < 2 {
        return Err(Error::DimensionTooSmall {
            what: "image side for 0.5x downscale",
            actual: w.min(h),
            min: 2,
        });
    }
    let (ow, oh) = (w.div_ceil(2), h.div_ceil(2));
    let mut data = Vec::with_capacity(ow * oh * ch);
    for oy in 0..oh {
        let ys = 2 * oy..(2 * oy + 2).min(h);
        for ox in 0..ow {
            let xs = 2 * ox..(2 * ox + 2).min(w);
            let count = (ys.len() * xs.len()) as u32;
            for c in 0..ch {
                let mut sum = 0u32;
                for y in ys.clone() {
                    for x in xs.clone() {
                        sum += image.get(x, y, c) as u32;
                    }
                }
                // round(sum / count), halves rounded up (all values are >= 0)
                data.push(((2 * sum + count) / (2 * count)) as u8);
            }
        }
    }
    ImageBuffer::new(ow, oh, ch, data)
}
