//! Shared domain types: rasters, patches, feature vectors and sequences.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// 8-bit raster, row-major, channels interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Validation(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Validation(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::Validation(format!(
                "data length {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Builds an image by evaluating `f(x, y, channel)` for every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> u8,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Copies the `w`x`h` window at `(x0, y0)`. Caller guarantees bounds.
    pub(crate) fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> ImageBuffer {
        debug_assert!(x0 + w <= self.width && y0 + h <= self.height);
        let row_len = w * self.channels;
        let mut data = Vec::with_capacity(h * row_len);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * self.channels;
            data.extend_from_slice(&self.data[start..start + row_len]);
        }
        ImageBuffer {
            width: w,
            height: h,
            channels: self.channels,
            data,
        }
    }

    /// Decodes a PNG or BMP file. Gray inputs stay single-channel; anything
    /// else is converted to RGB.
    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path)?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        match img {
            image::DynamicImage::ImageLuma8(g) => Self::new(w, h, 1, g.into_raw()),
            other => Self::new(w, h, 3, other.into_rgb8().into_raw()),
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let color = if self.channels == 1 {
            image::ExtendedColorType::L8
        } else {
            image::ExtendedColorType::Rgb8
        };
        image::save_buffer_with_format(
            path,
            &self.data,
            self.width as u32,
            self.height as u32,
            color,
            image::ImageFormat::Png,
        )?;
        Ok(())
    }
}

/// Which resolution a patch was taken from. LOW precedes HIGH in every sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ScaleGroup {
    Low,
    High,
}

impl ScaleGroup {
    pub fn tag(self) -> u8 {
        match self {
            ScaleGroup::Low => 0,
            ScaleGroup::High => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(ScaleGroup::Low),
            1 => Some(ScaleGroup::High),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Patch {
    pub pixels: ImageBuffer,
    pub origin_x: usize,
    pub origin_y: usize,
    pub scale_group: ScaleGroup,
    /// Row-major position in the patch grid.
    pub source_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    /// Spatial activity of the patch the vector was computed from.
    pub si: f64,
    pub scale_group: ScaleGroup,
    pub source_index: usize,
}

/// Ordered per-patch features of one image.
///
/// Invariants: every vector has length `dim`; LOW vectors precede HIGH
/// vectors; SI is non-decreasing within a group.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub image_id: String,
    pub dim: usize,
    pub vectors: Vec<FeatureVector>,
}

impl FeatureSequence {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn steps(&self) -> Vec<&[f64]> {
        self.vectors.iter().map(|v| v.values.as_slice()).collect()
    }

    pub fn group_len(&self, group: ScaleGroup) -> usize {
        self.vectors
            .iter()
            .filter(|v| v.scale_group == group)
            .count()
    }

    /// Copy keeping only one scale group; used to derive single-scale
    /// sequences from two-scale ones.
    pub fn only_group(&self, group: ScaleGroup) -> FeatureSequence {
        FeatureSequence {
            image_id: self.image_id.clone(),
            dim: self.dim,
            vectors: self
                .vectors
                .iter()
                .filter(|v| v.scale_group == group)
                .cloned()
                .collect(),
        }
    }

    /// Checks the structural invariants listed on the type.
    pub fn validate(&self) -> Result<()> {
        let mut prev: Option<&FeatureVector> = None;
        for v in &self.vectors {
            if v.values.len() != self.dim {
                return Err(Error::DimMismatch {
                    expected: self.dim,
                    found: v.values.len(),
                    image_id: self.image_id.clone(),
                });
            }
            if !(v.si >= 0.0 && v.si.is_finite()) || v.values.iter().any(|x| !x.is_finite()) {
                return Err(Error::Validation(format!(
                    "{}: non-finite feature or negative SI",
                    self.image_id
                )));
            }
            if let Some(p) = prev {
                if p.scale_group > v.scale_group {
                    return Err(Error::Validation(format!(
                        "{}: HIGH vector precedes LOW vector",
                        self.image_id
                    )));
                }
            }
            prev = Some(v);
        }
        Ok(())
    }
}

/// Maps a 0–100 opinion score to the unit interval used for training.
pub fn rescale_mos(mos_raw: f64) -> Result<f64> {
    if !(0.0..=100.0).contains(&mos_raw) {
        return Err(Error::Validation(format!(
            "MOS {mos_raw} outside [0, 100]"
        )));
    }
    Ok(mos_raw / 100.0)
}

pub fn unscale_mos(mos_unit: f64) -> f64 {
    mos_unit * 100.0
}

/// The crate's deterministic generator: ChaCha with 8 rounds, seeded from
/// a `u64` through `SeedableRng::seed_from_u64`. Output is identical on all
/// platforms for equal seeds.
pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Mixes a base seed with a path of stream labels (splitmix64 finalizer),
/// giving independent per-item streams whose values don't depend on
/// scheduling order.
pub fn derive_seed(base: u64, labels: &[u64]) -> u64 {
    let mut s = base;
    for &l in labels {
        s = splitmix(s ^ splitmix(l.wrapping_add(0x9E37_79B9_7F4A_7C15)));
    }
    s
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
