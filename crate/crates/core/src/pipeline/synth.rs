//! Synthetic quality dataset with known ground truth: seeded colour
//! textures degraded by box blur and Gaussian noise, scored by a fixed
//! monotone formula of the two distortion magnitudes.

use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{DatasetManifest, ManifestEntry};
use crate::par::Exec;
use crate::types::{derive_seed, rng_from_seed, ImageBuffer, Rng};

pub const MAX_NOISE_SIGMA: f64 = 30.0;
pub const MAX_BLUR_RADIUS: usize = 4;
/// Score of the most distorted image.
pub const MOS_FLOOR: f64 = 20.0;
const NOISE_WEIGHT: f64 = 0.6;
const BLUR_WEIGHT: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthVariant {
    /// The whole image is degraded.
    Global,
    /// Only one rectangle of random size and position is degraded; the
    /// score depends on the distortion strength, not on the rectangle's area.
    WorstRegion,
}

impl std::str::FromStr for SynthVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(SynthVariant::Global),
            "worst-region" => Ok(SynthVariant::WorstRegion),
            other => Err(Error::Validation(format!("unknown synth variant '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub count: usize,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub variant: SynthVariant,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            count: 200,
            seed: 0,
            width: 512,
            height: 512,
            variant: SynthVariant::Global,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distortion {
    pub noise_sigma: f64,
    pub blur_radius: usize,
}

/// `100 − (100 − floor) · (0.6 · σ/30 + 0.4 · r/4)`: 100 when undistorted,
/// the floor at maximal distortion, strictly decreasing in each argument.
pub fn synth_mos(d: Distortion) -> f64 {
    let noise = (d.noise_sigma / MAX_NOISE_SIGMA).clamp(0.0, 1.0);
    let blur = (d.blur_radius as f64 / MAX_BLUR_RADIUS as f64).clamp(0.0, 1.0);
    100.0 - (100.0 - MOS_FLOOR) * (NOISE_WEIGHT * noise + BLUR_WEIGHT * blur)
}

/// Amplitude of each detail layer.
const DETAIL_AMP: f64 = 20.0;
/// Feature sizes of the detail layers; a box blur of radius `r` mostly
/// removes layers finer than about `2r + 1` pixels. There is no
/// pixel-scale layer: it would have the same spectrum as the added noise,
/// so blur removing it and noise adding it would look alike.
const DETAIL_SCALES: [usize; 3] = [3, 6, 12];

/// Uniform random values on a grid of spacing `k`, bilinearly interpolated.
fn detail_layer(width: usize, height: usize, k: usize, rng: &mut Rng) -> Vec<f64> {
    let gw = width / k + 2;
    let gh = height / k + 2;
    let grid: Vec<f64> = (0..gw * gh).map(|_| rng.random_range(-DETAIL_AMP..DETAIL_AMP)).collect();
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        let (gy, fy) = (y / k, (y % k) as f64 / k as f64);
        for x in 0..width {
            let (gx, fx) = (x / k, (x % k) as f64 / k as f64);
            let at = |i: usize, j: usize| grid[j * gw + i];
            let top = at(gx, gy) * (1.0 - fx) + at(gx + 1, gy) * fx;
            let bottom = at(gx, gy + 1) * (1.0 - fx) + at(gx + 1, gy + 1) * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// A few random low-frequency colour waves around a random base level, plus
/// fixed-amplitude grey detail at several scales so that each blur radius
/// has a distinct, measurable effect.
fn base_texture(width: usize, height: usize, rng: &mut Rng) -> Vec<f64> {
    struct Wave {
        kx: f64,
        ky: f64,
        phase: f64,
        amp: [f64; 3],
    }
    let base: [f64; 3] = std::array::from_fn(|_| rng.random_range(110.0..150.0));
    let waves: Vec<Wave> = (0..3)
        .map(|_| {
            let period = rng.random_range(160.0..480.0);
            let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
            let k = std::f64::consts::TAU / period;
            Wave {
                kx: k * angle.cos(),
                ky: k * angle.sin(),
                phase: rng.random_range(0.0..std::f64::consts::TAU),
                amp: std::array::from_fn(|_| rng.random_range(2.0..8.0)),
            }
        })
        .collect();
    let mut detail = vec![0.0; width * height];
    for k in DETAIL_SCALES {
        for (d, v) in detail.iter_mut().zip(detail_layer(width, height, k, rng)) {
            *d += v;
        }
    }
    let mut out = vec![0.0; width * height * 3];
    for y in 0..height {
        for x in 0..width {
            let i = (y * width + x) * 3;
            for (c, b) in base.iter().enumerate() {
                out[i + c] = b + detail[y * width + x];
            }
            for w in &waves {
                let s = (w.kx * x as f64 + w.ky * y as f64 + w.phase).sin();
                for c in 0..3 {
                    out[i + c] += w.amp[c] * s;
                }
            }
        }
    }
    out
}

/// Separable box blur of radius `r` with edge clamping.
pub fn box_blur(data: &[f64], width: usize, height: usize, channels: usize, r: usize) -> Vec<f64> {
    if r == 0 {
        return data.to_vec();
    }
    let n = (2 * r + 1) as f64;
    let pass = |src: &[f64], horizontal: bool| {
        let mut dst = vec![0.0; src.len()];
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    let mut s = 0.0;
                    for k in -(r as isize)..=(r as isize) {
                        let (sx, sy) = if horizontal {
                            ((x as isize + k).clamp(0, width as isize - 1) as usize, y)
                        } else {
                            (x, (y as isize + k).clamp(0, height as isize - 1) as usize)
                        };
                        s += src[(sy * width + sx) * channels + c];
                    }
                    dst[(y * width + x) * channels + c] = s / n;
                }
            }
        }
        dst
    };
    pass(&pass(data, true), false)
}

/// Rectangle `(x0, y0, w, h)` covered by a distortion.
type Region = (usize, usize, usize, usize);

fn degrade(clean: &[f64], width: usize, height: usize, d: Distortion, region: Region, rng: &mut Rng) -> Result<ImageBuffer> {
    let blurred = box_blur(clean, width, height, 3, d.blur_radius);
    let noise = Normal::new(0.0, d.noise_sigma.max(0.0)).map_err(|e| Error::Validation(e.to_string()))?;
    let (x0, y0, rw, rh) = region;
    let mut out = Vec::with_capacity(clean.len());
    for y in 0..height {
        for x in 0..width {
            let inside = x >= x0 && x < x0 + rw && y >= y0 && y < y0 + rh;
            for c in 0..3 {
                let i = (y * width + x) * 3 + c;
                let v = if inside {
                    blurred[i] + if d.noise_sigma > 0.0 { noise.sample(rng) } else { 0.0 }
                } else {
                    clean[i]
                };
                out.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    ImageBuffer::new(width, height, 3, out)
}

/// One synthetic image and its score, fully determined by `seed`.
pub fn synth_image(seed: u64, width: usize, height: usize, variant: SynthVariant) -> Result<(ImageBuffer, f64)> {
    let mut rng = rng_from_seed(seed);
    let d = Distortion {
        noise_sigma: rng.random_range(0.0..=MAX_NOISE_SIGMA),
        blur_radius: rng.random_range(0..=MAX_BLUR_RADIUS),
    };
    let region = match variant {
        SynthVariant::Global => (0, 0, width, height),
        SynthVariant::WorstRegion => {
            let rw = rng.random_range(width / 5..=width / 2).max(1);
            let rh = rng.random_range(height / 5..=height / 2).max(1);
            (rng.random_range(0..=width - rw), rng.random_range(0..=height - rh), rw, rh)
        }
    };
    let clean = base_texture(width, height, &mut rng);
    let image = degrade(&clean, width, height, d, region, &mut rng)?;
    Ok((image, synth_mos(d)))
}

/// Writes `images/img_NNNN.png` and `manifest.csv` under `out_dir`.
pub fn synth_dataset(cfg: &SynthConfig, out_dir: &Path, exec: Exec) -> Result<DatasetManifest> {
    if cfg.count == 0 || cfg.width == 0 || cfg.height == 0 {
        return Err(Error::Validation("synthetic dataset needs a positive count and size".into()));
    }
    let image_dir = out_dir.join("images");
    std::fs::create_dir_all(&image_dir).map_err(|e| Error::io(&image_dir, e))?;
    let ids: Vec<usize> = (0..cfg.count).collect();
    let entries = exec
        .map(&ids, |_, &i| -> Result<ManifestEntry> {
            let image_id = format!("img_{i:04}");
            let rel = Path::new("images").join(format!("{image_id}.png"));
            let (image, mos) = synth_image(derive_seed(cfg.seed, &[i as u64]), cfg.width, cfg.height, cfg.variant)?;
            image.save_png(&out_dir.join(&rel))?;
            Ok(ManifestEntry { image_id, path: rel, mos, split: None })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest::new(entries, out_dir)?;
    manifest.write(&out_dir.join("manifest.csv"))?;
    Ok(manifest)
}
