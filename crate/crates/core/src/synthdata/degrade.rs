use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Result};
use crate::image::{Image, Mask};
use crate::rng::RngState;

use super::ridge::BACKGROUND;

/// Side of the square cells that erode together.
const EROSION_CELL: usize = 4;
/// Fraction of the way an eroded ridge pixel moves towards white.
const EROSION_STRENGTH: f64 = 0.75;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OcclusionBlobs {
    pub count: usize,
    pub radius_min: f64,
    pub radius_max: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DegradationParams {
    pub gaussian_noise_std: f64,
    /// Disks painted with the background value, standing in for dust and grease.
    pub occlusion_blobs: OcclusionBlobs,
    pub blur_sigma: f64,
    /// Probability that a 4×4 cell of ridges fades (dry fingertips).
    pub dryness_gap_rate: f64,
    /// Strength of ridge-like clutter painted outside the mask.
    pub background_texture_gain: f64,
    pub seed: u64,
}

impl DegradationParams {
    pub fn validate(&self) -> Result<()> {
        let o = &self.occlusion_blobs;
        let non_negative = [
            self.gaussian_noise_std,
            self.blur_sigma,
            self.dryness_gap_rate,
            self.background_texture_gain,
            o.radius_min,
            o.radius_max,
        ];
        if non_negative.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(invalid_arg!("degradation magnitudes must be finite and non-negative"));
        }
        if self.dryness_gap_rate > 1.0 {
            return Err(invalid_arg!("dryness_gap_rate {} > 1", self.dryness_gap_rate));
        }
        if o.radius_max < o.radius_min {
            return Err(invalid_arg!("occlusion radius range is inverted"));
        }
        Ok(())
    }
}

/// Applies, in order: ridge erosion, Gaussian blur, additive Gaussian noise,
/// occlusion blobs, background texture; then clamps to `[0, 1]`.
/// Stages with zero magnitude are skipped and draw nothing from `rng`.
pub fn degrade(clean: &Image, mask: &Mask, params: &DegradationParams, rng: &mut RngState) -> Result<Image> {
    params.validate()?;
    if clean.dims() != mask.dims() {
        return Err(invalid_arg!("image {:?} and mask {:?} differ in size", clean.dims(), mask.dims()));
    }
    let mut img = clean.clone();
    if params.dryness_gap_rate > 0.0 {
        erode(&mut img, mask, params.dryness_gap_rate, rng);
    }
    if params.blur_sigma > 0.0 {
        img = gaussian_blur(&img, params.blur_sigma);
    }
    if params.gaussian_noise_std > 0.0 {
        for v in img.data_mut() {
            *v += params.gaussian_noise_std * rng.normal();
        }
    }
    if params.occlusion_blobs.count > 0 {
        occlude(&mut img, &params.occlusion_blobs, rng);
    }
    if params.background_texture_gain > 0.0 {
        add_background_texture(&mut img, mask, params.background_texture_gain, rng);
    }
    for v in img.data_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(img)
}

fn erode(img: &mut Image, mask: &Mask, rate: f64, rng: &mut RngState) {
    let (h, w) = img.dims();
    let (ch, cw) = (h.div_ceil(EROSION_CELL), w.div_ceil(EROSION_CELL));
    let eroded: Vec<bool> = (0..ch * cw).map(|_| rng.uniform() < rate).collect();
    for y in 0..h {
        for x in 0..w {
            if mask.get(y, x) && eroded[(y / EROSION_CELL) * cw + x / EROSION_CELL] {
                let v = img.get(y, x);
                img.set(y, x, v + (1.0 - v) * EROSION_STRENGTH);
            }
        }
    }
}

/// Separable Gaussian blur, radius `ceil(3σ)`, edge pixels replicated.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    let radius = (3.0 * sigma).ceil() as isize;
    let weights: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = weights.iter().sum();
    let weights: Vec<f64> = weights.iter().map(|w| w / norm).collect();
    let (h, w) = img.dims();
    let pass = |src: &Image, horizontal: bool| {
        Image::from_fn(h, w, |y, x| {
            weights
                .iter()
                .enumerate()
                .map(|(i, wt)| {
                    let d = i as isize - radius;
                    let (yy, xx) = if horizontal {
                        (y, (x as isize + d).clamp(0, w as isize - 1) as usize)
                    } else {
                        ((y as isize + d).clamp(0, h as isize - 1) as usize, x)
                    };
                    wt * src.get(yy, xx)
                })
                .sum()
        })
    };
    let tmp = pass(img, true);
    pass(&tmp, false)
}

fn occlude(img: &mut Image, blobs: &OcclusionBlobs, rng: &mut RngState) {
    let (h, w) = img.dims();
    for _ in 0..blobs.count {
        let r = rng.uniform_range(blobs.radius_min, blobs.radius_max);
        let cy = rng.uniform_range(0.0, h as f64);
        let cx = rng.uniform_range(0.0, w as f64);
        paint_disk(img, (cy, cx), r, BACKGROUND);
    }
}

/// Sets every pixel whose coordinates lie within `radius` of `center` to `value`.
pub fn paint_disk(img: &mut Image, center: (f64, f64), radius: f64, value: f64) {
    let (h, w) = img.dims();
    for y in 0..h {
        for x in 0..w {
            let (dy, dx) = (y as f64 - center.0, x as f64 - center.1);
            if dy * dy + dx * dx <= radius * radius {
                img.set(y, x, value);
            }
        }
    }
}

/// Darkens the background with a grating under a smooth random envelope,
/// producing ridge-like false traces.
fn add_background_texture(img: &mut Image, mask: &Mask, gain: f64, rng: &mut RngState) {
    let (h, w) = img.dims();
    let scale = h.max(w) as f64;
    let bumps: Vec<(f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.uniform_range(0.0, h as f64),
                rng.uniform_range(0.0, w as f64),
                rng.uniform_range(0.2, 0.4) * scale,
            )
        })
        .collect();
    let freq = rng.uniform_range(0.06, 0.16);
    let angle = rng.uniform_range(0.0, PI);
    let phase = rng.uniform_range(0.0, 2.0 * PI);
    let (s, c) = angle.sin_cos();
    for y in 0..h {
        for x in 0..w {
            if mask.get(y, x) {
                continue;
            }
            let (yf, xf) = (y as f64, x as f64);
            let envelope: f64 = bumps
                .iter()
                .map(|&(by, bx, width)| (-((yf - by).powi(2) + (xf - bx).powi(2)) / (2.0 * width * width)).exp())
                .sum::<f64>()
                .min(1.0);
            let grating = 0.5 * (1.0 + (2.0 * PI * freq * (xf * c + yf * s) + phase).cos());
            let v = img.get(y, x);
            img.set(y, x, v - gain * envelope * grating);
        }
    }
}
