use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Result};
use crate::image::{Image, Mask};

/// Intensity of everything outside the fingerprint.
pub const BACKGROUND: f64 = 1.0;

/// One term `amplitude · sin(2π (fy·y/H + fx·x/W) + phase)` of the orientation field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub amplitude: f64,
    /// Cycles per image height.
    pub freq_y: f64,
    /// Cycles per image width.
    pub freq_x: f64,
    pub phase: f64,
}

/// Smooth ridge-orientation map: a base angle perturbed by low-frequency harmonics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientationField {
    /// Angle of the ridge normal, radians.
    pub base_angle: f64,
    pub harmonics: Vec<Harmonic>,
}

impl OrientationField {
    pub fn constant(angle: f64) -> Self {
        Self {
            base_angle: angle,
            harmonics: Vec::new(),
        }
    }

    pub fn angle_at(&self, y: f64, x: f64, height: usize, width: usize) -> f64 {
        let (h, w) = (height as f64, width as f64);
        self.base_angle
            + self
                .harmonics
                .iter()
                .map(|k| k.amplitude * (2.0 * PI * (k.freq_y * y / h + k.freq_x * x / w) + k.phase).sin())
                .sum::<f64>()
    }
}

/// Elliptical fingerprint footprint in pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipseMask {
    /// `(y, x)`.
    pub center: (f64, f64),
    /// `(vertical, horizontal)` semi-axes before rotation.
    pub semi_axes: (f64, f64),
    /// Counter-clockwise rotation, radians.
    pub rotation: f64,
}

impl EllipseMask {
    pub fn contains(&self, y: f64, x: f64) -> bool {
        let (dy, dx) = (y - self.center.0, x - self.center.1);
        let (s, c) = self.rotation.sin_cos();
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.semi_axes.1).powi(2) + (v / self.semi_axes.0).powi(2) <= 1.0
    }

    pub fn area(&self) -> f64 {
        PI * self.semi_axes.0 * self.semi_axes.1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeParams {
    /// `(height, width)`.
    pub image_size: (usize, usize),
    /// Cycles per pixel along the ridge normal.
    pub ridge_frequency: f64,
    pub orientation_field: OrientationField,
    pub mask_shape: EllipseMask,
    pub seed: u64,
}

impl RidgeParams {
    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.image_size;
        if h == 0 || w == 0 {
            return Err(invalid_arg!("image size must be positive"));
        }
        if !(self.ridge_frequency > 0.0 && self.ridge_frequency < 0.5) {
            return Err(invalid_arg!(
                "ridge frequency {} must lie in (0, 0.5)",
                self.ridge_frequency
            ));
        }
        let (ay, ax) = self.mask_shape.semi_axes;
        if !(ay > 0.0 && ax > 0.0) {
            return Err(invalid_arg!("degenerate ellipse with semi-axes ({ay}, {ax})"));
        }
        let fraction = self.mask_shape.area() / (h * w) as f64;
        if !(0.2..=0.8).contains(&fraction) {
            return Err(invalid_arg!(
                "ellipse covers {:.1}% of the image, expected 20%..80%",
                100.0 * fraction
            ));
        }
        Ok(())
    }
}

/// Oriented-sinusoid ridge image and its foreground mask.
///
/// Inside the ellipse the intensity is `½(1 + cos(2π f d))` where `d` is the
/// pixel offset from the ellipse centre projected on the local ridge normal;
/// outside it is [`BACKGROUND`]. Pixel `(y, x)` is sampled at its corner
/// coordinates `(y, x)`.
pub fn generate_clean(params: &RidgeParams) -> Result<(Image, Mask)> {
    params.validate()?;
    let (h, w) = params.image_size;
    let (cy, cx) = params.mask_shape.center;
    let mask = Mask::from_fn(h, w, |y, x| params.mask_shape.contains(y as f64, x as f64));
    let clean = Image::from_fn(h, w, |y, x| {
        if !mask.get(y, x) {
            return BACKGROUND;
        }
        let (yf, xf) = (y as f64, x as f64);
        let theta = params.orientation_field.angle_at(yf, xf, h, w);
        let d = (xf - cx) * theta.cos() + (yf - cy) * theta.sin();
        0.5 * (1.0 + (2.0 * PI * params.ridge_frequency * d).cos())
    });
    Ok((clean, mask))
}
