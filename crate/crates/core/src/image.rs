//! Single-channel images and binary masks.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Result};
use crate::ndgrad::Tensor;

/// Row-major `height × width` grid of f64 intensities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(invalid_arg!(
                "image {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            ));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Stacks equally sized images into an `[N, 1, H, W]` tensor.
    pub fn stack(images: &[&Image]) -> Result<Tensor> {
        let first = images.first().ok_or_else(|| invalid_arg!("cannot stack zero images"))?;
        let (h, w) = first.dims();
        let mut data = Vec::with_capacity(images.len() * h * w);
        for img in images {
            if img.dims() != (h, w) {
                return Err(invalid_arg!("cannot stack {:?} with {:?}", img.dims(), (h, w)));
            }
            data.extend_from_slice(&img.data);
        }
        Tensor::new(&[images.len(), 1, h, w], data)
    }

    /// Splits channel `channel` of an `[N, C, H, W]` tensor into N images.
    pub fn unstack(t: &Tensor, channel: usize) -> Result<Vec<Image>> {
        let [n, c, h, w] = t.dims4()?;
        if channel >= c {
            return Err(invalid_arg!("channel {channel} out of range for {c} channels"));
        }
        Ok((0..n)
            .map(|b| {
                let start = (b * c + channel) * h * w;
                Image::new(h, w, t.data()[start..start + h * w].to_vec()).expect("slice sized h*w")
            })
            .collect())
    }
}

/// Row-major binary mask; `true` marks foreground.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(invalid_arg!(
                "mask {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            ));
        }
        Ok(Self { height, width, data })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn area_fraction(&self) -> f64 {
        self.count() as f64 / self.data.len() as f64
    }

    /// Pixel-wise complement.
    pub fn complement(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|b| !b).collect(),
        }
    }

    /// 0.0 / 1.0 image.
    pub fn to_image(&self) -> Image {
        Image {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    /// Stacks masks into an `[N, 1, H, W]` 0/1 tensor.
    pub fn stack(masks: &[&Mask]) -> Result<Tensor> {
        let images: Vec<Image> = masks.iter().map(|m| m.to_image()).collect();
        Image::stack(&images.iter().collect::<Vec<_>>())
    }
}
