use crate::render::Light;
use crate::{Error, Result};

use super::PixelGrid;

/// Intensity-normalized observations under known directional lights.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationStack {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// `[n][H][W][C]`, linear, divided by the light intensity.
    pub images: Vec<f64>,
    /// Internal frame.
    pub lights: Vec<Light>,
    /// `[H][W]`.
    pub mask: Vec<bool>,
    pub names: Vec<String>,
}

impl ObservationStack {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        images: Vec<f64>,
        lights: Vec<Light>,
        mask: Vec<bool>,
        names: Option<Vec<String>>,
    ) -> Result<Self> {
        let n = lights.len();
        let frame = width * height * channels;
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::Dataset("empty image size".into()));
        }
        if images.len() != n * frame {
            return Err(Error::Dataset(format!(
                "{} image values for {n} lights of {width}x{height}x{channels}",
                images.len()
            )));
        }
        if mask.len() != width * height {
            return Err(Error::Dataset(format!("mask has {} pixels, images have {}", mask.len(), width * height)));
        }
        if let Some(v) = images.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Dataset(format!("intensity {v} is negative or not finite")));
        }
        let names = names.unwrap_or_else(|| (0..n).map(|i| format!("{i:03}")).collect());
        if names.len() != n {
            return Err(Error::Dataset(format!("{} names for {n} images", names.len())));
        }
        Ok(ObservationStack { width, height, channels, images, lights, mask, names })
    }

    pub fn len(&self) -> usize {
        self.lights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lights.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f64] {
        let frame = self.width * self.height * self.channels;
        &self.images[i * frame..(i + 1) * frame]
    }

    /// Channels of flat pixel `p` in image `i`.
    pub fn pixel(&self, i: usize, p: usize) -> &[f64] {
        let at = (i * self.width * self.height + p) * self.channels;
        &self.images[at..at + self.channels]
    }

    pub fn grid(&self) -> PixelGrid {
        PixelGrid::from_mask(self.width, self.height, &self.mask)
    }

    /// Per-channel mean followed by per-channel standard deviation of the
    /// masked pixels over all images.
    pub fn color_stats(&self) -> Vec<f64> {
        let c = self.channels;
        let mut sum = vec![0.0; c];
        let mut sq = vec![0.0; c];
        let mut count = 0usize;
        for i in 0..self.len() {
            for p in (0..self.width * self.height).filter(|&p| self.mask[p]) {
                for (k, &v) in self.pixel(i, p).iter().enumerate() {
                    sum[k] += v;
                    sq[k] += v * v;
                }
                count += 1;
            }
        }
        let count = count.max(1) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
        let std = sq.iter().zip(&mean).map(|(s, m)| (s / count - m * m).max(0.0).sqrt());
        mean.iter().copied().chain(std).collect()
    }

    /// Keeps the images whose indices are not in `drop`.
    pub fn without(&self, drop: &[usize]) -> Result<Self> {
        let keep: Vec<usize> = (0..self.len()).filter(|i| !drop.contains(i)).collect();
        if keep.is_empty() {
            return Err(Error::Dataset("every image was dropped".into()));
        }
        let images = keep.iter().flat_map(|&i| self.image(i).iter().copied()).collect();
        Self::new(
            self.width,
            self.height,
            self.channels,
            images,
            keep.iter().map(|&i| self.lights[i].clone()).collect(),
            self.mask.clone(),
            Some(keep.iter().map(|&i| self.names[i].clone()).collect()),
        )
    }

    /// Channel-averaged single-channel copy.
    pub fn to_grayscale(&self) -> Self {
        let images = self.images.chunks(self.channels).map(|px| px.iter().sum::<f64>() / px.len() as f64).collect();
        ObservationStack { channels: 1, images, ..self.clone() }
    }
}
