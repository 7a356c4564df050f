use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::nn::ArchConfig;
use crate::{Error, Result};

/// Optimization settings. Serialized as a flat TOML table; every key is
/// optional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub iterations: usize,
    /// Images per iteration; every masked pixel of each is used.
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Weight of the smoothness term while it is active.
    pub beta: f64,
    /// Fraction of the iterations spent in the guidance phase.
    pub guidance_end: f64,
    pub seed: u64,
    pub use_shadow: bool,
    pub use_specular: bool,
    pub use_tv: bool,
    /// Indices of images to leave out, e.g. saturated ones.
    pub drop_images: Vec<usize>,
    /// Fit the channel average instead of colour.
    pub grayscale: bool,
    /// Undo a 2.2 display gamma when loading.
    pub inverse_gamma: bool,
    pub shadow_samples: usize,
    #[serde(flatten)]
    pub arch: ArchConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            iterations: 6000,
            batch_size: 8,
            learning_rate: 5e-4,
            beta: 0.01,
            guidance_end: 0.5,
            seed: 0,
            use_shadow: true,
            use_specular: true,
            use_tv: true,
            drop_images: Vec::new(),
            grayscale: false,
            inverse_gamma: false,
            shadow_samples: 32,
            arch: ArchConfig::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.iterations == 0 {
            return bad("iterations must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta must be non-negative");
        }
        if !(self.guidance_end > 0.0 && self.guidance_end <= 1.0) {
            return bad("guidance_end must lie in (0, 1]");
        }
        if self.shadow_samples < 2 {
            return bad("shadow_samples must be at least 2");
        }
        let a = &self.arch;
        if a.surface_layers == 0 || a.depth_layers == 0 || a.basis_layers == 0 || a.k == 0 {
            return bad("network layer counts and k must be positive");
        }
        if a.normal_layer == 0 || a.normal_layer > a.surface_layers {
            return bad("normal_layer must lie in 1..=surface_layers");
        }
        Ok(())
    }

    /// First iteration of the rendered-shadow phase.
    pub fn phase_switch(&self) -> usize {
        (self.guidance_end * self.iterations as f64).ceil() as usize
    }

    pub fn in_guidance_phase(&self, iteration: usize) -> bool {
        (iteration as f64) < self.guidance_end * self.iterations as f64
    }

    /// Smoothness weight in effect at `iteration`.
    pub fn beta_at(&self, iteration: usize) -> f64 {
        if self.use_tv && self.in_guidance_phase(iteration) {
            self.beta
        } else {
            0.0
        }
    }

    /// Parses TOML, rejecting unknown keys.
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        let known = toml::Table::try_from(FitConfig::default()).expect("plain data");
        if let Some(key) = table.keys().find(|k| !known.contains_key(*k)) {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        let cfg: FitConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(Error::io(path))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plain data")
    }
}
