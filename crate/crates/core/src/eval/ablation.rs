use std::fmt;
use std::str::FromStr;

use super::mae;
use crate::scene::ObservationStack;
use crate::train::{fit, FitConfig};
use crate::{Error, Result};

/// A model component that can be switched off.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ablation {
    Full,
    Shadow,
    Specular,
    Tv,
}

impl Ablation {
    /// `cfg` with this component disabled.
    pub fn apply(self, cfg: &FitConfig) -> FitConfig {
        let mut cfg = cfg.clone();
        match self {
            Ablation::Full => {}
            Ablation::Shadow => cfg.use_shadow = false,
            Ablation::Specular => cfg.use_specular = false,
            Ablation::Tv => cfg.use_tv = false,
        }
        cfg
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ablation::Full => "full",
            Ablation::Shadow => "shadow",
            Ablation::Specular => "specular",
            Ablation::Tv => "tv",
        })
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" | "none" => Ok(Ablation::Full),
            "shadow" => Ok(Ablation::Shadow),
            "specular" => Ok(Ablation::Specular),
            "tv" => Ok(Ablation::Tv),
            _ => Err(Error::Config(format!("unknown ablation `{s}` (expected shadow, tv or specular)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationResult {
    pub ablation: Ablation,
    pub mae_deg: Option<f64>,
    pub psnr_db: f64,
}

/// Fits `stack` once per entry of `which` and scores the normals against
/// `gt` (internal frame) when given.
pub fn run_ablations(stack: &ObservationStack, cfg: &FitConfig, gt: Option<&[[f64; 3]]>, which: &[Ablation]) -> Result<Vec<AblationResult>> {
    which
        .iter()
        .map(|&ablation| {
            let out = fit(stack, &ablation.apply(cfg))?;
            let mae_deg = gt.map(|g| mae(&out.estimate.normals, g, &stack.mask)).transpose()?;
            log::info!("ablation {ablation}: mae {mae_deg:?}, psnr {:.2}", out.psnr.mean);
            Ok(AblationResult { ablation, mae_deg, psnr_db: out.psnr.mean })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags() {
        let base = FitConfig::default();
        assert!(!Ablation::Specular.apply(&base).use_specular);
        assert!(!Ablation::Shadow.apply(&base).use_shadow);
        assert!(!Ablation::Tv.apply(&base).use_tv);
        assert_eq!(Ablation::Full.apply(&base), base);
        assert_eq!("specular".parse::<Ablation>().unwrap(), Ablation::Specular);
        assert!("light".parse::<Ablation>().is_err());
    }
}
