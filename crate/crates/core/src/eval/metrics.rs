use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::render::dot3;
use crate::{Error, Result};

/// Angle between unit vectors in degrees.
///
/// Uses `atan2(|a×b|, a·b)`, which is exact at 0, 90 and 180 degrees where
/// the arccosine of a rounded dot product is not.
pub fn angle_deg(a: [f64; 3], b: [f64; 3]) -> f64 {
    let c = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
    let s = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
    s.atan2(dot3(a, b)).to_degrees()
}

/// Mean angle in degrees between corresponding unit normals over the mask.
pub fn mae(pred: &[[f64; 3]], gt: &[[f64; 3]], mask: &[bool]) -> Result<f64> {
    if pred.len() != gt.len() || pred.len() != mask.len() {
        return Err(Error::Invalid(format!("normal maps of {} and {} pixels with a {}-pixel mask", pred.len(), gt.len(), mask.len())));
    }
    let (sum, count) = pred
        .iter()
        .zip(gt)
        .zip(mask)
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, c), ((a, b), _)| (s + angle_deg(*a, *b), c + 1));
    if count == 0 {
        return Err(Error::Invalid("mean angular error over an empty mask".into()));
    }
    Ok(sum / count as f64)
}

/// `10 log10(peak² / MSE)` over masked pixels of `[H][W][channels]` images,
/// with the peak taken as the largest masked value of `gt`. Identical images
/// give `+inf`.
pub fn psnr(pred: &[f64], gt: &[f64], mask: &[bool], channels: usize) -> Result<f64> {
    if pred.len() != gt.len() || gt.len() != mask.len() * channels {
        return Err(Error::Invalid("image sizes differ".into()));
    }
    let mut se = 0.0;
    let mut peak: f64 = 0.0;
    let mut count = 0usize;
    for p in (0..mask.len()).filter(|&p| mask[p]) {
        for c in 0..channels {
            let k = p * channels + c;
            se += (pred[k] - gt[k]).powi(2);
            peak = peak.max(gt[k]);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Invalid("PSNR over an empty mask".into()));
    }
    let mse = se / count as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { 10.0 * (peak * peak / mse).log10() })
}

/// PSNR of each image and their mean.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PsnrReport {
    pub per_image: Vec<f64>,
    pub mean: f64,
}

impl PsnrReport {
    pub fn new(per_image: Vec<f64>) -> Self {
        let mean = if per_image.is_empty() { 0.0 } else { per_image.iter().sum::<f64>() / per_image.len() as f64 };
        PsnrReport { per_image, mean }
    }
}

/// Contents of `metrics.json`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Metrics {
    /// Absent without ground-truth normals.
    pub mae_deg: Option<f64>,
    pub psnr_db: PsnrReport,
    pub runtime_s: f64,
    pub config_echo: Value,
}

/// Infinite PSNR is written as the string `"inf"`.
fn db(v: f64) -> Value {
    if v.is_finite() {
        Value::from(v)
    } else if v > 0.0 {
        Value::from("inf")
    } else {
        Value::Null
    }
}

fn parse_db(v: &Value) -> Option<f64> {
    match v {
        Value::String(s) if s == "inf" => Some(f64::INFINITY),
        _ => v.as_f64(),
    }
}

#[derive(Serialize, Deserialize)]
struct MetricsFile {
    mae_deg: Option<f64>,
    psnr_db: PsnrFile,
    runtime_s: f64,
    config_echo: Value,
}

#[derive(Serialize, Deserialize)]
struct PsnrFile {
    mean: Value,
    per_image: Vec<Value>,
}

impl Metrics {
    pub fn to_json(&self) -> Value {
        let file = MetricsFile {
            mae_deg: self.mae_deg,
            psnr_db: PsnrFile { mean: db(self.psnr_db.mean), per_image: self.psnr_db.per_image.iter().map(|&v| db(v)).collect() },
            runtime_s: self.runtime_s,
            config_echo: self.config_echo.clone(),
        };
        serde_json::to_value(file).expect("plain data")
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let file: MetricsFile = serde_json::from_value(v.clone())?;
        let bad = || Error::Invalid("metrics: malformed PSNR value".into());
        Ok(Metrics {
            mae_deg: file.mae_deg,
            psnr_db: PsnrReport {
                mean: parse_db(&file.psnr_db.mean).ok_or_else(bad)?,
                per_image: file.psnr_db.per_image.iter().map(|v| parse_db(v).ok_or_else(bad)).collect::<Result<_>>()?,
            },
            runtime_s: file.runtime_s,
            config_echo: file.config_echo,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(&self.to_json())? + "\n").map_err(Error::io(path))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&serde_json::from_str(&fs::read_to_string(path).map_err(Error::io(path))?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit() -> impl Strategy<Value = [f64; 3]> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter("non-zero", |v| v.0 * v.0 + v.1 * v.1 + v.2 * v.2 > 1e-3)
            .prop_map(|(x, y, z)| {
                let n = (x * x + y * y + z * z).sqrt();
                [x / n, y / n, z / n]
            })
    }

    #[test]
    fn mae_cases() {
        let a = vec![[0.0, 0.0, -1.0]; 4];
        assert_eq!(mae(&a, &a, &[true; 4]).unwrap(), 0.0);
        let b = vec![[1.0, 0.0, 0.0]; 4];
        assert_eq!(mae(&a, &b, &[true; 4]).unwrap(), 90.0);
        assert!(mae(&a, &b, &[false; 4]).is_err());
    }

    #[test]
    fn angle_matches_arccos_away_from_the_poles() {
        let a = [0.0, 0.6, -0.8];
        let b = [0.28, 0.0, -0.96];
        let want = dot3(a, b).acos().to_degrees();
        assert!((angle_deg(a, b) - want).abs() < 1e-10);
    }

    #[test]
    fn mae_ignores_unmasked_pixels() {
        let a = vec![[0.0, 0.0, -1.0], [0.0, 0.0, -1.0]];
        let b = vec![[0.0, 0.0, -1.0], [0.0, 0.0, 1.0]];
        assert_eq!(mae(&a, &b, &[true, false]).unwrap(), 0.0);
    }

    #[test]
    fn psnr_cases() {
        let gt = vec![1.0, 0.5, 0.25, 0.0];
        let off: Vec<f64> = gt.iter().map(|v| v + 0.1).collect();
        assert!((psnr(&off, &gt, &[true; 4], 1).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(psnr(&gt, &gt, &[true; 4], 1).unwrap(), f64::INFINITY);
        assert!(psnr(&gt, &gt, &[false; 4], 1).is_err());
    }

    #[test]
    fn infinite_psnr_round_trips_as_a_string() {
        let m = Metrics { mae_deg: None, psnr_db: PsnrReport::new(vec![f64::INFINITY, 30.0]), runtime_s: 1.5, config_echo: Value::Null };
        let json = m.to_json();
        assert_eq!(json["psnr_db"]["mean"], "inf");
        assert_eq!(json["mae_deg"], Value::Null);
        assert_eq!(Metrics::from_json(&json).unwrap(), m);
    }

    proptest! {
        #[test]
        fn mae_is_symmetric(a in prop::collection::vec(unit(), 1..20), seed in any::<u64>()) {
            let b: Vec<[f64; 3]> = a.iter().enumerate().map(|(i, v)| {
                let t = ((seed >> (i % 60)) & 7) as f64 * 0.2;
                let w = [v[0] + t, v[1] - t, v[2] + 0.3];
                let n = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
                [w[0] / n, w[1] / n, w[2] / n]
            }).collect();
            let mask = vec![true; a.len()];
            prop_assert_eq!(mae(&a, &b, &mask).unwrap(), mae(&b, &a, &mask).unwrap());
        }

        #[test]
        fn flipped_normals_are_180_apart(a in prop::collection::vec(unit(), 1..20)) {
            let neg: Vec<[f64; 3]> = a.iter().map(|v| [-v[0], -v[1], -v[2]]).collect();
            let mask = vec![true; a.len()];
            let e = mae(&a, &neg, &mask).unwrap();
            prop_assert_eq!(e, 180.0);
        }

        #[test]
        fn larger_noise_never_raises_psnr(base in prop::collection::vec(0.1..0.9f64, 4..40), a in 0.001..0.1f64, k in 1.0..5.0f64, seed in any::<u64>()) {
            let signs: Vec<f64> = (0..base.len()).map(|i| if (seed >> (i % 64)) & 1 == 1 { 1.0 } else { -1.0 }).collect();
            let small: Vec<f64> = base.iter().zip(&signs).map(|(b, s)| b + s * a).collect();
            let large: Vec<f64> = base.iter().zip(&signs).map(|(b, s)| b + s * a * k).collect();
            let mask = vec![true; base.len()];
            prop_assert!(psnr(&large, &base, &mask, 1).unwrap() <= psnr(&small, &base, &mask, 1).unwrap());
        }
    }
}
