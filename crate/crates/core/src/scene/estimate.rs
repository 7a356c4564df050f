use std::fs;
use std::path::Path;

use super::io::{write_f32_grid, write_png16, write_png8};
use crate::eval::Metrics;
use crate::render::flip_frame;
use crate::{Error, Result};

/// Fitted maps over the full image; entries outside `mask` are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneEstimate {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub k: usize,
    pub mask: Vec<bool>,
    /// Unit normals, internal frame.
    pub normals: Vec<[f64; 3]>,
    /// `[H][W][C]`.
    pub albedo: Vec<f64>,
    /// `[H][W][k]`, nonnegative.
    pub coeffs: Vec<f64>,
    /// Pixel units, up to an offset.
    pub depth: Vec<f64>,
    /// `[n][H][W]` cast-shadow factors used for the re-rendering.
    pub shadows: Vec<f64>,
    /// `[n][H][W]` specular part of the shading, `s (c·D) max(l·n, 0)`.
    pub specular: Vec<f64>,
    /// `[n][H][W][C]`.
    pub rerender: Vec<f64>,
    pub names: Vec<String>,
}

impl SceneEstimate {
    pub fn lights(&self) -> usize {
        self.names.len()
    }

    pub fn rerender_image(&self, i: usize) -> &[f64] {
        let frame = self.width * self.height * self.channels;
        &self.rerender[i * frame..(i + 1) * frame]
    }

    /// Normals in the dataset frame, zero outside the mask.
    pub fn dataset_normals(&self) -> Vec<f64> {
        self.normals
            .iter()
            .zip(&self.mask)
            .flat_map(|(&n, &m)| if m { flip_frame(n) } else { [0.0; 3] })
            .collect()
    }
}

/// Colour encoding `(n + 1) / 2` of dataset-frame normals; black outside the mask.
pub(crate) fn encode_normals(normals: &[f64], mask: &[bool]) -> Vec<f64> {
    normals
        .chunks(3)
        .zip(mask)
        .flat_map(|(n, &m)| n.iter().map(move |v| if m { (v + 1.0) / 2.0 } else { 0.0 }).collect::<Vec<_>>())
        .collect()
}

/// Writes every map of `est` plus `metrics.json` into `dir`, creating it.
pub fn export_maps(est: &SceneEstimate, metrics: &Metrics, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let (w, h, c) = (est.width, est.height, est.channels);
    let hw = w * h;
    let normals = est.dataset_normals();
    write_png8(&dir.join("normal.png"), w, h, 3, &encode_normals(&normals, &est.mask))?;
    write_f32_grid(dir, "normal", w, h, 3, &normals)?;
    write_f32_grid(dir, "depth", w, h, 1, &est.depth)?;
    write_f32_grid(dir, "albedo", w, h, c, &est.albedo)?;
    write_f32_grid(dir, "coeffs", w, h, est.k, &est.coeffs)?;
    write_png16(&dir.join("albedo.png"), w, h, c, &est.albedo)?;
    let mask: Vec<f64> = est.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    write_png8(&dir.join("mask.png"), w, h, 1, &mask)?;
    for i in 0..est.lights() {
        write_png16(&dir.join(format!("specular_{i:02}.png")), w, h, 1, &est.specular[i * hw..(i + 1) * hw])?;
        write_png8(&dir.join(format!("shadow_{i:02}.png")), w, h, 1, &est.shadows[i * hw..(i + 1) * hw])?;
        write_png16(&dir.join(format!("rerender_{i:02}.png")), w, h, c, est.rerender_image(i))?;
    }
    let names = dir.join("rerender_names.txt");
    fs::write(&names, est.names.join("\n") + "\n").map_err(Error::io(&names))?;
    metrics.write(&dir.join("metrics.json"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::VIEW;
    use crate::scene::{read_f32_grid, read_png};

    fn estimate() -> SceneEstimate {
        SceneEstimate {
            width: 2,
            height: 1,
            channels: 1,
            k: 2,
            mask: vec![true, false],
            normals: vec![VIEW, [0.0; 3]],
            albedo: vec![0.5, 0.0],
            coeffs: vec![0.1, 0.2, 0.0, 0.0],
            depth: vec![1.25, 0.0],
            shadows: vec![1.0, 0.0],
            specular: vec![0.1, 0.0],
            rerender: vec![0.6, 0.0],
            names: vec!["a".into()],
        }
    }

    #[test]
    fn camera_facing_normal_encodes_as_blue() {
        let dir = tempfile::tempdir().unwrap();
        export_maps(&estimate(), &Metrics::default(), dir.path()).unwrap();
        let img = image::open(dir.path().join("normal.png")).unwrap().to_rgb8();
        assert_eq!(img.get_pixel(0, 0).0, [128, 128, 255]);
        assert_eq!(img.get_pixel(1, 0).0, [0, 0, 0]);
    }

    #[test]
    fn export_layout() {
        let dir = tempfile::tempdir().unwrap();
        let est = estimate();
        export_maps(&est, &Metrics::default(), dir.path()).unwrap();
        for f in ["depth.f32", "depth.json", "albedo.png", "specular_00.png", "shadow_00.png", "rerender_00.png", "metrics.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        assert_eq!(read_f32_grid(dir.path(), "depth").unwrap().3, est.depth);
        let (_, _, _, shadow) = read_png(&dir.path().join("shadow_00.png")).unwrap();
        assert_eq!(shadow, vec![1.0, 0.0]);
        let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
        for key in ["mae_deg", "psnr_db", "runtime_s"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn unwritable_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("file");
        fs::write(&file, "").unwrap();
        assert!(export_maps(&estimate(), &Metrics::default(), &file.join("out")).is_err());
    }
}
