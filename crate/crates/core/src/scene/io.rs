use std::fs;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};
use serde::{Deserialize, Serialize};

use super::estimate::encode_normals;
use super::{ObservationStack, SyntheticScene};
use crate::render::{flip_frame, norm3, Light};
use crate::{Error, Result};

/// Decoding choices for [`load_dataset_with`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LoadOptions {
    /// Undo a 2.2 display gamma. Off for linear captures.
    pub inverse_gamma: bool,
    /// Average the colour channels.
    pub grayscale: bool,
}

/// Loads a dataset directory with linear decoding and colour kept.
pub fn load_dataset(dir: &Path) -> Result<ObservationStack> {
    load_dataset_with(dir, &LoadOptions::default())
}

/// Reads `light_directions.txt`, `light_intensities.txt`, the images named in
/// `filenames.txt` (or every PNG besides the mask and ground truth, sorted)
/// and an optional `mask.png`.
///
/// Directions are given with y up and z toward the camera.
pub fn load_dataset_with(dir: &Path, opts: &LoadOptions) -> Result<ObservationStack> {
    let names = image_names(dir)?;
    let directions = read_rows(&dir.join("light_directions.txt"), &[3])?;
    let intensities = read_rows(&dir.join("light_intensities.txt"), &[1, 3])?;
    if directions.len() != names.len() {
        return Err(Error::Dataset(format!("{} images but {} light directions", names.len(), directions.len())));
    }
    if intensities.len() != names.len() {
        return Err(Error::Dataset(format!("{} images but {} light intensities", names.len(), intensities.len())));
    }

    let mut lights = Vec::with_capacity(names.len());
    for (row, (d, e)) in directions.iter().zip(&intensities).enumerate() {
        let mut d = [d[0], d[1], d[2]];
        let n = norm3(d);
        if (n - 1.0).abs() > 1e-3 {
            log::warn!("light {row} has length {n}; normalizing");
        }
        if (n - 1.0).abs() > 1e-9 {
            d = [d[0] / n, d[1] / n, d[2] / n];
        }
        lights.push(Light::from_dataset(d, e.clone()).map_err(|e| Error::Dataset(format!("light {row}: {e}")))?);
    }

    let mut width = 0;
    let mut height = 0;
    let mut channels = 0;
    let mut images = Vec::new();
    for (i, name) in names.iter().enumerate() {
        let (w, h, c, mut data) = read_png(&dir.join(name))?;
        if i == 0 {
            (width, height, channels) = (w, h, c);
            images.reserve(names.len() * w * h * c);
        } else if (w, h, c) != (width, height, channels) {
            return Err(Error::Dataset(format!(
                "{name} is {w}x{h}x{c}, expected {width}x{height}x{channels}"
            )));
        }
        if opts.inverse_gamma {
            data.iter_mut().for_each(|v| *v = v.powf(2.2));
        }
        for (k, v) in data.iter_mut().enumerate() {
            *v /= lights[i].channel_intensity(k % c);
        }
        images.extend(data);
    }
    if lights.iter().any(|l| l.intensity().len() == 3 && channels != 3) {
        return Err(Error::Dataset("per-channel intensities given for single-channel images".into()));
    }

    let mask_path = dir.join("mask.png");
    let mask = if mask_path.exists() {
        let (w, h, _, m) = read_png(&mask_path)?;
        if (w, h) != (width, height) {
            return Err(Error::Dataset(format!("mask is {w}x{h}, images are {width}x{height}")));
        }
        let c = m.len() / (w * h);
        m.chunks(c).map(|px| px.iter().any(|&v| v > 0.0)).collect()
    } else {
        vec![true; width * height]
    };

    let stack = ObservationStack::new(width, height, channels, images, lights, mask, Some(names))?;
    Ok(if opts.grayscale { stack.to_grayscale() } else { stack })
}

fn image_names(dir: &Path) -> Result<Vec<String>> {
    let list = dir.join("filenames.txt");
    if list.exists() {
        let text = fs::read_to_string(&list).map_err(Error::io(&list))?;
        return Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect());
    }
    let entries = fs::read_dir(dir).map_err(Error::io(dir))?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.to_ascii_lowercase().ends_with(".png") && n != "mask.png" && !n.to_ascii_lowercase().starts_with("normal"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::Dataset(format!("no images in {}", dir.display())));
    }
    Ok(names)
}

fn read_rows(path: &Path, widths: &[usize]) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Dataset(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if !widths.contains(&row.len()) || row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Dataset(format!("{}:{}: expected {widths:?} finite values", path.display(), i + 1)));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Decodes an 8- or 16-bit PNG to `[0, 1]`: width, height, channels (1 or 3), data.
pub fn read_png(path: &Path) -> Result<(usize, usize, usize, Vec<f64>)> {
    let img = image::open(path).map_err(Error::image(path))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        let data = img.to_rgb16().into_raw().into_iter().map(|v| v as f64 / 65535.0).collect();
        Ok((w, h, 3, data))
    } else {
        let data = img.to_luma16().into_raw().into_iter().map(|v| v as f64 / 65535.0).collect();
        Ok((w, h, 1, data))
    }
}

fn quantize(v: f64, max: f64) -> f64 {
    (v.clamp(0.0, 1.0) * max).round()
}

/// Writes `[0, 1]` data (1 or 3 channels) as a 16-bit PNG.
pub fn write_png16(path: &Path, width: usize, height: usize, channels: usize, data: &[f64]) -> Result<()> {
    let raw: Vec<u16> = data.iter().map(|&v| quantize(v, 65535.0) as u16).collect();
    let (w, h) = (width as u32, height as u32);
    let img = match channels {
        1 => DynamicImage::ImageLuma16(ImageBuffer::<Luma<u16>, _>::from_raw(w, h, raw).expect("size checked by caller")),
        3 => DynamicImage::ImageRgb16(ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, raw).expect("size checked by caller")),
        _ => return Err(Error::Invalid(format!("cannot write {channels}-channel image"))),
    };
    img.save(path).map_err(Error::image(path))
}

/// Writes `[0, 1]` data (1 or 3 channels) as an 8-bit PNG.
pub fn write_png8(path: &Path, width: usize, height: usize, channels: usize, data: &[f64]) -> Result<()> {
    let raw: Vec<u8> = data.iter().map(|&v| quantize(v, 255.0) as u8).collect();
    let (w, h) = (width as u32, height as u32);
    let img = match channels {
        1 => DynamicImage::ImageLuma8(ImageBuffer::<Luma<u8>, _>::from_raw(w, h, raw).expect("size checked by caller")),
        3 => DynamicImage::ImageRgb8(ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, raw).expect("size checked by caller")),
        _ => return Err(Error::Invalid(format!("cannot write {channels}-channel image"))),
    };
    img.save(path).map_err(Error::image(path))
}

/// Values quantized the way [`write_png16`] stores them.
pub fn quantize16(data: &[f64]) -> Vec<f64> {
    data.iter().map(|&v| quantize(v, 65535.0) / 65535.0).collect()
}

/// Writes the stack in the dataset layout, as 16-bit PNGs scaled back by the
/// light intensities. Values must fit in `[0, 1]` after scaling.
pub fn save_dataset(stack: &ObservationStack, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let (w, h, c) = (stack.width, stack.height, stack.channels);
    let mut filenames = String::new();
    let mut directions = String::new();
    let mut intensities = String::new();
    for (i, light) in stack.lights.iter().enumerate() {
        let name = if stack.names[i].ends_with(".png") { stack.names[i].clone() } else { format!("{}.png", stack.names[i]) };
        let raw: Vec<f64> = stack.image(i).iter().enumerate().map(|(k, v)| v * light.channel_intensity(k % c)).collect();
        write_png16(&dir.join(&name), w, h, c, &raw)?;
        filenames.push_str(&name);
        filenames.push('\n');
        let d = light.to_dataset();
        directions.push_str(&format!("{} {} {}\n", d[0], d[1], d[2]));
        let e: Vec<String> = light.intensity().iter().map(|v| v.to_string()).collect();
        intensities.push_str(&e.join(" "));
        intensities.push('\n');
    }
    for (file, text) in [("filenames.txt", filenames), ("light_directions.txt", directions), ("light_intensities.txt", intensities)] {
        let path = dir.join(file);
        fs::write(&path, text).map_err(Error::io(&path))?;
    }
    let mask: Vec<f64> = stack.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    write_png8(&dir.join("mask.png"), w, h, 1, &mask)
}

/// Writes a synthetic scene as a dataset plus its ground truth:
/// `normal_gt.{f32,json,png}` (dataset frame) and `depth_gt.{f32,json}`.
pub fn save_synthetic(scene: &SyntheticScene, dir: &Path) -> Result<()> {
    save_dataset(&scene.stack(), dir)?;
    let normals: Vec<f64> = scene.normals.iter().flat_map(|&n| flip_frame(n)).collect();
    let (w, h) = (scene.width, scene.height);
    write_f32_grid(dir, "normal_gt", w, h, 3, &normals)?;
    write_png8(&dir.join("normal_gt.png"), w, h, 3, &encode_normals(&normals, &scene.mask))?;
    write_f32_grid(dir, "depth_gt", w, h, 1, &scene.depth)
}

/// Ground-truth normals of a dataset directory in the internal frame, from
/// `normal_gt.f32` or else `normal_gt.png` (also spelled `Normal_gt.png`).
/// `None` when none exists.
pub fn load_normal_gt(dir: &Path) -> Result<Option<(usize, usize, Vec<[f64; 3]>)>> {
    let png = ["normal_gt.png", "Normal_gt.png"].into_iter().map(|n| dir.join(n)).find(|p| p.exists());
    let (w, h, data) = if dir.join("normal_gt.json").exists() {
        let (w, h, c, data) = read_f32_grid(dir, "normal_gt")?;
        if c != 3 {
            return Err(Error::Dataset(format!("normal_gt has {c} channels")));
        }
        (w, h, data)
    } else if let Some(png) = png {
        let (w, h, c, data) = read_png(&png)?;
        if c != 3 {
            return Err(Error::Dataset(format!("{} is not an RGB image", png.display())));
        }
        (w, h, data.into_iter().map(|v| 2.0 * v - 1.0).collect())
    } else {
        return Ok(None);
    };
    let normals = data
        .chunks(3)
        .map(|n| {
            let len = norm3([n[0], n[1], n[2]]);
            if len > 0.0 {
                flip_frame([n[0] / len, n[1] / len, n[2] / len])
            } else {
                [0.0; 3]
            }
        })
        .collect();
    Ok(Some((w, h, normals)))
}

#[derive(Serialize, Deserialize)]
struct GridHeader {
    #[serde(rename = "H")]
    height: usize,
    #[serde(rename = "W")]
    width: usize,
    #[serde(rename = "C", default = "one", skip_serializing_if = "is_one")]
    channels: usize,
}

fn one() -> usize {
    1
}

fn is_one(c: &usize) -> bool {
    *c == 1
}

/// Writes `<stem>.f32` (little-endian, row-major `[H][W][C]`) and
/// `<stem>.json` (`{"H", "W"}`, plus `"C"` when above 1).
pub fn write_f32_grid(dir: &Path, stem: &str, width: usize, height: usize, channels: usize, data: &[f64]) -> Result<()> {
    assert_eq!(data.len(), width * height * channels);
    let bytes: Vec<u8> = data.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
    let bin = dir.join(format!("{stem}.f32"));
    fs::write(&bin, bytes).map_err(Error::io(&bin))?;
    let json = dir.join(format!("{stem}.json"));
    fs::write(&json, serde_json::to_string(&GridHeader { height, width, channels })?).map_err(Error::io(&json))
}

/// Reads a grid written by [`write_f32_grid`]: width, height, channels, data.
pub fn read_f32_grid(dir: &Path, stem: &str) -> Result<(usize, usize, usize, Vec<f64>)> {
    let json = dir.join(format!("{stem}.json"));
    let header: GridHeader = serde_json::from_str(&fs::read_to_string(&json).map_err(Error::io(&json))?)?;
    let bin = dir.join(format!("{stem}.f32"));
    let bytes = fs::read(&bin).map_err(Error::io(&bin))?;
    let n = header.width * header.height * header.channels;
    if bytes.len() != 4 * n {
        return Err(Error::Dataset(format!("{}: {} bytes, header needs {}", bin.display(), bytes.len(), 4 * n)));
    }
    let data = bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64).collect();
    Ok((header.width, header.height, header.channels, data))
}
