use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ObservationStack;
use crate::render::{dot3, half_vector, raycast_exact, Light, VIEW};
use crate::{Error, Result};

/// Samples per ray of the reference shadow cast.
pub const EXACT_SHADOW_SAMPLES: usize = 1024;

/// Raised primitive of a [`HeightField`], in pixel units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Primitive {
    Hemisphere { cx: f64, cy: f64, radius: f64 },
    /// Axis-aligned box `[x0, x1) x [y0, y1)` raised by `height`.
    Block { x0: f64, y0: f64, x1: f64, y1: f64, height: f64 },
}

/// Floor plane at constant depth with raised primitives. Where primitives
/// overlap the one nearest the camera wins.
#[derive(Clone, Debug, PartialEq)]
pub struct HeightField {
    pub floor: f64,
    pub primitives: Vec<Primitive>,
}

impl HeightField {
    /// Depth and unit normal (internal frame) at pixel-plane position `(x, y)`.
    pub fn eval(&self, x: f64, y: f64) -> (f64, [f64; 3]) {
        let mut best = (self.floor, VIEW);
        for p in &self.primitives {
            let hit = match *p {
                Primitive::Hemisphere { cx, cy, radius } => {
                    let (dx, dy) = (x - cx, y - cy);
                    let r2 = radius * radius - dx * dx - dy * dy;
                    (r2 > 0.0).then(|| {
                        let dz = r2.sqrt();
                        (self.floor - dz, [dx / radius, dy / radius, -dz / radius])
                    })
                }
                Primitive::Block { x0, y0, x1, y1, height } => {
                    (x >= x0 && x < x1 && y >= y0 && y < y1).then_some((self.floor - height, VIEW))
                }
            };
            if let Some(h) = hit.filter(|h| h.0 < best.0) {
                best = h;
            }
        }
        best
    }

    pub fn depth(&self, x: f64, y: f64) -> f64 {
        self.eval(x, y).0
    }
}

/// Reflectance of a synthetic scene; the specular lobe is
/// `strength * (n·h)^exponent`, shared by all channels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Material {
    Lambertian,
    Specular { exponent: f64, strength: f64 },
}

impl Material {
    pub const SPECULAR: Material = Material::Specular { exponent: 12.0, strength: 0.45 };

    pub fn specular(&self, n: [f64; 3], l: [f64; 3]) -> f64 {
        match *self {
            Material::Lambertian => 0.0,
            Material::Specular { exponent, strength } => match half_vector(l, VIEW) {
                Ok(h) => strength * dot3(n, h).max(0.0).powf(exponent),
                Err(_) => 0.0,
            },
        }
    }
}

/// Scene with known geometry and reflectance, rendered exactly.
#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub width: usize,
    pub height: usize,
    pub field: HeightField,
    /// Pixel units, at pixel centres.
    pub depth: Vec<f64>,
    pub normals: Vec<[f64; 3]>,
    /// `[H][W][3]`.
    pub albedo: Vec<f64>,
    pub material: Material,
    pub lights: Vec<Light>,
    /// `[n][H][W]`, true where lit.
    pub shadows: Vec<bool>,
    pub mask: Vec<bool>,
    /// `[n][H][W][3]`, unquantized.
    pub images: Vec<f64>,
}

impl SyntheticScene {
    fn render(width: usize, height: usize, field: HeightField, material: Material, lights: Vec<Light>, mask: Vec<bool>) -> Self {
        let hw = width * height;
        let centre = |p: usize| ((p % width) as f64 + 0.5, (p / width) as f64 + 0.5);
        let (depth, normals): (Vec<f64>, Vec<[f64; 3]>) = (0..hw).map(|p| {
            let (x, y) = centre(p);
            field.eval(x, y)
        }).unzip();
        let albedo: Vec<f64> = (0..hw)
            .flat_map(|p| {
                let (x, y) = centre(p);
                albedo_at(x / width as f64, y / height as f64)
            })
            .collect();
        let mut shadows = Vec::with_capacity(lights.len() * hw);
        let mut images = Vec::with_capacity(lights.len() * hw * 3);
        for light in &lights {
            for p in 0..hw {
                let (x, y) = centre(p);
                let s = raycast_exact([x, y], light, |x, y| field.depth(x, y), width, height, EXACT_SHADOW_SAMPLES);
                shadows.push(s > 0.0);
                let n = normals[p];
                let shading = dot3(n, light.direction()).max(0.0);
                let spec = material.specular(n, light.direction());
                images.extend((0..3).map(|c| s * (albedo[3 * p + c] + spec) * shading));
            }
        }
        SyntheticScene { width, height, field, depth, normals, albedo, material, lights, shadows, mask, images }
    }

    pub fn shadow_map(&self, i: usize) -> &[bool] {
        let hw = self.width * self.height;
        &self.shadows[i * hw..(i + 1) * hw]
    }

    pub fn stack(&self) -> ObservationStack {
        ObservationStack::new(self.width, self.height, 3, self.images.clone(), self.lights.clone(), self.mask.clone(), None)
            .expect("synthetic scenes are consistent")
    }
}

/// Smooth colour variation in `[0.2, 0.55]` over the unit square.
fn albedo_at(u: f64, v: f64) -> [f64; 3] {
    [
        0.375 + 0.15 * (2.0 * PI * (0.7 * u + 0.2 * v)).sin(),
        0.375 + 0.15 * (2.0 * PI * (0.3 * u - 0.6 * v) + 1.0).sin(),
        0.375 + 0.15 * (2.0 * PI * (0.5 * u + 0.5 * v) + 2.0).cos(),
    ]
}

/// Internal-frame direction at `polar` from the viewing axis and `azimuth`
/// in the image plane.
pub fn light_at(polar: f64, azimuth: f64) -> Light {
    let (s, c) = polar.sin_cos();
    let d = [s * azimuth.cos(), s * azimuth.sin(), -c];
    let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    Light::white([d[0] / n, d[1] / n, d[2] / n]).expect("unit direction")
}

/// `count` lights spread over azimuth with polar angles drawn from
/// `[min_polar, max_polar]`.
pub fn random_lights(count: usize, min_polar: f64, max_polar: f64, seed: u64) -> Vec<Light> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let azimuth = 2.0 * PI * (i as f64 + rng.gen_range(0.0..0.8)) / count as f64;
            // uniform in solid angle between the two polar bounds
            let (lo, hi) = (min_polar.cos(), max_polar.cos());
            let polar = rng.gen_range(hi..=lo).acos();
            light_at(polar, azimuth)
        })
        .collect()
}

/// `count` lights at a common polar angle, evenly spread over azimuth.
pub fn ring_lights(count: usize, polar: f64) -> Vec<Light> {
    (0..count).map(|i| light_at(polar, 2.0 * PI * (i as f64 + 0.5) / count as f64)).collect()
}

fn check_size(height: usize, width: usize, lights: usize) -> Result<()> {
    if height < 16 || width < 16 {
        return Err(Error::Invalid(format!("synthetic scenes need at least 16x16 pixels, got {width}x{height}")));
    }
    if lights < 4 {
        return Err(Error::Invalid(format!("synthetic scenes need at least 4 lights, got {lights}")));
    }
    Ok(())
}

/// Hemisphere resting on a plane, masked to the hemisphere's disk.
pub fn make_sphere_scene(height: usize, width: usize, lights: usize, material: Material, seed: u64) -> Result<SyntheticScene> {
    check_size(height, width, lights)?;
    let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
    let radius = 0.45 * width.min(height) as f64;
    let field = HeightField { floor: 2.0 * radius, primitives: vec![Primitive::Hemisphere { cx, cy, radius }] };
    let mask = (0..width * height)
        .map(|p| {
            let (x, y) = ((p % width) as f64 + 0.5 - cx, (p / width) as f64 + 0.5 - cy);
            x * x + y * y < radius * radius
        })
        .collect();
    let lights = random_lights(lights, 10f64.to_radians(), 50f64.to_radians(), seed);
    Ok(SyntheticScene::render(width, height, field, material, lights, mask))
}

/// Floor with a raised square block in the middle third, under a ring of
/// lights 45 degrees off the viewing axis. Fully masked.
pub fn make_step_scene(height: usize, width: usize, block_height: f64, lights: usize) -> Result<SyntheticScene> {
    check_size(height, width, lights)?;
    if !(block_height > 0.0) {
        return Err(Error::Invalid(format!("block height must be positive, got {block_height}")));
    }
    let (w, h) = (width as f64, height as f64);
    let block = Primitive::Block { x0: (w / 3.0).round(), y0: (h / 3.0).round(), x1: (2.0 * w / 3.0).round(), y1: (2.0 * h / 3.0).round(), height: block_height };
    let field = HeightField { floor: w.max(h), primitives: vec![block] };
    Ok(SyntheticScene::render(width, height, field, Material::Lambertian, ring_lights(lights, PI / 4.0), vec![true; width * height]))
}

/// A block and a hemisphere side by side on a floor, fully masked, so the
/// images contain both cast and attached shadows.
pub fn make_composite_scene(height: usize, width: usize, lights: usize, material: Material, seed: u64) -> Result<SyntheticScene> {
    check_size(height, width, lights)?;
    let (w, h) = (width as f64, height as f64);
    let s = w.min(h);
    let primitives = vec![
        Primitive::Block { x0: (0.12 * w).round(), y0: (0.3 * h).round(), x1: (0.38 * w).round(), y1: (0.7 * h).round(), height: 0.15 * s },
        Primitive::Hemisphere { cx: 0.68 * w, cy: 0.5 * h, radius: 0.2 * s },
    ];
    let field = HeightField { floor: s, primitives };
    let lights = random_lights(lights, 25f64.to_radians(), 55f64.to_radians(), seed);
    Ok(SyntheticScene::render(width, height, field, material, lights, vec![true; width * height]))
}
