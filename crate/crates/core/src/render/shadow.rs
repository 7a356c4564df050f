use super::Light;

/// Sampling of the march from a surface point toward the light.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShadowMarchConfig {
    pub samples: usize,
    /// First sample distance, in pixels on the image plane.
    pub t_min: f64,
}

impl Default for ShadowMarchConfig {
    fn default() -> Self {
        ShadowMarchConfig { samples: 32, t_min: 0.5 }
    }
}

impl ShadowMarchConfig {
    /// Log-uniform planar distances from `t_min` to `t_max`, strictly increasing.
    pub fn distances(&self, t_max: f64) -> Vec<f64> {
        if self.samples < 2 || t_max <= self.t_min {
            return Vec::new();
        }
        let ratio = (t_max / self.t_min).ln();
        (0..self.samples).map(|i| self.t_min * (ratio * i as f64 / (self.samples - 1) as f64).exp()).collect()
    }
}

/// Planar distance from `x` along unit direction `dir` to the border of
/// the `[0, width] x [0, height]` image rectangle.
pub fn distance_to_boundary(x: [f64; 2], dir: [f64; 2], width: f64, height: f64) -> f64 {
    let axis = |p: f64, d: f64, hi: f64| -> f64 {
        if d > 1e-15 {
            (hi - p) / d
        } else if d < -1e-15 {
            -p / d
        } else {
            f64::INFINITY
        }
    };
    axis(x[0], dir[0], width).min(axis(x[1], dir[1], height)).max(0.0)
}

/// Ray from the surface point at `x` toward the light, parameterized by
/// planar distance.
struct Ray {
    origin: [f64; 2],
    dir: [f64; 2],
    z0: f64,
    dz: f64,
    t_max: f64,
}

impl Ray {
    fn new(x: [f64; 2], light: &Light, depth: &impl Fn(f64, f64) -> f64, width: f64, height: f64) -> Option<Ray> {
        let l = light.direction();
        let planar = (l[0] * l[0] + l[1] * l[1]).sqrt();
        if planar < 1e-12 {
            return None;
        }
        let dir = [l[0] / planar, l[1] / planar];
        Some(Ray { origin: x, dir, z0: depth(x[0], x[1]), dz: l[2] / planar, t_max: distance_to_boundary(x, dir, width, height) })
    }

    /// True when the surface is strictly in front of the ray at distance `t`.
    fn blocked(&self, t: f64, depth: &impl Fn(f64, f64) -> f64) -> bool {
        let px = self.origin[0] + t * self.dir[0];
        let py = self.origin[1] + t * self.dir[1];
        depth(px, py) < self.z0 + t * self.dz
    }
}

/// Cast-shadow factor at pixel-plane position `x` (pixel units, pixel centres
/// at `+0.5`): 1 when lit, 0 when the height field `depth` (pixel units,
/// larger is farther from the camera) blocks the light at any sample.
///
/// A light along the viewing axis cannot be occluded and yields 1.
pub fn render_shadow(
    x: [f64; 2],
    light: &Light,
    depth: impl Fn(f64, f64) -> f64,
    width: usize,
    height: usize,
    cfg: &ShadowMarchConfig,
) -> f64 {
    let Some(ray) = Ray::new(x, light, &depth, width as f64, height as f64) else { return 1.0 };
    let lit = cfg.distances(ray.t_max).into_iter().all(|t| !ray.blocked(t, &depth));
    if lit {
        1.0
    } else {
        0.0
    }
}

/// Reference shadow factor from a dense uniform march of `samples` steps up to
/// the image border.
pub fn raycast_exact(x: [f64; 2], light: &Light, depth: impl Fn(f64, f64) -> f64, width: usize, height: usize, samples: usize) -> f64 {
    let Some(ray) = Ray::new(x, light, &depth, width as f64, height as f64) else { return 1.0 };
    let step = ray.t_max / samples as f64;
    let lit = (1..=samples).all(|i| !ray.blocked(step * i as f64, &depth));
    if lit {
        1.0
    } else {
        0.0
    }
}

/// Height field sampled at pixel centres, with bilinear lookup.
///
/// Pixels outside `valid` never occlude.
#[derive(Clone, Debug)]
pub struct DepthGrid {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl DepthGrid {
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let fx = (x - 0.5).clamp(0.0, (self.width - 1) as f64);
        let fy = (y - 0.5).clamp(0.0, (self.height - 1) as f64);
        let (c0, r0) = (fx.floor() as usize, fy.floor() as usize);
        let nearest = fy.round() as usize * self.width + fx.round() as usize;
        if !self.valid[nearest] {
            return f64::INFINITY;
        }
        let (c1, r1) = ((c0 + 1).min(self.width - 1), (r0 + 1).min(self.height - 1));
        let (ax, ay) = (fx - c0 as f64, fy - r0 as f64);
        let mut acc = 0.0;
        let mut wsum = 0.0;
        for (r, c, w) in [(r0, c0, (1.0 - ax) * (1.0 - ay)), (r0, c1, ax * (1.0 - ay)), (r1, c0, (1.0 - ax) * ay), (r1, c1, ax * ay)] {
            let i = r * self.width + c;
            if self.valid[i] && w > 0.0 {
                acc += w * self.values[i];
                wsum += w;
            }
        }
        if wsum > 0.0 {
            acc / wsum
        } else {
            self.values[nearest]
        }
    }
}
