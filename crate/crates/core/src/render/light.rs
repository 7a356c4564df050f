use crate::{Error, Result};

/// Viewing direction of the orthographic camera, pointing from the surface
/// toward the camera.
///
/// Internal frame: x right, y down (image rows), z away from the camera, so
/// depth is z and camera-facing normals have a negative z component.
pub const VIEW: [f64; 3] = [0.0, 0.0, -1.0];

/// Converts a vector between the internal frame and the dataset frame
/// (x right, y up, z toward the camera). The map is its own inverse.
pub fn flip_frame(v: [f64; 3]) -> [f64; 3] {
    [v[0], -v[1], -v[2]]
}

/// Distant directional light.
#[derive(Clone, Debug, PartialEq)]
pub struct Light {
    direction: [f64; 3],
    intensity: Vec<f64>,
}

pub(crate) fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub(crate) fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

impl Light {
    /// `direction` points from the surface toward the light, internal frame.
    pub fn new(direction: [f64; 3], intensity: Vec<f64>) -> Result<Self> {
        let n = norm3(direction);
        if !n.is_finite() || (n - 1.0).abs() > 1e-6 {
            return Err(Error::Invalid(format!("light direction {direction:?} is not unit length")));
        }
        if intensity.is_empty() || intensity.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
            return Err(Error::Invalid(format!("light intensity {intensity:?} must be positive")));
        }
        Ok(Light { direction, intensity })
    }

    /// Unit white light.
    pub fn white(direction: [f64; 3]) -> Result<Self> {
        Self::new(direction, vec![1.0])
    }

    pub fn from_dataset(direction: [f64; 3], intensity: Vec<f64>) -> Result<Self> {
        Self::new(flip_frame(direction), intensity)
    }

    pub fn direction(&self) -> [f64; 3] {
        self.direction
    }

    pub fn to_dataset(&self) -> [f64; 3] {
        flip_frame(self.direction)
    }

    pub fn intensity(&self) -> &[f64] {
        &self.intensity
    }

    /// Intensity of channel `c`; a single value applies to every channel.
    pub fn channel_intensity(&self, c: usize) -> f64 {
        if self.intensity.len() == 1 {
            self.intensity[0]
        } else {
            self.intensity[c]
        }
    }

    /// Projection on the image plane.
    pub fn planar(&self) -> [f64; 2] {
        [self.direction[0], self.direction[1]]
    }
}
