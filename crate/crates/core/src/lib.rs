//! Self-supervised neural photometric stereo.
//!
//! Three coordinate MLPs are fitted per scene: a surface network giving the
//! unit normal, diffuse albedo and specular-basis weights at each pixel, a
//! small network giving the shared specular basis as a function of
//! `(n·h, v·h)`, and a depth network whose height field casts shadows. They
//! are trained only through the image formation model
//! `I = s (rho_d + c·D(h, n)) max(l·n, 0)` against the observed images.

pub mod autodiff;
mod error;
pub mod eval;
pub mod nn;
pub mod render;
pub mod scene;
pub mod train;

pub use error::{Error, Result};
