//! Positional encoding and the surface, specular-basis and depth networks.

mod encoding;
mod mlp;
mod nets;
mod params;

pub use encoding::{encode, PositionalEncoder};
pub use mlp::{HeadSpec, Mlp, MlpSpec};
pub use nets::{init_params, ArchConfig, BasisNet, DepthNet, Model, SurfaceEval, SurfaceNet, SurfaceOutput};
pub use params::{Bound, ParamStore};
