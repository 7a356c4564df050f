//! Image formation: shading, diffuse plus basis specular reflectance, cast
//! shadows by marching a height field, and early-phase shadow guidance.

mod guidance;
mod light;
mod shading;
mod shadow;

pub use guidance::shadow_guidance_mask;
pub use light::{flip_frame, Light, VIEW};
pub(crate) use light::{dot3, norm3};
pub use shading::{half_vector, render_pixel};
pub use shadow::{distance_to_boundary, raycast_exact, render_shadow, DepthGrid, ShadowMarchConfig};
