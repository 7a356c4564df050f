//! Normal and image error metrics, material spheres and ablation runs.

mod ablation;
mod metrics;
mod sphere;

pub use ablation::{run_ablations, Ablation, AblationResult};
pub use metrics::{angle_deg, mae, psnr, Metrics, PsnrReport};
pub use sphere::{render_brdf_sphere, sphere_mask, sphere_normal};
