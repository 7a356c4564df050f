//! Observation stacks, the dataset directory format, synthetic scenes with
//! exact ground truth, and export of fitted maps.

mod estimate;
mod grid;
mod io;
mod stack;
mod synth;

pub use estimate::{export_maps, SceneEstimate};
pub use grid::{AxisStencil, PixelGrid};
pub use io::{
    load_dataset, load_dataset_with, load_normal_gt, save_synthetic, quantize16, read_f32_grid, read_png, save_dataset, write_f32_grid, write_png16, write_png8,
    LoadOptions,
};
pub use stack::ObservationStack;
pub use synth::{
    light_at, make_composite_scene, make_sphere_scene, make_step_scene, random_lights, ring_lights, HeightField, Material, Primitive,
    SyntheticScene, EXACT_SHADOW_SAMPLES,
};
