//! Losses, the two-phase schedule and the optimization loop.

mod config;
mod fit;
mod loss;

pub use config::FitConfig;
pub use fit::{fit, prepare_stack, FitOutput};
pub use loss::{geo_pixels, history_csv, loss_geo, loss_rec, loss_tv, write_history, LossReport};
