//! Estimation lower bounds for scene parameters observed through noisy
//! plenoptic measurements, with a built-in Monte-Carlo forward model.

pub mod bounds;
pub mod cli;
pub mod config;
pub mod error;
pub mod estimator;
pub mod fisher;
pub mod forward;
pub mod image;
pub mod io;
pub mod math;
pub mod render;
pub mod render_error;
pub mod scene;

pub use error::{Error, Result};
pub use image::{ImageMeta, RadianceImage};
