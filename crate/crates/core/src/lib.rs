pub mod error;
pub mod fitter;
pub mod grid;
pub mod label_raster;
pub mod losses;
pub mod morphable;
pub mod norm_ops;
pub mod rasterizer;
pub mod scene_model;
pub mod synthgen;

pub use error::{Error, Result};
