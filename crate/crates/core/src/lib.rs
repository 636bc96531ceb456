//! Occupancy-grid surface reconstruction from multi-view images.

pub mod background;
pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod field;
pub mod geom;
pub mod loss;
pub mod march;
pub mod mesh;
pub mod oracle;
pub mod raster;
pub mod regularize;
pub mod render;
pub mod sensor;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
