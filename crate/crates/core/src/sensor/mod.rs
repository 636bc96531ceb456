//! Cameras, the analytic ground-truth tracer, and synthetic datasets.

pub mod camera;
pub mod dataset;
pub mod scene;

pub use camera::{Camera, Ray};
pub use dataset::{generate_dataset, render_view, Dataset, RigLayout, RigSpec};
pub use scene::{Albedo, DirectionalLight, Placement, Primitive, PrimitiveScene, Shape};
