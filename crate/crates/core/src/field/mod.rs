//! Dense trilinear occupancy and radiance fields with hand-written backward
//! passes, plus the binary field checkpoint format.

pub mod grid;
pub mod io;
pub mod occupancy;
pub mod radiance;
pub mod sh;

pub use grid::{GridSpec, Stencil};
pub use occupancy::OccupancyField;
pub use radiance::{DirBasis, RadianceGrid};

use crate::geom::{is_unit, Rgb, Vec3};

/// A query location: world position plus unit viewing direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldPoint {
    pub position: Vec3,
    pub direction: Vec3,
}

impl FieldPoint {
    pub fn new(position: Vec3, direction: Vec3) -> crate::Result<Self> {
        if !is_unit(&direction) {
            return Err(crate::Error::NonUnitDirection(direction.norm()));
        }
        Ok(FieldPoint { position, direction })
    }
}

/// Everything a renderer needs: occupancy, radiance, and the color seen by
/// rays that leave the bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneModel {
    pub occupancy: OccupancyField,
    pub radiance: RadianceGrid,
    pub environment: Rgb,
}

impl SceneModel {
    pub fn grid(&self) -> &GridSpec {
        &self.occupancy.grid
    }
}
