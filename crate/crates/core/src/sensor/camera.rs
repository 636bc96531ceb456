use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;

/// A ray segment `origin + t * direction`, `t in [t_min, t_max]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub t_min: f64,
    pub t_max: f64,
}

impl Ray {
    pub fn new(origin: Vec3, direction: Vec3) -> Self {
        Ray {
            origin,
            direction: direction.normalize(),
            t_min: 0.0,
            t_max: f64::INFINITY,
        }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// Pinhole camera. `rotation` maps camera axes to world axes; its columns are
/// right, up, and back, so the camera looks along `-column 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub rotation: [[f64; 3]; 3],
    pub position: [f64; 3],
    pub fov_y: f64,
    pub width: u32,
    pub height: u32,
}

impl Camera {
    pub fn new(rotation: Matrix3<f64>, position: Vec3, fov_y: f64, width: u32, height: u32) -> Result<Self> {
        let cam = Camera {
            rotation: rotation.transpose().into(),
            position: position.into(),
            fov_y,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn look_at(eye: Vec3, target: Vec3, fov_y: f64, width: u32, height: u32) -> Result<Self> {
        let back = eye - target;
        if back.norm() == 0.0 {
            return Err(Error::invalid("camera eye coincides with target"));
        }
        let back = back.normalize();
        let mut up_hint = Vec3::z();
        if back.cross(&up_hint).norm() < 1e-6 {
            up_hint = Vec3::y();
        }
        let right = up_hint.cross(&back).normalize();
        let up = back.cross(&right);
        Camera::new(Matrix3::from_columns(&[right, up, back]), eye, fov_y, width, height)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fov_y > 0.0 && self.fov_y < std::f64::consts::PI) {
            return Err(Error::invalid(format!("fov_y {} outside (0, pi)", self.fov_y)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("camera has zero pixels"));
        }
        let r = self.rotation_matrix();
        let ortho = (r.transpose() * r - Matrix3::identity()).norm();
        if ortho > 1e-6 || (r.determinant() - 1.0).abs() > 1e-6 {
            return Err(Error::invalid("camera rotation is not a proper rotation"));
        }
        Ok(())
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        Matrix3::from(self.rotation).transpose()
    }

    pub fn eye(&self) -> Vec3 {
        Vec3::from(self.position)
    }

    pub fn forward(&self) -> Vec3 {
        -self.rotation_matrix().column(2).into_owned()
    }

    /// Focal length in pixels.
    pub fn focal(&self) -> f64 {
        0.5 * self.height as f64 / (0.5 * self.fov_y).tan()
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Ray through image-plane point `(px + jx, py + jy)`, measured in pixels
    /// from the top-left image corner. `jitter = (0.5, 0.5)` is the pixel
    /// center; `(0, 0)` is the pixel's top-left corner.
    pub fn pixel_ray(&self, px: u32, py: u32, jitter: (f64, f64)) -> Result<Ray> {
        if px >= self.width || py >= self.height {
            return Err(Error::PixelOutOfRange {
                x: px,
                y: py,
                width: self.width,
                height: self.height,
            });
        }
        if !(0.0..1.0).contains(&jitter.0) || !(0.0..1.0).contains(&jitter.1) {
            return Err(Error::invalid(format!("jitter {jitter:?} outside [0,1)^2")));
        }
        let f = self.focal();
        let x = (px as f64 + jitter.0 - 0.5 * self.width as f64) / f;
        let y = -(py as f64 + jitter.1 - 0.5 * self.height as f64) / f;
        let dir = self.rotation_matrix() * Vec3::new(x, y, -1.0);
        Ok(Ray::new(self.eye(), dir))
    }

    pub fn center_ray(&self, px: u32, py: u32) -> Result<Ray> {
        self.pixel_ray(px, py, (0.5, 0.5))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn cam() -> Camera {
        Camera::look_at(Vec3::new(3.0, -2.0, 1.0), Vec3::zeros(), 0.8, 64, 48).unwrap()
    }

    #[test]
    fn center_pixel_looks_forward() {
        let c = cam();
        let r = c.pixel_ray(32, 24, (0.0, 0.0)).unwrap();
        assert!((r.direction - c.forward()).norm() < 1e-12);
        assert!((c.forward() - (-c.eye()).normalize()).norm() < 1e-12);
    }

    #[test]
    fn corner_pixels_sit_at_half_fov_vertically() {
        let c = cam();
        let r = c.rotation_matrix();
        let (up, fwd) = (r.column(1).into_owned(), c.forward());
        for (px, py) in [(0, 0), (63, 0)] {
            let d = c.pixel_ray(px, py, (0.0, 0.0)).unwrap().direction;
            let vertical = d.dot(&up).atan2(d.dot(&fwd));
            assert!((vertical - 0.4).abs() < 1e-12, "{vertical}");
        }
    }

    #[test]
    fn jitter_stays_within_one_pixel() {
        let c = cam();
        let pixel_angle = (1.0 / c.focal()).atan() * 2f64.sqrt();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let (px, py) = (rng.random_range(0..64), rng.random_range(0..48));
            let a = c.pixel_ray(px, py, (rng.random(), rng.random())).unwrap().direction;
            let b = c.pixel_ray(px, py, (rng.random(), rng.random())).unwrap().direction;
            assert!(a.angle(&b) < pixel_angle);
        }
    }

    #[test]
    fn rejects_out_of_range_pixels() {
        assert!(matches!(cam().pixel_ray(64, 0, (0.5, 0.5)), Err(Error::PixelOutOfRange { .. })));
        assert!(cam().pixel_ray(0, 0, (1.0, 0.5)).is_err());
    }

    #[test]
    fn rejects_bad_intrinsics() {
        assert!(Camera::look_at(Vec3::x(), Vec3::zeros(), 3.2, 4, 4).is_err());
        assert!(Camera::look_at(Vec3::x(), Vec3::x(), 1.0, 4, 4).is_err());
        assert!(Camera::look_at(Vec3::z() * 2.0, Vec3::zeros(), 1.0, 4, 4).is_ok());
    }
}
