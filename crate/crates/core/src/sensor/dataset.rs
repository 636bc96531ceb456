use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::raster::RgbBuffer;
use crate::sensor::camera::Camera;
use crate::sensor::scene::PrimitiveScene;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RigLayout {
    /// Horizontal ring; successive cameras alternate between `+elevation` and `-elevation`.
    Ring,
    /// Fibonacci lattice over the full sphere.
    Sphere,
    /// Uniform random directions drawn from `seed`.
    Random,
}

fn default_holdout() -> usize {
    8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigSpec {
    pub layout: RigLayout,
    pub count: usize,
    pub radius: f64,
    #[serde(default)]
    pub elevation_deg: f64,
    #[serde(default)]
    pub center: [f64; 3],
    pub width: u32,
    pub height: u32,
    pub fov_y_deg: f64,
    /// Every n-th camera (index divisible by n) is held out from training.
    #[serde(default = "default_holdout")]
    pub holdout_every: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for RigSpec {
    fn default() -> Self {
        RigSpec {
            layout: RigLayout::Sphere,
            count: 24,
            radius: 3.0,
            elevation_deg: 0.0,
            center: [0.0; 3],
            width: 96,
            height: 96,
            fov_y_deg: 40.0,
            holdout_every: default_holdout(),
            seed: 0,
        }
    }
}

impl RigSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count < 2 {
            return Err(Error::invalid(format!("rig needs at least 2 cameras, got {}", self.count)));
        }
        if !(self.radius > 0.0) {
            return Err(Error::invalid(format!("rig radius must be positive, got {}", self.radius)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("rig image size must be positive"));
        }
        Ok(())
    }

    fn directions(&self) -> Vec<Vec3> {
        let n = self.count;
        match self.layout {
            RigLayout::Ring => (0..n)
                .map(|i| {
                    let az = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                    let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                    let el = (sign * self.elevation_deg).to_radians();
                    Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
                })
                .collect(),
            RigLayout::Sphere => {
                let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
                (0..n)
                    .map(|i| {
                        let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                        let r = (1.0 - z * z).sqrt();
                        let phi = golden * i as f64;
                        Vec3::new(r * phi.cos(), r * phi.sin(), z)
                    })
                    .collect()
            }
            RigLayout::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                (0..n)
                    .map(|_| loop {
                        let v = Vec3::new(
                            rng.random_range(-1.0..1.0),
                            rng.random_range(-1.0..1.0),
                            rng.random_range(-1.0..1.0),
                        );
                        let l = v.norm();
                        if l > 1e-3 && l <= 1.0 {
                            break v / l;
                        }
                    })
                    .collect()
            }
        }
    }

    /// Whether camera `i` is reserved for evaluation.
    pub fn is_held_out(&self, i: usize) -> bool {
        self.holdout_every > 0 && i % self.holdout_every == 0
    }

    pub fn cameras(&self) -> Result<Vec<Camera>> {
        self.validate()?;
        let center = Vec3::from(self.center);
        self.directions()
            .into_iter()
            .map(|d| Camera::look_at(center + d * self.radius, center, self.fov_y_deg.to_radians(), self.width, self.height))
            .collect()
    }
}

/// Posed reference images with a train/held-out split.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub cameras: Vec<Camera>,
    pub images: Vec<RgbBuffer>,
    pub held_out: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    views: Vec<ManifestView>,
}

#[derive(Serialize, Deserialize)]
struct ManifestView {
    camera: Camera,
    held_out: bool,
    image: String,
}

pub fn render_view(scene: &PrimitiveScene, cam: &Camera) -> RgbBuffer {
    let w = cam.width;
    let pixels: Vec<_> = (0..cam.pixel_count())
        .into_par_iter()
        .map(|i| {
            let (x, y) = ((i % w as usize) as u32, (i / w as usize) as u32);
            scene.trace_ground_truth(&cam.center_ray(x, y).expect("pixel in range"))
        })
        .collect();
    RgbBuffer::from_pixels(w, cam.height, &pixels)
}

pub fn generate_dataset(scene: &PrimitiveScene, rig: &RigSpec) -> Result<Dataset> {
    scene.validate()?;
    let cameras = rig.cameras()?;
    let images = cameras.iter().map(|c| render_view(scene, c)).collect();
    let held_out = (0..cameras.len()).map(|i| rig.is_held_out(i)).collect();
    Dataset::new(cameras, images, held_out)
}

impl Dataset {
    pub fn new(cameras: Vec<Camera>, images: Vec<RgbBuffer>, held_out: Vec<bool>) -> Result<Self> {
        if cameras.len() != images.len() || cameras.len() != held_out.len() {
            return Err(Error::DimensionMismatch("camera, image and split counts differ".into()));
        }
        for (i, (c, img)) in cameras.iter().zip(&images).enumerate() {
            if c.width != img.width || c.height != img.height {
                return Err(Error::DimensionMismatch(format!(
                    "view {i}: camera is {}x{} but image is {}x{}",
                    c.width, c.height, img.width, img.height
                )));
            }
        }
        Ok(Dataset {
            cameras,
            images,
            held_out,
        })
    }

    pub fn train_views(&self) -> Vec<usize> {
        (0..self.cameras.len()).filter(|&i| !self.held_out[i]).collect()
    }

    pub fn test_views(&self) -> Vec<usize> {
        (0..self.cameras.len()).filter(|&i| self.held_out[i]).collect()
    }

    /// Total number of training pixels (one ray per pixel).
    pub fn train_pixel_count(&self) -> usize {
        self.train_views().iter().map(|&i| self.cameras[i].pixel_count()).sum()
    }

    pub fn mean_train_color(&self) -> crate::geom::Rgb {
        let views = self.train_views();
        let mut m = crate::geom::Rgb::zeros();
        for &i in &views {
            m += self.images[i].mean();
        }
        m / views.len().max(1) as f64
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let img_dir = dir.join("images");
        fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
        let mut views = Vec::new();
        for (i, (cam, img)) in self.cameras.iter().zip(&self.images).enumerate() {
            let stem = format!("{i:03}");
            img.save_png(&img_dir.join(format!("{stem}.png")))?;
            img.save_float(&img_dir.join(format!("{stem}.rgbf")))?;
            views.push(ManifestView {
                camera: cam.clone(),
                held_out: self.held_out[i],
                image: format!("images/{stem}.rgbf"),
            });
        }
        let text = toml::to_string(&Manifest { views }).map_err(|e| Error::invalid(e.to_string()))?;
        let path = dir.join("dataset.toml");
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("dataset.toml");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = toml::from_str(&text).map_err(|e| Error::Config {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let mut cameras = Vec::new();
        let mut images = Vec::new();
        let mut held_out = Vec::new();
        for v in manifest.views {
            v.camera.validate()?;
            images.push(RgbBuffer::load_float(&dir.join(&v.image))?);
            cameras.push(v.camera);
            held_out.push(v.held_out);
        }
        Dataset::new(cameras, images, held_out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor::scene::{Albedo, Placement, Primitive, Shape};

    fn ring(count: usize, size: u32) -> RigSpec {
        RigSpec {
            layout: RigLayout::Ring,
            count,
            radius: 4.0,
            elevation_deg: 20.0,
            center: [0.0; 3],
            width: size,
            height: size,
            fov_y_deg: 40.0,
            holdout_every: 8,
            seed: 0,
        }
    }

    #[test]
    fn ring_of_eight_has_right_dims() {
        let scene = PrimitiveScene::empty([0.2, 0.3, 0.4]);
        let d = generate_dataset(&scene, &ring(8, 64)).unwrap();
        assert_eq!(d.images.len(), 8);
        assert!(d.images.iter().all(|i| i.width == 64 && i.height == 64));
        assert_eq!(d.test_views(), vec![0]);
    }

    #[test]
    fn empty_scene_is_environment_everywhere() {
        let scene = PrimitiveScene::empty([0.2, 0.3, 0.4]);
        let d = generate_dataset(&scene, &ring(3, 16)).unwrap();
        let env = [0.2f32, 0.3, 0.4];
        assert!(d.images.iter().all(|img| img.data.chunks(3).all(|p| p == env)));
    }

    #[test]
    fn degenerate_rigs_rejected() {
        let scene = PrimitiveScene::empty([0.0; 3]);
        let mut r = ring(8, 8);
        r.radius = 0.0;
        assert!(generate_dataset(&scene, &r).is_err());
        assert!(generate_dataset(&scene, &ring(1, 8)).is_err());
    }

    #[test]
    fn sphere_silhouette_area_matches_projection() {
        let radius = 0.8;
        let scene = PrimitiveScene {
            primitives: vec![Primitive::new(Shape::Sphere { radius }, Placement::default(), Albedo::uniform([1.0; 3]))],
            environment: [0.0; 3],
            light: None,
        };
        let rig = ring(2, 128);
        let d = generate_dataset(&scene, &rig).unwrap();
        let f = d.cameras[0].focal();
        let expected = std::f64::consts::PI * (radius * f / rig.radius).powi(2);
        for img in &d.images {
            let lit = img.data.chunks(3).filter(|p| p[0] > 0.5).count() as f64;
            assert!((lit - expected).abs() / expected < 0.10, "lit {lit} expected {expected}");
        }
    }

    #[test]
    fn dataset_is_reproducible_and_persists() {
        let scene = PrimitiveScene {
            primitives: vec![Primitive::new(
                Shape::Box { half_extents: [0.5, 0.3, 0.4] },
                Placement::default(),
                Albedo::uniform([0.3, 0.6, 0.9]),
            )],
            environment: [0.1; 3],
            light: None,
        };
        let mut rig = ring(9, 20);
        rig.layout = RigLayout::Sphere;
        let a = generate_dataset(&scene, &rig).unwrap();
        let b = generate_dataset(&scene, &rig).unwrap();
        assert_eq!(a, b);
        let dir = tempfile::tempdir().unwrap();
        a.save(dir.path()).unwrap();
        let loaded = Dataset::load(dir.path()).unwrap();
        assert_eq!(loaded, a);
        assert!(a.mean_train_color().iter().all(|&c| c > 0.0));
    }
}
