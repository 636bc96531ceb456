//! Surface and volumetric rendering of a [`SceneModel`], plus image metrics.

use std::ops::AddAssign;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::SceneModel;
use crate::geom::Rgb;
use crate::march::{intersect_bounds, sample_ts};
use crate::raster::RgbBuffer;
use crate::sensor::{Camera, Ray};

/// PSNR reported for identical images.
pub const PSNR_CAP: f64 = 99.0;

/// Work counters for one rendered image.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RenderStats {
    pub rays: u64,
    /// Sample positions visited.
    pub samples: u64,
    pub alpha_evals: u64,
    pub color_evals: u64,
}

impl RenderStats {
    pub fn samples_per_ray(&self) -> f64 {
        self.samples as f64 / self.rays.max(1) as f64
    }

    /// Occupancy plus color queries per ray.
    pub fn evals_per_ray(&self) -> f64 {
        (self.alpha_evals + self.color_evals) as f64 / self.rays.max(1) as f64
    }
}

impl AddAssign for RenderStats {
    fn add_assign(&mut self, o: Self) {
        self.rays += o.rays;
        self.samples += o.samples;
        self.alpha_evals += o.alpha_evals;
        self.color_evals += o.color_evals;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rendered {
    pub image: RgbBuffer,
    pub stats: RenderStats,
}

fn check_step(step: f64) -> Result<()> {
    if step > 0.0 && step.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("render step must be positive, got {step}")))
    }
}

/// Color of the first sample whose occupancy exceeds `threshold`, or the
/// environment if none does. Marching stops at the hit.
pub fn trace_surface(model: &SceneModel, ray: &Ray, threshold: f64, step: f64) -> (Rgb, RenderStats) {
    let mut st = RenderStats { rays: 1, ..Default::default() };
    let occ = &model.occupancy;
    if let Some((t0, t1)) = intersect_bounds(ray, &occ.grid.bounds) {
        for t in sample_ts(t0, t1, step) {
            let Some(s) = occ.grid.stencil(&ray.at(t)) else { continue };
            st.samples += 1;
            st.alpha_evals += 1;
            if occ.alpha_at(&s) > threshold {
                st.color_evals += 1;
                let basis = model.radiance.basis(&ray.direction);
                return (model.radiance.color_at(&s, &basis), st);
            }
        }
    }
    (model.environment, st)
}

/// Alpha-composited color `sum_i w_i alpha_i L_i + w_terminal * env`, without
/// early termination.
pub fn trace_volume(model: &SceneModel, ray: &Ray, step: f64) -> (Rgb, RenderStats) {
    let mut st = RenderStats { rays: 1, ..Default::default() };
    let occ = &model.occupancy;
    let basis = model.radiance.basis(&ray.direction);
    let mut color = Rgb::zeros();
    let mut trans = 1.0;
    if let Some((t0, t1)) = intersect_bounds(ray, &occ.grid.bounds) {
        for t in sample_ts(t0, t1, step) {
            let Some(s) = occ.grid.stencil(&ray.at(t)) else { continue };
            st.samples += 1;
            st.alpha_evals += 1;
            st.color_evals += 1;
            let a = occ.alpha_at(&s);
            color += trans * a * model.radiance.color_at(&s, &basis);
            trans *= 1.0 - a;
        }
    }
    (color + trans * model.environment, st)
}

fn render_with(cam: &Camera, trace: impl Fn(&Ray) -> (Rgb, RenderStats) + Sync) -> Result<Rendered> {
    cam.validate()?;
    let rows: Vec<(Vec<Rgb>, RenderStats)> = (0..cam.height)
        .into_par_iter()
        .map(|y| {
            let mut st = RenderStats::default();
            let row = (0..cam.width)
                .map(|x| {
                    let ray = cam.center_ray(x, y).expect("pixel inside image");
                    let (c, s) = trace(&ray);
                    st += s;
                    c
                })
                .collect();
            (row, st)
        })
        .collect();
    let mut stats = RenderStats::default();
    let mut pixels = Vec::with_capacity(cam.pixel_count());
    for (row, st) in rows {
        pixels.extend(row);
        stats += st;
    }
    Ok(Rendered {
        image: RgbBuffer::from_pixels(cam.width, cam.height, &pixels),
        stats,
    })
}

pub fn render_surface(model: &SceneModel, cam: &Camera, threshold: f64, step: f64) -> Result<Rendered> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!("surface threshold {threshold} outside (0, 1)")));
    }
    check_step(step)?;
    render_with(cam, |r| trace_surface(model, r, threshold, step))
}

pub fn render_volume(model: &SceneModel, cam: &Camera, step: f64) -> Result<Rendered> {
    check_step(step)?;
    render_with(cam, |r| trace_volume(model, r, step))
}

pub fn mse(a: &RgbBuffer, b: &RgbBuffer) -> Result<f64> {
    if !a.same_dims(b) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    if a.data.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = a.data.iter().zip(&b.data).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum();
    Ok(sum / a.data.len() as f64)
}

pub fn psnr_from_mse(m: f64) -> f64 {
    if m <= 0.0 {
        PSNR_CAP
    } else {
        (-10.0 * m.log10()).min(PSNR_CAP)
    }
}

/// Peak signal-to-noise ratio for images in `[0, 1]`, capped at [`PSNR_CAP`].
pub fn psnr(a: &RgbBuffer, b: &RgbBuffer) -> Result<f64> {
    mse(a, b).map(psnr_from_mse)
}

/// Surface renders at each level and the PSNR between every pair of them.
/// The diagonal holds [`PSNR_CAP`].
pub fn level_set_stability(model: &SceneModel, cam: &Camera, levels: &[f64], step: f64) -> Result<Vec<Vec<f64>>> {
    let renders = levels
        .iter()
        .map(|&l| render_surface(model, cam, l, step).map(|r| r.image))
        .collect::<Result<Vec<_>>>()?;
    let n = renders.len();
    let mut m = vec![vec![PSNR_CAP; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let p = psnr(&renders[i], &renders[j])?;
            m[i][j] = p;
            m[j][i] = p;
        }
    }
    Ok(m)
}

/// Smallest off-diagonal entry of a pairwise PSNR matrix.
pub fn min_pairwise(m: &[Vec<f64>]) -> f64 {
    let mut best = PSNR_CAP;
    for (i, row) in m.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if i != j {
                best = best.min(v);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{GridSpec, OccupancyField, RadianceGrid};
    use crate::geom::{Aabb, Vec3};

    fn model(logit_at: impl FnMut(&Vec3) -> f64, color: Rgb, env: Rgb) -> SceneModel {
        let g = GridSpec::cubic(32, Aabb::cube([0.0; 3], 1.0));
        SceneModel {
            occupancy: OccupancyField::bake(g.clone(), logit_at),
            radiance: RadianceGrid::bake_rgb(g, |_| color),
            environment: env,
        }
    }

    fn cam() -> Camera {
        Camera::look_at(Vec3::new(0.0, -3.0, 0.5), Vec3::zeros(), 0.7, 24, 20).unwrap()
    }

    /// Plane z < 0.1 fully occupied, with a steep profile.
    fn plane_model() -> SceneModel {
        model(|p| if p.z < 0.1 { 30.0 } else { -30.0 }, Rgb::new(0.2, 0.6, 0.3), Rgb::new(0.9, 0.9, 1.0))
    }

    #[test]
    fn empty_field_shows_environment() {
        let env = Rgb::new(0.3, 0.1, 0.7);
        let m = model(|_| -40.0, Rgb::repeat(0.5), env);
        let want = RgbBuffer::filled(24, 20, env);
        let s = render_surface(&m, &cam(), 0.5, 0.01).unwrap();
        let v = render_volume(&m, &cam(), 0.01).unwrap();
        assert_eq!(s.image, want);
        assert!(psnr(&v.image, &want).unwrap() > 90.0);
    }

    #[test]
    fn opaque_plane_renders_albedo() {
        let m = plane_model();
        let c = cam();
        let s = render_surface(&m, &c, 0.5, 0.01).unwrap();
        let ray = c.center_ray(12, 19).unwrap();
        assert!(ray.direction.z < 0.0);
        assert!((s.image.get(12, 19) - Rgb::new(0.2, 0.6, 0.3)).norm() < 1e-6);
        assert!((s.image.get(12, 0) - m.environment).norm() < 1e-6);
    }

    #[test]
    fn opaque_surface_and_volume_agree() {
        let m = plane_model();
        let s = render_surface(&m, &cam(), 0.5, 0.005).unwrap();
        let v = render_volume(&m, &cam(), 0.005).unwrap();
        assert!(psnr(&s.image, &v.image).unwrap() > 40.0);
        assert!(s.stats.evals_per_ray() < 0.5 * v.stats.evals_per_ray());
        assert!(s.stats.samples_per_ray() < v.stats.samples_per_ray());
    }

    #[test]
    fn half_transparent_slab_blends() {
        // Slab of alpha 0.5 hit by exactly one sample, then empty space.
        let g = GridSpec::cubic(4, Aabb::cube([0.0; 3], 1.0));
        let mut occ = OccupancyField::new(g.clone(), 1e-9);
        let m0 = SceneModel {
            occupancy: occ.clone(),
            radiance: RadianceGrid::bake_rgb(g.clone(), |_| Rgb::new(1.0, 0.0, 0.0)),
            environment: Rgb::new(0.0, 0.0, 1.0),
        };
        for l in &mut occ.logits {
            *l = 0.0;
        }
        let m = SceneModel { occupancy: occ, ..m0 };
        let ray = Ray::new(Vec3::new(0.0, 0.0, -5.0), Vec3::z());
        // One sample: step longer than the box.
        let (c, st) = trace_volume(&m, &ray, 3.0);
        assert_eq!(st.samples, 1);
        assert!((c - Rgb::new(0.5, 0.0, 0.5)).norm() < 1e-12);
    }

    #[test]
    fn psnr_arithmetic() {
        let a = RgbBuffer::filled(4, 4, Rgb::repeat(0.5));
        let b = RgbBuffer::filled(4, 4, Rgb::repeat(0.6));
        let c = RgbBuffer::filled(4, 4, Rgb::repeat(0.5 + 0.001f64.sqrt()));
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-5);
        assert!((psnr(&a, &c).unwrap() - 30.0).abs() < 1e-4);
        assert!((psnr_from_mse(0.01) - 20.0).abs() < 1e-12);
        assert!(matches!(psnr(&a, &RgbBuffer::new(4, 5)), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn heaviside_field_is_level_stable() {
        let m = model(|p| if p.norm() < 0.6 { 1e4 } else { -1e4 }, Rgb::new(0.8, 0.2, 0.1), Rgb::repeat(1.0));
        let levels = [0.01, 0.1, 0.5, 0.9, 0.99];
        let mat = level_set_stability(&m, &cam(), &levels, 0.01).unwrap();
        assert_eq!(mat.len(), 5);
        assert_eq!(min_pairwise(&mat), PSNR_CAP);
        let single = level_set_stability(&m, &cam(), &[0.5], 0.01).unwrap();
        assert_eq!(single, vec![vec![PSNR_CAP]]);
    }

    #[test]
    fn rejects_bad_arguments() {
        let m = plane_model();
        assert!(render_surface(&m, &cam(), 1.0, 0.01).is_err());
        assert!(render_surface(&m, &cam(), 0.5, 0.0).is_err());
        assert!(render_volume(&m, &cam(), -1.0).is_err());
    }
}
