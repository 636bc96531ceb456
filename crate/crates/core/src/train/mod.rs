//! The optimization loop: ray batches, hybrid loss, regularizers, Adam.
//!
//! Each step draws its randomness from `(seed, iteration)` alone, and
//! gradients are scattered in ray order after a parallel forward/backward,
//! so runs are bit-identical for any thread count and resume exactly from a
//! checkpoint.

pub mod adam;
pub mod checkpoint;
pub mod config;

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use adam::Moments;
pub use checkpoint::{Checkpoint, OptimizerState};
pub use config::{AdamConfig, Objective, RelaxConfig, TrainConfig, DENSE_INIT_ALPHA, SPARSE_INIT_ALPHA};

use crate::background::effective_alphas;
use crate::error::{Error, Result};
use crate::field::{GridSpec, OccupancyField, RadianceGrid, SceneModel};
use crate::geom::{Aabb, Rgb, Vec3};
use crate::loss::{mixed_ray_loss, nerf_loss_ray, RayLoss, RelaxedState};
use crate::march::{march, transmittance, RaySamples, SampleBatch};
use crate::regularize::{clamp_occupancy, laplacian_penalty, schedule_weight};
use crate::render::psnr_from_mse;
use crate::sensor::{Dataset, Ray};

/// Samples with free-flight weight `w * alpha` above this feed the Laplacian.
pub const LAPLACIAN_SAMPLE_WEIGHT: f64 = 1e-3;

/// Fresh fields: uniform occupancy, mid-gray colors, and the given environment.
pub fn init_fields(cfg: &TrainConfig, bounds: Aabb, environment: Rgb) -> SceneModel {
    let grid = GridSpec::cubic(cfg.resolution, bounds);
    SceneModel {
        occupancy: OccupancyField::new(grid, cfg.init_alpha()),
        radiance: RadianceGrid::new(grid, cfg.sh_degree, 0.5),
        environment,
    }
}

/// Marching step for a model under `cfg`.
pub fn march_step(cfg: &TrainConfig, bounds: &Aabb) -> f64 {
    bounds.diagonal() * cfg.step_fraction
}

/// Summary of one optimization step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub iteration: u64,
    /// Mean per-ray loss, regularizer excluded.
    pub loss: f64,
    /// Weighted Laplacian penalty.
    pub laplacian: f64,
    /// PSNR of the batch's alpha-composited colors.
    pub batch_psnr: f64,
    pub relaxed: bool,
    pub flagged_fraction: f64,
    pub skipped: usize,
}

impl fmt::Display for StepReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "iter={} loss={:.6e} laplacian={:.6e} psnr={:.3} relaxed={} flagged={:.4} skipped={}",
            self.iteration, self.loss, self.laplacian, self.batch_psnr, self.relaxed, self.flagged_fraction, self.skipped
        )
    }
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub state: Checkpoint,
    step: f64,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, bounds: Aabb, data: &Dataset) -> Result<Self> {
        cfg.validate()?;
        if !bounds.is_valid() {
            return Err(Error::invalid(format!("invalid scene bounds {bounds:?}")));
        }
        if data.train_views().is_empty() {
            return Err(Error::invalid("dataset has no training views"));
        }
        let model = init_fields(&cfg, bounds, data.mean_train_color());
        let state = Checkpoint {
            iteration: 0,
            relax: RelaxedState::new(model.occupancy.grid, cfg.relax.ema_decay),
            optimizer: OptimizerState::zeros(&model),
            model,
        };
        Trainer::resume(cfg, state)
    }

    pub fn resume(cfg: TrainConfig, state: Checkpoint) -> Result<Self> {
        cfg.validate()?;
        if state.model.radiance.sh_degree != cfg.sh_degree || state.model.occupancy.grid.resolution != [cfg.resolution; 3] {
            return Err(Error::DimensionMismatch("checkpoint fields do not match the training config".into()));
        }
        let step = march_step(&cfg, &state.model.occupancy.grid.bounds);
        Ok(Trainer { cfg, state, step })
    }

    pub fn model(&self) -> &SceneModel {
        &self.state.model
    }

    pub fn iteration(&self) -> u64 {
        self.state.iteration
    }

    pub fn march_step(&self) -> f64 {
        self.step
    }

    fn relax_active(&self, i: u64) -> bool {
        self.cfg.relax_start().is_some_and(|s| i >= s) && self.state.relax.threshold.is_some()
    }

    fn sample_rays(&self, data: &Dataset, i: u64) -> Vec<(Ray, Rgb)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(i);
        let views = data.train_views();
        (0..self.cfg.rays_per_batch)
            .map(|_| {
                let v = views[rng.random_range(0..views.len())];
                let cam = &data.cameras[v];
                let (x, y) = (rng.random_range(0..cam.width), rng.random_range(0..cam.height));
                let jitter = if self.cfg.jitter {
                    (rng.random::<f64>(), rng.random::<f64>())
                } else {
                    (0.5, 0.5)
                };
                let ray = cam.pixel_ray(x, y, jitter).expect("pixel sampled inside the image");
                (ray, data.images[v].get(x, y))
            })
            .collect()
    }

    fn ray_loss(&self, s: &RaySamples, relaxed: bool) -> Result<RayLoss> {
        let cfg = &self.cfg;
        match cfg.objective {
            Objective::Nerf => nerf_loss_ray(&s.alphas, &s.colors, &s.target, cfg.metric),
            Objective::Blended => {
                let weights = effective_alphas(&cfg.strategy, &s.alphas, &s.colors, &s.target, cfg.metric);
                let mask: Option<Vec<bool>> = relaxed.then(|| {
                    let relax = &self.state.relax;
                    let mut m: Vec<bool> = s
                        .positions
                        .iter()
                        .map(|p| relax.grid.cell_of(p).is_some_and(|c| relax.is_flagged(c)))
                        .collect();
                    m.push(false);
                    m
                });
                mixed_ray_loss(&s.alphas, &s.colors, &s.target, cfg.metric, &weights, mask.as_deref())
            }
        }
    }

    /// One optimization step on a fresh random batch.
    pub fn train_step(&mut self, data: &Dataset) -> Result<StepReport> {
        let i = self.state.iteration;
        let rays = self.sample_rays(data, i);
        let relaxed = self.relax_active(i);
        let model = &self.state.model;
        let step = self.step;
        let results: Vec<Result<(RaySamples, RayLoss)>> = rays
            .par_iter()
            .enumerate()
            .map(|(k, (ray, target))| {
                let mut s = march(&model.occupancy, &model.radiance, ray, step, model.environment);
                s.ray_id = k;
                s.target = *target;
                let l = self.ray_loss(&s, relaxed)?;
                Ok((s, l))
            })
            .collect();
        let mut batch = SampleBatch {
            rays: Vec::with_capacity(results.len()),
            step,
        };
        let mut losses = Vec::with_capacity(results.len());
        for r in results {
            let (s, l) = r?;
            if !l.loss.is_finite() {
                return Err(Error::NonFiniteLoss { iteration: i, ray: s.ray_id });
            }
            batch.rays.push(s);
            losses.push(l);
        }

        let n = batch.rays.len() as f64;
        let scale = 1.0 / n;
        let model = &mut self.state.model;
        model.occupancy.reset_grad();
        model.radiance.reset_grad();
        let mut env_grad = Rgb::zeros();
        let mut sq_err = 0.0;
        let mut lap_points: Vec<Vec3> = Vec::new();
        let lap_on = self.cfg.laplacian.is_enabled();
        for (s, l) in batch.rays.iter().zip(&losses) {
            let w = transmittance(&s.alphas);
            let mut composite = Rgb::zeros();
            for j in 0..s.alphas.len() {
                composite += s.colors[j] * (w[j] * s.alphas[j]);
            }
            sq_err += (composite - s.target).norm_squared() / 3.0;
            for (j, st) in s.stencils.iter().enumerate() {
                let a = s.alphas[j];
                model.occupancy.scatter_stencil_logit(st, l.d_alpha[j] * scale * a * (1.0 - a));
                model.radiance.scatter_stencil_color(st, &s.basis, &(l.d_color[j] * scale));
                if lap_on && w[j] * a > LAPLACIAN_SAMPLE_WEIGHT {
                    lap_points.push(s.positions[j]);
                }
            }
            env_grad += l.d_color[s.terminal_index()] * scale;
        }

        let mut laplacian = 0.0;
        if lap_on && !lap_points.is_empty() {
            let weight = schedule_weight(&self.cfg.laplacian, i);
            let extent = model.occupancy.grid.bounds.extent().max();
            let eps = extent * self.cfg.laplacian.eps_fraction;
            let rep = laplacian_penalty(&mut model.occupancy, &lap_points, eps, weight)?;
            laplacian = weight * rep.penalty;
        }

        let t = i + 1;
        let cfg = &self.cfg;
        let opt = &mut self.state.optimizer;
        adam::adam_step_f32(&cfg.adam, &mut model.occupancy.logits, &model.occupancy.grad, &mut opt.occupancy, cfg.lr_occupancy, t);
        adam::adam_step_f32(&cfg.adam, &mut model.radiance.coeffs, &model.radiance.grad, &mut opt.color, cfg.lr_color, t);
        let mut env = [model.environment.x, model.environment.y, model.environment.z];
        adam::adam_step_f64(&cfg.adam, &mut env, env_grad.as_slice(), &mut opt.environment, cfg.lr_environment, t);
        model.environment = Rgb::from(env).map(|c| c.clamp(0.0, 1.0));
        model.occupancy.reset_grad();
        model.radiance.reset_grad();
        clamp_occupancy(&mut model.occupancy, i, &cfg.warm_start);

        if let Some(start) = cfg.relax_start() {
            let locals: Vec<Vec<f64>> = losses.iter().map(|l| l.local.clone()).collect();
            self.state.relax.update_challenge(&batch, &locals);
            if t >= start && (t - start) % cfg.relax.calibrate_every == 0 {
                self.state.relax.calibrate(cfg.relax.quantile);
            }
        }
        self.state.iteration = t;

        let loss = losses.iter().map(|l| l.loss).sum::<f64>() / n;
        Ok(StepReport {
            iteration: i,
            loss,
            laplacian,
            batch_psnr: psnr_from_mse(sq_err / n),
            relaxed,
            flagged_fraction: if cfg.relax.enabled { self.state.relax.flagged_fraction() } else { 0.0 },
            skipped: losses.iter().map(|l| l.skipped).sum(),
        })
    }

    /// Runs until `cfg.iterations` steps have completed, calling `on_step`
    /// after each one.
    pub fn run(&mut self, data: &Dataset, mut on_step: impl FnMut(&Trainer, &StepReport) -> Result<()>) -> Result<()> {
        while self.state.iteration < self.cfg.iterations {
            let rep = self.train_step(data)?;
            on_step(self, &rep)?;
        }
        Ok(())
    }
}

/// Trains from scratch and returns the final state.
pub fn train(data: &Dataset, cfg: &TrainConfig, bounds: Aabb) -> Result<Checkpoint> {
    let mut t = Trainer::new(cfg.clone(), bounds, data)?;
    t.run(data, |_, _| Ok(()))?;
    Ok(t.state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor::scene::{Albedo, Placement, Primitive, PrimitiveScene, Shape};
    use crate::sensor::{generate_dataset, RigLayout, RigSpec};

    fn tiny_data() -> Dataset {
        let scene = PrimitiveScene {
            primitives: vec![Primitive::new(
                Shape::Sphere { radius: 0.5 },
                Placement::at([0.0; 3]),
                Albedo::uniform([0.9, 0.3, 0.2]),
            )],
            environment: [0.8, 0.8, 0.8],
            light: None,
        };
        let rig = RigSpec {
            layout: RigLayout::Sphere,
            count: 6,
            radius: 3.0,
            width: 16,
            height: 16,
            fov_y_deg: 40.0,
            holdout_every: 3,
            ..RigSpec::default()
        };
        generate_dataset(&scene, &rig).unwrap()
    }

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            iterations: 6,
            rays_per_batch: 64,
            resolution: 8,
            ..TrainConfig::default()
        }
    }

    fn bounds() -> Aabb {
        Aabb::cube([0.0; 3], 1.0)
    }

    #[test]
    fn init_matches_prior() {
        let cfg = tiny_cfg();
        let m = init_fields(&cfg, bounds(), Rgb::repeat(0.3));
        assert!((m.occupancy.eval_alpha(&Vec3::new(0.1, 0.2, 0.3)) - 0.05).abs() < 1e-7);
        let c = m.radiance.eval_color(&Vec3::zeros(), &Vec3::x()).unwrap();
        assert!((c - Rgb::repeat(0.5)).norm() < 1e-7);
        let dense = init_fields(&TrainConfig { dense_init: true, ..cfg }, bounds(), Rgb::zeros());
        assert!((dense.occupancy.eval_alpha(&Vec3::zeros()) - 0.95).abs() < 1e-6);
    }

    #[test]
    fn zero_rates_leave_parameters() {
        let data = tiny_data();
        let cfg = TrainConfig {
            lr_occupancy: 0.0,
            lr_color: 0.0,
            lr_environment: 0.0,
            ..tiny_cfg()
        };
        let mut t = Trainer::new(cfg, bounds(), &data).unwrap();
        let before = t.model().clone();
        t.run(&data, |_, _| Ok(())).unwrap();
        assert_eq!(t.model(), &before);
        assert_eq!(t.iteration(), 6);
    }

    #[test]
    fn deterministic_and_resumable() {
        let data = tiny_data();
        let cfg = TrainConfig {
            relax: RelaxConfig {
                enabled: true,
                after_iter: Some(3),
                calibrate_every: 1,
                ..Default::default()
            },
            ..tiny_cfg()
        };
        let a = train(&data, &cfg, bounds()).unwrap();
        let b = train(&data, &cfg, bounds()).unwrap();
        assert_eq!(a, b);

        let mut t = Trainer::new(TrainConfig { iterations: 4, ..cfg.clone() }, bounds(), &data).unwrap();
        t.run(&data, |_, _| Ok(())).unwrap();
        let mut bytes = Vec::new();
        t.state.write(&mut bytes).unwrap();
        let snap = Checkpoint::read(&mut bytes.as_slice()).unwrap();
        assert_eq!(snap, t.state);
        let mut resumed = Trainer::resume(cfg, snap).unwrap();
        resumed.run(&data, |_, _| Ok(())).unwrap();
        assert_eq!(resumed.state, a);
    }

    #[test]
    fn relax_phase_gated() {
        let data = tiny_data();
        let off = TrainConfig { iterations: 3, ..tiny_cfg() };
        let on = TrainConfig {
            relax: RelaxConfig {
                enabled: true,
                after_iter: Some(3),
                ..Default::default()
            },
            ..off.clone()
        };
        let a = train(&data, &off, bounds()).unwrap();
        let b = train(&data, &on, bounds()).unwrap();
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn warm_start_cap_holds() {
        let data = tiny_data();
        let cfg = TrainConfig {
            lr_occupancy: 1.0,
            warm_start: crate::regularize::WarmStartSchedule { duration: 20, ..Default::default() },
            ..tiny_cfg()
        };
        let mut t = Trainer::new(cfg.clone(), bounds(), &data).unwrap();
        t.run(&data, |tr, rep| {
            assert!(tr.model().occupancy.max_vertex_alpha() <= cfg.warm_start.alpha_max(rep.iteration) + 1e-6);
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn rejects_mismatched_resume() {
        let data = tiny_data();
        let t = Trainer::new(tiny_cfg(), bounds(), &data).unwrap();
        let other = TrainConfig { resolution: 9, ..tiny_cfg() };
        assert!(matches!(Trainer::resume(other, t.state), Err(Error::DimensionMismatch(_))));
    }
}
