use serde::{Deserialize, Serialize};

use crate::background::BackgroundStrategy;
use crate::error::{Error, Result};
use crate::field::sh::MAX_DEGREE;
use crate::loss::ColorMetric;
use crate::regularize::{LaplacianSchedule, WarmStartSchedule};

/// Near-empty initial occupancy.
pub const SPARSE_INIT_ALPHA: f64 = 0.05;
/// Initial occupancy of a densely initialized scene.
pub const DENSE_INIT_ALPHA: f64 = 0.95;

/// Per-ray objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Blend per-sample losses (surface-like fields).
    #[default]
    Blended,
    /// Loss of the alpha-composited color.
    Nerf,
}

impl Objective {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "blended" | "ours" => Ok(Objective::Blended),
            "nerf" => Ok(Objective::Nerf),
            _ => Err(Error::invalid(format!("unknown objective {s:?}"))),
        }
    }
}

/// Late-phase volumetric relaxation of high-loss cells.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RelaxConfig {
    pub enabled: bool,
    /// First relaxed iteration; `None` means half of the run.
    pub after_iter: Option<u64>,
    /// Cells above this quantile of the visited cells' loss average relax.
    pub quantile: f64,
    pub ema_decay: f64,
    /// Iterations between threshold recalibrations.
    pub calibrate_every: u64,
}

impl Default for RelaxConfig {
    fn default() -> Self {
        RelaxConfig {
            enabled: false,
            after_iter: None,
            quantile: 0.9,
            ema_decay: 0.99,
            calibrate_every: 100,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-15,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: u64,
    pub rays_per_batch: usize,
    /// Grid cells per axis.
    pub resolution: usize,
    pub sh_degree: u8,
    /// Marching step as a fraction of the bounds diagonal.
    pub step_fraction: f64,
    pub lr_occupancy: f64,
    pub lr_color: f64,
    pub lr_environment: f64,
    pub metric: ColorMetric,
    pub objective: Objective,
    pub strategy: BackgroundStrategy,
    pub laplacian: LaplacianSchedule,
    pub warm_start: WarmStartSchedule,
    pub relax: RelaxConfig,
    pub adam: AdamConfig,
    pub dense_init: bool,
    /// Random sub-pixel ray offsets instead of pixel centers.
    pub jitter: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 2000,
            rays_per_batch: 2048,
            resolution: 64,
            sh_degree: 1,
            step_fraction: 1.0 / 256.0,
            lr_occupancy: 0.1,
            lr_color: 0.02,
            lr_environment: 0.01,
            metric: ColorMetric::L2,
            objective: Objective::Blended,
            strategy: BackgroundStrategy::FreeFlight,
            laplacian: LaplacianSchedule::default(),
            warm_start: WarmStartSchedule::default(),
            relax: RelaxConfig::default(),
            adam: AdamConfig::default(),
            dense_init: false,
            jitter: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if self.iterations == 0 || self.rays_per_batch == 0 || self.resolution == 0 {
            return bad("iterations, rays_per_batch and resolution must be positive".into());
        }
        if self.resolution > 1024 {
            return bad(format!("resolution {} too large", self.resolution));
        }
        if self.sh_degree > MAX_DEGREE {
            return bad(format!("sh_degree {} exceeds {MAX_DEGREE}", self.sh_degree));
        }
        if !(self.step_fraction > 0.0 && self.step_fraction <= 0.5) {
            return bad(format!("step_fraction {} outside (0, 0.5]", self.step_fraction));
        }
        for (name, lr) in [
            ("lr_occupancy", self.lr_occupancy),
            ("lr_color", self.lr_color),
            ("lr_environment", self.lr_environment),
        ] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return bad(format!("{name} must be non-negative, got {lr}"));
            }
        }
        let a = &self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return bad(format!("invalid adam settings {a:?}"));
        }
        let r = &self.relax;
        if !((0.0..=1.0).contains(&r.quantile) && (0.0..1.0).contains(&r.ema_decay) && r.calibrate_every > 0) {
            return bad(format!("invalid relax settings {r:?}"));
        }
        self.strategy.validate()?;
        self.laplacian.validate()?;
        self.warm_start.validate()
    }

    pub fn relax_start(&self) -> Option<u64> {
        self.relax
            .enabled
            .then(|| self.relax.after_iter.unwrap_or(self.iterations / 2))
    }

    pub fn init_alpha(&self) -> f64 {
        if self.dense_init {
            DENSE_INIT_ALPHA
        } else {
            SPARSE_INIT_ALPHA
        }
    }
}
