//! Experiment description read from TOML: scene, camera rig, training and
//! evaluation settings.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Aabb, Vec3};
use crate::mesh::{icosphere, Mesh};
use crate::sensor::scene::{PrimitiveScene, Shape};
use crate::sensor::RigSpec;
use crate::train::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Surface level for rendering and extraction.
    pub level: f64,
    /// Levels compared by the stability report.
    pub levels: Vec<f64>,
    pub chamfer_points: usize,
    pub chamfer_seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            level: 0.5,
            levels: vec![0.01, 0.1, 0.5, 0.9, 0.99],
            chamfer_points: 100_000,
            chamfer_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub bounds: Aabb,
    pub scene: PrimitiveScene,
    pub rig: RigSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl ExperimentConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate().map_err(|e| Error::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::parse(&text, path)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if !self.bounds.is_valid() {
            return Err(Error::invalid(format!("invalid bounds {:?}", self.bounds)));
        }
        self.scene.validate()?;
        self.rig.validate()?;
        self.train.validate()?;
        let e = &self.eval;
        if !(e.level > 0.0 && e.level < 1.0) || e.levels.iter().any(|&l| !(l > 0.0 && l < 1.0)) {
            return Err(Error::invalid("evaluation levels must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Surface mesh of the scene when it consists of spheres only.
    pub fn analytic_mesh(&self, subdivisions: u32) -> Option<Mesh> {
        let parts: Option<Vec<Mesh>> = self
            .scene
            .primitives
            .iter()
            .map(|p| match p.shape {
                Shape::Sphere { radius } => Some(icosphere(Vec3::from(p.placement.translation), radius, subdivisions)),
                _ => None,
            })
            .collect();
        parts.filter(|p| !p.is_empty()).map(|p| Mesh::merged(&p))
    }
}
