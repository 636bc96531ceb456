//! Held-out evaluation of a trained model against a dataset.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SceneModel;
use crate::raster::RgbBuffer;
use crate::render::{mse, psnr_from_mse, render_surface, render_volume, RenderStats, Rendered};
use crate::sensor::{Camera, Dataset};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RenderMode {
    Surface { level: f64 },
    Volume,
}

impl RenderMode {
    pub fn render(&self, model: &SceneModel, cam: &Camera, step: f64) -> Result<Rendered> {
        match *self {
            RenderMode::Surface { level } => render_surface(model, cam, level, step),
            RenderMode::Volume => render_volume(model, cam, step),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeldOut {
    /// Mean squared error over all held-out pixels and channels.
    pub mse: f64,
    /// PSNR of `mse`.
    pub psnr: f64,
    pub per_view_psnr: Vec<f64>,
    pub stats: RenderStats,
}

/// Renders every held-out view and compares it with the ground truth.
pub fn evaluate_heldout(model: &SceneModel, data: &Dataset, mode: RenderMode, step: f64) -> Result<HeldOut> {
    let views = data.test_views();
    if views.is_empty() {
        return Err(Error::invalid("dataset has no held-out views"));
    }
    let mut total = 0.0;
    let mut per_view_psnr = Vec::with_capacity(views.len());
    let mut stats = RenderStats::default();
    let mut pixels = 0usize;
    for &v in &views {
        let r = mode.render(model, &data.cameras[v], step)?;
        let m = mse(&r.image, &data.images[v])?;
        let n = r.image.pixel_count();
        total += m * n as f64;
        pixels += n;
        per_view_psnr.push(psnr_from_mse(m));
        stats += r.stats;
    }
    let mse = total / pixels as f64;
    Ok(HeldOut {
        mse,
        psnr: psnr_from_mse(mse),
        per_view_psnr,
        stats,
    })
}

/// Renders of every held-out view, paired with the view index.
pub fn render_heldout(model: &SceneModel, data: &Dataset, mode: RenderMode, step: f64) -> Result<Vec<(usize, RgbBuffer)>> {
    data.test_views()
        .into_iter()
        .map(|v| Ok((v, mode.render(model, &data.cameras[v], step)?.image)))
        .collect()
}
