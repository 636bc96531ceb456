//! Training losses with hand-written backward passes.
//!
//! All per-ray routines take the marched occupancies and colors with the
//! terminal sample last (`alphas.last() == 1`).

pub mod metric;
pub mod radiance;
pub mod relaxed;

pub use metric::ColorMetric;
pub use radiance::{nerf_loss_ray, radiance_field_loss_ray, suffix_expectation};
pub use relaxed::{relaxed_loss_ray, RelaxedFrozen, RelaxedState};

use crate::error::{Error, Result};
use crate::geom::Rgb;
use crate::march::{transmittance, SampleBatch};

/// Value and gradients of a loss over one ray.
#[derive(Clone, Debug, PartialEq)]
pub struct RayLoss {
    pub loss: f64,
    /// Local loss attributed to each sample; sums to `loss`.
    pub local: Vec<f64>,
    pub d_alpha: Vec<f64>,
    pub d_color: Vec<Rgb>,
    /// Samples whose contribution was undefined and skipped.
    pub skipped: usize,
}

impl RayLoss {
    pub fn zeros(m: usize) -> Self {
        RayLoss {
            loss: 0.0,
            local: vec![0.0; m],
            d_alpha: vec![0.0; m],
            d_color: vec![Rgb::zeros(); m],
            skipped: 0,
        }
    }
}

/// Batch summary: the total is the sum of per-ray losses.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub per_sample_local: Vec<Vec<f64>>,
    pub rays: usize,
    pub skipped: usize,
}

impl LossReport {
    pub fn from_rays(rays: &[RayLoss]) -> Self {
        LossReport {
            total: rays.iter().map(|r| r.loss).sum(),
            per_sample_local: rays.iter().map(|r| r.local.clone()).collect(),
            rays: rays.len(),
            skipped: rays.iter().map(|r| r.skipped).sum(),
        }
    }

    pub fn mean(&self) -> f64 {
        if self.rays == 0 {
            0.0
        } else {
            self.total / self.rays as f64
        }
    }
}

/// Checks the shape contract shared by every per-ray loss.
pub fn validate_ray(alphas: &[f64], colors: &[Rgb]) -> Result<()> {
    if alphas.is_empty() || alphas.len() != colors.len() {
        return Err(Error::InvalidBatch(format!(
            "{} alphas vs {} colors",
            alphas.len(),
            colors.len()
        )));
    }
    if *alphas.last().unwrap() != 1.0 {
        return Err(Error::InvalidBatch("last sample must be the opaque terminal".into()));
    }
    if alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::InvalidBatch("alpha outside [0, 1]".into()));
    }
    Ok(())
}

pub fn radiance_field_loss(batch: &SampleBatch, metric: ColorMetric) -> Result<(LossReport, Vec<RayLoss>)> {
    let rays = batch
        .rays
        .iter()
        .map(|r| radiance_field_loss_ray(&r.alphas, &r.colors, &r.target, metric))
        .collect::<Result<Vec<_>>>()?;
    Ok((LossReport::from_rays(&rays), rays))
}

pub fn nerf_loss(batch: &SampleBatch, metric: ColorMetric) -> Result<(LossReport, Vec<RayLoss>)> {
    let rays = batch
        .rays
        .iter()
        .map(|r| nerf_loss_ray(&r.alphas, &r.colors, &r.target, metric))
        .collect::<Result<Vec<_>>>()?;
    Ok((LossReport::from_rays(&rays), rays))
}

/// Per-sample mixture used during training. Samples with `relaxed[i]` use the
/// relaxed term; the rest use the blended-loss term in its detached
/// expectation form, whose background weights come from `weight_alphas`
/// (equal to `alphas` for the free-flight distribution).
pub fn mixed_ray_loss(
    alphas: &[f64],
    colors: &[Rgb],
    target: &Rgb,
    metric: ColorMetric,
    weight_alphas: &[f64],
    relaxed: Option<&[bool]>,
) -> Result<RayLoss> {
    validate_ray(alphas, colors)?;
    validate_ray(weight_alphas, colors)?;
    let m = alphas.len();
    let (losses, grads): (Vec<f64>, Vec<Rgb>) = colors.iter().map(|c| metric.eval_grad(c, target)).unzip();
    let w = transmittance(weight_alphas);
    let behind = suffix_expectation(weight_alphas, &losses, 0.0);
    let frozen = match relaxed {
        Some(mask) if mask.iter().any(|&r| r) => Some(RelaxedFrozen::freeze(alphas, colors, target, metric)?),
        _ => None,
    };
    let mut out = RayLoss::zeros(m);
    for i in 0..m {
        match (&frozen, relaxed) {
            (Some(f), Some(mask)) if mask[i] => {
                let (v, da, dc) = f.term(i, alphas[i], &colors[i], metric);
                out.local[i] = v;
                out.d_alpha[i] = da;
                out.d_color[i] = dc;
                out.skipped += f.skipped[i] as usize;
            }
            _ => {
                out.local[i] = w[i] * alphas[i] * losses[i];
                out.d_alpha[i] = w[i] * (losses[i] - behind[i]);
                out.d_color[i] = grads[i] * (w[i] * alphas[i]);
            }
        }
    }
    out.d_alpha[m - 1] = 0.0;
    out.loss = out.local.iter().sum();
    Ok(out)
}

/// Relaxed loss over a batch: samples in cells flagged by `state` blend
/// volumetrically, all others keep the surface-like blended-loss term.
pub fn relaxed_loss(batch: &SampleBatch, metric: ColorMetric, state: &RelaxedState) -> Result<(LossReport, Vec<RayLoss>)> {
    let rays = batch
        .rays
        .iter()
        .map(|r| {
            let mut mask: Vec<bool> = r
                .positions
                .iter()
                .map(|p| state.grid.cell_of(p).is_some_and(|c| state.is_flagged(c)))
                .collect();
            mask.push(false);
            mixed_ray_loss(&r.alphas, &r.colors, &r.target, metric, &r.alphas, Some(&mask))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((LossReport::from_rays(&rays), rays))
}
