use std::ops::{Add, Mul};

use crate::error::Result;
use crate::geom::Rgb;
use crate::loss::{validate_ray, ColorMetric, RayLoss};
use crate::march::transmittance;

/// Free-flight expectation of `values` over the samples behind each index:
/// `E_i = sum_{k>i} prod_{i<j<k} (1 - alpha_j) alpha_k v_k`, by a backward sweep.
pub fn suffix_expectation<T>(alphas: &[f64], values: &[T], zero: T) -> Vec<T>
where
    T: Copy + Add<Output = T> + Mul<f64, Output = T>,
{
    let m = alphas.len();
    let mut out = vec![zero; m];
    for i in (0..m.saturating_sub(1)).rev() {
        out[i] = values[i + 1] * alphas[i + 1] + out[i + 1] * (1.0 - alphas[i + 1]);
    }
    out
}

/// Blended-loss objective `sum_i w_i alpha_i l(L_i, L_target)` with every
/// variable differentiated.
///
/// The occupancy gradient reduces to `w_i (l_i - E_{t>t_i}[l])`: a candidate
/// whose loss beats the expected loss of what lies behind it gains occupancy.
pub fn radiance_field_loss_ray(alphas: &[f64], colors: &[Rgb], target: &Rgb, metric: ColorMetric) -> Result<RayLoss> {
    validate_ray(alphas, colors)?;
    let m = alphas.len();
    let (losses, grads): (Vec<f64>, Vec<Rgb>) = colors.iter().map(|c| metric.eval_grad(c, target)).unzip();
    let w = transmittance(alphas);
    let behind = suffix_expectation(alphas, &losses, 0.0);
    let mut out = RayLoss::zeros(m);
    for i in 0..m {
        out.local[i] = w[i] * alphas[i] * losses[i];
        out.d_alpha[i] = w[i] * (losses[i] - behind[i]);
        out.d_color[i] = grads[i] * (w[i] * alphas[i]);
    }
    out.d_alpha[m - 1] = 0.0;
    out.loss = out.local.iter().sum();
    Ok(out)
}

/// Image-space loss of the alpha-composited color.
pub fn nerf_loss_ray(alphas: &[f64], colors: &[Rgb], target: &Rgb, metric: ColorMetric) -> Result<RayLoss> {
    validate_ray(alphas, colors)?;
    let m = alphas.len();
    let w = transmittance(alphas);
    let composite: Rgb = (0..m).map(|i| colors[i] * (w[i] * alphas[i])).sum();
    let (loss, g) = metric.eval_grad(&composite, target);
    let behind = suffix_expectation(alphas, colors, Rgb::zeros());
    let mut out = RayLoss::zeros(m);
    for i in 0..m {
        out.local[i] = w[i] * alphas[i] * loss;
        out.d_alpha[i] = w[i] * (colors[i] - behind[i]).dot(&g);
        out.d_color[i] = g * (w[i] * alphas[i]);
    }
    out.d_alpha[m - 1] = 0.0;
    out.loss = loss;
    Ok(out)
}
