//! Relaxed (volumetric) variant of the blended loss and the per-cell
//! challenge map that decides where it applies.

use std::collections::HashMap;

use crate::error::Result;
use crate::field::GridSpec;
use crate::geom::Rgb;
use crate::loss::radiance::suffix_expectation;
use crate::loss::{validate_ray, ColorMetric, RayLoss};
use crate::march::{transmittance, SampleBatch};

/// Samples whose transmittance from the camera falls below this have no
/// well-defined goal color.
pub const MIN_GOAL_TRANSMITTANCE: f64 = 1e-6;

/// Quantities of the relaxed loss that are held constant during
/// differentiation, captured at the current parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct RelaxedFrozen {
    pub weight: Vec<f64>,
    pub goal: Vec<Rgb>,
    /// Expected color behind each sample.
    pub behind: Vec<Rgb>,
    /// `true` where the blended term was selected.
    pub blended: Vec<bool>,
    pub skipped: Vec<bool>,
}

impl RelaxedFrozen {
    pub fn freeze(alphas: &[f64], colors: &[Rgb], target: &Rgb, metric: ColorMetric) -> Result<Self> {
        validate_ray(alphas, colors)?;
        let m = alphas.len();
        let weight = transmittance(alphas);
        let behind = suffix_expectation(alphas, colors, Rgb::zeros());
        let mut goal = vec![Rgb::zeros(); m];
        let mut blended = vec![false; m];
        let mut skipped = vec![false; m];
        let mut prev = Rgb::zeros();
        for i in 0..m {
            if weight[i] < MIN_GOAL_TRANSMITTANCE {
                skipped[i] = true;
            } else {
                goal[i] = (target - prev) / weight[i];
                let mix = colors[i] * alphas[i] + behind[i] * (1.0 - alphas[i]);
                blended[i] = metric.eval(&colors[i], &goal[i]) > metric.eval(&mix, &goal[i]);
            }
            prev += colors[i] * (weight[i] * alphas[i]);
        }
        Ok(RelaxedFrozen {
            weight,
            goal,
            behind,
            blended,
            skipped,
        })
    }

    /// Term of sample `i` and its gradients with respect to `alpha_i`, `L_i`.
    pub fn term(&self, i: usize, alpha: f64, color: &Rgb, metric: ColorMetric) -> (f64, f64, Rgb) {
        if self.skipped[i] {
            return (0.0, 0.0, Rgb::zeros());
        }
        let w = self.weight[i];
        if self.blended[i] {
            let mix = color * alpha + self.behind[i] * (1.0 - alpha);
            let (l, g) = metric.eval_grad(&mix, &self.goal[i]);
            (w * l, w * g.dot(&(color - self.behind[i])), g * (w * alpha))
        } else {
            let (l, g) = metric.eval_grad(color, &self.goal[i]);
            (w * l, 0.0, g * w)
        }
    }

    /// Relaxed loss at `(alphas, colors)` with the frozen quantities held fixed.
    pub fn eval(&self, alphas: &[f64], colors: &[Rgb], metric: ColorMetric) -> RayLoss {
        let m = alphas.len();
        let mut out = RayLoss::zeros(m);
        for i in 0..m {
            let (v, da, dc) = self.term(i, alphas[i], &colors[i], metric);
            out.local[i] = v;
            out.d_alpha[i] = da;
            out.d_color[i] = dc;
        }
        out.d_alpha[m - 1] = 0.0;
        out.loss = out.local.iter().sum();
        out.skipped = self.skipped.iter().filter(|&&s| s).count();
        out
    }
}

/// Relaxed loss applied to every sample of the ray.
pub fn relaxed_loss_ray(alphas: &[f64], colors: &[Rgb], target: &Rgb, metric: ColorMetric) -> Result<RayLoss> {
    Ok(RelaxedFrozen::freeze(alphas, colors, target, metric)?.eval(alphas, colors, metric))
}

/// Exponential moving average of local loss per grid cell. Cells whose
/// average exceeds `threshold` are treated volumetrically.
#[derive(Clone, Debug, PartialEq)]
pub struct RelaxedState {
    pub grid: GridSpec,
    pub ema: Vec<f64>,
    pub visited: Vec<bool>,
    pub ema_decay: f64,
    pub threshold: Option<f64>,
}

impl RelaxedState {
    pub fn new(grid: GridSpec, ema_decay: f64) -> Self {
        let n = grid.cell_count();
        RelaxedState {
            grid,
            ema: vec![0.0; n],
            visited: vec![false; n],
            ema_decay,
            threshold: None,
        }
    }

    pub fn is_flagged(&self, cell: usize) -> bool {
        self.threshold.is_some_and(|t| self.ema[cell] > t)
    }

    /// Folds one batch of local losses into the per-cell averages. Samples of
    /// the same cell within a batch are averaged before the update.
    pub fn update_challenge(&mut self, batch: &SampleBatch, local_losses: &[Vec<f64>]) {
        let mut acc: HashMap<usize, (f64, usize)> = HashMap::new();
        for (ray, local) in batch.rays.iter().zip(local_losses) {
            for (p, &l) in ray.positions.iter().zip(local) {
                if let Some(cell) = self.grid.cell_of(p) {
                    let e = acc.entry(cell).or_insert((0.0, 0));
                    e.0 += l;
                    e.1 += 1;
                }
            }
        }
        for (cell, (sum, n)) in acc {
            self.record(cell, sum / n as f64);
        }
    }

    pub fn record(&mut self, cell: usize, value: f64) {
        let d = self.ema_decay;
        self.ema[cell] = d * self.ema[cell] + (1.0 - d) * value.max(0.0);
        self.visited[cell] = true;
    }

    /// Sets the threshold to the given quantile of the visited cells' averages.
    pub fn calibrate(&mut self, quantile: f64) {
        let mut v: Vec<f64> = self
            .ema
            .iter()
            .zip(&self.visited)
            .filter_map(|(&e, &vis)| vis.then_some(e))
            .collect();
        if v.is_empty() {
            self.threshold = Some(0.0);
            return;
        }
        v.sort_by(f64::total_cmp);
        let idx = ((v.len() - 1) as f64 * quantile.clamp(0.0, 1.0)).round() as usize;
        self.threshold = Some(v[idx]);
    }

    pub fn visited_count(&self) -> usize {
        self.visited.iter().filter(|&&v| v).count()
    }

    /// Fraction of visited cells that are flagged volumetric.
    pub fn flagged_fraction(&self) -> f64 {
        let visited = self.visited_count();
        if visited == 0 {
            return 0.0;
        }
        let flagged = (0..self.ema.len()).filter(|&c| self.visited[c] && self.is_flagged(c)).count();
        flagged as f64 / visited as f64
    }
}
