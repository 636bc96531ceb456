//! Laplacian smoothing of the occupancy field and the warm-start cap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::OccupancyField;
use crate::geom::{logit, Vec3};

/// Exponentially decaying Laplacian weight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LaplacianSchedule {
    pub initial_weight: f64,
    pub final_weight: f64,
    pub total_iters: u64,
    /// Stencil spacing as a fraction of the largest bounds extent.
    pub eps_fraction: f64,
}

impl Default for LaplacianSchedule {
    fn default() -> Self {
        LaplacianSchedule {
            initial_weight: 2e-3,
            final_weight: 2e-5,
            total_iters: 1000,
            eps_fraction: 1.0 / 1024.0,
        }
    }
}

impl LaplacianSchedule {
    pub fn disabled() -> Self {
        LaplacianSchedule {
            initial_weight: 0.0,
            final_weight: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.initial_weight >= 0.0
            && self.final_weight >= 0.0
            && self.initial_weight.is_finite()
            && self.final_weight.is_finite()
            && self.eps_fraction > 0.0
            && self.eps_fraction < 0.5;
        if !ok {
            return Err(Error::invalid(format!("invalid laplacian schedule {self:?}")));
        }
        if (self.initial_weight == 0.0) != (self.final_weight == 0.0) {
            return Err(Error::invalid("laplacian weights must both be zero or both be positive"));
        }
        Ok(())
    }

    pub fn is_enabled(&self) -> bool {
        self.initial_weight > 0.0
    }
}

pub fn schedule_weight(s: &LaplacianSchedule, i: u64) -> f64 {
    if s.initial_weight == 0.0 || i >= s.total_iters {
        return s.final_weight;
    }
    let t = i as f64 / s.total_iters as f64;
    s.initial_weight * (s.final_weight / s.initial_weight).powf(t)
}

/// Moving upper bound on decoded occupancy during the first iterations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WarmStartSchedule {
    /// Iterations until the cap reaches `ceil`; 0 disables the cap.
    pub duration: u64,
    pub floor: f64,
    pub ceil: f64,
}

impl Default for WarmStartSchedule {
    fn default() -> Self {
        WarmStartSchedule {
            duration: 1000,
            floor: 0.1,
            ceil: 1.0,
        }
    }
}

impl WarmStartSchedule {
    pub fn disabled() -> Self {
        WarmStartSchedule {
            duration: 0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.floor && self.floor <= self.ceil && self.ceil <= 1.0) {
            return Err(Error::invalid(format!("invalid warm-start schedule {self:?}")));
        }
        Ok(())
    }

    pub fn alpha_max(&self, i: u64) -> f64 {
        if self.duration == 0 {
            return self.ceil;
        }
        (self.floor + (self.ceil - self.floor) * i as f64 / self.duration as f64).min(self.ceil)
    }
}

/// Caps every vertex logit at `logit(alpha_max(i))`. Trilinear interpolation
/// never exceeds the largest vertex, so the cap holds everywhere.
pub fn clamp_occupancy(occ: &mut OccupancyField, i: u64, s: &WarmStartSchedule) {
    let cap = s.alpha_max(i);
    if cap >= 1.0 {
        return;
    }
    let max_logit = logit(cap) as f32;
    for l in &mut occ.logits {
        if *l > max_logit {
            *l = max_logit;
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LaplacianReport {
    /// Mean squared Laplacian over evaluated points.
    pub penalty: f64,
    pub evaluated: usize,
    /// Points closer than `eps` to the boundary.
    pub skipped: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Decode {
    Alpha,
    RawLogit,
}

const AXES: [Vec3; 3] = [
    Vec3::new(1.0, 0.0, 0.0),
    Vec3::new(0.0, 1.0, 0.0),
    Vec3::new(0.0, 0.0, 1.0),
];

fn stencil_points(p: &Vec3, eps: f64) -> [Vec3; 7] {
    [
        *p,
        p + eps * AXES[0],
        p - eps * AXES[0],
        p + eps * AXES[1],
        p - eps * AXES[1],
        p + eps * AXES[2],
        p - eps * AXES[2],
    ]
}

const STENCIL_COEFF: [f64; 7] = [-6.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];

fn decode(occ: &OccupancyField, p: &Vec3, mode: Decode) -> f64 {
    match mode {
        Decode::Alpha => occ.eval_alpha(p),
        Decode::RawLogit => occ.raw_logit(p).unwrap_or(0.0),
    }
}

fn penalty_impl(occ: &mut OccupancyField, points: &[Vec3], eps: f64, scale: f64, mode: Decode) -> Result<LaplacianReport> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!("laplacian eps must be positive, got {eps}")));
    }
    let inner = occ.grid.bounds.eroded(eps);
    let inv = 1.0 / (eps * eps);
    let mut laps = Vec::with_capacity(points.len());
    let mut skipped = 0;
    for p in points {
        if !inner.is_valid() || !inner.contains(p) {
            skipped += 1;
            continue;
        }
        let pts = stencil_points(p, eps);
        let lap: f64 = pts.iter().zip(STENCIL_COEFF).map(|(q, c)| c * decode(occ, q, mode)).sum::<f64>() * inv;
        laps.push((pts, lap));
    }
    let n = laps.len();
    if n == 0 {
        return Ok(LaplacianReport { penalty: 0.0, evaluated: 0, skipped });
    }
    let penalty = laps.iter().map(|(_, l)| l * l).sum::<f64>() / n as f64;
    if scale != 0.0 {
        for (pts, lap) in &laps {
            let upstream = scale * 2.0 * lap * inv / n as f64;
            for (q, c) in pts.iter().zip(STENCIL_COEFF) {
                let s = occ.grid.stencil(q).expect("stencil point inside bounds");
                match mode {
                    Decode::Alpha => occ.scatter_stencil_alpha(&s, upstream * c),
                    Decode::RawLogit => occ.scatter_stencil_logit(&s, upstream * c),
                }
            }
        }
    }
    Ok(LaplacianReport { penalty, evaluated: n, skipped })
}

/// Mean squared 7-point Laplacian of decoded occupancy at `points`.
/// Accumulates `scale * d(penalty)/d(logit)` into `occ.grad`.
pub fn laplacian_penalty(occ: &mut OccupancyField, points: &[Vec3], eps: f64, scale: f64) -> Result<LaplacianReport> {
    penalty_impl(occ, points, eps, scale, Decode::Alpha)
}

/// Same as [`laplacian_penalty`] on the raw interpolated logit.
pub fn laplacian_penalty_raw(occ: &mut OccupancyField, points: &[Vec3], eps: f64, scale: f64) -> Result<LaplacianReport> {
    penalty_impl(occ, points, eps, scale, Decode::RawLogit)
}

/// Penalty value only; gradients untouched.
pub fn laplacian_value(occ: &OccupancyField, points: &[Vec3], eps: f64) -> Result<LaplacianReport> {
    let mut scratch = occ.clone();
    penalty_impl(&mut scratch, points, eps, 0.0, Decode::Alpha)
}
