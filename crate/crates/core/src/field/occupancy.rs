use crate::field::grid::{GridSpec, Stencil};
use crate::geom::{logit, sigmoid, Vec3};

/// Dense occupancy field: one logit per grid vertex, decoded as
/// `alpha(x) = sigmoid(trilerp(logits, x))` inside the bounds and 0 outside.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyField {
    pub grid: GridSpec,
    pub logits: Vec<f32>,
    pub grad: Vec<f64>,
}

impl OccupancyField {
    pub fn new(grid: GridSpec, initial_alpha: f64) -> Self {
        let n = grid.vertex_count();
        OccupancyField {
            grid,
            logits: vec![logit(initial_alpha) as f32; n],
            grad: vec![0.0; n],
        }
    }

    pub fn from_logits(grid: GridSpec, logits: Vec<f32>) -> Self {
        assert_eq!(logits.len(), grid.vertex_count(), "logit count must match the grid");
        let n = logits.len();
        OccupancyField {
            grid,
            logits,
            grad: vec![0.0; n],
        }
    }

    /// Fills vertex logits from a function of world position.
    pub fn bake(grid: GridSpec, mut logit_at: impl FnMut(&Vec3) -> f64) -> Self {
        let d = grid.vertex_dims();
        let mut logits = Vec::with_capacity(grid.vertex_count());
        for k in 0..d[2] {
            for j in 0..d[1] {
                for i in 0..d[0] {
                    logits.push(logit_at(&grid.vertex_position(i, j, k)) as f32);
                }
            }
        }
        OccupancyField::from_logits(grid, logits)
    }

    pub fn eval_alpha(&self, p: &Vec3) -> f64 {
        match self.grid.stencil(p) {
            Some(s) => sigmoid(s.interpolate(&self.logits)),
            None => 0.0,
        }
    }

    #[inline]
    pub fn alpha_at(&self, s: &Stencil) -> f64 {
        sigmoid(s.interpolate(&self.logits))
    }

    /// Trilinearly interpolated logit before the sigmoid.
    pub fn raw_logit(&self, p: &Vec3) -> Option<f64> {
        self.grid.stencil(p).map(|s| s.interpolate(&self.logits))
    }

    pub fn vertex_alpha(&self, index: usize) -> f64 {
        sigmoid(self.logits[index] as f64)
    }

    pub fn reset_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    /// Accumulates `dL/dalpha` at `p` into the eight surrounding vertex logits.
    /// A no-op outside the bounds.
    pub fn scatter_grad_alpha(&mut self, p: &Vec3, dl_dalpha: f64) {
        if let Some(s) = self.grid.stencil(p) {
            self.scatter_stencil_alpha(&s, dl_dalpha);
        }
    }

    pub fn scatter_stencil_alpha(&mut self, s: &Stencil, dl_dalpha: f64) {
        if dl_dalpha == 0.0 {
            return;
        }
        let a = self.alpha_at(s);
        self.scatter_stencil_logit(s, dl_dalpha * a * (1.0 - a));
    }

    pub fn scatter_stencil_logit(&mut self, s: &Stencil, dl_dlogit: f64) {
        if dl_dlogit == 0.0 {
            return;
        }
        for (&i, &w) in s.index.iter().zip(&s.weight) {
            self.grad[i] += dl_dlogit * w;
        }
    }

    pub fn max_vertex_alpha(&self) -> f64 {
        let max = self.logits.iter().fold(f32::NEG_INFINITY, |m, &l| m.max(l));
        sigmoid(max as f64)
    }
}
