use rayon::prelude::*;

use super::config::AdamConfig;

/// First and second moments for one parameter array, stored at parameter
/// precision so checkpoints reproduce them exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Clone + Default> Moments<T> {
    pub fn zeros(n: usize) -> Self {
        Moments {
            m: vec![T::default(); n],
            v: vec![T::default(); n],
        }
    }
}

fn corrections(cfg: &AdamConfig, step: u64) -> (f64, f64) {
    let t = step.max(1) as i32;
    (1.0 - cfg.beta1.powi(t), 1.0 - cfg.beta2.powi(t))
}

/// One Adam update of `params` (step counts from 1).
pub fn adam_step_f32(cfg: &AdamConfig, params: &mut [f32], grads: &[f64], mom: &mut Moments<f32>, lr: f64, step: u64) {
    let (c1, c2) = corrections(cfg, step);
    let (b1, b2, eps) = (cfg.beta1, cfg.beta2, cfg.eps);
    params
        .par_iter_mut()
        .zip(grads.par_iter())
        .zip(mom.m.par_iter_mut().zip(mom.v.par_iter_mut()))
        .for_each(|((p, &g), (m, v))| {
            let m1 = b1 * *m as f64 + (1.0 - b1) * g;
            let v1 = b2 * *v as f64 + (1.0 - b2) * g * g;
            *m = m1 as f32;
            *v = v1 as f32;
            if lr != 0.0 && m1 != 0.0 {
                let upd = lr * (m1 / c1) / ((v1 / c2).sqrt() + eps);
                *p = (*p as f64 - upd) as f32;
            }
        });
}

pub fn adam_step_f64(cfg: &AdamConfig, params: &mut [f64], grads: &[f64], mom: &mut Moments<f64>, lr: f64, step: u64) {
    let (c1, c2) = corrections(cfg, step);
    for (i, p) in params.iter_mut().enumerate() {
        let g = grads[i];
        mom.m[i] = cfg.beta1 * mom.m[i] + (1.0 - cfg.beta1) * g;
        mom.v[i] = cfg.beta2 * mom.v[i] + (1.0 - cfg.beta2) * g * g;
        if lr != 0.0 && mom.m[i] != 0.0 {
            *p -= lr * (mom.m[i] / c1) / ((mom.v[i] / c2).sqrt() + cfg.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = AdamConfig::default();
        let mut p = vec![1.0f32, 1.0, 1.0];
        let mut mom = Moments::zeros(3);
        adam_step_f32(&cfg, &mut p, &[0.5, -2.0, 0.0], &mut mom, 0.1, 1);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] - 1.1).abs() < 1e-6);
        assert_eq!(p[2], 1.0);
    }

    #[test]
    fn zero_rate_leaves_parameters() {
        let cfg = AdamConfig::default();
        let mut p = vec![0.25f64, -3.0];
        let mut mom = Moments::zeros(2);
        adam_step_f64(&cfg, &mut p, &[1.0, 1.0], &mut mom, 0.0, 1);
        assert_eq!(p, vec![0.25, -3.0]);
        assert!(mom.m[0] > 0.0);
    }

    #[test]
    fn minimizes_quadratic() {
        let cfg = AdamConfig::default();
        let mut p = vec![3.0f64];
        let mut mom = Moments::zeros(1);
        for t in 1..=2000 {
            let g = 2.0 * (p[0] - 1.0);
            adam_step_f64(&cfg, &mut p, &[g], &mut mom, 0.01, t);
        }
        assert!((p[0] - 1.0).abs() < 1e-2, "{}", p[0]);
    }
}
