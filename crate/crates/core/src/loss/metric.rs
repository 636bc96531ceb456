use serde::{Deserialize, Serialize};

use crate::geom::Rgb;

/// Per-color difference metric, averaged over the three channels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorMetric {
    #[default]
    L2,
    L1,
}

impl ColorMetric {
    pub fn eval(&self, a: &Rgb, b: &Rgb) -> f64 {
        let d = a - b;
        match self {
            ColorMetric::L2 => d.norm_squared() / 3.0,
            ColorMetric::L1 => d.abs().sum() / 3.0,
        }
    }

    /// Gradient with respect to `a`. The L1 subgradient at a zero difference is 0.
    pub fn grad(&self, a: &Rgb, b: &Rgb) -> Rgb {
        let d = a - b;
        match self {
            ColorMetric::L2 => d * (2.0 / 3.0),
            ColorMetric::L1 => d.map(|v| {
                if v > 0.0 {
                    1.0 / 3.0
                } else if v < 0.0 {
                    -1.0 / 3.0
                } else {
                    0.0
                }
            }),
        }
    }

    pub fn eval_grad(&self, a: &Rgb, b: &Rgb) -> (f64, Rgb) {
        (self.eval(a, b), self.grad(a, b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rgb() -> impl Strategy<Value = Rgb> {
        prop::array::uniform3(-2.0f64..2.0).prop_map(Rgb::from)
    }

    proptest! {
        #[test]
        fn metric_axioms(a in rgb(), b in rgb()) {
            for m in [ColorMetric::L2, ColorMetric::L1] {
                prop_assert!(m.eval(&a, &b) >= 0.0);
                prop_assert_eq!(m.eval(&a, &a), 0.0);
                prop_assert!((m.eval(&a, &b) - m.eval(&b, &a)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mean_square_arithmetic() {
        let v = ColorMetric::L2.eval(&Rgb::new(1.0, 0.0, 0.0), &Rgb::zeros());
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn l2_gradient_matches_finite_differences() {
        let a = Rgb::new(0.3, -0.7, 0.12);
        let b = Rgb::new(0.9, 0.1, 0.5);
        let g = ColorMetric::L2.grad(&a, &b);
        for ch in 0..3 {
            let h = 1e-6;
            let mut up = a;
            up[ch] += h;
            let mut dn = a;
            dn[ch] -= h;
            let fd = (ColorMetric::L2.eval(&up, &b) - ColorMetric::L2.eval(&dn, &b)) / (2.0 * h);
            assert!((fd - g[ch]).abs() / g[ch].abs() < 1e-6, "{fd} vs {}", g[ch]);
        }
    }

    #[test]
    fn l1_kink_has_zero_subgradient() {
        let g = ColorMetric::L1.grad(&Rgb::new(0.5, 0.2, 0.1), &Rgb::new(0.5, 0.0, 0.3));
        assert_eq!(g, Rgb::new(0.0, 1.0 / 3.0, -1.0 / 3.0));
    }
}
