//! Background distributions: how the surface "behind" each candidate is
//! chosen. A strategy rewrites the occupancies that enter the (detached)
//! weight products; candidates keep their true occupancy.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Rgb;
use crate::loss::{mixed_ray_loss, validate_ray, ColorMetric, RayLoss};

/// Constant used by the color-dependent distribution unless configured.
pub const DEFAULT_COLOR_SHARPNESS: f64 = 16.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackgroundStrategy {
    /// Stop at each sample with probability alpha.
    #[default]
    FreeFlight,
    /// Deterministically stop at the first sample with alpha >= threshold.
    LevelSet { threshold: f64 },
    /// Free flight with `alpha' = alpha / (1 + c * l(L_i, L_target))`.
    ColorDependent { c: f64 },
}

impl BackgroundStrategy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BackgroundStrategy::FreeFlight => Ok(()),
            BackgroundStrategy::LevelSet { threshold } if threshold > 0.0 && threshold < 1.0 => Ok(()),
            BackgroundStrategy::ColorDependent { c } if c >= 0.0 && c.is_finite() => Ok(()),
            other => Err(Error::invalid(format!("invalid background strategy {other:?}"))),
        }
    }

    /// Parses the CLI spelling: `free-flight`, `level-set[:t]`, `color-dep[:c]`.
    pub fn parse(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let num = |default: f64| -> Result<f64> {
            arg.map_or(Ok(default), |a| {
                a.parse().map_err(|_| Error::invalid(format!("bad strategy parameter {a:?}")))
            })
        };
        let st = match name {
            "free-flight" | "free_flight" => BackgroundStrategy::FreeFlight,
            "level-set" | "level_set" => BackgroundStrategy::LevelSet { threshold: num(0.5)? },
            "color-dep" | "color_dependent" => BackgroundStrategy::ColorDependent {
                c: num(DEFAULT_COLOR_SHARPNESS)?,
            },
            _ => return Err(Error::invalid(format!("unknown background strategy {s:?}"))),
        };
        st.validate()?;
        Ok(st)
    }
}

/// Occupancies used inside the weight products. The terminal sample stays
/// opaque so the distribution remains proper.
pub fn effective_alphas(strategy: &BackgroundStrategy, alphas: &[f64], colors: &[Rgb], target: &Rgb, metric: ColorMetric) -> Vec<f64> {
    let m = alphas.len();
    let mut out: Vec<f64> = match *strategy {
        BackgroundStrategy::FreeFlight => alphas.to_vec(),
        BackgroundStrategy::LevelSet { threshold } => alphas.iter().map(|&a| if a >= threshold { 1.0 } else { 0.0 }).collect(),
        BackgroundStrategy::ColorDependent { c } => alphas
            .iter()
            .zip(colors)
            .map(|(&a, col)| a / (1.0 + c * metric.eval(col, target)))
            .collect(),
    };
    if m > 0 {
        out[m - 1] = 1.0;
    }
    out
}

/// Blended loss for one ray under a background strategy.
pub fn strategy_loss_ray(
    strategy: &BackgroundStrategy,
    alphas: &[f64],
    colors: &[Rgb],
    target: &Rgb,
    metric: ColorMetric,
    relaxed: Option<&[bool]>,
) -> Result<RayLoss> {
    validate_ray(alphas, colors)?;
    let weights = effective_alphas(strategy, alphas, colors, target, metric);
    mixed_ray_loss(alphas, colors, target, metric, &weights, relaxed)
}

/// Draws the first background index `>= start`: each sample is accepted with
/// probability `alpha'`, so index `j` has probability
/// `prod_{start<=t<j} (1 - alpha'_t) alpha'_j`.
pub fn sample_background_from(weight_alphas: &[f64], start: usize, rng: &mut impl Rng) -> usize {
    let last = weight_alphas.len() - 1;
    for (j, &a) in weight_alphas.iter().enumerate().skip(start) {
        if j == last || rng.random::<f64>() < a {
            return j;
        }
    }
    last
}

pub fn sample_background(
    strategy: &BackgroundStrategy,
    alphas: &[f64],
    colors: &[Rgb],
    target: &Rgb,
    metric: ColorMetric,
    rng: &mut impl Rng,
) -> usize {
    let w = effective_alphas(strategy, alphas, colors, target, metric);
    sample_background_from(&w, 0, rng)
}

/// One stochastic evaluation of the per-ray loss: for every candidate `i`, a
/// background is drawn from the samples behind it and the candidate scores
/// `alpha_i l_i + (1 - alpha_i) l_background`, weighted by the transmittance
/// in front of it.
pub fn monte_carlo_ray_loss(alphas: &[f64], losses: &[f64], rng: &mut impl Rng) -> f64 {
    let m = alphas.len();
    let mut total = 0.0;
    let mut w = 1.0;
    for i in 0..m {
        let bg = if i + 1 < m {
            losses[sample_background_from(alphas, i + 1, rng)]
        } else {
            0.0
        };
        total += w * (alphas[i] * losses[i] + (1.0 - alphas[i]) * bg);
        w *= 1.0 - alphas[i];
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::radiance_field_loss_ray;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn color_dependent_is_neutral_for_perfect_colors() {
        let t = Rgb::new(0.2, 0.5, 0.9);
        let a = effective_alphas(&BackgroundStrategy::ColorDependent { c: 16.0 }, &[0.3, 0.8, 1.0], &[t; 3], &t, ColorMetric::L2);
        assert_eq!(a, vec![0.3, 0.8, 1.0]);
    }

    #[test]
    fn color_dependent_formula() {
        // l = 0.25 with L1: |diff| = 0.25 on every channel
        let t = Rgb::repeat(0.5);
        let c = Rgb::repeat(0.75);
        let a = effective_alphas(&BackgroundStrategy::ColorDependent { c: 16.0 }, &[0.8, 1.0], &[c, t], &t, ColorMetric::L1);
        assert!((a[0] - 0.16).abs() < 1e-15);
    }

    #[test]
    fn color_dependent_never_raises_occupancy() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let a: f64 = rng.random();
            let col = Rgb::new(rng.random(), rng.random(), rng.random());
            let t = Rgb::new(rng.random(), rng.random(), rng.random());
            let e = effective_alphas(&BackgroundStrategy::ColorDependent { c: 16.0 }, &[a, 1.0], &[col, t], &t, ColorMetric::L2);
            assert!(e[0] <= a);
            assert_eq!(e[0] == a, a == 0.0 || col == t);
        }
    }

    #[test]
    fn level_set_cuts_off_after_first_crossing() {
        let alphas = [0.4, 0.9, 0.2, 0.7, 1.0];
        let e = effective_alphas(&BackgroundStrategy::LevelSet { threshold: 0.5 }, &alphas, &[Rgb::zeros(); 5], &Rgb::zeros(), ColorMetric::L2);
        let w = crate::march::transmittance(&e);
        assert_eq!(w, vec![1.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn sampling_degenerate_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(sample_background_from(&[1.0, 1.0], 0, &mut rng), 0);
            assert_eq!(sample_background_from(&[0.0, 0.0, 1.0], 0, &mut rng), 2);
        }
    }

    #[test]
    fn sampling_frequencies_match_free_flight() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[sample_background_from(&[0.5, 0.5, 1.0], 0, &mut rng)] += 1;
        }
        for (c, p) in counts.iter().zip([0.5, 0.25, 0.25]) {
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((*c as f64 - n as f64 * p).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn free_flight_strategy_reproduces_blended_loss_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let m = rng.random_range(1..8);
            let mut alphas: Vec<f64> = (0..m).map(|_| rng.random()).collect();
            alphas.push(1.0);
            let colors: Vec<Rgb> = (0..=m).map(|_| Rgb::new(rng.random(), rng.random(), rng.random())).collect();
            let t = Rgb::new(rng.random(), rng.random(), rng.random());
            let a = radiance_field_loss_ray(&alphas, &colors, &t, ColorMetric::L2).unwrap();
            let b = strategy_loss_ray(&BackgroundStrategy::FreeFlight, &alphas, &colors, &t, ColorMetric::L2, None).unwrap();
            assert!((a.loss - b.loss).abs() < 1e-14);
            for i in 0..=m {
                assert!((a.d_alpha[i] - b.d_alpha[i]).abs() < 1e-14);
                assert!((a.d_color[i] - b.d_color[i]).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn parse_cli_spellings() {
        assert_eq!(BackgroundStrategy::parse("free-flight").unwrap(), BackgroundStrategy::FreeFlight);
        assert_eq!(BackgroundStrategy::parse("level-set").unwrap(), BackgroundStrategy::LevelSet { threshold: 0.5 });
        assert_eq!(BackgroundStrategy::parse("color-dep:8").unwrap(), BackgroundStrategy::ColorDependent { c: 8.0 });
        assert!(BackgroundStrategy::parse("level-set:1.5").is_err());
        assert!(BackgroundStrategy::parse("cone").is_err());
    }
}
