//! Brute-force checks of the blended-loss derivation.
//!
//! Everything here is written independently of [`crate::loss`]: background
//! expectations are enumerated explicitly, products are recomputed from
//! scratch, and derivatives come from forward-mode dual numbers rather than
//! the hand-written backward passes. Runs in `f64` only.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::geom::Rgb;
use crate::loss::{ColorMetric, RayLoss};

/// Forward-mode dual number carrying one directional derivative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: f64,
}

impl Dual {
    pub fn constant(v: f64) -> Self {
        Dual { v, d: 0.0 }
    }

    pub fn variable(v: f64) -> Self {
        Dual { v, d: 1.0 }
    }

    /// Same value, no derivative: the quantity is treated as a constant.
    pub fn detach(self) -> Self {
        Dual::constant(self.v)
    }

    fn abs(self) -> Self {
        if self.v > 0.0 {
            self
        } else if self.v < 0.0 {
            -self
        } else {
            Dual::constant(0.0)
        }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual { v: self.v + o.v, d: self.d + o.d }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual { v: self.v - o.v, d: self.d - o.d }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual {
            v: self.v * o.v,
            d: self.d * o.v + self.v * o.d,
        }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual { v: -self.v, d: -self.d }
    }
}

fn one() -> Dual {
    Dual::constant(1.0)
}

fn metric_dual(metric: ColorMetric, c: &[Dual; 3], target: &Rgb) -> Dual {
    let mut acc = Dual::constant(0.0);
    for ch in 0..3 {
        let diff = c[ch] - Dual::constant(target[ch]);
        acc = acc
            + match metric {
                ColorMetric::L2 => diff * diff,
                ColorMetric::L1 => diff.abs(),
            };
    }
    acc * Dual::constant(1.0 / 3.0)
}

/// Free-flight probability of stopping at `j` when traversal starts at `from`:
/// `prod_{from<=t<j} (1 - alpha_t) * alpha_j`.
fn stop_probability(alphas: &[Dual], from: usize, j: usize) -> Dual {
    let mut p = alphas[j];
    for a in &alphas[from..j] {
        p = p * (one() - *a);
    }
    p
}

fn prefix_product(alphas: &[Dual], i: usize) -> Dual {
    alphas[..i].iter().fold(one(), |acc, a| acc * (one() - *a))
}

/// Expected background loss behind candidate `i`, enumerated over every
/// possible background sample.
fn background_expectation(alphas: &[Dual], losses: &[Dual], i: usize) -> Dual {
    (i + 1..alphas.len()).fold(Dual::constant(0.0), |acc, j| acc + stop_probability(alphas, i + 1, j) * losses[j])
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Detach {
    /// Weight and background treated as constants.
    WeightAndBackground,
    /// Everything differentiated.
    Nothing,
}

/// Per-ray expectation of candidate-vs-background losses.
fn expectation_form(alphas: &[Dual], losses: &[Dual], detach: Detach) -> Dual {
    let mut total = Dual::constant(0.0);
    for i in 0..alphas.len() {
        let mut weight = prefix_product(alphas, i);
        let mut bg = background_expectation(alphas, losses, i);
        if detach == Detach::WeightAndBackground {
            weight = weight.detach();
            bg = bg.detach();
        }
        total = total + weight * (alphas[i] * losses[i] + (one() - alphas[i]) * bg);
    }
    total
}

/// Closed form `sum_i prod_{k<i}(1 - alpha_k) alpha_i l_i`, products recomputed per term.
fn closed_form(alphas: &[Dual], losses: &[Dual]) -> Dual {
    (0..alphas.len()).fold(Dual::constant(0.0), |acc, i| acc + prefix_product(alphas, i) * alphas[i] * losses[i])
}

/// Enumerated expectation of one ray together with the closed-form value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Expectation {
    /// Exhaustive sum over candidates and backgrounds.
    pub total: f64,
    /// `sum_i w_i alpha_i l_i`.
    pub closed_form: f64,
    /// `total - closed_form`, evaluated independently as
    /// `sum_k (k - 1) w_k alpha_k l_k` (1-based `k`).
    pub constant: f64,
}

fn check_terminal(alphas: &[f64]) -> Result<()> {
    match alphas.last() {
        Some(&a) if a == 1.0 => Ok(()),
        _ => Err(Error::InvalidBatch("final sample must be opaque (alpha = 1)".into())),
    }
}

pub fn enumerate_expectation(alphas: &[f64], losses: &[f64]) -> Result<Expectation> {
    check_terminal(alphas)?;
    if alphas.len() != losses.len() {
        return Err(Error::InvalidBatch("alphas and losses differ in length".into()));
    }
    let a: Vec<Dual> = alphas.iter().map(|&x| Dual::constant(x)).collect();
    let l: Vec<Dual> = losses.iter().map(|&x| Dual::constant(x)).collect();
    let total = expectation_form(&a, &l, Detach::Nothing).v;
    let closed = closed_form(&a, &l).v;
    let constant = (0..a.len())
        .map(|k| k as f64 * prefix_product(&a, k).v * alphas[k] * losses[k])
        .sum();
    Ok(Expectation {
        total,
        closed_form: closed,
        constant,
    })
}

/// Parameter of a ray loss: an occupancy (terminal excluded) or one color channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RayParam {
    Alpha(usize),
    Color(usize, usize),
}

fn ray_params(m: usize) -> impl Iterator<Item = RayParam> {
    (0..m - 1)
        .map(RayParam::Alpha)
        .chain((0..m).flat_map(|i| (0..3).map(move |c| RayParam::Color(i, c))))
}

fn seeded(alphas: &[f64], colors: &[Rgb], param: RayParam) -> (Vec<Dual>, Vec<[Dual; 3]>) {
    let a = alphas
        .iter()
        .enumerate()
        .map(|(i, &x)| if param == RayParam::Alpha(i) { Dual::variable(x) } else { Dual::constant(x) })
        .collect();
    let c = colors
        .iter()
        .enumerate()
        .map(|(i, col)| {
            std::array::from_fn(|ch| {
                if param == RayParam::Color(i, ch) {
                    Dual::variable(col[ch])
                } else {
                    Dual::constant(col[ch])
                }
            })
        })
        .collect();
    (a, c)
}

fn gradient_by(alphas: &[f64], colors: &[Rgb], f: impl Fn(&[Dual], &[Dual]) -> Dual, target: &Rgb, metric: ColorMetric) -> Vec<(RayParam, f64)> {
    ray_params(alphas.len())
        .map(|p| {
            let (a, c) = seeded(alphas, colors, p);
            let l: Vec<Dual> = c.iter().map(|c| metric_dual(metric, c, target)).collect();
            (p, f(&a, &l).d)
        })
        .collect()
}

pub fn relative_discrepancy(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale.max(1e-12)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradEquivalence {
    /// Gradients of the expectation form with weight and background detached.
    pub detached: Vec<(RayParam, f64)>,
    /// Gradients of the fully differentiated closed form.
    pub closed_form: Vec<(RayParam, f64)>,
    pub max_relative: f64,
}

fn max_discrepancy(a: &[(RayParam, f64)], b: &[(RayParam, f64)]) -> f64 {
    a.iter().zip(b).map(|(x, y)| relative_discrepancy(x.1, y.1)).fold(0.0, f64::max)
}

pub fn grad_equivalence(alphas: &[f64], colors: &[Rgb], target: &Rgb, metric: ColorMetric) -> Result<GradEquivalence> {
    check_terminal(alphas)?;
    let detached = gradient_by(alphas, colors, |a, l| expectation_form(a, l, Detach::WeightAndBackground), target, metric);
    let closed = gradient_by(alphas, colors, closed_form, target, metric);
    let max_relative = max_discrepancy(&detached, &closed);
    Ok(GradEquivalence {
        detached,
        closed_form: closed,
        max_relative,
    })
}

/// Discrepancy between the closed-form gradients and those of the
/// expectation form when nothing is detached. Expected to be large.
pub fn undetached_discrepancy(alphas: &[f64], colors: &[Rgb], target: &Rgb, metric: ColorMetric) -> Result<f64> {
    check_terminal(alphas)?;
    let full = gradient_by(alphas, colors, |a, l| expectation_form(a, l, Detach::Nothing), target, metric);
    let closed = gradient_by(alphas, colors, closed_form, target, metric);
    Ok(max_discrepancy(&full, &closed))
}

/// Largest relative error between `loss_fn`'s analytic gradients and central
/// differences over every non-terminal occupancy and every color channel.
/// The denominator is floored at `1e-5` so vanishing components compare
/// absolutely.
pub fn finite_diff_check(loss_fn: impl Fn(&[f64], &[Rgb]) -> RayLoss, alphas: &[f64], colors: &[Rgb], eps: f64) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::invalid(format!("finite-difference eps {eps} outside [1e-7, 1e-3]")));
    }
    let base = loss_fn(alphas, colors);
    let mut worst: f64 = 0.0;
    for p in ray_params(alphas.len()) {
        let mut a_up = alphas.to_vec();
        let mut a_dn = alphas.to_vec();
        let mut c_up = colors.to_vec();
        let mut c_dn = colors.to_vec();
        let analytic = match p {
            RayParam::Alpha(i) => {
                a_up[i] += eps;
                a_dn[i] -= eps;
                base.d_alpha[i]
            }
            RayParam::Color(i, ch) => {
                c_up[i][ch] += eps;
                c_dn[i][ch] -= eps;
                base.d_color[i][ch]
            }
        };
        let fd = (loss_fn(&a_up, &c_up).loss - loss_fn(&a_dn, &c_dn).loss) / (2.0 * eps);
        let err = (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-5);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn opaque_pair_reduces_to_first_loss() {
        let e = enumerate_expectation(&[1.0, 1.0], &[0.3, 0.9]).unwrap();
        assert_eq!(e.total, 0.3);
        assert_eq!(e.closed_form, 0.3);
        assert_eq!(e.constant, 0.0);
    }

    #[test]
    fn three_sample_enumeration() {
        let e = enumerate_expectation(&[0.5, 0.5, 1.0], &[0.2, 0.0, 0.4]).unwrap();
        assert!((e.closed_form - 0.2).abs() < 1e-15);
        assert!((e.total - 0.4).abs() < 1e-15);
        assert!((e.total - e.closed_form - e.constant).abs() < 1e-15);
    }

    #[test]
    fn zero_losses_give_zero() {
        let e = enumerate_expectation(&[0.3, 0.1, 0.8, 1.0], &[0.0; 4]).unwrap();
        assert_eq!(e.total, 0.0);
    }

    #[test]
    fn rejects_missing_terminal() {
        assert!(enumerate_expectation(&[0.3, 0.5], &[0.1, 0.2]).is_err());
        assert!(grad_equivalence(&[0.3], &[Rgb::zeros()], &Rgb::zeros(), ColorMetric::L2).is_err());
    }

    #[test]
    fn trivial_opaque_case_has_no_discrepancy() {
        let c = [Rgb::new(0.1, 0.2, 0.3), Rgb::new(0.9, 0.9, 0.9)];
        let g = grad_equivalence(&[1.0, 1.0], &c, &Rgb::repeat(0.5), ColorMetric::L2).unwrap();
        assert_eq!(g.max_relative, 0.0);
    }

    #[test]
    fn finite_differences_of_linear_loss_are_exact() {
        let linear = |a: &[f64], c: &[Rgb]| {
            let loss = 2.0 * a[0] - 0.5 * a[1] + c.iter().map(|c| c.sum()).sum::<f64>();
            RayLoss {
                loss,
                local: vec![0.0; a.len()],
                d_alpha: vec![2.0, -0.5, 0.0],
                d_color: vec![Rgb::repeat(1.0); 3],
                skipped: 0,
            }
        };
        let err = finite_diff_check(linear, &[0.2, 0.7, 1.0], &[Rgb::zeros(); 3], 1e-4).unwrap();
        assert!(err < 1e-10, "{err}");
        assert!(finite_diff_check(linear, &[0.2, 0.7, 1.0], &[Rgb::zeros(); 3], 0.1).is_err());
    }
}
