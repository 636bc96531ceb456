//! Self-check suite run by `occusurf verify`: gradient derivation, finite
//! differences and sampling normalization, each against an independent oracle.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::background::monte_carlo_ray_loss;
use crate::error::Result;
use crate::field::{GridSpec, OccupancyField, RadianceGrid};
use crate::geom::{Aabb, Rgb, Vec3};
use crate::loss::{nerf_loss_ray, radiance_field_loss_ray, ColorMetric, RelaxedFrozen};
use crate::march::{march, transmittance};
use crate::oracle::{enumerate_expectation, finite_diff_check, grad_equivalence, relative_discrepancy, undetached_discrepancy};
use crate::regularize::{laplacian_penalty, laplacian_value};
use crate::sensor::Ray;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Measured statistic.
    pub value: f64,
    /// Threshold the statistic is compared against.
    pub bound: f64,
    pub detail: String,
}

impl Check {
    fn below(name: &str, value: f64, bound: f64, detail: String) -> Self {
        Check {
            name: name.into(),
            passed: value <= bound,
            value,
            bound,
            detail,
        }
    }

    fn above(name: &str, value: f64, bound: f64, detail: String) -> Self {
        Check {
            name: name.into(),
            passed: value > bound,
            value,
            bound,
            detail,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "check={} status={} value={:.3e} bound={:.3e} {}",
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.value,
            self.bound,
            self.detail
        )
    }
}

/// Random ray of `2..=max_len` samples with an opaque terminal sample.
pub fn random_ray(rng: &mut impl Rng, max_len: usize) -> (Vec<f64>, Vec<Rgb>, Rgb) {
    let m = rng.random_range(2..=max_len.max(2));
    let mut alphas: Vec<f64> = (0..m).map(|_| rng.random_range(0.02..0.98)).collect();
    alphas[m - 1] = 1.0;
    let mut color = || Rgb::new(rng.random(), rng.random(), rng.random());
    let colors = (0..m).map(|_| color()).collect();
    (alphas, colors, color())
}

/// Detached expectation form vs fully differentiated closed form, the
/// training loss vs the closed form, and the undetached negative control.
/// Each batch holds `rays_per_batch` rays.
pub fn derivation_checks(seed: u64, batches: usize, rays_per_batch: usize) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_detached: f64 = 0.0;
    let mut worst_module: f64 = 0.0;
    let mut weakest_control = f64::INFINITY;
    for b in 0..batches {
        let metric = if b % 2 == 0 { ColorMetric::L2 } else { ColorMetric::L1 };
        let mut control: f64 = 0.0;
        for _ in 0..rays_per_batch {
            let (alphas, colors, target) = random_ray(&mut rng, 8);
            let eq = grad_equivalence(&alphas, &colors, &target, metric)?;
            worst_detached = worst_detached.max(eq.max_relative);
            let module = radiance_field_loss_ray(&alphas, &colors, &target, metric)?;
            for (p, g) in &eq.closed_form {
                let ours = match *p {
                    crate::oracle::RayParam::Alpha(i) => module.d_alpha[i],
                    crate::oracle::RayParam::Color(i, ch) => module.d_color[i][ch],
                };
                worst_module = worst_module.max(relative_discrepancy(ours, *g));
            }
            control = control.max(undetached_discrepancy(&alphas, &colors, &target, metric)?);
        }
        weakest_control = weakest_control.min(control);
    }
    let detail = format!("batches={batches} rays_per_batch={rays_per_batch}");
    Ok(vec![
        Check::below("detached_equivalence", worst_detached, 1e-9, detail.clone()),
        Check::below("loss_module_equivalence", worst_module, 1e-9, detail.clone()),
        Check::above("undetached_control", weakest_control, 1e-3, detail),
    ])
}

/// Worst relative error of a random Laplacian instance against central
/// differences on the logits.
fn laplacian_fd_error(rng: &mut impl Rng) -> Result<f64> {
    let g = GridSpec::cubic(rng.random_range(3..=6), Aabb::cube([0.0; 3], 1.0));
    let logits: Vec<f32> = (0..g.vertex_count()).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut occ = OccupancyField::from_logits(g, logits);
    let pts: Vec<Vec3> = (0..10)
        .map(|_| Vec3::new(rng.random_range(-0.85..0.85), rng.random_range(-0.85..0.85), rng.random_range(-0.85..0.85)))
        .collect();
    let eps = rng.random_range(0.02..0.05);
    laplacian_penalty(&mut occ, &pts, eps, 1.0)?;
    let analytic = occ.grad.clone();
    occ.reset_grad();
    let h = 1e-4f32;
    let mut worst: f64 = 0.0;
    for v in 0..occ.logits.len() {
        let base = occ.logits[v];
        let (up, dn) = (base + h, base - h);
        occ.logits[v] = up;
        let fu = laplacian_value(&occ, &pts, eps)?.penalty;
        occ.logits[v] = dn;
        let fd = laplacian_value(&occ, &pts, eps)?.penalty;
        occ.logits[v] = base;
        let numeric = (fu - fd) / (up as f64 - dn as f64);
        worst = worst.max((numeric - analytic[v]).abs() / numeric.abs().max(analytic[v].abs()).max(1e-5));
    }
    Ok(worst)
}

/// Central-difference checks of every hand-written backward pass.
pub fn finite_difference_checks(seed: u64, instances: usize) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let metric = ColorMetric::L2;
    let eps = 1e-6;
    let (mut rf, mut nerf, mut relaxed, mut lap): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..instances {
        let (alphas, colors, target) = random_ray(&mut rng, 8);
        let f = |a: &[f64], c: &[Rgb]| radiance_field_loss_ray(a, c, &target, metric).expect("valid ray");
        rf = rf.max(finite_diff_check(f, &alphas, &colors, eps)?);
        let f = |a: &[f64], c: &[Rgb]| nerf_loss_ray(a, c, &target, metric).expect("valid ray");
        nerf = nerf.max(finite_diff_check(f, &alphas, &colors, eps)?);
        let frozen = RelaxedFrozen::freeze(&alphas, &colors, &target, metric)?;
        // Quadratic in every parameter, so a wider step only reduces roundoff.
        let f = |a: &[f64], c: &[Rgb]| frozen.eval(a, c, metric);
        relaxed = relaxed.max(finite_diff_check(f, &alphas, &colors, 1e-4)?);
        lap = lap.max(laplacian_fd_error(&mut rng)?);
    }
    let detail = format!("instances={instances}");
    Ok(vec![
        Check::below("fd_radiance_field", rf, 1e-4, detail.clone()),
        Check::below("fd_nerf", nerf, 1e-4, detail.clone()),
        Check::below("fd_relaxed", relaxed, 1e-4, detail.clone()),
        Check::below("fd_laplacian", lap, 1e-4, detail),
    ])
}

/// Weight normalization over marched rays of a random field, and Monte Carlo
/// background sampling against exhaustive enumeration.
pub fn normalization_checks(seed: u64, rays: usize, draws: usize) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bounds = Aabb::cube([0.0; 3], 1.0);
    let g = GridSpec::cubic(16, bounds);
    let logits = (0..g.vertex_count()).map(|_| rng.random_range(-6.0..6.0)).collect();
    let occ = OccupancyField::from_logits(g, logits);
    let rad = RadianceGrid::new(g, 0, 0.5);
    let env = Rgb::new(0.2, 0.4, 0.6);
    let mut worst_sum: f64 = 0.0;
    for _ in 0..rays {
        let origin = Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), 3.0);
        let aim = Vec3::new(rng.random_range(-0.9..0.9), rng.random_range(-0.9..0.9), rng.random_range(-0.9..0.9));
        let r = march(&occ, &rad, &Ray::new(origin, aim - origin), 0.01, env);
        let w = transmittance(&r.alphas);
        let total: f64 = w.iter().zip(&r.alphas).map(|(w, a)| w * a).sum();
        worst_sum = worst_sum.max((total - 1.0).abs());
    }

    let mut worst_z: f64 = 0.0;
    let probes = 4;
    for _ in 0..probes {
        let (alphas, _, _) = random_ray(&mut rng, 8);
        let losses: Vec<f64> = (0..alphas.len()).map(|_| rng.random()).collect();
        let exact = enumerate_expectation(&alphas, &losses)?.total;
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..draws {
            let x = monte_carlo_ray_loss(&alphas, &losses, &mut rng);
            sum += x;
            sq += x * x;
        }
        let n = draws as f64;
        let mean = sum / n;
        let stderr = ((sq / n - mean * mean).max(0.0) / n).sqrt();
        let z = if stderr > 0.0 { (mean - exact).abs() / stderr } else { (mean - exact).abs() / 1e-12 };
        worst_z = worst_z.max(z);
    }
    Ok(vec![
        Check::below("weights_sum_to_one", worst_sum, 1e-9, format!("rays={rays}")),
        Check::below("monte_carlo_sigma", worst_z, 3.0, format!("probes={probes} draws={draws}")),
    ])
}

/// Full suite with the default sizes.
pub fn oracle_suite(seed: u64) -> Result<Vec<Check>> {
    let mut out = derivation_checks(seed, 100, 4)?;
    out.extend(finite_difference_checks(seed.wrapping_add(1), 50)?);
    out.extend(normalization_checks(seed.wrapping_add(2), 2000, 100_000)?);
    Ok(out)
}
