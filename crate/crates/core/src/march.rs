//! Fixed-step ray marching. Every marched ray ends with an opaque terminal
//! sample carrying the environment color, so the free-flight distribution
//! along the ray always sums to one.

use crate::field::{DirBasis, OccupancyField, RadianceGrid, Stencil};
use crate::geom::{Aabb, Rgb, Vec3};
use crate::sensor::Ray;

/// Samples of one ray. `alphas` and `colors` have one more entry than
/// `positions`: the trailing terminal sample (alpha = 1, color = environment).
#[derive(Clone, Debug)]
pub struct RaySamples {
    pub ray_id: usize,
    pub direction: Vec3,
    pub t: Vec<f64>,
    pub positions: Vec<Vec3>,
    pub stencils: Vec<Stencil>,
    pub alphas: Vec<f64>,
    pub colors: Vec<Rgb>,
    pub target: Rgb,
    pub basis: DirBasis,
}

impl RaySamples {
    /// Number of non-terminal samples.
    pub fn interior_len(&self) -> usize {
        self.positions.len()
    }

    pub fn terminal_index(&self) -> usize {
        self.positions.len()
    }

    pub fn is_terminal(&self, i: usize) -> bool {
        i == self.terminal_index()
    }

    /// Free-flight weights `w_i = prod_{j<i} (1 - alpha_j)` for every sample,
    /// terminal included.
    pub fn transmittance(&self) -> Vec<f64> {
        transmittance(&self.alphas)
    }
}

pub fn transmittance(alphas: &[f64]) -> Vec<f64> {
    let mut w = Vec::with_capacity(alphas.len());
    let mut acc = 1.0;
    for &a in alphas {
        w.push(acc);
        acc *= 1.0 - a;
    }
    w
}

/// A batch of marched rays sharing a step size.
#[derive(Clone, Debug, Default)]
pub struct SampleBatch {
    pub rays: Vec<RaySamples>,
    pub step: f64,
}

impl SampleBatch {
    pub fn sample_count(&self) -> usize {
        self.rays.iter().map(|r| r.alphas.len()).sum()
    }
}

/// Slab test clipped to `[ray.t_min, ray.t_max]`. Empty and zero-length
/// intervals are `None`.
pub fn intersect_bounds(ray: &Ray, bounds: &Aabb) -> Option<(f64, f64)> {
    let mut t0 = ray.t_min;
    let mut t1 = ray.t_max;
    for a in 0..3 {
        let (o, d) = (ray.origin[a], ray.direction[a]);
        if d == 0.0 {
            if o < bounds.min[a] || o > bounds.max[a] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d;
        let (mut near, mut far) = ((bounds.min[a] - o) * inv, (bounds.max[a] - o) * inv);
        if near > far {
            std::mem::swap(&mut near, &mut far);
        }
        t0 = t0.max(near);
        t1 = t1.min(far);
    }
    (t1 > t0).then_some((t0, t1))
}

/// Sample parameters `t_enter + (k + 1/2) step` strictly inside the interval.
pub fn sample_ts(t_enter: f64, t_exit: f64, step: f64) -> impl Iterator<Item = f64> {
    (0..)
        .map(move |k| t_enter + (k as f64 + 0.5) * step)
        .take_while(move |&t| t < t_exit)
}

pub fn march(occ: &OccupancyField, rad: &RadianceGrid, ray: &Ray, step: f64, env: Rgb) -> RaySamples {
    assert!(step > 0.0, "marching step must be positive");
    let basis = rad.basis(&ray.direction);
    let mut out = RaySamples {
        ray_id: 0,
        direction: ray.direction,
        t: Vec::new(),
        positions: Vec::new(),
        stencils: Vec::new(),
        alphas: Vec::new(),
        colors: Vec::new(),
        target: Rgb::zeros(),
        basis,
    };
    if let Some((t0, t1)) = intersect_bounds(ray, &occ.grid.bounds) {
        for t in sample_ts(t0, t1, step) {
            let p = ray.at(t);
            let Some(s) = occ.grid.stencil(&p) else { continue };
            out.t.push(t);
            out.positions.push(p);
            out.alphas.push(occ.alpha_at(&s));
            out.colors.push(rad.color_at(&s, &basis));
            out.stencils.push(s);
        }
    }
    out.alphas.push(1.0);
    out.colors.push(env);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::GridSpec;
    use rand::{Rng, SeedableRng};

    fn unit() -> Aabb {
        Aabb::new([0.0; 3], [1.0; 3])
    }

    #[test]
    fn slab_through_center() {
        let r = Ray::new(Vec3::new(-2.0, 0.5, 0.5), Vec3::x());
        let (a, b) = intersect_bounds(&r, &unit()).unwrap();
        assert!((a - 2.0).abs() < 1e-12 && (b - 3.0).abs() < 1e-12);
        let centered = Aabb::cube([0.0; 3], 1.0);
        let (a, b) = intersect_bounds(&Ray::new(Vec3::new(-2.0, 0.0, 0.0), Vec3::x()), &centered).unwrap();
        assert!((a - 1.0).abs() < 1e-12 && (b - 3.0).abs() < 1e-12);
    }

    #[test]
    fn parallel_ray_outside_slab_misses() {
        let r = Ray::new(Vec3::new(-2.0, 1.5, 0.5), Vec3::x());
        assert!(intersect_bounds(&r, &unit()).is_none());
    }

    #[test]
    fn grazing_edge_is_empty() {
        // touches only the edge x = 0, y = 0
        let r = Ray::new(Vec3::new(-1.0, 1.0, 0.5), Vec3::new(1.0, -1.0, 0.0));
        assert!(intersect_bounds(&r, &unit()).is_none());
    }

    #[test]
    fn clips_to_ray_range() {
        let mut r = Ray::new(Vec3::new(-2.0, 0.5, 0.5), Vec3::x());
        r.t_max = 2.5;
        assert_eq!(intersect_bounds(&r, &unit()), Some((2.0, 2.5)));
    }

    fn fields(alpha: f64) -> (OccupancyField, RadianceGrid) {
        let g = GridSpec::cubic(8, unit());
        (OccupancyField::new(g, alpha), RadianceGrid::new(g, 0, 0.5))
    }

    #[test]
    fn ten_steps_give_ten_samples_plus_terminal() {
        let (occ, rad) = fields(0.05);
        let r = Ray::new(Vec3::new(-1.0, 0.5, 0.5), Vec3::x());
        let s = march(&occ, &rad, &r, 0.1, Rgb::new(0.1, 0.2, 0.3));
        assert_eq!(s.interior_len(), 10);
        assert_eq!(s.alphas.len(), 11);
        assert_eq!(*s.alphas.last().unwrap(), 1.0);
        assert_eq!(*s.colors.last().unwrap(), Rgb::new(0.1, 0.2, 0.3));
        assert!(s.alphas[..10].iter().all(|&a| (a - 0.05).abs() < 1e-7));
        assert!(s.t.windows(2).all(|w| w[1] > w[0] && (w[1] - w[0] - 0.1).abs() < 1e-12));
    }

    #[test]
    fn missing_ray_has_only_terminal() {
        let (occ, rad) = fields(0.5);
        let s = march(&occ, &rad, &Ray::new(Vec3::new(-1.0, 3.0, 0.5), Vec3::x()), 0.05, Rgb::zeros());
        assert_eq!(s.interior_len(), 0);
        assert_eq!(s.alphas, vec![1.0]);
    }

    #[test]
    fn marched_values_match_pointwise_queries() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let g = GridSpec::cubic(6, unit());
        let occ = OccupancyField::from_logits(g, (0..g.vertex_count()).map(|_| rng.random_range(-5.0..5.0)).collect());
        let rad = RadianceGrid::from_coeffs(g, 1, (0..g.vertex_count() * 12).map(|_| rng.random_range(0.0..0.6)).collect()).unwrap();
        for _ in 0..20 {
            let o = Vec3::new(-1.0, rng.random(), rng.random());
            let r = Ray::new(o, Vec3::new(1.0, rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)));
            let s = march(&occ, &rad, &r, 0.037, Rgb::zeros());
            for (i, p) in s.positions.iter().enumerate() {
                assert_eq!(s.alphas[i], occ.eval_alpha(p));
                assert_eq!(s.colors[i], rad.eval_color(p, &r.direction).unwrap());
            }
            let w = s.transmittance();
            assert!(w.windows(2).all(|p| p[1] <= p[0]));
            let total: f64 = w.iter().zip(&s.alphas).map(|(w, a)| w * a).sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }
}
