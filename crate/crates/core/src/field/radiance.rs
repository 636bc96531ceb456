use crate::error::{Error, Result};
use crate::field::grid::{GridSpec, Stencil};
use crate::field::sh;
use crate::geom::{is_unit, Rgb, Vec3};

/// Dense directional color field. Each vertex stores, per RGB channel, the
/// coefficients of a real spherical-harmonic expansion whose constant band is
/// the plain color.
#[derive(Clone, Debug, PartialEq)]
pub struct RadianceGrid {
    pub grid: GridSpec,
    pub sh_degree: u8,
    /// Layout: `(vertex * 3 + channel) * basis_len + k`.
    pub coeffs: Vec<f32>,
    pub grad: Vec<f64>,
}

/// Spherical-harmonic basis evaluated once per direction and reused for every
/// sample along a ray.
#[derive(Clone, Copy, Debug)]
pub struct DirBasis {
    values: [f64; 9],
    len: usize,
}

impl DirBasis {
    pub fn new(degree: u8, dir: &Vec3) -> Self {
        let mut values = [0.0; 9];
        sh::eval_basis(degree, dir, &mut values);
        DirBasis {
            values,
            len: sh::basis_len(degree),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values[..self.len]
    }
}

impl RadianceGrid {
    pub fn new(grid: GridSpec, sh_degree: u8, gray: f64) -> Self {
        assert!(sh_degree <= sh::MAX_DEGREE, "sh_degree must be 0, 1 or 2");
        let nb = sh::basis_len(sh_degree);
        let n = grid.vertex_count() * 3 * nb;
        let mut coeffs = vec![0.0f32; n];
        for c in coeffs.chunks_mut(nb) {
            c[0] = gray as f32;
        }
        RadianceGrid {
            grid,
            sh_degree,
            coeffs,
            grad: vec![0.0; n],
        }
    }

    pub fn from_coeffs(grid: GridSpec, sh_degree: u8, coeffs: Vec<f32>) -> Result<Self> {
        if sh_degree > sh::MAX_DEGREE {
            return Err(Error::invalid(format!("sh_degree {sh_degree} > {}", sh::MAX_DEGREE)));
        }
        let expected = grid.vertex_count() * 3 * sh::basis_len(sh_degree);
        if coeffs.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "expected {expected} radiance coefficients, got {}",
                coeffs.len()
            )));
        }
        let n = coeffs.len();
        Ok(RadianceGrid {
            grid,
            sh_degree,
            coeffs,
            grad: vec![0.0; n],
        })
    }

    /// View-independent grid baked from a color function.
    pub fn bake_rgb(grid: GridSpec, mut color_at: impl FnMut(&Vec3) -> Rgb) -> Self {
        let mut r = RadianceGrid::new(grid, 0, 0.0);
        let d = grid.vertex_dims();
        for k in 0..d[2] {
            for j in 0..d[1] {
                for i in 0..d[0] {
                    let v = grid.vertex_index(i, j, k);
                    let c = color_at(&grid.vertex_position(i, j, k));
                    for ch in 0..3 {
                        r.coeffs[v * 3 + ch] = c[ch] as f32;
                    }
                }
            }
        }
        r
    }

    pub fn basis_len(&self) -> usize {
        sh::basis_len(self.sh_degree)
    }

    pub fn basis(&self, dir: &Vec3) -> DirBasis {
        DirBasis::new(self.sh_degree, dir)
    }

    /// Decoded color, clamped to `[0, 1]`. Points outside the bounds decode to
    /// black; the renderer substitutes the environment there.
    pub fn eval_color(&self, p: &Vec3, dir: &Vec3) -> Result<Rgb> {
        if !is_unit(dir) {
            return Err(Error::NonUnitDirection(dir.norm()));
        }
        Ok(match self.grid.stencil(p) {
            Some(s) => self.color_at(&s, &self.basis(dir)),
            None => Rgb::zeros(),
        })
    }

    /// Unclamped per-channel value.
    pub fn raw_at(&self, s: &Stencil, basis: &DirBasis) -> Rgb {
        let nb = basis.len;
        let b = basis.values();
        let mut out = Rgb::zeros();
        for (&v, &w) in s.index.iter().zip(&s.weight) {
            if w == 0.0 {
                continue;
            }
            let base = v * 3 * nb;
            for ch in 0..3 {
                let c = &self.coeffs[base + ch * nb..base + (ch + 1) * nb];
                let dot: f64 = c.iter().zip(b).map(|(&c, &b)| c as f64 * b).sum();
                out[ch] += w * dot;
            }
        }
        out
    }

    #[inline]
    pub fn color_at(&self, s: &Stencil, basis: &DirBasis) -> Rgb {
        self.raw_at(s, basis).map(|v| v.clamp(0.0, 1.0))
    }

    pub fn reset_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn scatter_grad_color(&mut self, p: &Vec3, dir: &Vec3, dl_dcolor: &Rgb) -> Result<()> {
        if !is_unit(dir) {
            return Err(Error::NonUnitDirection(dir.norm()));
        }
        if let Some(s) = self.grid.stencil(p) {
            let basis = self.basis(dir);
            self.scatter_stencil_color(&s, &basis, dl_dcolor);
        }
        Ok(())
    }

    /// Backward of [`color_at`](Self::color_at). Channels whose raw value is
    /// clamped receive no gradient.
    pub fn scatter_stencil_color(&mut self, s: &Stencil, basis: &DirBasis, dl_dcolor: &Rgb) {
        if *dl_dcolor == Rgb::zeros() {
            return;
        }
        let raw = self.raw_at(s, basis);
        let mut upstream = *dl_dcolor;
        for ch in 0..3 {
            if !(raw[ch] > 0.0 && raw[ch] < 1.0) {
                upstream[ch] = 0.0;
            }
        }
        if upstream == Rgb::zeros() {
            return;
        }
        let nb = basis.len;
        let b = basis.values();
        for (&v, &w) in s.index.iter().zip(&s.weight) {
            if w == 0.0 {
                continue;
            }
            let base = v * 3 * nb;
            for ch in 0..3 {
                let g = upstream[ch] * w;
                if g == 0.0 {
                    continue;
                }
                for (k, &bk) in b.iter().enumerate() {
                    self.grad[base + ch * nb + k] += g * bk;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Aabb;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> GridSpec {
        GridSpec::cubic(n, Aabb::new([-1.0; 3], [1.0; 3]))
    }

    fn random_dir(rng: &mut impl Rng) -> Vec3 {
        loop {
            let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if v.norm() > 0.1 && v.norm() < 1.0 {
                return v.normalize();
            }
        }
    }

    #[test]
    fn degree_zero_is_isotropic() {
        let r = RadianceGrid::new(grid(2), 0, 0.3);
        let p = Vec3::new(0.1, -0.2, 0.5);
        for d in [Vec3::x(), -Vec3::z(), Vec3::new(1.0, 1.0, 1.0).normalize()] {
            let c = r.eval_color(&p, &d).unwrap();
            assert!((c - Rgb::repeat(0.3)).norm() < 1e-7);
        }
    }

    #[test]
    fn zero_coefficients_decode_to_black() {
        let r = RadianceGrid::new(grid(2), 2, 0.0);
        assert_eq!(r.eval_color(&Vec3::zeros(), &Vec3::y()).unwrap(), Rgb::zeros());
    }

    #[test]
    fn rejects_non_unit_direction() {
        let r = RadianceGrid::new(grid(2), 1, 0.5);
        assert!(matches!(
            r.eval_color(&Vec3::zeros(), &Vec3::new(0.0, 0.0, 1.01)),
            Err(Error::NonUnitDirection(_))
        ));
    }

    #[test]
    fn clamped_channel_gets_no_gradient() {
        let mut r = RadianceGrid::new(grid(2), 0, 0.5);
        for c in r.coeffs.chunks_mut(3) {
            c[0] = 1.5;
        }
        let p = Vec3::new(0.3, 0.3, 0.3);
        r.scatter_grad_color(&p, &Vec3::z(), &Rgb::new(1.0, 1.0, 1.0)).unwrap();
        for v in 0..r.grid.vertex_count() {
            assert_eq!(r.grad[v * 3], 0.0);
        }
        assert!(r.grad.iter().any(|&g| g != 0.0));
    }

    #[test]
    fn zero_upstream_changes_nothing() {
        let mut r = RadianceGrid::new(grid(2), 2, 0.5);
        r.scatter_grad_color(&Vec3::zeros(), &Vec3::x(), &Rgb::zeros()).unwrap();
        assert!(r.grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn scatter_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for deg in 0..=2u8 {
            for _ in 0..10 {
                let g = grid(2);
                let nb = sh::basis_len(deg);
                let n = g.vertex_count() * 3 * nb;
                let coeffs: Vec<f32> = (0..n)
                    .map(|i| if i % nb == 0 { rng.random_range(0.3..0.7) } else { rng.random_range(-0.05..0.05) })
                    .collect();
                let mut r = RadianceGrid::from_coeffs(g, deg, coeffs).unwrap();
                let p = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                let d = random_dir(&mut rng);
                let up = Rgb::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                r.scatter_grad_color(&p, &d, &up).unwrap();
                let s = g.stencil(&p).unwrap();
                let objective = |r: &RadianceGrid| r.eval_color(&p, &d).unwrap().dot(&up);
                for &v in &s.index {
                    for j in 0..3 * nb {
                        let idx = v * 3 * nb + j;
                        let base = r.coeffs[idx];
                        r.coeffs[idx] = base + 1e-2;
                        let hu = (r.coeffs[idx] - base) as f64;
                        let fu = objective(&r);
                        r.coeffs[idx] = base - 1e-2;
                        let hd = (base - r.coeffs[idx]) as f64;
                        let fdn = objective(&r);
                        r.coeffs[idx] = base;
                        let fd = (fu - fdn) / (hu + hd);
                        let an = r.grad[idx];
                        let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
                        assert!(rel < 1e-4, "deg {deg} coeff {idx}: fd {fd} analytic {an}");
                    }
                }
            }
        }
    }
}
