use serde::{Deserialize, Serialize};

use crate::geom::{Aabb, Vec3};

/// Vertex lattice over an axis-aligned box: `resolution` cells per axis, hence
/// `resolution + 1` vertices per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub resolution: [usize; 3],
    pub bounds: Aabb,
}

/// The eight vertices surrounding a point together with their trilinear weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stencil {
    pub index: [usize; 8],
    pub weight: [f64; 8],
}

impl GridSpec {
    pub fn new(resolution: [usize; 3], bounds: Aabb) -> Self {
        GridSpec { resolution, bounds }
    }

    pub fn cubic(resolution: usize, bounds: Aabb) -> Self {
        GridSpec::new([resolution; 3], bounds)
    }

    pub fn vertex_dims(&self) -> [usize; 3] {
        [
            self.resolution[0] + 1,
            self.resolution[1] + 1,
            self.resolution[2] + 1,
        ]
    }

    pub fn vertex_count(&self) -> usize {
        let d = self.vertex_dims();
        d[0] * d[1] * d[2]
    }

    pub fn cell_count(&self) -> usize {
        self.resolution.iter().product()
    }

    #[inline]
    pub fn vertex_index(&self, i: usize, j: usize, k: usize) -> usize {
        let d = self.vertex_dims();
        (k * d[1] + j) * d[0] + i
    }

    pub fn vertex_coords(&self, index: usize) -> [usize; 3] {
        let d = self.vertex_dims();
        [index % d[0], (index / d[0]) % d[1], index / (d[0] * d[1])]
    }

    pub fn vertex_position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        let c = self.cell_size();
        Vec3::new(
            self.bounds.min[0] + i as f64 * c.x,
            self.bounds.min[1] + j as f64 * c.y,
            self.bounds.min[2] + k as f64 * c.z,
        )
    }

    pub fn cell_size(&self) -> Vec3 {
        let e = self.bounds.extent();
        Vec3::new(
            e.x / self.resolution[0] as f64,
            e.y / self.resolution[1] as f64,
            e.z / self.resolution[2] as f64,
        )
    }

    /// Linear index of the cell containing `p`, if `p` is inside the bounds.
    pub fn cell_of(&self, p: &Vec3) -> Option<usize> {
        if !self.bounds.contains(p) {
            return None;
        }
        let (cell, _) = self.cell_and_fraction(p);
        Some((cell[2] * self.resolution[1] + cell[1]) * self.resolution[0] + cell[0])
    }

    fn cell_and_fraction(&self, p: &Vec3) -> ([usize; 3], [f64; 3]) {
        let mut cell = [0usize; 3];
        let mut frac = [0f64; 3];
        for a in 0..3 {
            let n = self.resolution[a];
            let u = (p[a] - self.bounds.min[a]) / (self.bounds.max[a] - self.bounds.min[a]) * n as f64;
            let i = (u.floor().max(0.0) as usize).min(n - 1);
            cell[a] = i;
            frac[a] = (u - i as f64).clamp(0.0, 1.0);
        }
        (cell, frac)
    }

    /// Trilinear stencil for `p`; `None` outside the bounds.
    pub fn stencil(&self, p: &Vec3) -> Option<Stencil> {
        if !self.bounds.contains(p) {
            return None;
        }
        let (c, f) = self.cell_and_fraction(p);
        let mut index = [0usize; 8];
        let mut weight = [0f64; 8];
        for corner in 0..8 {
            let (dx, dy, dz) = (corner & 1, (corner >> 1) & 1, (corner >> 2) & 1);
            index[corner] = self.vertex_index(c[0] + dx, c[1] + dy, c[2] + dz);
            let wx = if dx == 1 { f[0] } else { 1.0 - f[0] };
            let wy = if dy == 1 { f[1] } else { 1.0 - f[1] };
            let wz = if dz == 1 { f[2] } else { 1.0 - f[2] };
            weight[corner] = wx * wy * wz;
        }
        Some(Stencil { index, weight })
    }
}

impl Stencil {
    #[inline]
    pub fn interpolate(&self, values: &[f32]) -> f64 {
        self.index
            .iter()
            .zip(&self.weight)
            .map(|(&i, &w)| w * values[i] as f64)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> GridSpec {
        GridSpec::new([4, 5, 3], Aabb::new([-1.0, 0.0, 2.0], [1.0, 2.5, 3.5]))
    }

    proptest! {
        #[test]
        fn weights_are_a_partition_of_unity(x in -1.0f64..=1.0, y in 0.0f64..=2.5, z in 2.0f64..=3.5) {
            let s = grid().stencil(&Vec3::new(x, y, z)).unwrap();
            prop_assert!(s.weight.iter().all(|&w| w >= 0.0));
            let sum: f64 = s.weight.iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn outside_has_no_stencil() {
        assert!(grid().stencil(&Vec3::new(1.01, 1.0, 3.0)).is_none());
        assert!(grid().cell_of(&Vec3::new(0.0, -0.1, 3.0)).is_none());
    }

    #[test]
    fn vertex_index_round_trips() {
        let g = grid();
        for idx in [0, 7, 31, g.vertex_count() - 1] {
            let [i, j, k] = g.vertex_coords(idx);
            assert_eq!(g.vertex_index(i, j, k), idx);
        }
    }

    #[test]
    fn upper_corner_maps_to_last_vertex() {
        let g = grid();
        let s = g.stencil(&g.bounds.hi()).unwrap();
        let heavy = s.weight.iter().position(|&w| w == 1.0).unwrap();
        assert_eq!(s.index[heavy], g.vertex_count() - 1);
    }
}
