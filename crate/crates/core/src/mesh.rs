//! Triangle meshes: marching-cubes extraction, OBJ/PLY export, surface
//! sampling, Chamfer distance, and a few analytic generators.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use kiddo::{ImmutableKdTree, SquaredEuclidean};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::OccupancyField;
use crate::geom::Vec3;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

fn triangle_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

impl Mesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len() as u32;
        for t in &self.triangles {
            if t.iter().any(|&i| i >= n) {
                return Err(Error::invalid(format!("triangle {t:?} indexes past {n} vertices")));
            }
            if self.area_of(t) == 0.0 {
                return Err(Error::invalid(format!("degenerate triangle {t:?}")));
            }
        }
        Ok(())
    }

    fn area_of(&self, t: &[u32; 3]) -> f64 {
        triangle_area(
            &self.vertices[t[0] as usize],
            &self.vertices[t[1] as usize],
            &self.vertices[t[2] as usize],
        )
    }

    pub fn area(&self) -> f64 {
        self.triangles.iter().map(|t| self.area_of(t)).sum()
    }

    /// Signed enclosed volume; positive for closed meshes with outward normals.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i as usize]);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// `V - E + F` over referenced vertices and unique undirected edges.
    pub fn euler_characteristic(&self) -> i64 {
        let mut verts = HashSet::new();
        let mut edges = HashSet::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                verts.insert(a);
                edges.insert((a.min(b), a.max(b)));
            }
        }
        verts.len() as i64 - edges.len() as i64 + self.triangles.len() as i64
    }

    /// True when every undirected edge is shared by exactly two triangles
    /// traversing it in opposite directions.
    pub fn is_closed_manifold(&self) -> bool {
        let mut directed: HashMap<(u32, u32), u32> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                *directed.entry((t[k], t[(k + 1) % 3])).or_default() += 1;
            }
        }
        directed.iter().all(|(&(a, b), &n)| n == 1 && directed.get(&(b, a)) == Some(&1))
    }

    pub fn write_obj(&self, w: &mut impl Write) -> std::io::Result<()> {
        for v in &self.vertices {
            writeln!(w, "v {} {} {}", v.x as f32, v.y as f32, v.z as f32)?;
        }
        for t in &self.triangles {
            writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
        }
        Ok(())
    }

    /// Binary little-endian PLY with f32 vertices and i32 indices.
    pub fn write_ply(&self, w: &mut impl Write) -> std::io::Result<()> {
        write!(
            w,
            "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
            self.vertices.len(),
            self.triangles.len()
        )?;
        for v in &self.vertices {
            for c in [v.x, v.y, v.z] {
                w.write_all(&(c as f32).to_le_bytes())?;
            }
        }
        for t in &self.triangles {
            w.write_all(&[3])?;
            for &i in t {
                w.write_all(&(i as i32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Writes OBJ or PLY depending on the extension (`.ply`, otherwise OBJ).
    pub fn save(&self, path: &Path) -> Result<()> {
        let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        let res = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("ply")) {
            self.write_ply(&mut w)
        } else {
            self.write_obj(&mut w)
        };
        res.and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }

    /// Reads the vertex and triangular face records of an OBJ file.
    pub fn read_obj(text: &str) -> Result<Mesh> {
        let mut m = Mesh::default();
        for (n, line) in text.lines().enumerate() {
            let mut it = line.split_whitespace();
            let bad = || Error::invalid(format!("malformed OBJ line {}: {line}", n + 1));
            match it.next() {
                Some("v") => {
                    let c: Vec<f64> = it.map(|s| s.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
                    if c.len() < 3 {
                        return Err(bad());
                    }
                    m.vertices.push(Vec3::new(c[0], c[1], c[2]));
                }
                Some("f") => {
                    let idx: Vec<u32> = it
                        .map(|s| s.split('/').next().unwrap_or("").parse::<u32>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad())?;
                    if idx.len() != 3 || idx.contains(&0) {
                        return Err(bad());
                    }
                    m.triangles.push([idx[0] - 1, idx[1] - 1, idx[2] - 1]);
                }
                _ => {}
            }
        }
        Ok(m)
    }

    /// `n` points distributed uniformly by area.
    pub fn sample_surface(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<[f64; 3]>> {
        if self.is_empty() {
            return Err(Error::EmptyMesh("cannot sample an empty mesh".into()));
        }
        let mut cdf = Vec::with_capacity(self.triangles.len());
        let mut acc = 0.0;
        for t in &self.triangles {
            acc += self.area_of(t);
            cdf.push(acc);
        }
        if acc <= 0.0 {
            return Err(Error::EmptyMesh("mesh has zero area".into()));
        }
        Ok((0..n)
            .map(|_| {
                let u = rng.random::<f64>() * acc;
                let k = cdf.partition_point(|&c| c < u).min(cdf.len() - 1);
                let [a, b, c] = self.triangles[k].map(|i| self.vertices[i as usize]);
                let (mut r1, mut r2) = (rng.random::<f64>(), rng.random::<f64>());
                if r1 + r2 > 1.0 {
                    r1 = 1.0 - r1;
                    r2 = 1.0 - r2;
                }
                let p = a + r1 * (b - a) + r2 * (c - a);
                [p.x, p.y, p.z]
            })
            .collect())
    }

    pub fn translated(&self, by: Vec3) -> Mesh {
        Mesh {
            vertices: self.vertices.iter().map(|v| v + by).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Concatenates meshes into one vertex/triangle list.
    pub fn merged(parts: &[Mesh]) -> Mesh {
        let mut m = Mesh::default();
        for p in parts {
            let off = m.vertices.len() as u32;
            m.vertices.extend(&p.vertices);
            m.triangles.extend(p.triangles.iter().map(|t| t.map(|i| i + off)));
        }
        m
    }
}

fn mean_nearest(from: &[[f64; 3]], to: &[[f64; 3]]) -> f64 {
    let tree = ImmutableKdTree::<f64, 3>::new_from_slice(to).expect("non-empty point set");
    let sum: f64 = from
        .iter()
        .map(|q| tree.query(q).nearest_one::<SquaredEuclidean<f64>>().execute().distance.sqrt())
        .sum();
    sum / from.len() as f64
}

/// Symmetric mean nearest-neighbour distance between `n_points` area-weighted
/// samples of each mesh. Both meshes are sampled from the same seed.
pub fn chamfer(a: &Mesh, b: &Mesh, n_points: usize, seed: u64) -> Result<f64> {
    if n_points == 0 {
        return Err(Error::invalid("chamfer needs at least one sample point"));
    }
    let pa = a.sample_surface(n_points, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let pb = b.sample_surface(n_points, &mut ChaCha8Rng::seed_from_u64(seed))?;
    Ok(0.5 * (mean_nearest(&pa, &pb) + mean_nearest(&pb, &pa)))
}

// Cube corners use bit `a` of the corner id for the offset along axis `a`.
// Each face lists its corners counter-clockwise as seen from outside.
const FACES: [[usize; 4]; 6] = [
    [0, 4, 6, 2],
    [1, 3, 7, 5],
    [0, 1, 5, 4],
    [2, 6, 7, 3],
    [0, 2, 3, 1],
    [4, 5, 7, 6],
];

/// Local edge id for the edge between two corners differing in one bit.
fn local_edge(a: usize, b: usize) -> usize {
    let lo = a.min(b);
    let axis = (a ^ b).trailing_zeros() as usize;
    lo * 3 + axis
}

fn share_face(e1: usize, e2: usize) -> bool {
    let corners = |e: usize| {
        let lo = e / 3;
        [lo, lo | (1 << (e % 3))]
    };
    let (a, b) = (corners(e1), corners(e2));
    FACES.iter().any(|f| a.iter().chain(&b).all(|c| f.contains(c)))
}

/// Segments of the iso-contour on one face as `(from_edge, to_edge)` pairs of
/// local edge ids. Each segment runs from an outside-to-inside crossing to an
/// inside-to-outside crossing; saddles are resolved with the bilinear
/// asymptotic decider.
fn face_segments(face: &[usize; 4], v: &[f64; 8], level: f64, out: &mut Vec<(usize, usize)>) {
    let inside = |c: usize| v[c] > level;
    // Crossing on edge k (corner k -> corner k+1): Some(true) if in->out.
    let mut cross: [Option<bool>; 4] = [None; 4];
    let mut count = 0;
    for k in 0..4 {
        let (a, b) = (face[k], face[(k + 1) % 4]);
        if inside(a) != inside(b) {
            cross[k] = Some(inside(a));
            count += 1;
        }
    }
    let edge = |k: usize| local_edge(face[k], face[(k + 1) % 4]);
    match count {
        0 => {}
        2 => {
            let start = (0..4).find(|&k| cross[k] == Some(false)).unwrap();
            let end = (0..4).find(|&k| cross[k] == Some(true)).unwrap();
            out.push((edge(start), edge(end)));
        }
        4 => {
            let [v0, v1, v2, v3] = face.map(|c| v[c]);
            let saddle = (v0 * v2 - v1 * v3) / (v0 + v2 - v1 - v3);
            let connected = saddle > level;
            for k in 0..4 {
                if cross[k] == Some(false) {
                    let partner = if connected { (k + 3) % 4 } else { (k + 1) % 4 };
                    out.push((edge(k), edge(partner)));
                }
            }
        }
        _ => unreachable!("a face has an even number of crossings"),
    }
}

/// Marching cubes on decoded occupancy at `level`, with linear interpolation
/// along cube edges. Crossing vertices are shared between neighbouring cubes
/// and triangles face away from the occupied side. A field that never crosses
/// `level` yields an empty mesh.
pub fn extract_mesh(occ: &OccupancyField, level: f64) -> Result<Mesh> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("extraction level {level} outside (0, 1)")));
    }
    let g = &occ.grid;
    let alpha: Vec<f64> = (0..g.vertex_count()).map(|i| occ.vertex_alpha(i)).collect();
    let res = g.resolution;
    let mut mesh = Mesh::default();
    let mut welded: HashMap<usize, u32> = HashMap::new();
    let mut segs = Vec::with_capacity(12);
    for k in 0..res[2] {
        for j in 0..res[1] {
            for i in 0..res[0] {
                let corner = |c: usize| g.vertex_index(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
                let v: [f64; 8] = std::array::from_fn(|c| alpha[corner(c)]);
                let n_in = v.iter().filter(|&&x| x > level).count();
                if n_in == 0 || n_in == 8 {
                    continue;
                }
                segs.clear();
                for f in &FACES {
                    face_segments(f, &v, level, &mut segs);
                }
                let mut vertex_of = |e: usize, mesh: &mut Mesh| -> u32 {
                    let (lo, axis) = (e / 3, e % 3);
                    let hi = lo | (1 << axis);
                    let key = corner(lo) * 3 + axis;
                    *welded.entry(key).or_insert_with(|| {
                        let pa = g.vertex_position(i + (lo & 1), j + ((lo >> 1) & 1), k + ((lo >> 2) & 1));
                        let pb = g.vertex_position(i + (hi & 1), j + ((hi >> 1) & 1), k + ((hi >> 2) & 1));
                        let t = (level - v[lo]) / (v[hi] - v[lo]);
                        mesh.vertices.push(pa + t * (pb - pa));
                        (mesh.vertices.len() - 1) as u32
                    })
                };
                let next: HashMap<usize, usize> = segs.iter().copied().collect();
                let mut used = HashSet::new();
                for &(start, _) in &segs {
                    if !used.insert(start) {
                        continue;
                    }
                    let mut polygon = vec![start];
                    let mut e = next[&start];
                    while e != start {
                        used.insert(e);
                        polygon.push(e);
                        e = next[&e];
                    }
                    let ids: Vec<u32> = polygon.iter().map(|&e| vertex_of(e, &mut mesh)).collect();
                    let n = ids.len();
                    // A diagonal lying in a cube face could coincide with one
                    // emitted by the neighbouring cube.
                    let apex = (0..n).find(|&a| (2..n - 1).all(|d| !share_face(polygon[a], polygon[(a + d) % n])));
                    let emit = |tri: [u32; 3], mesh: &mut Mesh| {
                        if mesh.area_of(&tri) > 0.0 {
                            mesh.triangles.push(tri);
                        }
                    };
                    match apex {
                        Some(a) => {
                            for d in 1..n - 1 {
                                emit([ids[a], ids[(a + d) % n], ids[(a + d + 1) % n]], &mut mesh);
                            }
                        }
                        None => {
                            let c = ids.iter().map(|&i| mesh.vertices[i as usize]).sum::<Vec3>() / n as f64;
                            mesh.vertices.push(c);
                            let ci = (mesh.vertices.len() - 1) as u32;
                            for d in 0..n {
                                emit([ci, ids[d], ids[(d + 1) % n]], &mut mesh);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(mesh)
}

/// Sphere from a subdivided icosahedron.
pub fn icosphere(center: Vec3, radius: f64, subdivisions: u32) -> Mesh {
    let p = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        [-1.0, p, 0.0],
        [1.0, p, 0.0],
        [-1.0, -p, 0.0],
        [1.0, -p, 0.0],
        [0.0, -1.0, p],
        [0.0, 1.0, p],
        [0.0, -1.0, -p],
        [0.0, 1.0, -p],
        [p, 0.0, -1.0],
        [p, 0.0, 1.0],
        [-p, 0.0, -1.0],
        [-p, 0.0, 1.0],
    ]
    .iter()
    .map(|v| Vec3::from(*v).normalize())
    .collect();
    let mut tris: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, verts: &mut Vec<Vec3>| {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push((verts[a as usize] + verts[b as usize]).normalize());
                (verts.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(tris.len() * 4);
        for [a, b, c] in tris {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        tris = next;
    }
    Mesh {
        vertices: verts.iter().map(|v| center + radius * v).collect(),
        triangles: tris,
    }
}

/// Square `size x size` in the plane `z = height`, split into `n x n` quads.
pub fn plane(height: f64, size: f64, n: u32) -> Mesh {
    let n = n.max(1);
    let mut m = Mesh::default();
    for j in 0..=n {
        for i in 0..=n {
            let (u, v) = (i as f64 / n as f64 - 0.5, j as f64 / n as f64 - 0.5);
            m.vertices.push(Vec3::new(u * size, v * size, height));
        }
    }
    let id = |i: u32, j: u32| j * (n + 1) + i;
    for j in 0..n {
        for i in 0..n {
            m.triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            m.triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::GridSpec;
    use crate::geom::{logit, sigmoid, Aabb};

    fn grid(n: usize) -> GridSpec {
        GridSpec::cubic(n, Aabb::cube([0.0; 3], 1.0))
    }

    fn steep(inside: bool) -> f64 {
        if inside {
            40.0
        } else {
            -40.0
        }
    }

    #[test]
    fn icosphere_is_closed_sphere() {
        let m = icosphere(Vec3::zeros(), 2.0, 2);
        m.validate().unwrap();
        assert!(m.is_closed_manifold());
        assert_eq!(m.euler_characteristic(), 2);
        assert!(m.signed_volume() > 0.0);
        assert!((m.area() - 4.0 * std::f64::consts::PI * 4.0).abs() / (16.0 * std::f64::consts::PI) < 0.02);
    }

    #[test]
    fn sphere_extraction_is_watertight_and_close() {
        let g = grid(24);
        let cell_diag = g.cell_size().norm();
        let occ = OccupancyField::bake(g, |p| steep(p.norm() < 0.6));
        let m = extract_mesh(&occ, 0.5).unwrap();
        m.validate().unwrap();
        assert!(m.is_closed_manifold());
        assert_eq!(m.euler_characteristic(), 2);
        assert!(m.signed_volume() > 0.0, "normals must face outward");
        let worst = m.vertices.iter().map(|v| (v.norm() - 0.6).abs()).fold(0.0, f64::max);
        assert!(worst < cell_diag, "{worst} vs {cell_diag}");
    }

    #[test]
    fn torus_extraction_has_genus_one() {
        let occ = OccupancyField::bake(grid(40), |p| {
            let q = (p.x * p.x + p.y * p.y).sqrt() - 0.55;
            steep((q * q + p.z * p.z).sqrt() < 0.22)
        });
        let m = extract_mesh(&occ, 0.5).unwrap();
        assert!(m.is_closed_manifold());
        assert_eq!(m.euler_characteristic(), 0);
    }

    #[test]
    fn random_fields_stay_closed() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let g = grid(6);
            // Zero on the boundary so every surface closes inside the grid.
            let occ = OccupancyField::bake(g, |p| {
                if p.abs().max() > 0.99 {
                    -5.0
                } else {
                    rng.random_range(-3.0..3.0)
                }
            });
            let m = extract_mesh(&occ, 0.5).unwrap();
            m.validate().unwrap();
            assert!(m.is_closed_manifold());
            assert!(m.signed_volume() >= 0.0);
        }
    }

    #[test]
    fn constant_field_gives_empty_mesh() {
        let occ = OccupancyField::new(grid(5), 0.2);
        assert!(extract_mesh(&occ, 0.5).unwrap().is_empty());
        assert!(extract_mesh(&occ, 1.0).is_err());
        assert!(matches!(chamfer(&Mesh::default(), &icosphere(Vec3::zeros(), 1.0, 0), 10, 0), Err(Error::EmptyMesh(_))));
    }

    #[test]
    fn vertices_sit_near_true_edge_crossing() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = grid(5);
        let h = g.cell_size().x;
        let occ = OccupancyField::bake(g, |_| rng.random_range(-6.0..6.0));
        for level in [0.1, 0.5, 0.9] {
            let m = extract_mesh(&occ, level).unwrap();
            for v in &m.vertices {
                // Walk along the generating edge axis to the exact crossing of
                // the interpolated field.
                let off_grid: Vec<usize> = (0..3)
                    .filter(|&a| {
                        let u = (v[a] + 1.0) / h;
                        (u - u.round()).abs() > 1e-9
                    })
                    .collect();
                // Polygon centroids are not edge crossings.
                let [on_axis] = off_grid[..] else { continue };
                let u = (v[on_axis] + 1.0) / h;
                let lo = u.floor();
                let at = |s: f64| {
                    let mut q = *v;
                    q[on_axis] = -1.0 + s * h;
                    occ.raw_logit(&q).unwrap()
                };
                let (l0, l1) = (at(lo), at(lo + 1.0));
                let exact = lo + (logit(level) - l0) / (l1 - l0);
                assert!((exact - u).abs() <= 0.5, "{} vs {}", exact, u);
                assert!(sigmoid(at(exact)) - level < 1e-6);
            }
        }
    }

    #[test]
    fn chamfer_identities() {
        let a = icosphere(Vec3::zeros(), 1.0, 3);
        assert!(chamfer(&a, &a, 2000, 7).unwrap() < 1e-6);
        let b = icosphere(Vec3::zeros(), 1.1, 3);
        let d = chamfer(&a, &b, 20_000, 7).unwrap();
        assert!((d - 0.1).abs() < 0.005, "{d}");
        let p = plane(0.0, 2.0, 8);
        let d = chamfer(&p, &p.translated(Vec3::new(0.0, 0.0, 0.05)), 20_000, 1).unwrap();
        assert!((d - 0.05).abs() < 0.0025, "{d}");
    }

    #[test]
    fn obj_round_trip_and_ply_layout() {
        let m = icosphere(Vec3::new(0.1, 0.2, 0.3), 0.7, 1);
        let mut obj = Vec::new();
        m.write_obj(&mut obj).unwrap();
        let back = Mesh::read_obj(std::str::from_utf8(&obj).unwrap()).unwrap();
        assert_eq!(back.triangles, m.triangles);
        for (a, b) in back.vertices.iter().zip(&m.vertices) {
            for k in 0..3 {
                assert_eq!(a[k] as f32, b[k] as f32);
            }
        }
        let mut ply = Vec::new();
        m.write_ply(&mut ply).unwrap();
        let header_end = ply.windows(11).position(|w| w == b"end_header\n").unwrap() + 11;
        assert_eq!(ply.len() - header_end, m.vertices.len() * 12 + m.triangles.len() * 13);
    }
}
