//! Analytic primitive scenes and the ground-truth ray tracer that renders them.

use nalgebra::{Matrix3, Rotation3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Rgb, Vec3};
use crate::sensor::camera::Ray;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Sphere { radius: f64 },
    /// Axis-aligned in the local frame.
    Box { half_extents: [f64; 3] },
    /// Ring around the local z axis.
    Torus { major: f64, minor: f64 },
}

/// Rigid placement. Rotation is given as XYZ Euler angles in degrees.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Placement {
    pub translation: [f64; 3],
    pub rotation_deg: [f64; 3],
}

impl Placement {
    pub fn at(translation: [f64; 3]) -> Self {
        Placement {
            translation,
            rotation_deg: [0.0; 3],
        }
    }

    fn rotation(&self) -> Matrix3<f64> {
        let [x, y, z] = self.rotation_deg.map(f64::to_radians);
        Rotation3::from_euler_angles(x, y, z).into_inner()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Albedo {
    Uniform { color: [f64; 3] },
    /// Box faces in order -x, +x, -y, +y, -z, +z. Other shapes use the first entry.
    PerFace { colors: [[f64; 3]; 6] },
    /// 3D checkerboard in local coordinates.
    Checker { a: [f64; 3], b: [f64; 3], scale: f64 },
}

impl Albedo {
    pub fn uniform(c: [f64; 3]) -> Self {
        Albedo::Uniform { color: c }
    }

    fn colors(&self) -> Vec<[f64; 3]> {
        match self {
            Albedo::Uniform { color } => vec![*color],
            Albedo::PerFace { colors } => colors.to_vec(),
            Albedo::Checker { a, b, .. } => vec![*a, *b],
        }
    }

    fn at(&self, local: &Vec3, face: usize) -> Rgb {
        match self {
            Albedo::Uniform { color } => Rgb::from(*color),
            Albedo::PerFace { colors } => Rgb::from(colors[face.min(5)]),
            Albedo::Checker { a, b, scale } => {
                let s: i64 = (0..3).map(|i| (local[i] * scale).floor() as i64).sum();
                Rgb::from(if s.rem_euclid(2) == 0 { *a } else { *b })
            }
        }
    }
}

fn default_opacity() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub shape: Shape,
    #[serde(default)]
    pub placement: Placement,
    pub albedo: Albedo,
    /// Fraction of light the primitive blocks; 1 is fully opaque.
    #[serde(default = "default_opacity")]
    pub opacity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionalLight {
    /// Direction the light travels.
    pub direction: [f64; 3],
    pub ambient: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveScene {
    #[serde(default)]
    pub primitives: Vec<Primitive>,
    pub environment: [f64; 3],
    #[serde(default)]
    pub light: Option<DirectionalLight>,
}

#[derive(Clone, Copy, Debug)]
struct Hit {
    t: f64,
    t_exit: f64,
    normal: Vec3,
    local: Vec3,
    face: usize,
}

const TORUS_EPS: f64 = 1e-10;

impl Primitive {
    pub fn new(shape: Shape, placement: Placement, albedo: Albedo) -> Self {
        Primitive {
            shape,
            placement,
            albedo,
            opacity: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match &self.shape {
            Shape::Sphere { radius } => *radius > 0.0,
            Shape::Box { half_extents } => half_extents.iter().all(|&h| h > 0.0),
            Shape::Torus { major, minor } => *minor > 0.0 && major > minor,
        };
        if !ok {
            return Err(Error::invalid(format!("degenerate shape {:?}", self.shape)));
        }
        if !(self.opacity > 0.0 && self.opacity <= 1.0) {
            return Err(Error::invalid(format!("opacity {} outside (0, 1]", self.opacity)));
        }
        for c in self.albedo.colors() {
            if c.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::invalid(format!("albedo {c:?} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Signed distance (exact for sphere and torus, exact outside for box).
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        let rot = self.placement.rotation();
        let local = rot.transpose() * (p - Vec3::from(self.placement.translation));
        shape_sdf(&self.shape, &local)
    }

    fn intersect(&self, ray: &Ray) -> Option<Hit> {
        let rot = self.placement.rotation();
        let o = rot.transpose() * (ray.origin - Vec3::from(self.placement.translation));
        let d = rot.transpose() * ray.direction;
        let mut hit = match &self.shape {
            Shape::Sphere { radius } => sphere_hit(&o, &d, *radius, ray.t_min, ray.t_max),
            Shape::Box { half_extents } => box_hit(&o, &d, half_extents, ray.t_min, ray.t_max),
            Shape::Torus { major, minor } => torus_hit(&o, &d, *major, *minor, ray.t_min, ray.t_max),
        }?;
        hit.normal = (rot * hit.normal).normalize();
        Some(hit)
    }
}

fn shape_sdf(shape: &Shape, p: &Vec3) -> f64 {
    match shape {
        Shape::Sphere { radius } => p.norm() - radius,
        Shape::Box { half_extents } => {
            let q = Vec3::new(p.x.abs() - half_extents[0], p.y.abs() - half_extents[1], p.z.abs() - half_extents[2]);
            q.map(|v| v.max(0.0)).norm() + q.x.max(q.y).max(q.z).min(0.0)
        }
        Shape::Torus { major, minor } => {
            let ring = (p.x * p.x + p.y * p.y).sqrt() - major;
            (ring * ring + p.z * p.z).sqrt() - minor
        }
    }
}

fn sphere_hit(o: &Vec3, d: &Vec3, r: f64, t_min: f64, t_max: f64) -> Option<Hit> {
    let b = o.dot(d);
    let c = o.dot(o) - r * r;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    let (t0, t1) = (-b - s, -b + s);
    let t = if t0 >= t_min { t0 } else if t1 >= t_min { t1 } else { return None };
    if t > t_max {
        return None;
    }
    let local = o + d * t;
    Some(Hit {
        t,
        t_exit: t1,
        normal: local / r,
        local,
        face: 0,
    })
}

/// Slab intersection in the local frame. Returns the entry (or exit, when
/// starting inside) with the face index of the hit plane.
fn box_hit(o: &Vec3, d: &Vec3, h: &[f64; 3], t_min: f64, t_max: f64) -> Option<Hit> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    let mut near_axis = 0;
    let mut far_axis = 0;
    for a in 0..3 {
        if d[a] == 0.0 {
            if o[a].abs() > h[a] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d[a];
        let (mut t0, mut t1) = ((-h[a] - o[a]) * inv, (h[a] - o[a]) * inv);
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        if t0 > t_near {
            t_near = t0;
            near_axis = a;
        }
        if t1 < t_far {
            t_far = t1;
            far_axis = a;
        }
    }
    if t_near > t_far {
        return None;
    }
    let (t, axis) = if t_near >= t_min { (t_near, near_axis) } else if t_far >= t_min { (t_far, far_axis) } else { return None };
    if t > t_max {
        return None;
    }
    let local = o + d * t;
    let positive = local[axis] > 0.0;
    let mut normal = Vec3::zeros();
    normal[axis] = if positive { 1.0 } else { -1.0 };
    Some(Hit {
        t,
        t_exit: t_far,
        normal,
        local,
        face: 2 * axis + positive as usize,
    })
}

fn torus_hit(o: &Vec3, d: &Vec3, major: f64, minor: f64, t_min: f64, t_max: f64) -> Option<Hit> {
    let shape = Shape::Torus { major, minor };
    let extent = [major + minor, major + minor, minor];
    let bbox = box_hit(o, d, &extent, t_min, t_max)?;
    let start = if shape_sdf(&shape, &(o + d * t_min)) <= 0.0 { t_min } else { bbox.t };
    let end = bbox.t_exit.min(t_max);
    // sphere tracing is conservative for an exact distance field
    let mut t = start;
    let mut entered = None;
    for _ in 0..2048 {
        if t > end {
            break;
        }
        let dist = shape_sdf(&shape, &(o + d * t));
        if dist < TORUS_EPS {
            entered = Some(t);
            break;
        }
        t += dist;
    }
    let t = entered?;
    // walk through the tube to find where the ray leaves it
    let mut t_exit = t + 1e-7;
    for _ in 0..2048 {
        let dist = shape_sdf(&shape, &(o + d * t_exit));
        if dist > 0.0 {
            break;
        }
        t_exit += (-dist).max(1e-7);
    }
    let local = o + d * t;
    let ring = Vec3::new(local.x, local.y, 0.0);
    let center = if ring.norm() > 0.0 { ring.normalize() * major } else { Vec3::zeros() };
    Some(Hit {
        t,
        t_exit,
        normal: (local - center).normalize(),
        local,
        face: 0,
    })
}

impl PrimitiveScene {
    pub fn empty(environment: [f64; 3]) -> Self {
        PrimitiveScene {
            primitives: Vec::new(),
            environment,
            light: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.environment.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("environment color outside [0, 1]"));
        }
        self.primitives.iter().try_for_each(Primitive::validate)
    }

    pub fn environment(&self) -> Rgb {
        Rgb::from(self.environment)
    }

    /// Distance along the ray to the nearest surface, if any.
    pub fn first_hit(&self, ray: &Ray) -> Option<f64> {
        self.nearest(ray).map(|(_, h)| h.t)
    }

    fn nearest(&self, ray: &Ray) -> Option<(usize, Hit)> {
        self.primitives
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.intersect(ray).map(|h| (i, h)))
            .min_by(|a, b| a.1.t.total_cmp(&b.1.t))
    }

    /// Nearest-hit Lambertian color; translucent primitives blend with what
    /// lies behind them.
    pub fn trace_ground_truth(&self, ray: &Ray) -> Rgb {
        self.trace_depth(ray, 0)
    }

    fn trace_depth(&self, ray: &Ray, depth: usize) -> Rgb {
        let Some((i, hit)) = self.nearest(ray) else {
            return self.environment();
        };
        let prim = &self.primitives[i];
        let mut color = prim.albedo.at(&hit.local, hit.face);
        if let Some(light) = &self.light {
            let l = -Vec3::from(light.direction).normalize();
            let n = if hit.normal.dot(&ray.direction) > 0.0 { -hit.normal } else { hit.normal };
            color *= light.ambient + (1.0 - light.ambient) * n.dot(&l).max(0.0);
        }
        if prim.opacity < 1.0 && depth < 16 {
            let behind = Ray {
                t_min: hit.t_exit.max(hit.t) + 1e-9,
                ..*ray
            };
            color = prim.opacity * color + (1.0 - prim.opacity) * self.trace_depth(&behind, depth + 1);
        }
        color
    }

    /// True when `p` is inside some opaque primitive.
    pub fn is_solid(&self, p: &Vec3) -> bool {
        self.primitives.iter().any(|pr| pr.signed_distance(p) < 0.0)
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.primitives
            .iter()
            .map(|pr| pr.signed_distance(p))
            .fold(f64::INFINITY, f64::min)
    }
}
