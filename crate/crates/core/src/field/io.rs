//! Field checkpoint: a little-endian header followed by raw f32 arrays.
//!
//! ```text
//! magic     b"OCSF"
//! version   u32
//! res       3 x u32
//! bounds    6 x f64   (min xyz, max xyz)
//! sh_degree u32
//! logits    (res+1)^3 x f32
//! coeffs    (res+1)^3 x 3 x (sh_degree+1)^2 x f32
//! ```

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::field::{sh, GridSpec, OccupancyField, RadianceGrid};
use crate::geom::Aabb;

pub const FIELD_MAGIC: &[u8; 4] = b"OCSF";
pub const FIELD_VERSION: u32 = 1;

pub(crate) fn io_err(e: std::io::Error) -> Error {
    Error::Checkpoint(e.to_string())
}

pub(crate) fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes()).map_err(io_err)
}

pub(crate) fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes()).map_err(io_err)
}

pub(crate) fn write_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes()).map_err(io_err)
}

pub(crate) fn write_f32s(w: &mut impl Write, v: &[f32]) -> Result<()> {
    let mut buf = Vec::with_capacity(v.len() * 4);
    for x in v {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf).map_err(io_err)
}

pub(crate) fn write_f64s(w: &mut impl Write, v: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(v.len() * 8);
    for x in v {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf).map_err(io_err)
}

pub(crate) fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(b)
}

pub(crate) fn read_u32(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

pub(crate) fn read_u64(r: &mut impl Read) -> Result<u64> {
    Ok(u64::from_le_bytes(read_array(r)?))
}

pub(crate) fn read_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_le_bytes(read_array(r)?))
}

pub(crate) fn read_f32s(r: &mut impl Read, n: usize) -> Result<Vec<f32>> {
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf).map_err(io_err)?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub(crate) fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf).map_err(io_err)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn write_fields(w: &mut impl Write, occ: &OccupancyField, rad: &RadianceGrid) -> Result<()> {
    if occ.grid != rad.grid {
        return Err(Error::DimensionMismatch(
            "occupancy and radiance grids differ".into(),
        ));
    }
    let g = occ.grid;
    w.write_all(FIELD_MAGIC).map_err(io_err)?;
    write_u32(w, FIELD_VERSION)?;
    for r in g.resolution {
        write_u32(w, r as u32)?;
    }
    for v in g.bounds.min.iter().chain(&g.bounds.max) {
        write_f64(w, *v)?;
    }
    write_u32(w, rad.sh_degree as u32)?;
    write_f32s(w, &occ.logits)?;
    write_f32s(w, &rad.coeffs)?;
    Ok(())
}

pub fn read_fields(r: &mut impl Read) -> Result<(OccupancyField, RadianceGrid)> {
    let magic: [u8; 4] = read_array(r)?;
    if &magic != FIELD_MAGIC {
        return Err(Error::Checkpoint("not a field checkpoint (bad magic)".into()));
    }
    let version = read_u32(r)?;
    if version != FIELD_VERSION {
        return Err(Error::Checkpoint(format!("unsupported field version {version}")));
    }
    let mut resolution = [0usize; 3];
    for v in &mut resolution {
        *v = read_u32(r)? as usize;
        if *v == 0 || *v > 4096 {
            return Err(Error::Checkpoint(format!("implausible resolution {v}")));
        }
    }
    let mut b = [0f64; 6];
    for v in &mut b {
        *v = read_f64(r)?;
    }
    let bounds = Aabb::new([b[0], b[1], b[2]], [b[3], b[4], b[5]]);
    if !bounds.is_valid() {
        return Err(Error::Checkpoint("invalid bounds".into()));
    }
    let degree = read_u32(r)?;
    if degree > sh::MAX_DEGREE as u32 {
        return Err(Error::Checkpoint(format!("unsupported sh degree {degree}")));
    }
    let grid = GridSpec::new(resolution, bounds);
    let logits = read_f32s(r, grid.vertex_count())?;
    let coeffs = read_f32s(r, grid.vertex_count() * 3 * sh::basis_len(degree as u8))?;
    let occ = OccupancyField::from_logits(grid, logits);
    let rad = RadianceGrid::from_coeffs(grid, degree as u8, coeffs)?;
    Ok((occ, rad))
}
