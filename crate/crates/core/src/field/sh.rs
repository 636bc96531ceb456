//! Real spherical-harmonic basis up to degree 2, rescaled so the constant band
//! is exactly 1. A degree-0 grid therefore stores plain RGB.

use crate::geom::Vec3;

pub const MAX_DEGREE: u8 = 2;

const Y00: f64 = 0.282_094_791_773_878_14;
const C1: f64 = 0.488_602_511_902_919_9;
const C2_XY: f64 = 1.092_548_430_592_079_2;
const C2_ZZ: f64 = 0.315_391_565_252_520_05;
const C2_XX_YY: f64 = 0.546_274_215_296_039_6;

pub fn basis_len(degree: u8) -> usize {
    let d = degree as usize + 1;
    d * d
}

/// Fills `out[..basis_len(degree)]` with the basis evaluated at unit direction `d`.
/// Ordering is (l, m) with m ascending: Y00, Y1-1, Y10, Y11, Y2-2, Y2-1, Y20, Y21, Y22.
pub fn eval_basis(degree: u8, d: &Vec3, out: &mut [f64; 9]) {
    let (x, y, z) = (d.x, d.y, d.z);
    out[0] = 1.0;
    if degree >= 1 {
        out[1] = C1 * y / Y00;
        out[2] = C1 * z / Y00;
        out[3] = C1 * x / Y00;
    }
    if degree >= 2 {
        out[4] = C2_XY * x * y / Y00;
        out[5] = C2_XY * y * z / Y00;
        out[6] = C2_ZZ * (3.0 * z * z - 1.0) / Y00;
        out[7] = C2_XY * x * z / Y00;
        out[8] = C2_XX_YY * (x * x - y * y) / Y00;
    }
}
