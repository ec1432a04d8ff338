//! 4x4 core transform with explicit orthonormal scaling, and uniform
//! quantization.

use crate::error::Result;

use super::qp_to_qstep;

pub type Block4x4 = [[f64; 4]; 4];

const CORE: [[f64; 4]; 4] = [
    [1.0, 1.0, 1.0, 1.0],
    [2.0, 1.0, -1.0, -2.0],
    [1.0, -1.0, -1.0, 1.0],
    [1.0, -2.0, 2.0, -1.0],
];

/// Rows of the core matrix scaled to unit norm.
fn basis() -> [[f64; 4]; 4] {
    let mut b = CORE;
    for row in b.iter_mut() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        row.iter_mut().for_each(|v| *v /= norm);
    }
    b
}

/// Zigzag scan of a 4x4 block as (row, col).
pub const ZIGZAG: [(usize, usize); 16] = [
    (0, 0),
    (0, 1),
    (1, 0),
    (2, 0),
    (1, 1),
    (0, 2),
    (0, 3),
    (1, 2),
    (2, 1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (2, 3),
    (3, 2),
    (3, 3),
];

/// `Y = A X A^T` with `A` the normalized core matrix.
pub fn forward_transform_4x4(block: &Block4x4) -> Block4x4 {
    let a = basis();
    let mut tmp = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            tmp[i][j] = (0..4).map(|k| a[i][k] * block[k][j]).sum();
        }
    }
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| tmp[i][k] * a[j][k]).sum();
        }
    }
    out
}

/// `X = A^T Y A`.
pub fn inverse_transform_4x4(coeffs: &Block4x4) -> Block4x4 {
    let a = basis();
    let mut tmp = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            tmp[i][j] = (0..4).map(|k| a[k][i] * coeffs[k][j]).sum();
        }
    }
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| tmp[i][k] * a[k][j]).sum();
        }
    }
    out
}

/// `level = round(coef / qstep)`, rounding half away from zero.
pub fn quantize(coeffs: &Block4x4, qp: u8) -> Result<[[i32; 4]; 4]> {
    let step = qp_to_qstep(i32::from(qp))?;
    Ok(coeffs.map(|row| row.map(|c| (c / step).round() as i32)))
}

pub fn dequantize(levels: &[[i32; 4]; 4], qp: u8) -> Result<Block4x4> {
    let step = qp_to_qstep(i32::from(qp))?;
    Ok(levels.map(|row| row.map(|l| f64::from(l) * step)))
}
