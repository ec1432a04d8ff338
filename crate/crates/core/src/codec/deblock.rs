//! In-loop deblocking filter on the 4x4 transform-block lattice.
//!
//! Every internal 4x4 edge gets a boundary strength: 2 when either side is
//! intra coded, 1 when either 4x4 block carries coded coefficients or the two
//! macroblocks differ in reference or motion vector, 0 otherwise. A line of
//! samples `p3 p2 p1 p0 | q0 q1 q2 q3` is filtered only when
//! `|p0 - q0| < alpha`, `|p1 - p0| < beta` and `|q1 - q0| < beta`, with
//! `alpha = beta = 0.8 * qstep + 2`. Strength 2 rewrites three samples per
//! side, strength 1 one sample per side. All vertical edges are processed
//! first, left to right, then all horizontal edges, top to bottom.

use crate::plane::LumaPlane;
use crate::MB_SIZE;

use super::inter::MotionVector;
use super::qstep;

/// Farthest a filtered sample can be from the edge it belongs to.
pub const DEBLOCK_REACH: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MbEdgeInfo {
    pub intra: bool,
    pub mv: MotionVector,
    /// 0 for the past reference, 1 for the future one.
    pub ref_idx: u8,
    pub qp: u8,
    /// Bit `4 * row + col` set when that 4x4 block has a nonzero level.
    pub coded_blocks: u16,
}

impl MbEdgeInfo {
    pub fn intra(qp: u8, coded_blocks: u16) -> Self {
        MbEdgeInfo {
            intra: true,
            mv: MotionVector::default(),
            ref_idx: 0,
            qp,
            coded_blocks,
        }
    }
}

/// Per-macroblock coding decisions for one frame, raster order.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockGrid {
    pub mb_cols: usize,
    pub mb_rows: usize,
    pub mbs: Vec<MbEdgeInfo>,
}

impl BlockGrid {
    pub fn uniform(width: usize, height: usize, info: MbEdgeInfo) -> Self {
        let mb_cols = width / MB_SIZE;
        let mb_rows = height / MB_SIZE;
        BlockGrid {
            mb_cols,
            mb_rows,
            mbs: vec![info; mb_cols * mb_rows],
        }
    }

    fn mb_at(&self, bx: usize, by: usize) -> &MbEdgeInfo {
        &self.mbs[(by / 4) * self.mb_cols + bx / 4]
    }

    fn coded(&self, bx: usize, by: usize) -> bool {
        let bit = 4 * (by % 4) + bx % 4;
        self.mb_at(bx, by).coded_blocks & (1 << bit) != 0
    }

    /// Boundary strength between 4x4 blocks `p` and `q` (in block units).
    pub fn strength(&self, p: (usize, usize), q: (usize, usize)) -> u8 {
        let mp = self.mb_at(p.0, p.1);
        let mq = self.mb_at(q.0, q.1);
        if mp.intra || mq.intra {
            return 2;
        }
        let mv_diff = (mp.mv.dx - mq.mv.dx).abs() >= 1 || (mp.mv.dy - mq.mv.dy).abs() >= 1;
        if self.coded(p.0, p.1) || self.coded(q.0, q.1) || mp.ref_idx != mq.ref_idx || mv_diff {
            1
        } else {
            0
        }
    }

    /// `alpha = beta` for the edge, from the rounded-up mean QP of both sides.
    pub fn threshold(&self, p: (usize, usize), q: (usize, usize)) -> f64 {
        let qp = (u16::from(self.mb_at(p.0, p.1).qp) + u16::from(self.mb_at(q.0, q.1).qp)).div_ceil(2);
        0.8 * qstep(qp as u8) + 2.0
    }
}

/// Filters one line of eight samples `[p3, p2, p1, p0, q0, q1, q2, q3]`.
fn filter_line(s: &mut [i32; 8], bs: u8, limit: f64) {
    let [p3, p2, p1, p0, q0, q1, q2, q3] = *s;
    let below = |d: i32| f64::from(d.abs()) < limit;
    if !(below(p0 - q0) && below(p1 - p0) && below(q1 - q0)) {
        return;
    }
    match bs {
        2 => {
            s[3] = (p2 + 2 * p1 + 2 * p0 + 2 * q0 + q1 + 4) >> 3;
            s[2] = (p2 + p1 + p0 + q0 + 2) >> 2;
            s[1] = (2 * p3 + 3 * p2 + p1 + p0 + q0 + 4) >> 3;
            s[4] = (p1 + 2 * p0 + 2 * q0 + 2 * q1 + q2 + 4) >> 3;
            s[5] = (p0 + q0 + q1 + q2 + 2) >> 2;
            s[6] = (2 * q3 + 3 * q2 + q1 + q0 + p0 + 4) >> 3;
        }
        1 => {
            s[3] = (p1 + 2 * p0 + q0 + 2) >> 2;
            s[4] = (p0 + 2 * q0 + q1 + 2) >> 2;
        }
        _ => {}
    }
}

pub fn deblock_filter(frame: &LumaPlane, grid: &BlockGrid) -> LumaPlane {
    let (w, h) = frame.dims();
    debug_assert_eq!(grid.mb_cols * MB_SIZE, w);
    debug_assert_eq!(grid.mb_rows * MB_SIZE, h);
    let mut out = frame.clone();
    let mut line = [0i32; 8];

    for x in (4..w).step_by(4) {
        for by in 0..h / 4 {
            let (p, q) = ((x / 4 - 1, by), (x / 4, by));
            let bs = grid.strength(p, q);
            if bs == 0 {
                continue;
            }
            let limit = grid.threshold(p, q);
            for y in by * 4..by * 4 + 4 {
                let row = out.row_mut(y);
                for (i, v) in line.iter_mut().enumerate() {
                    *v = i32::from(row[x - 4 + i]);
                }
                filter_line(&mut line, bs, limit);
                for (i, v) in line.iter().enumerate() {
                    row[x - 4 + i] = *v as u8;
                }
            }
        }
    }

    for y in (4..h).step_by(4) {
        for bx in 0..w / 4 {
            let (p, q) = ((bx, y / 4 - 1), (bx, y / 4));
            let bs = grid.strength(p, q);
            if bs == 0 {
                continue;
            }
            let limit = grid.threshold(p, q);
            for x in bx * 4..bx * 4 + 4 {
                for (i, v) in line.iter_mut().enumerate() {
                    *v = i32::from(out.get(x, y - 4 + i));
                }
                filter_line(&mut line, bs, limit);
                for (i, v) in line.iter().enumerate() {
                    out.set(x, y - 4 + i, *v as u8);
                }
            }
        }
    }
    out
}

/// True when `(x, y)` lies within [`DEBLOCK_REACH`] samples of an internal
/// 4x4 edge of a `width` x `height` frame.
pub fn near_block_edge(x: usize, y: usize, width: usize, height: usize) -> bool {
    let near = |c: usize, n: usize| {
        // edges sit between c = 4k - 1 and c = 4k for 0 < 4k < n
        let off = c % 4;
        let left_edge = c - off; // first sample right of an edge
        let right_edge = left_edge + 4; // first sample right of the next edge
        (left_edge > 0 && off < DEBLOCK_REACH) || (right_edge < n && 4 - off <= DEBLOCK_REACH)
    };
    near(x, width) || near(y, height)
}
