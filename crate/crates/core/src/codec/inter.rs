//! Integer-pel full-search motion estimation.

use crate::plane::LumaPlane;
use crate::MB_SIZE;

use super::intra::MbBlock;

/// Displacement into the reference: the prediction for the block at
/// `(x, y)` is the reference block at `(x + dx, y + dy)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct MotionVector {
    pub dx: i32,
    pub dy: i32,
}

impl MotionVector {
    pub fn new(dx: i32, dy: i32) -> Self {
        MotionVector { dx, dy }
    }
}

/// Candidate displacements ordered by the tie-break rule: smaller squared
/// length first, then raster order.
pub(crate) fn candidate_order(range: usize) -> Vec<MotionVector> {
    let r = range as i32;
    let mut out: Vec<MotionVector> = (-r..=r).flat_map(|dy| (-r..=r).map(move |dx| MotionVector::new(dx, dy))).collect();
    out.sort_by_key(|mv| (mv.dx * mv.dx + mv.dy * mv.dy, mv.dy, mv.dx));
    out
}

fn sse_bounded(reference: &LumaPlane, current: &LumaPlane, x: usize, y: usize, rx: usize, ry: usize, bound: u64) -> u64 {
    let mut sse = 0u64;
    for dy in 0..MB_SIZE {
        let cur = &current.row(y + dy)[x..x + MB_SIZE];
        let refr = &reference.row(ry + dy)[rx..rx + MB_SIZE];
        let mut row = 0u32;
        for (c, r) in cur.iter().zip(refr) {
            let d = i32::from(*c) - i32::from(*r);
            row += (d * d) as u32;
        }
        sse += u64::from(row);
        if sse >= bound {
            return sse;
        }
    }
    sse
}

/// Full search over `candidates` (see [`candidate_order`]) for the block at
/// `(x, y)`. Displacements that would read outside the reference are skipped.
pub(crate) fn search_with(
    reference: &LumaPlane,
    current: &LumaPlane,
    x: usize,
    y: usize,
    candidates: &[MotionVector],
) -> (MotionVector, u64) {
    let (w, h) = reference.dims();
    let mut best = (MotionVector::default(), u64::MAX);
    for &mv in candidates {
        let rx = x as i64 + i64::from(mv.dx);
        let ry = y as i64 + i64::from(mv.dy);
        if rx < 0 || ry < 0 || rx as usize + MB_SIZE > w || ry as usize + MB_SIZE > h {
            continue;
        }
        let sse = sse_bounded(reference, current, x, y, rx as usize, ry as usize, best.1);
        if sse < best.1 {
            best = (mv, sse);
        }
    }
    best
}

/// Returns the SSE-minimizing motion vector within `±search_range` and the
/// prediction block it selects.
pub fn motion_search(reference: &LumaPlane, current: &LumaPlane, x: usize, y: usize, search_range: usize) -> (MotionVector, MbBlock) {
    let (mv, _) = search_with(reference, current, x, y, &candidate_order(search_range));
    (mv, motion_compensate(reference, x, y, mv).expect("search stays in bounds"))
}

/// Copies the displaced reference block, or `None` when it leaves the frame.
pub fn motion_compensate(reference: &LumaPlane, x: usize, y: usize, mv: MotionVector) -> Option<MbBlock> {
    let (w, h) = reference.dims();
    let rx = x as i64 + i64::from(mv.dx);
    let ry = y as i64 + i64::from(mv.dy);
    if rx < 0 || ry < 0 || rx as usize + MB_SIZE > w || ry as usize + MB_SIZE > h {
        return None;
    }
    let (rx, ry) = (rx as usize, ry as usize);
    let mut block = [0u8; MB_SIZE * MB_SIZE];
    for dy in 0..MB_SIZE {
        block[dy * MB_SIZE..(dy + 1) * MB_SIZE].copy_from_slice(&reference.row(ry + dy)[rx..rx + MB_SIZE]);
    }
    Some(block)
}
