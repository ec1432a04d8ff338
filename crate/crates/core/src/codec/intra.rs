//! 16x16 intra prediction from the unfiltered reconstruction of the current
//! frame.

use crate::plane::LumaPlane;
use crate::MB_SIZE;

pub type MbBlock = [u8; MB_SIZE * MB_SIZE];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IntraMode {
    /// Mean of the available neighbours, or 128 when there are none.
    Dc,
    /// Left column extended to the right.
    Horizontal,
    /// Top row extended downwards.
    Vertical,
}

impl IntraMode {
    pub(crate) fn code(self) -> u32 {
        match self {
            IntraMode::Dc => 0,
            IntraMode::Horizontal => 1,
            IntraMode::Vertical => 2,
        }
    }

    pub(crate) fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(IntraMode::Dc),
            1 => Some(IntraMode::Horizontal),
            2 => Some(IntraMode::Vertical),
            _ => None,
        }
    }
}

/// Builds the prediction for `mode`, or `None` when the neighbours it needs
/// are outside the frame.
pub fn intra_prediction(recon: &LumaPlane, x: usize, y: usize, mode: IntraMode) -> Option<MbBlock> {
    let top: Option<Vec<u8>> = (y > 0).then(|| recon.row(y - 1)[x..x + MB_SIZE].to_vec());
    let left: Option<Vec<u8>> = (x > 0).then(|| (0..MB_SIZE).map(|i| recon.get(x - 1, y + i)).collect());
    let mut block = [0u8; MB_SIZE * MB_SIZE];
    match mode {
        IntraMode::Dc => {
            let samples: Vec<u32> = top.iter().chain(left.iter()).flatten().map(|&v| u32::from(v)).collect();
            let dc = if samples.is_empty() {
                128
            } else {
                let n = samples.len() as u32;
                ((samples.iter().sum::<u32>() + n / 2) / n) as u8
            };
            block.fill(dc);
        }
        IntraMode::Horizontal => {
            let left = left?;
            for (row, &v) in block.chunks_exact_mut(MB_SIZE).zip(&left) {
                row.fill(v);
            }
        }
        IntraMode::Vertical => {
            let top = top?;
            for row in block.chunks_exact_mut(MB_SIZE) {
                row.copy_from_slice(&top);
            }
        }
    }
    Some(block)
}

pub(crate) fn block_sse(original: &LumaPlane, x: usize, y: usize, pred: &MbBlock) -> u64 {
    let mut sse = 0u64;
    for dy in 0..MB_SIZE {
        let row = &original.row(y + dy)[x..x + MB_SIZE];
        for (o, p) in row.iter().zip(&pred[dy * MB_SIZE..(dy + 1) * MB_SIZE]) {
            let d = i32::from(*o) - i32::from(*p);
            sse += (d * d) as u64;
        }
    }
    sse
}

/// Picks the DC, horizontal or vertical prediction with the smallest SSE
/// against `original`. Ties keep the earlier mode in that order.
pub fn intra_predict(recon: &LumaPlane, original: &LumaPlane, x: usize, y: usize) -> (IntraMode, MbBlock) {
    let mut best: Option<(u64, IntraMode, MbBlock)> = None;
    for mode in [IntraMode::Dc, IntraMode::Horizontal, IntraMode::Vertical] {
        if let Some(pred) = intra_prediction(recon, x, y, mode) {
            let sse = block_sse(original, x, y, &pred);
            if best.as_ref().is_none_or(|b| sse < b.0) {
                best = Some((sse, mode, pred));
            }
        }
    }
    let (_, mode, pred) = best.expect("DC prediction is always available");
    (mode, pred)
}
