//! Frame and macroblock syntax shared by the encoder and the decoder, plus the
//! reconstruction step both sides must perform identically.

use crate::error::{Error, Result};
use crate::MB_SIZE;

use super::bits::{GolombReader, GolombWriter};
use super::inter::MotionVector;
use super::intra::{IntraMode, MbBlock};
use super::transform::{dequantize, inverse_transform_4x4, ZIGZAG};
use super::{MbType, MAX_QP, MIN_QP};

pub(crate) type MbLevels = [[[i32; 4]; 4]; 16];

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum MbMode {
    Intra(IntraMode),
    Inter { ref_idx: u8, mv: MotionVector },
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct CodedMb {
    pub mode: MbMode,
    pub levels: MbLevels,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct FrameHeader {
    pub frame_type: MbType,
    pub display_index: usize,
    pub qp: u8,
}

fn type_code(t: MbType) -> u32 {
    match t {
        MbType::I => 0,
        MbType::P => 1,
        MbType::B => 2,
    }
}

pub(crate) fn write_frame_header(w: &mut GolombWriter, h: &FrameHeader) {
    w.write_ue(type_code(h.frame_type));
    w.write_ue(h.display_index as u32);
    w.write_ue(u32::from(h.qp));
}

pub(crate) fn read_frame_header(r: &mut GolombReader<'_>) -> Result<FrameHeader> {
    let frame_type = match r.read_ue()? {
        0 => MbType::I,
        1 => MbType::P,
        2 => MbType::B,
        t => return Err(Error::Corrupt(format!("unknown frame type {t}"))),
    };
    let display_index = r.read_ue()? as usize;
    let qp = r.read_ue()?;
    if !(u32::from(MIN_QP)..=u32::from(MAX_QP)).contains(&qp) {
        return Err(Error::Corrupt(format!("frame qp {qp} out of range")));
    }
    Ok(FrameHeader {
        frame_type,
        display_index,
        qp: qp as u8,
    })
}

/// Writes one macroblock and returns the number of bits it took.
pub(crate) fn write_mb(w: &mut GolombWriter, mb: &CodedMb) -> u64 {
    let start = w.bits_written();
    match mb.mode {
        MbMode::Intra(mode) => w.write_ue(mode.code()),
        MbMode::Inter { ref_idx, mv } => {
            w.write_ue(u32::from(ref_idx));
            w.write_se(mv.dx);
            w.write_se(mv.dy);
        }
    }
    for block in &mb.levels {
        let nonzero = ZIGZAG.iter().filter(|&&(r, c)| block[r][c] != 0).count();
        w.write_ue(nonzero as u32);
        let mut run = 0;
        for &(r, c) in &ZIGZAG {
            let level = block[r][c];
            if level == 0 {
                run += 1;
            } else {
                w.write_ue(run);
                w.write_se(level);
                run = 0;
            }
        }
    }
    w.bits_written() - start
}

pub(crate) fn read_mb(r: &mut GolombReader<'_>, frame_type: MbType) -> Result<CodedMb> {
    let mode = match frame_type {
        MbType::I => {
            let code = r.read_ue()?;
            MbMode::Intra(IntraMode::from_code(code).ok_or_else(|| Error::Corrupt(format!("intra mode {code}")))?)
        }
        MbType::P | MbType::B => {
            let ref_idx = r.read_ue()?;
            if ref_idx > 1 || (frame_type == MbType::P && ref_idx != 0) {
                return Err(Error::Corrupt(format!("reference index {ref_idx}")));
            }
            let dx = r.read_se()?;
            let dy = r.read_se()?;
            MbMode::Inter {
                ref_idx: ref_idx as u8,
                mv: MotionVector::new(dx, dy),
            }
        }
    };
    let mut levels = [[[0i32; 4]; 4]; 16];
    for block in levels.iter_mut() {
        let nonzero = r.read_ue()? as usize;
        if nonzero > 16 {
            return Err(Error::Corrupt(format!("{nonzero} coefficients in a 4x4 block")));
        }
        let mut pos = 0usize;
        for _ in 0..nonzero {
            pos += r.read_ue()? as usize;
            if pos >= 16 {
                return Err(Error::Corrupt("coefficient run past block end".into()));
            }
            let level = r.read_se()?;
            if level == 0 {
                return Err(Error::Corrupt("zero level in run-level pair".into()));
            }
            let (row, col) = ZIGZAG[pos];
            block[row][col] = level;
            pos += 1;
        }
    }
    Ok(CodedMb { mode, levels })
}

pub(crate) fn coded_blocks(levels: &MbLevels) -> u16 {
    levels
        .iter()
        .enumerate()
        .filter(|(_, b)| b.iter().flatten().any(|&l| l != 0))
        .fold(0u16, |acc, (i, _)| acc | (1 << i))
}

/// Adds the dequantized, inverse-transformed residual to the prediction.
/// Block `i` of `levels` covers rows `4 * (i / 4)..` and columns `4 * (i % 4)..`
/// of the macroblock. Also returns the energy of the decoded residual.
pub(crate) fn reconstruct_mb(pred: &MbBlock, levels: &MbLevels, qp: u8) -> (MbBlock, f64) {
    let mut out = *pred;
    let mut energy = 0.0;
    for (i, block) in levels.iter().enumerate() {
        if block.iter().flatten().all(|&l| l == 0) {
            continue;
        }
        let residual = inverse_transform_4x4(&dequantize(block, qp).expect("qp validated"));
        let (by, bx) = (4 * (i / 4), 4 * (i % 4));
        for (r, row) in residual.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                let at = (by + r) * MB_SIZE + bx + c;
                energy += v * v;
                out[at] = (f64::from(pred[at]) + v).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    (out, energy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn macroblock_syntax_roundtrip() {
        let mut levels = [[[0i32; 4]; 4]; 16];
        levels[0][0][0] = -12;
        levels[0][3][3] = 1;
        levels[5][1][2] = 300;
        levels[15][2][0] = -1;
        let mbs = [
            CodedMb {
                mode: MbMode::Intra(IntraMode::Vertical),
                levels,
            },
            CodedMb {
                mode: MbMode::Inter {
                    ref_idx: 1,
                    mv: MotionVector::new(-7, 3),
                },
                levels: [[[0; 4]; 4]; 16],
            },
        ];
        let mut w = GolombWriter::new();
        let header = FrameHeader {
            frame_type: MbType::B,
            display_index: 41,
            qp: 27,
        };
        write_frame_header(&mut w, &header);
        let bits0 = write_mb(&mut w, &mbs[0]);
        let bits1 = write_mb(&mut w, &mbs[1]);
        assert!(bits0 > bits1);
        let bytes = w.finish();
        let mut r = GolombReader::new(&bytes);
        assert_eq!(read_frame_header(&mut r).unwrap(), header);
        assert_eq!(read_mb(&mut r, MbType::I).unwrap(), mbs[0]);
        assert_eq!(read_mb(&mut r, MbType::B).unwrap(), mbs[1]);
        assert_eq!(coded_blocks(&levels), 1 | (1 << 5) | (1 << 15));
    }

    #[test]
    fn zero_levels_reconstruct_prediction() {
        let pred = [77u8; 256];
        let (out, energy) = reconstruct_mb(&pred, &[[[0; 4]; 4]; 16], 30);
        assert_eq!(out, pred);
        assert_eq!(energy, 0.0);
    }
}
