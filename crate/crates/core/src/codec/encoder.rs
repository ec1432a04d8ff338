use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frame_io::RawVideo;
use crate::plane::LumaPlane;
use crate::MB_SIZE;

use super::bits::GolombWriter;
use super::bitstream::Bitstream;
use super::deblock::{deblock_filter, BlockGrid, MbEdgeInfo};
use super::inter::{candidate_order, motion_compensate, search_with, MotionVector};
use super::intra::{intra_predict, intra_prediction, MbBlock};
use super::rate::rate_control_step;
use super::syntax::{coded_blocks, reconstruct_mb, write_frame_header, write_mb, CodedMb, FrameHeader, MbLevels, MbMode};
use super::transform::{forward_transform_4x4, quantize};
use super::{coding_order, EncoderConfig, MacroblockMeta, MbType, RateMode};

/// Filtered reference frames available to the frame being coded.
#[derive(Clone, Copy)]
pub(crate) struct RefPair<'a> {
    pub past: Option<&'a LumaPlane>,
    pub future: Option<&'a LumaPlane>,
}

/// Prediction block for an already decided mode.
pub(crate) fn predict(mode: MbMode, recon: &LumaPlane, refs: RefPair<'_>, x: usize, y: usize) -> Result<MbBlock> {
    match mode {
        MbMode::Intra(m) => intra_prediction(recon, x, y, m)
            .ok_or_else(|| Error::Corrupt(format!("intra mode {m:?} needs missing neighbours at ({x}, {y})"))),
        MbMode::Inter { ref_idx, mv } => {
            let reference = if ref_idx == 0 { refs.past } else { refs.future };
            let reference = reference.ok_or_else(|| Error::Corrupt(format!("missing reference {ref_idx}")))?;
            motion_compensate(reference, x, y, mv)
                .ok_or_else(|| Error::Corrupt(format!("motion vector {mv:?} leaves the frame at ({x}, {y})")))
        }
    }
}

pub(crate) fn edge_info(mode: MbMode, qp: u8, levels: &MbLevels) -> MbEdgeInfo {
    let coded = coded_blocks(levels);
    match mode {
        MbMode::Intra(_) => MbEdgeInfo::intra(qp, coded),
        MbMode::Inter { ref_idx, mv } => MbEdgeInfo {
            intra: false,
            mv,
            ref_idx,
            qp,
            coded_blocks: coded,
        },
    }
}

pub(crate) fn write_block(recon: &mut LumaPlane, x: usize, y: usize, block: &MbBlock) {
    for dy in 0..MB_SIZE {
        recon.row_mut(y + dy)[x..x + MB_SIZE].copy_from_slice(&block[dy * MB_SIZE..(dy + 1) * MB_SIZE]);
    }
}

/// Everything the encoder produced, frames and metadata in display order.
#[derive(Clone, Debug)]
pub struct EncodeOutput {
    pub bitstream: Bitstream,
    pub meta: Vec<MacroblockMeta>,
    /// Reconstructions after the loop filter (the reference buffer contents).
    pub recon_filtered: Vec<LumaPlane>,
    /// Reconstructions before the loop filter.
    pub recon_unfiltered: Vec<LumaPlane>,
    pub frame_types: Vec<MbType>,
    pub frame_qps: Vec<u8>,
    pub frame_bits: Vec<u64>,
}

impl EncodeOutput {
    pub fn mean_qp(&self) -> f64 {
        self.frame_qps.iter().map(|&q| f64::from(q)).sum::<f64>() / self.frame_qps.len() as f64
    }

    /// Mean coded bits per second over display frames `range`.
    pub fn bitrate(&self, range: std::ops::Range<usize>) -> f64 {
        let n = range.len() as f64;
        let bits: u64 = self.frame_bits[range].iter().sum();
        bits as f64 / n * self.bitstream.fps()
    }
}

struct CodedFrame {
    payload: Vec<u8>,
    meta: Vec<MacroblockMeta>,
    unfiltered: LumaPlane,
    filtered: LumaPlane,
}

fn code_residual(original: &LumaPlane, x: usize, y: usize, pred: &MbBlock, qp: u8) -> (MbLevels, f64) {
    let mut levels = [[[0i32; 4]; 4]; 16];
    let mut energy = 0.0;
    for (i, block_levels) in levels.iter_mut().enumerate() {
        let (by, bx) = (4 * (i / 4), 4 * (i % 4));
        let mut block = [[0.0; 4]; 4];
        for (r, row) in block.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                let o = f64::from(original.get(x + bx + c, y + by + r));
                let p = f64::from(pred[(by + r) * MB_SIZE + bx + c]);
                *v = o - p;
                energy += *v * *v;
            }
        }
        *block_levels = quantize(&forward_transform_4x4(&block), qp).expect("qp validated");
    }
    (levels, energy)
}

fn choose_inter(original: &LumaPlane, refs: RefPair<'_>, frame_type: MbType, candidates: &[MotionVector], x: usize, y: usize) -> MbMode {
    let past = refs.past.map(|r| search_with(r, original, x, y, candidates));
    let future = match frame_type {
        MbType::B => refs.future.map(|r| search_with(r, original, x, y, candidates)),
        _ => None,
    };
    match (past, future) {
        (Some((_, sse0)), Some((mv1, sse1))) if sse1 < sse0 => MbMode::Inter { ref_idx: 1, mv: mv1 },
        (Some((mv, _)), _) => MbMode::Inter { ref_idx: 0, mv },
        (None, Some((mv, _))) => MbMode::Inter { ref_idx: 1, mv },
        (None, None) => unreachable!("inter frame without references"),
    }
}

fn encode_frame(
    original: &LumaPlane,
    header: FrameHeader,
    refs: RefPair<'_>,
    config: &EncoderConfig,
    candidates: &[MotionVector],
) -> CodedFrame {
    let (w, h) = original.dims();
    let (cols, rows) = (w / MB_SIZE, h / MB_SIZE);
    let qp = header.qp;

    // inter decisions only depend on the references, so search in parallel
    let inter_modes: Vec<Option<MbMode>> = match header.frame_type {
        MbType::I => vec![None; cols * rows],
        t => (0..cols * rows)
            .into_par_iter()
            .map(|i| {
                Some(choose_inter(
                    original,
                    refs,
                    t,
                    candidates,
                    (i % cols) * MB_SIZE,
                    (i / cols) * MB_SIZE,
                ))
            })
            .collect(),
    };

    let mut writer = GolombWriter::new();
    write_frame_header(&mut writer, &header);
    let mut recon = LumaPlane::filled(w, h, 0);
    let mut grid = Vec::with_capacity(cols * rows);
    let mut meta = Vec::with_capacity(cols * rows);
    for (i, inter_mode) in inter_modes.into_iter().enumerate() {
        let (x, y) = ((i % cols) * MB_SIZE, (i / cols) * MB_SIZE);
        let (mode, pred) = match inter_mode {
            None => {
                let (m, pred) = intra_predict(&recon, original, x, y);
                (MbMode::Intra(m), pred)
            }
            Some(mode) => (mode, predict(mode, &recon, refs, x, y).expect("searched vectors are in bounds")),
        };
        let (levels, residual_energy) = code_residual(original, x, y, &pred, qp);
        let (block, _) = reconstruct_mb(&pred, &levels, qp);
        write_block(&mut recon, x, y, &block);
        grid.push(edge_info(mode, qp, &levels));
        let bits = write_mb(&mut writer, &CodedMb { mode, levels });
        meta.push(MacroblockMeta {
            frame_index: header.display_index,
            x,
            y,
            width: MB_SIZE,
            height: MB_SIZE,
            mb_type: header.frame_type,
            qp,
            bits,
            residual_energy,
        });
    }
    let filtered = if config.deblock_enabled {
        deblock_filter(
            &recon,
            &BlockGrid {
                mb_cols: cols,
                mb_rows: rows,
                mbs: grid,
            },
        )
    } else {
        recon.clone()
    };
    CodedFrame {
        payload: writer.finish(),
        meta,
        unfiltered: recon,
        filtered,
    }
}

/// Encodes `video` and returns the stream together with the encoder's own
/// reconstructions and per-macroblock metadata.
pub fn encode(video: &RawVideo, config: &EncoderConfig) -> Result<EncodeOutput> {
    video.validate()?;
    config.validate()?;
    let n = video.frames.len();
    let candidates = candidate_order(config.search_range);
    let target_bits = match config.rate_mode {
        RateMode::ConstantQp => None,
        RateMode::TargetBitrate(rate) => Some(rate / video.fps()),
    };

    let mut qp = config.qp;
    let mut payloads = Vec::with_capacity(n);
    let mut meta: Vec<Vec<MacroblockMeta>> = vec![Vec::new(); n];
    let mut filtered: Vec<Option<LumaPlane>> = vec![None; n];
    let mut unfiltered: Vec<Option<LumaPlane>> = vec![None; n];
    let mut frame_types = vec![MbType::I; n];
    let mut frame_qps = vec![0u8; n];
    let mut frame_bits = vec![0u64; n];

    for (index, frame_type, frame_refs) in coding_order(&config.gop, n) {
        let header = FrameHeader {
            frame_type,
            display_index: index,
            qp,
        };
        let refs = RefPair {
            past: frame_refs.past.map(|i| filtered[i].as_ref().expect("anchor coded first")),
            future: frame_refs.future.map(|i| filtered[i].as_ref().expect("anchor coded first")),
        };
        let coded = encode_frame(&video.frames[index], header, refs, config, &candidates);
        let bits = 8 * coded.payload.len() as u64;
        payloads.push(coded.payload);
        meta[index] = coded.meta;
        filtered[index] = Some(coded.filtered);
        unfiltered[index] = Some(coded.unfiltered);
        frame_types[index] = frame_type;
        frame_qps[index] = qp;
        frame_bits[index] = bits;
        if let Some(target) = target_bits {
            qp = rate_control_step(target, bits as f64, qp);
        }
    }

    Ok(EncodeOutput {
        bitstream: Bitstream {
            width: video.width,
            height: video.height,
            fps_num: video.fps_num,
            fps_den: video.fps_den,
            gop: config.gop.clone(),
            deblock: config.deblock_enabled,
            frames: payloads,
        },
        meta: meta.into_iter().flatten().collect(),
        recon_filtered: filtered.into_iter().map(Option::unwrap).collect(),
        recon_unfiltered: unfiltered.into_iter().map(Option::unwrap).collect(),
        frame_types,
        frame_qps,
        frame_bits,
    })
}
