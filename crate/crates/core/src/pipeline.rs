//! End-to-end fingerprint estimation from decoded frames.

use std::ops::Range;

use rayon::prelude::*;

use crate::codec::{Bitstream, MacroblockMeta};
use crate::decoder::{decode, DecodeMode, DecodeOutput};
use crate::error::Result;
use crate::frame_io::{FingerprintStore, RawVideo};
use crate::plane::{FramePlane, LumaPlane};
use crate::prnu::{extract_residue, pce, wiener_fft, zero_mean, Accumulator, PceResult, PrnuPattern, DEFAULT_EXCLUSION_HALFWIDTH};
use crate::qp_comp::{binary_mask, weight_map, WeightCurve, WeightMap};

/// Frames whose residues are held in memory at once.
const RESIDUE_BATCH: usize = 32;

/// How macroblock metadata scales each frame's contribution.
#[derive(Clone, Debug, PartialEq)]
pub enum Compensation {
    None,
    Mask { threshold_qp: u8 },
    Weight(WeightCurve),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimateOptions {
    pub mode: DecodeMode,
    pub compensation: Compensation,
}

impl EstimateOptions {
    /// Filtered decode, every pixel weighted equally.
    pub fn basic() -> Self {
        EstimateOptions {
            mode: DecodeMode::Filtered,
            compensation: Compensation::None,
        }
    }
}

pub fn frame_weights(meta: &[MacroblockMeta], width: usize, height: usize, compensation: &Compensation) -> Result<Option<WeightMap>> {
    Ok(match compensation {
        Compensation::None => None,
        Compensation::Mask { threshold_qp } => Some(binary_mask(meta, width, height, *threshold_qp)?),
        Compensation::Weight(curve) => Some(weight_map(meta, width, height, curve)?),
    })
}

/// Adds frames to `acc`. Residues are extracted in parallel; accumulation is
/// sequential in frame order so results do not depend on scheduling.
pub fn accumulate_frames(acc: &mut Accumulator, frames: &[FramePlane], weights: &[Option<WeightMap>]) -> Result<()> {
    assert_eq!(frames.len(), weights.len(), "one weight slot per frame");
    for (chunk, wchunk) in frames.chunks(RESIDUE_BATCH).zip(weights.chunks(RESIDUE_BATCH)) {
        let residues: Vec<FramePlane> = chunk.par_iter().map(extract_residue).collect::<Result<_>>()?;
        for ((frame, residue), w) in chunk.iter().zip(&residues).zip(wchunk) {
            match w {
                Some(w) => acc.accumulate(frame, residue, w)?,
                None => acc.accumulate_unweighted(frame, residue)?,
            }
        }
    }
    Ok(())
}

/// Zero-mean followed by spectral Wiener filtering.
pub fn postprocess(pattern: &PrnuPattern) -> PrnuPattern {
    wiener_fft(&zero_mean(pattern))
}

/// Accumulates the frames in `range` of a decode with the given compensation.
pub fn accumulate_decoded(acc: &mut Accumulator, decoded: &DecodeOutput, compensation: &Compensation, range: Range<usize>) -> Result<()> {
    let frames: Vec<FramePlane> = decoded.frames[range.clone()].iter().map(LumaPlane::to_real).collect();
    let weights = range
        .map(|i| {
            let (w, h) = decoded.frames[i].dims();
            frame_weights(decoded.frame_meta(i), w, h, compensation)
        })
        .collect::<Result<Vec<_>>>()?;
    accumulate_frames(acc, &frames, &weights)
}

/// Post-processed fingerprint from the frames in `range` of a decode.
pub fn fingerprint_decoded(decoded: &DecodeOutput, compensation: &Compensation, range: Range<usize>) -> Result<PrnuPattern> {
    let (w, h) = decoded.frames[0].dims();
    let mut acc = Accumulator::new(w, h);
    accumulate_decoded(&mut acc, decoded, compensation, range)?;
    Ok(postprocess(&acc.finalize()?))
}

pub fn fingerprint_stream(stream: &Bitstream, options: &EstimateOptions) -> Result<PrnuPattern> {
    let decoded = decode(stream, options.mode)?;
    fingerprint_decoded(&decoded, &options.compensation, 0..decoded.frames.len())
}

/// Fingerprint of an uncompressed video.
pub fn fingerprint_video(video: &RawVideo) -> Result<PrnuPattern> {
    let mut acc = Accumulator::new(video.width, video.height);
    let frames: Vec<FramePlane> = video.frames.iter().map(LumaPlane::to_real).collect();
    accumulate_frames(&mut acc, &frames, &vec![None; frames.len()])?;
    Ok(postprocess(&acc.finalize()?))
}

/// Post-processed fingerprint of a single frame.
pub fn frame_pattern(frame: &FramePlane) -> Result<PrnuPattern> {
    let mut acc = Accumulator::new(frame.width(), frame.height());
    acc.accumulate_unweighted(frame, &extract_residue(frame)?)?;
    Ok(postprocess(&acc.finalize()?))
}

pub fn frame_pce(frame: &FramePlane, reference: &PrnuPattern) -> Result<PceResult> {
    pce(&frame_pattern(frame)?, reference, DEFAULT_EXCLUSION_HALFWIDTH)
}

/// PCE of every frame against `reference`, in input order.
pub fn frame_pces(frames: &[LumaPlane], reference: &PrnuPattern) -> Result<Vec<f64>> {
    frames
        .par_iter()
        .map(|f| frame_pce(&f.to_real(), reference).map(|r| r.pce))
        .collect()
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct GalleryMatch {
    pub camera_id: String,
    pub result: PceResult,
    pub is_match: bool,
}

/// Scores `test` against one stored camera, or all of them when `camera_id`
/// is `None`. Ranked by PCE, highest first; ties by id.
pub fn rank_gallery(test: &PrnuPattern, store: &FingerprintStore, camera_id: Option<&str>, threshold: f64) -> Result<Vec<GalleryMatch>> {
    let ids = match camera_id {
        Some(id) => vec![id.to_string()],
        None => store.ids()?,
    };
    let mut ranked = ids
        .into_iter()
        .map(|id| {
            let record = store.load(&id)?;
            let result = pce(test, &record.pattern, DEFAULT_EXCLUSION_HALFWIDTH)?;
            Ok(GalleryMatch {
                camera_id: id,
                is_match: result.pce >= threshold,
                result,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| b.result.pce.total_cmp(&a.result.pce).then_with(|| a.camera_id.cmp(&b.camera_id)));
    Ok(ranked)
}
