//! Reference block video codec.
//!
//! 16x16 macroblocks, 4x4 orthonormalized integer transform, uniform
//! quantization indexed by QP, 16x16 intra prediction from unfiltered
//! neighbours, integer-pel motion compensation from deblocked references,
//! closed GOPs of I/P/B frames and exp-Golomb entropy coding.
//!
//! The bitstream layout is documented in [`bitstream`].

pub(crate) mod bits;
pub mod bitstream;
pub mod deblock;
pub mod encoder;
pub mod inter;
pub mod intra;
pub mod rate;
pub(crate) mod syntax;
pub mod transform;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub use bitstream::Bitstream;
pub use deblock::{deblock_filter, BlockGrid, MbEdgeInfo};
pub use encoder::{encode, EncodeOutput};
pub use inter::{motion_search, MotionVector};
pub use intra::{intra_predict, IntraMode};
pub use rate::rate_control_step;
pub use transform::{dequantize, forward_transform_4x4, inverse_transform_4x4, quantize, Block4x4};

pub const MIN_QP: u8 = 1;
pub const MAX_QP: u8 = 51;

/// Quantizer step size: 1 at QP 4, doubling every 6 QP.
pub fn qp_to_qstep(qp: i32) -> Result<f64> {
    if !(i32::from(MIN_QP)..=i32::from(MAX_QP)).contains(&qp) {
        return Err(Error::InvalidQp(qp));
    }
    Ok(qstep(qp as u8))
}

/// Computed as `2^(r/6) * 2^k` with `qp - 4 = 6k + r`, so that a step of 6
/// doubles the result exactly.
#[inline]
pub(crate) fn qstep(qp: u8) -> f64 {
    let d = i32::from(qp) - 4;
    2f64.powf(f64::from(d.rem_euclid(6)) / 6.0) * 2f64.powi(d.div_euclid(6))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MbType {
    I,
    P,
    B,
}

impl MbType {
    pub fn as_char(self) -> char {
        match self {
            MbType::I => 'I',
            MbType::P => 'P',
            MbType::B => 'B',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'I' => Some(MbType::I),
            'P' => Some(MbType::P),
            'B' => Some(MbType::B),
            _ => None,
        }
    }

    pub fn is_anchor(self) -> bool {
        matches!(self, MbType::I | MbType::P)
    }
}

impl fmt::Display for MbType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// Per-macroblock decode record.
#[derive(Clone, Debug, PartialEq)]
pub struct MacroblockMeta {
    /// Display-order frame index.
    pub frame_index: usize,
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
    pub mb_type: MbType,
    pub qp: u8,
    /// Coded size of the macroblock syntax in bits.
    pub bits: u64,
    /// Sum of squared prediction residual before quantization. Only the
    /// encoder knows it; the decoder reports the energy of the dequantized
    /// residual instead.
    pub residual_energy: f64,
}

/// Display-order frame-type sequence repeated over the video. Each repetition
/// is one closed GOP.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GopPattern(Vec<MbType>);

impl GopPattern {
    pub fn new(types: Vec<MbType>) -> Result<Self> {
        if types.first() != Some(&MbType::I) {
            return Err(Error::Config("GOP pattern must start with I".into()));
        }
        if types.len() > 255 {
            return Err(Error::Config("GOP pattern longer than 255 frames".into()));
        }
        Ok(GopPattern(types))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn types(&self) -> &[MbType] {
        &self.0
    }

    pub fn frame_type(&self, display_index: usize) -> MbType {
        self.0[display_index % self.0.len()]
    }

    pub fn contains(&self, t: MbType) -> bool {
        self.0.contains(&t)
    }
}

impl Default for GopPattern {
    fn default() -> Self {
        GopPattern(vec![MbType::I, MbType::B, MbType::P])
    }
}

impl FromStr for GopPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let types = s
            .chars()
            .map(|c| MbType::from_char(c.to_ascii_uppercase()).ok_or_else(|| Error::Config(format!("bad frame type {c:?}"))))
            .collect::<Result<Vec<_>>>()?;
        GopPattern::new(types)
    }
}

impl fmt::Display for GopPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.0 {
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RateMode {
    ConstantQp,
    /// Target bitrate in bits per second; `EncoderConfig::qp` is the starting QP.
    TargetBitrate(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderConfig {
    pub gop: GopPattern,
    pub rate_mode: RateMode,
    pub qp: u8,
    pub search_range: usize,
    pub deblock_enabled: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            gop: GopPattern::default(),
            rate_mode: RateMode::ConstantQp,
            qp: 26,
            search_range: 8,
            deblock_enabled: true,
        }
    }
}

impl EncoderConfig {
    pub fn constant_qp(qp: u8) -> Self {
        EncoderConfig { qp, ..Default::default() }
    }

    pub fn target_bitrate(bits_per_second: f64, initial_qp: u8) -> Self {
        EncoderConfig {
            qp: initial_qp,
            rate_mode: RateMode::TargetBitrate(bits_per_second),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        qp_to_qstep(i32::from(self.qp))?;
        if self.gop.types().first() != Some(&MbType::I) {
            return Err(Error::Config("GOP pattern must start with I".into()));
        }
        if let RateMode::TargetBitrate(rate) = self.rate_mode {
            if !(rate.is_finite() && rate > 0.0) {
                return Err(Error::Config(format!("target bitrate {rate} must be positive")));
            }
        }
        if self.search_range > 64 {
            return Err(Error::Config("search range above 64".into()));
        }
        Ok(())
    }
}

/// References a frame may predict from, as display indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct FrameRefs {
    pub past: Option<usize>,
    pub future: Option<usize>,
}

/// Coding order and references for `n_frames` display-order frames.
///
/// Inside each GOP, anchors (I/P) are coded in display order and every B
/// frame follows the anchor after it. B frames after the last anchor of a GOP
/// only get a past reference, which keeps GOPs closed.
pub(crate) fn coding_order(gop: &GopPattern, n_frames: usize) -> Vec<(usize, MbType, FrameRefs)> {
    let mut order = Vec::with_capacity(n_frames);
    let mut gop_start = 0;
    while gop_start < n_frames {
        let gop_end = (gop_start + gop.len()).min(n_frames);
        let types: Vec<MbType> = (gop_start..gop_end).map(|i| gop.frame_type(i)).collect();
        let anchor_before = |i: usize| (gop_start..i).rev().find(|&j| types[j - gop_start].is_anchor());
        let anchor_after = |i: usize| (i + 1..gop_end).find(|&j| types[j - gop_start].is_anchor());
        let mut pending = Vec::new();
        for i in gop_start..gop_end {
            let t = types[i - gop_start];
            match t {
                MbType::B => pending.push(i),
                _ => {
                    let past = if t == MbType::P { anchor_before(i) } else { None };
                    order.push((i, t, FrameRefs { past, future: None }));
                    for b in pending.drain(..) {
                        order.push((
                            b,
                            MbType::B,
                            FrameRefs {
                                past: anchor_before(b),
                                future: Some(i),
                            },
                        ));
                    }
                }
            }
        }
        for b in pending {
            order.push((
                b,
                MbType::B,
                FrameRefs {
                    past: anchor_before(b),
                    future: anchor_after(b),
                },
            ));
        }
        gop_start = gop_end;
    }
    order
}
