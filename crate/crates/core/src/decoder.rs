//! Bitstream decoder with an optional loop-filter bypass.
//!
//! Both modes run the same reconstruction loop: intra prediction reads the
//! unfiltered reconstruction of the current frame and inter prediction reads
//! deblocked reference frames, exactly as the encoder does. The mode only
//! decides which of the two reconstructions of each frame is returned:
//! [`DecodeMode::Filtered`] returns the deblocked frames a normal player
//! shows, [`DecodeMode::Intervention`] returns the frames before deblocking.

use crate::codec::bits::GolombReader;
use crate::codec::deblock::{deblock_filter, BlockGrid};
use crate::codec::encoder::{edge_info, predict, write_block, RefPair};
use crate::codec::syntax::{read_frame_header, read_mb, reconstruct_mb, FrameHeader};
use crate::codec::{Bitstream, MacroblockMeta, MbType};
use crate::error::{Error, Result};
use crate::plane::LumaPlane;
use crate::MB_SIZE;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DecodeMode {
    Filtered,
    Intervention,
}

#[derive(Clone, Debug)]
pub struct DecodeOutput {
    /// Output frames in display order.
    pub frames: Vec<LumaPlane>,
    /// Display index of each output frame.
    pub frame_indices: Vec<usize>,
    pub frame_types: Vec<MbType>,
    /// Deblocked reconstruction of each output frame, i.e. the prediction
    /// buffer contents. Identical to `frames` in filtered mode.
    pub reference_frames: Vec<LumaPlane>,
    /// Metadata for every macroblock of every output frame, display order.
    pub meta: Vec<MacroblockMeta>,
    pub mode: DecodeMode,
}

impl DecodeOutput {
    /// Metadata of output frame `i`.
    pub fn frame_meta(&self, i: usize) -> &[MacroblockMeta] {
        let per_frame = self.meta.len() / self.frames.len().max(1);
        &self.meta[i * per_frame..(i + 1) * per_frame]
    }
}

struct DecodedFrame {
    header: FrameHeader,
    unfiltered: LumaPlane,
    filtered: LumaPlane,
    meta: Vec<MacroblockMeta>,
}

fn decode_frame<'r>(stream: &Bitstream, payload: &[u8], refs: impl FnOnce(&FrameHeader) -> RefPair<'r>) -> Result<DecodedFrame> {
    let (w, h) = (stream.width, stream.height);
    let (cols, rows) = (w / MB_SIZE, h / MB_SIZE);
    let mut reader = GolombReader::new(payload);
    let header = read_frame_header(&mut reader)?;
    let ref_pair = refs(&header);
    let mut recon = LumaPlane::filled(w, h, 0);
    let mut grid = Vec::with_capacity(cols * rows);
    let mut meta = Vec::with_capacity(cols * rows);
    for i in 0..cols * rows {
        let (x, y) = ((i % cols) * MB_SIZE, (i / cols) * MB_SIZE);
        let start = reader.bits_read();
        let mb = read_mb(&mut reader, header.frame_type)?;
        let bits = reader.bits_read() - start;
        let pred = predict(mb.mode, &recon, ref_pair, x, y)?;
        let (block, energy) = reconstruct_mb(&pred, &mb.levels, header.qp);
        write_block(&mut recon, x, y, &block);
        grid.push(edge_info(mb.mode, header.qp, &mb.levels));
        meta.push(MacroblockMeta {
            frame_index: header.display_index,
            x,
            y,
            width: MB_SIZE,
            height: MB_SIZE,
            mb_type: header.frame_type,
            qp: header.qp,
            bits,
            residual_energy: energy,
        });
    }
    if reader.bits_read().div_ceil(8) != payload.len() as u64 {
        return Err(Error::Corrupt(format!(
            "frame {} has {} unused payload bytes",
            header.display_index,
            payload.len() as u64 - reader.bits_read().div_ceil(8)
        )));
    }
    let filtered = if stream.deblock {
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
    Ok(DecodedFrame {
        header,
        unfiltered: recon,
        filtered,
        meta,
    })
}

fn assemble(mut decoded: Vec<DecodedFrame>, mode: DecodeMode) -> DecodeOutput {
    decoded.sort_by_key(|f| f.header.display_index);
    let mut out = DecodeOutput {
        frames: Vec::with_capacity(decoded.len()),
        frame_indices: Vec::with_capacity(decoded.len()),
        frame_types: Vec::with_capacity(decoded.len()),
        reference_frames: Vec::with_capacity(decoded.len()),
        meta: Vec::new(),
        mode,
    };
    for f in decoded {
        out.frame_indices.push(f.header.display_index);
        out.frame_types.push(f.header.frame_type);
        out.frames.push(match mode {
            DecodeMode::Filtered => f.filtered.clone(),
            DecodeMode::Intervention => f.unfiltered,
        });
        out.reference_frames.push(f.filtered);
        out.meta.extend(f.meta);
    }
    out
}

/// Decodes every frame of `stream`.
pub fn decode(stream: &Bitstream, mode: DecodeMode) -> Result<DecodeOutput> {
    let gop_len = stream.gop.len();
    // deblocked anchors of the current GOP, keyed by display index
    let mut anchors: Vec<(usize, LumaPlane)> = Vec::new();
    let mut current_gop = None;
    let mut decoded = Vec::with_capacity(stream.frames.len());
    let mut seen = std::collections::HashSet::new();

    for payload in &stream.frames {
        let header = read_frame_header(&mut GolombReader::new(payload))?;
        let gop = header.display_index / gop_len;
        if current_gop != Some(gop) {
            anchors.clear();
            current_gop = Some(gop);
        }
        let expected = stream.gop.frame_type(header.display_index);
        if header.frame_type != expected {
            return Err(Error::Corrupt(format!(
                "frame {} is {} but the GOP pattern says {}",
                header.display_index, header.frame_type, expected
            )));
        }
        if !seen.insert(header.display_index) {
            return Err(Error::Corrupt(format!("frame {} coded twice", header.display_index)));
        }
        let anchors_ref = &anchors;
        let lookup = |h: &FrameHeader| {
            let i = h.display_index;
            let past = anchors_ref.iter().filter(|(j, _)| *j < i).max_by_key(|(j, _)| *j).map(|(_, p)| p);
            let future = anchors_ref.iter().filter(|(j, _)| *j > i).min_by_key(|(j, _)| *j).map(|(_, p)| p);
            match h.frame_type {
                MbType::I => RefPair { past: None, future: None },
                MbType::P => RefPair { past, future: None },
                MbType::B => RefPair { past, future },
            }
        };
        let frame = decode_frame(stream, payload, lookup)?;
        if frame.header.frame_type.is_anchor() {
            anchors.push((frame.header.display_index, frame.filtered.clone()));
        }
        decoded.push(frame);
    }
    Ok(assemble(decoded, mode))
}

/// Decodes only the I frames. Inter payloads are skipped after reading their
/// header.
pub fn decode_i_frames_only(stream: &Bitstream, mode: DecodeMode) -> Result<DecodeOutput> {
    let mut decoded = Vec::new();
    for payload in &stream.frames {
        let header = read_frame_header(&mut GolombReader::new(payload))?;
        if header.frame_type != MbType::I {
            continue;
        }
        decoded.push(decode_frame(stream, payload, |_| RefPair { past: None, future: None })?);
    }
    Ok(assemble(decoded, mode))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::deblock::near_block_edge;
    use crate::codec::{encode, EncoderConfig, GopPattern};
    use crate::frame_io::RawVideo;
    use crate::sensor::{simulate_video, SceneConfig, SensorProfile};

    fn video(seed: u64, w: usize, h: usize, n: usize) -> RawVideo {
        let profile = SensorProfile::with_defaults(seed, w, h).unwrap();
        let scene = SceneConfig {
            seed,
            ..SceneConfig::default()
        };
        simulate_video(&scene, &profile, n).unwrap()
    }

    #[test]
    fn filtered_decode_matches_encoder() {
        let v = video(1, 64, 48, 7);
        for qp in [8, 24, 40] {
            let out = encode(&v, &EncoderConfig::constant_qp(qp)).unwrap();
            let dec = decode(&out.bitstream, DecodeMode::Filtered).unwrap();
            assert_eq!(dec.frames, out.recon_filtered);
            assert_eq!(dec.frame_indices, (0..7).collect::<Vec<_>>());
            let inter = decode(&out.bitstream, DecodeMode::Intervention).unwrap();
            assert_eq!(inter.frames, out.recon_unfiltered);
            assert_eq!(inter.reference_frames, out.recon_filtered);
            assert_eq!(dec.meta.len(), 7 * 4 * 3);
            for (d, e) in dec.meta.iter().zip(&out.meta) {
                assert_eq!(
                    (d.frame_index, d.x, d.y, d.mb_type, d.qp, d.bits),
                    (e.frame_index, e.x, e.y, e.mb_type, e.qp, e.bits)
                );
            }
        }
    }

    #[test]
    fn modes_agree_without_deblocking() {
        let v = video(2, 48, 32, 5);
        let config = EncoderConfig {
            deblock_enabled: false,
            ..EncoderConfig::constant_qp(30)
        };
        let out = encode(&v, &config).unwrap();
        let a = decode(&out.bitstream, DecodeMode::Filtered).unwrap();
        let b = decode(&out.bitstream, DecodeMode::Intervention).unwrap();
        assert_eq!(a.frames, b.frames);
    }

    #[test]
    fn differences_stay_near_block_edges() {
        let v = video(3, 64, 64, 6);
        let out = encode(&v, &EncoderConfig::constant_qp(34)).unwrap();
        let a = decode(&out.bitstream, DecodeMode::Filtered).unwrap();
        let b = decode(&out.bitstream, DecodeMode::Intervention).unwrap();
        let mut differing = 0;
        for (fa, fb) in a.frames.iter().zip(&b.frames) {
            for y in 0..64 {
                for x in 0..64 {
                    if fa.get(x, y) != fb.get(x, y) {
                        differing += 1;
                        assert!(near_block_edge(x, y, 64, 64), "({x}, {y})");
                    }
                }
            }
        }
        assert!(differing > 0);
    }

    #[test]
    fn intervention_leaves_reference_chain_intact() {
        let v = video(4, 48, 48, 6);
        let out = encode(&v, &EncoderConfig::constant_qp(28)).unwrap();
        let first = decode(&out.bitstream, DecodeMode::Intervention).unwrap();
        let second = decode(&out.bitstream, DecodeMode::Intervention).unwrap();
        let filtered = decode(&out.bitstream, DecodeMode::Filtered).unwrap();
        assert_eq!(first.reference_frames, filtered.frames);
        assert_eq!(second.reference_frames, filtered.frames);
        assert_eq!(first.frames, second.frames);
    }

    #[test]
    fn i_frames_only() {
        let v = video(5, 32, 32, 9);
        let out = encode(&v, &EncoderConfig::constant_qp(20)).unwrap();
        let full = decode(&out.bitstream, DecodeMode::Intervention).unwrap();
        let only = decode_i_frames_only(&out.bitstream, DecodeMode::Intervention).unwrap();
        assert_eq!(only.frame_indices, vec![0, 3, 6]);
        for (k, &i) in only.frame_indices.iter().enumerate() {
            assert_eq!(only.frames[k], full.frames[i]);
        }
        assert!(only.meta.iter().all(|m| m.mb_type == MbType::I));
        assert_eq!(only.meta.len(), 3 * 4);
    }

    #[test]
    fn gops_decode_independently() {
        let v = video(6, 32, 32, 10);
        let config = EncoderConfig {
            gop: "IBBP".parse::<GopPattern>().unwrap(),
            ..EncoderConfig::constant_qp(26)
        };
        let out = encode(&v, &config).unwrap();
        let full = decode(&out.bitstream, DecodeMode::Filtered).unwrap();
        let tail = decode(&out.bitstream.from_gop(1).unwrap(), DecodeMode::Filtered).unwrap();
        assert_eq!(tail.frame_indices, (4..10).collect::<Vec<_>>());
        assert_eq!(tail.frames[..], full.frames[4..]);
    }

    #[test]
    fn rejects_damaged_streams() {
        let v = video(7, 32, 32, 3);
        let out = encode(&v, &EncoderConfig::constant_qp(20)).unwrap();
        let mut cut = out.bitstream.clone();
        let n = cut.frames[0].len();
        cut.frames[0].truncate(n / 2);
        assert!(matches!(decode(&cut, DecodeMode::Filtered), Err(Error::Truncated(_))));
        let mut padded = out.bitstream.clone();
        padded.frames[1].extend_from_slice(&[0xff; 4]);
        assert!(matches!(decode(&padded, DecodeMode::Filtered), Err(Error::Corrupt(_))));
        let mut dup = out.bitstream.clone();
        dup.frames[2] = dup.frames[0].clone();
        assert!(decode(&dup, DecodeMode::Filtered).is_err());
    }
}
