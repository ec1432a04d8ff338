//! `PRVC` container.
//!
//! ```text
//! magic        4 bytes  "PRVC"
//! version      u8       1
//! flags        u8       bit 0: deblocking filter enabled
//! width        u32 LE
//! height       u32 LE
//! fps_num      u32 LE
//! fps_den      u32 LE
//! gop_len      u8
//! gop          gop_len ASCII bytes from {I, P, B}, first is I
//! frame_count  u32 LE
//! frames       frame_count x (u32 LE payload length, payload), coding order
//! ```
//!
//! Each payload is a big-endian bit string of exp-Golomb codes, zero padded
//! to a byte boundary:
//!
//! ```text
//! frame    ue(type: 0=I 1=P 2=B) ue(display_index) ue(qp) macroblock*
//! mb (I)   ue(intra mode: 0=DC 1=H 2=V) block x16
//! mb (P/B) ue(ref: 0=past 1=future) se(mv_dx) se(mv_dy) block x16
//! block    ue(nonzero count) then per nonzero level in zigzag order:
//!          ue(zero run before it) se(level)
//! ```
//!
//! Macroblocks are in raster order; 4x4 blocks in raster order within the
//! macroblock. Frames of one GOP are contiguous and never reference another
//! GOP, so any suffix starting at a GOP head is itself a valid stream.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::frame_io::check_mb_dims;

use super::bits::GolombReader;
use super::syntax::{read_frame_header, FrameHeader};
use super::GopPattern;

pub const BITSTREAM_MAGIC: [u8; 4] = *b"PRVC";
pub const BITSTREAM_VERSION: u8 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Bitstream {
    pub width: usize,
    pub height: usize,
    pub fps_num: u32,
    pub fps_den: u32,
    pub gop: GopPattern,
    pub deblock: bool,
    /// Frame payloads in coding order.
    pub frames: Vec<Vec<u8>>,
}

struct Cursor<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.at < n {
            return Err(Error::Truncated(format!("bitstream ended in {what}")));
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
}

impl Bitstream {
    pub fn to_bytes(&self) -> Vec<u8> {
        let gop = self.gop.to_string();
        let mut out = Vec::new();
        out.extend_from_slice(&BITSTREAM_MAGIC);
        out.push(BITSTREAM_VERSION);
        out.push(u8::from(self.deblock));
        for v in [self.width as u32, self.height as u32, self.fps_num, self.fps_den] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.push(gop.len() as u8);
        out.extend_from_slice(gop.as_bytes());
        out.extend_from_slice(&(self.frames.len() as u32).to_le_bytes());
        for f in &self.frames {
            out.extend_from_slice(&(f.len() as u32).to_le_bytes());
            out.extend_from_slice(f);
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut c = Cursor { buf, at: 0 };
        let magic: [u8; 4] = c.take(4, "magic")?.try_into().unwrap();
        if magic != BITSTREAM_MAGIC {
            return Err(Error::BadMagic {
                expected: BITSTREAM_MAGIC,
                found: magic,
            });
        }
        let version = c.u8("version")?;
        if version != BITSTREAM_VERSION {
            return Err(Error::Corrupt(format!("unsupported bitstream version {version}")));
        }
        let flags = c.u8("flags")?;
        if flags > 1 {
            return Err(Error::Corrupt(format!("unknown flags {flags:#x}")));
        }
        let width = c.u32("header")? as usize;
        let height = c.u32("header")? as usize;
        let fps_num = c.u32("header")?;
        let fps_den = c.u32("header")?;
        check_mb_dims(width, height)?;
        let gop_len = c.u8("gop")? as usize;
        let gop_text = std::str::from_utf8(c.take(gop_len, "gop")?).map_err(|_| Error::Corrupt("gop pattern is not ASCII".into()))?;
        let gop: GopPattern = gop_text.parse()?;
        let count = c.u32("frame count")? as usize;
        let mut frames = Vec::with_capacity(count.min(1 << 16));
        for i in 0..count {
            let len = c.u32(&format!("length of frame {i}"))? as usize;
            frames.push(c.take(len, &format!("payload of frame {i}"))?.to_vec());
        }
        if c.at != buf.len() {
            return Err(Error::Corrupt(format!("{} trailing bytes", buf.len() - c.at)));
        }
        Ok(Bitstream {
            width,
            height,
            fps_num,
            fps_den,
            gop,
            deblock: flags & 1 == 1,
            frames,
        })
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub(crate) fn frame_header(&self, coded_index: usize) -> Result<FrameHeader> {
        read_frame_header(&mut GolombReader::new(&self.frames[coded_index]))
    }

    /// Number of display frames.
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn total_bits(&self) -> u64 {
        self.frames.iter().map(|f| 8 * f.len() as u64).sum()
    }

    pub fn fps(&self) -> f64 {
        f64::from(self.fps_num) / f64::from(self.fps_den)
    }

    /// The stream restricted to GOPs `first_gop..`, keeping display indices.
    pub fn from_gop(&self, first_gop: usize) -> Result<Bitstream> {
        let first_display = first_gop * self.gop.len();
        let mut frames = Vec::new();
        for i in 0..self.frames.len() {
            if self.frame_header(i)?.display_index >= first_display {
                frames.push(self.frames[i].clone());
            }
        }
        Ok(Bitstream { frames, ..self.clone() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Bitstream {
        Bitstream {
            width: 32,
            height: 16,
            fps_num: 25,
            fps_den: 1,
            gop: "IBBP".parse().unwrap(),
            deblock: true,
            frames: vec![vec![1, 2, 3], vec![], vec![9; 40]],
        }
    }

    #[test]
    fn container_roundtrip() {
        let b = sample();
        assert_eq!(Bitstream::from_bytes(&b.to_bytes()).unwrap(), b);
    }

    #[test]
    fn truncation_and_corruption() {
        let bytes = sample().to_bytes();
        for cut in [3, 10, 30, bytes.len() - 1] {
            assert!(
                matches!(Bitstream::from_bytes(&bytes[..cut]), Err(Error::Truncated(_))),
                "cut {cut}"
            );
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Bitstream::from_bytes(&bad), Err(Error::BadMagic { .. })));
        let mut extra = bytes;
        extra.push(0);
        assert!(matches!(Bitstream::from_bytes(&extra), Err(Error::Corrupt(_))));
    }
}
