//! Exponential-Golomb codes over a big-endian bit stream.

use std::io;

use bitstream_io::{BigEndian, BitRead, BitReader, BitWrite, BitWriter};

use crate::error::{Error, Result};

pub(crate) struct GolombWriter {
    inner: BitWriter<Vec<u8>, BigEndian>,
    bits: u64,
}

impl GolombWriter {
    pub fn new() -> Self {
        GolombWriter {
            inner: BitWriter::endian(Vec::new(), BigEndian),
            bits: 0,
        }
    }

    pub fn bits_written(&self) -> u64 {
        self.bits
    }

    pub fn write_ue(&mut self, value: u32) {
        let coded = u64::from(value) + 1;
        let len = 64 - coded.leading_zeros();
        let io = (|| -> io::Result<()> {
            self.inner.write_unary::<1>(len - 1)?;
            // the leading 1 doubles as the unary stop bit
            if len > 1 {
                self.inner.write_var(len - 1, coded & ((1u64 << (len - 1)) - 1))?;
            }
            Ok(())
        })();
        io.expect("writing to a Vec cannot fail");
        self.bits += u64::from(2 * len - 1);
    }

    pub fn write_se(&mut self, value: i32) {
        let mapped = if value > 0 {
            2 * value as u32 - 1
        } else {
            2 * value.unsigned_abs()
        };
        self.write_ue(mapped);
    }

    /// Pads to a byte boundary with zero bits and returns the bytes.
    pub fn finish(mut self) -> Vec<u8> {
        self.inner.byte_align().expect("writing to a Vec cannot fail");
        self.inner.into_writer()
    }
}

pub(crate) struct GolombReader<'a> {
    inner: BitReader<&'a [u8], BigEndian>,
    bits: u64,
}

fn truncated(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Truncated("frame payload ended inside a code".into())
    } else {
        Error::Corrupt(e.to_string())
    }
}

impl<'a> GolombReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        GolombReader {
            inner: BitReader::endian(bytes, BigEndian),
            bits: 0,
        }
    }

    pub fn bits_read(&self) -> u64 {
        self.bits
    }

    pub fn read_ue(&mut self) -> Result<u32> {
        let zeros = self.inner.read_unary::<1>().map_err(truncated)?;
        if zeros > 31 {
            return Err(Error::Corrupt(format!("exp-golomb prefix of {zeros} zeros")));
        }
        let suffix: u64 = if zeros > 0 {
            self.inner.read_var(zeros).map_err(truncated)?
        } else {
            0
        };
        self.bits += u64::from(2 * zeros + 1);
        let coded = (1u64 << zeros) | suffix;
        u32::try_from(coded - 1).map_err(|_| Error::Corrupt("exp-golomb value overflow".into()))
    }

    pub fn read_se(&mut self) -> Result<i32> {
        let mapped = self.read_ue()?;
        let magnitude = mapped.div_ceil(2) as i64;
        let value = if mapped % 2 == 1 { magnitude } else { -magnitude };
        i32::try_from(value).map_err(|_| Error::Corrupt("signed exp-golomb overflow".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_codes() {
        let mut w = GolombWriter::new();
        for v in [0, 1, 2, 3] {
            w.write_ue(v);
        }
        assert_eq!(w.bits_written(), 1 + 3 + 3 + 5);
        // 1 010 011 00100 -> 1010 0110 0100 (pad)
        assert_eq!(w.finish(), vec![0b1010_0110, 0b0100_0000]);
    }

    #[test]
    fn signed_mapping() {
        let mut w = GolombWriter::new();
        for v in [0, 1, -1, 2, -2] {
            w.write_se(v);
        }
        let bytes = w.finish();
        let mut r = GolombReader::new(&bytes);
        let mut ue = GolombReader::new(&bytes);
        for (v, mapped) in [(0, 0), (1, 1), (-1, 2), (2, 3), (-2, 4)] {
            assert_eq!(r.read_se().unwrap(), v);
            assert_eq!(ue.read_ue().unwrap(), mapped);
        }
    }

    #[test]
    fn truncated_read() {
        let mut w = GolombWriter::new();
        w.write_ue(1000);
        let bytes = w.finish();
        let mut r = GolombReader::new(&bytes[..1]);
        assert!(matches!(r.read_ue(), Err(Error::Truncated(_))));
    }

    proptest! {
        #[test]
        fn roundtrip(values in proptest::collection::vec((any::<u32>().prop_map(|v| v >> 2), -100_000i32..100_000), 1..40)) {
            let mut w = GolombWriter::new();
            for &(u, s) in &values {
                w.write_ue(u);
                w.write_se(s);
            }
            let bits = w.bits_written();
            let bytes = w.finish();
            prop_assert_eq!(bytes.len() as u64, bits.div_ceil(8));
            let mut r = GolombReader::new(&bytes);
            for &(u, s) in &values {
                prop_assert_eq!(r.read_ue().unwrap(), u);
                prop_assert_eq!(r.read_se().unwrap(), s);
            }
        }
    }
}
