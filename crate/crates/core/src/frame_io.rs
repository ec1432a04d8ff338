//! On-disk formats: raw luma video, PRNU pattern files, the fingerprint
//! gallery and macroblock metadata CSV.
//!
//! All integers are little-endian.
//!
//! ```text
//! raw video   "PRVW" u32 width, u32 height, u32 fps_num, u32 fps_den, u32 frame_count,
//!             then frame_count planar 8-bit frames of width*height bytes
//! pattern     "PRNK" u32 width, u32 height, then width*height f32 samples row-major
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::{MacroblockMeta, MbType};
use crate::error::{Error, Result};
use crate::plane::{FramePlane, LumaPlane};
use crate::prnu::PrnuPattern;
use crate::MB_SIZE;

pub const VIDEO_MAGIC: [u8; 4] = *b"PRVW";
pub const PATTERN_MAGIC: [u8; 4] = *b"PRNK";
pub const VIDEO_HEADER_LEN: usize = 24;
pub const PATTERN_HEADER_LEN: usize = 12;

/// Uncompressed 8-bit luma video.
#[derive(Clone, Debug, PartialEq)]
pub struct RawVideo {
    pub width: usize,
    pub height: usize,
    pub fps_num: u32,
    pub fps_den: u32,
    pub frames: Vec<LumaPlane>,
}

pub(crate) fn check_mb_dims(width: usize, height: usize) -> Result<()> {
    if width < MB_SIZE || height < MB_SIZE {
        return Err(Error::InvalidDimensions {
            width,
            height,
            reason: "must be at least 16x16",
        });
    }
    if !width.is_multiple_of(MB_SIZE) || !height.is_multiple_of(MB_SIZE) {
        return Err(Error::InvalidDimensions {
            width,
            height,
            reason: "must be multiples of 16",
        });
    }
    Ok(())
}

impl RawVideo {
    pub fn new(width: usize, height: usize, fps_num: u32, fps_den: u32, frames: Vec<LumaPlane>) -> Result<Self> {
        let video = RawVideo {
            width,
            height,
            fps_num,
            fps_den,
            frames,
        };
        video.validate()?;
        Ok(video)
    }

    pub fn validate(&self) -> Result<()> {
        check_mb_dims(self.width, self.height)?;
        if self.frames.is_empty() {
            return Err(Error::Config("video has no frames".into()));
        }
        if self.fps_num == 0 || self.fps_den == 0 {
            return Err(Error::Config("frame rate must be positive".into()));
        }
        for frame in &self.frames {
            if frame.dims() != (self.width, self.height) {
                return Err(Error::DimensionMismatch {
                    left: (self.width, self.height),
                    right: frame.dims(),
                });
            }
        }
        Ok(())
    }

    pub fn fps(&self) -> f64 {
        f64::from(self.fps_num) / f64::from(self.fps_den)
    }

    /// Frames per whole second, rounded.
    pub fn frames_per_second(&self) -> usize {
        self.fps().round().max(1.0) as usize
    }
}

fn read_u32(buf: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(buf[at..at + 4].try_into().unwrap())
}

fn read_exact_or_truncated(reader: &mut impl Read, buf: &mut [u8], what: &str, path: &Path) -> Result<()> {
    reader.read_exact(buf).map_err(|e| {
        if e.kind() == ErrorKind::UnexpectedEof {
            Error::Truncated(format!("{} in {}", what, path.display()))
        } else {
            Error::io(path, e)
        }
    })
}

pub fn read_raw_video(path: impl AsRef<Path>) -> Result<RawVideo> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut header = [0u8; VIDEO_HEADER_LEN];
    read_exact_or_truncated(&mut reader, &mut header, "header", path)?;
    let magic: [u8; 4] = header[..4].try_into().unwrap();
    if magic != VIDEO_MAGIC {
        return Err(Error::BadMagic {
            expected: VIDEO_MAGIC,
            found: magic,
        });
    }
    let width = read_u32(&header, 4) as usize;
    let height = read_u32(&header, 8) as usize;
    let fps_num = read_u32(&header, 12);
    let fps_den = read_u32(&header, 16);
    let count = read_u32(&header, 20) as usize;
    check_mb_dims(width, height)?;

    let mut frames = Vec::with_capacity(count);
    for i in 0..count {
        let mut samples = vec![0u8; width * height];
        read_exact_or_truncated(&mut reader, &mut samples, &format!("frame {i} of {count}"), path)?;
        frames.push(LumaPlane::from_vec(width, height, samples)?);
    }
    RawVideo::new(width, height, fps_num, fps_den, frames)
}

pub fn write_raw_video(video: &RawVideo, path: impl AsRef<Path>) -> Result<()> {
    video.validate()?;
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut header = Vec::with_capacity(VIDEO_HEADER_LEN);
    header.extend_from_slice(&VIDEO_MAGIC);
    for v in [
        video.width as u32,
        video.height as u32,
        video.fps_num,
        video.fps_den,
        video.frames.len() as u32,
    ] {
        header.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&header).map_err(|e| Error::io(path, e))?;
    for frame in &video.frames {
        w.write_all(frame.data()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_pattern(pattern: &PrnuPattern, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(PATTERN_HEADER_LEN + 4 * pattern.plane().len());
    buf.extend_from_slice(&PATTERN_MAGIC);
    buf.extend_from_slice(&(pattern.width() as u32).to_le_bytes());
    buf.extend_from_slice(&(pattern.height() as u32).to_le_bytes());
    for &v in pattern.plane().data() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_pattern(path: impl AsRef<Path>) -> Result<PrnuPattern> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    if buf.len() < PATTERN_HEADER_LEN {
        return Err(Error::Truncated(format!("pattern header in {}", path.display())));
    }
    let magic: [u8; 4] = buf[..4].try_into().unwrap();
    if magic != PATTERN_MAGIC {
        return Err(Error::BadMagic {
            expected: PATTERN_MAGIC,
            found: magic,
        });
    }
    let width = read_u32(&buf, 4) as usize;
    let height = read_u32(&buf, 8) as usize;
    if width == 0 || height == 0 {
        return Err(Error::InvalidDimensions {
            width,
            height,
            reason: "pattern dimensions must be positive",
        });
    }
    let payload = &buf[PATTERN_HEADER_LEN..];
    if payload.len() < 4 * width * height {
        return Err(Error::Truncated(format!("pattern samples in {}", path.display())));
    }
    let values = payload
        .chunks_exact(4)
        .take(width * height)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    PrnuPattern::new(FramePlane::from_vec(width, height, values)?)
}

/// How a stored fingerprint was produced.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreationParams {
    pub method: String,
    pub n_frames: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FingerprintRecord {
    pub camera_id: String,
    pub pattern: PrnuPattern,
    pub source_descriptor: String,
    pub creation_params: CreationParams,
}

#[derive(Serialize, Deserialize)]
struct RecordSidecar {
    camera_id: String,
    width: usize,
    height: usize,
    source_descriptor: String,
    creation_params: CreationParams,
}

/// Directory of fingerprints keyed by camera id.
///
/// Each record is a `<id>.json` sidecar plus a `<id>.prnk` pattern file.
/// Creating the sidecar with `create_new` claims the id, so a second writer
/// for the same id fails with [`Error::Duplicate`].
#[derive(Clone, Debug)]
pub struct FingerprintStore {
    root: PathBuf,
}

fn check_camera_id(id: &str) -> Result<()> {
    let ok = !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.')) && !id.starts_with('.');
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("invalid camera id {id:?}")))
    }
}

impl FingerprintStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(FingerprintStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn sidecar_path(&self, id: &str) -> PathBuf {
        self.root.join(format!("{id}.json"))
    }

    fn pattern_path(&self, id: &str) -> PathBuf {
        self.root.join(format!("{id}.prnk"))
    }

    pub fn store(&self, record: &FingerprintRecord) -> Result<()> {
        check_camera_id(&record.camera_id)?;
        let sidecar_path = self.sidecar_path(&record.camera_id);
        let file = OpenOptions::new().write(true).create_new(true).open(&sidecar_path).map_err(|e| {
            if e.kind() == ErrorKind::AlreadyExists {
                Error::Duplicate(record.camera_id.clone())
            } else {
                Error::io(&sidecar_path, e)
            }
        })?;
        write_pattern(&record.pattern, self.pattern_path(&record.camera_id))?;
        let sidecar = RecordSidecar {
            camera_id: record.camera_id.clone(),
            width: record.pattern.width(),
            height: record.pattern.height(),
            source_descriptor: record.source_descriptor.clone(),
            creation_params: record.creation_params.clone(),
        };
        serde_json::to_writer_pretty(BufWriter::new(file), &sidecar)?;
        Ok(())
    }

    pub fn load(&self, camera_id: &str) -> Result<FingerprintRecord> {
        check_camera_id(camera_id)?;
        let sidecar_path = self.sidecar_path(camera_id);
        let text = match fs::read_to_string(&sidecar_path) {
            Ok(t) => t,
            Err(e) if e.kind() == ErrorKind::NotFound => return Err(Error::NotFound(camera_id.to_string())),
            Err(e) => return Err(Error::io(&sidecar_path, e)),
        };
        let sidecar: RecordSidecar = serde_json::from_str(&text)?;
        let pattern = read_pattern(self.pattern_path(camera_id))?;
        if pattern.dims() != (sidecar.width, sidecar.height) {
            return Err(Error::DimensionMismatch {
                left: (sidecar.width, sidecar.height),
                right: pattern.dims(),
            });
        }
        Ok(FingerprintRecord {
            camera_id: sidecar.camera_id,
            pattern,
            source_descriptor: sidecar.source_descriptor,
            creation_params: sidecar.creation_params,
        })
    }

    /// Camera ids in the store, sorted.
    pub fn ids(&self) -> Result<Vec<String>> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.root).map_err(|e| Error::io(&self.root, e))? {
            let entry = entry.map_err(|e| Error::io(&self.root, e))?;
            let path = entry.path();
            if path.extension().is_some_and(|ext| ext == "json") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    ids.push(stem.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }
}

pub const MB_CSV_HEADER: [&str; 8] = ["frame", "x", "y", "w", "h", "type", "qp", "bits"];

/// Writes one CSV row per macroblock with a header row.
pub fn export_mb_metadata(meta: &[MacroblockMeta], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_mb_metadata(meta, file)
}

pub fn write_mb_metadata(meta: &[MacroblockMeta], sink: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(MB_CSV_HEADER)?;
    for m in meta {
        w.write_record([
            m.frame_index.to_string(),
            m.x.to_string(),
            m.y.to_string(),
            m.width.to_string(),
            m.height.to_string(),
            m.mb_type.as_char().to_string(),
            m.qp.to_string(),
            m.bits.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Reads metadata written by [`export_mb_metadata`]. Residual energy is not
/// part of the CSV and comes back as zero.
pub fn import_mb_metadata(path: impl AsRef<Path>) -> Result<Vec<MacroblockMeta>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| -> Result<usize> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Corrupt(format!("bad metadata field {}", MB_CSV_HEADER[i])))
        };
        let mb_type = rec
            .get(5)
            .and_then(|s| s.chars().next())
            .and_then(MbType::from_char)
            .ok_or_else(|| Error::Corrupt("bad macroblock type".into()))?;
        out.push(MacroblockMeta {
            frame_index: field(0)?,
            x: field(1)?,
            y: field(2)?,
            width: field(3)?,
            height: field(4)?,
            mb_type,
            qp: field(6)? as u8,
            bits: field(7)? as u64,
            residual_energy: 0.0,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn video(w: usize, h: usize, n: usize, seed: u8) -> RawVideo {
        let frames = (0..n)
            .map(|i| LumaPlane::from_fn(w, h, |x, y| (x * 7 + y * 13 + i * 31) as u8 ^ seed))
            .collect();
        RawVideo::new(w, h, 25, 1, frames).unwrap()
    }

    #[test]
    fn zero_video_reads_back() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("z.prvw");
        let v = RawVideo::new(16, 16, 25, 1, vec![LumaPlane::filled(16, 16, 0)]).unwrap();
        write_raw_video(&v, &path).unwrap();
        let back = read_raw_video(&path).unwrap();
        assert_eq!(back.frames.len(), 1);
        assert!(back.frames[0].data().iter().all(|&s| s == 0));
    }

    #[test]
    fn single_frame_file_size() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("s.prvw");
        write_raw_video(&video(16, 16, 1, 0), &path).unwrap();
        assert_eq!(fs::metadata(&path).unwrap().len(), (VIDEO_HEADER_LEN + 256) as u64);
    }

    #[test]
    fn truncated_payload_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.prvw");
        write_raw_video(&video(16, 16, 10, 3), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 256]).unwrap();
        assert!(matches!(read_raw_video(&path), Err(Error::Truncated(_))));
    }

    #[test]
    fn bad_magic_and_missing_file() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.prvw");
        write_raw_video(&video(16, 16, 1, 0), &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[0] = b'X';
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_raw_video(&path), Err(Error::BadMagic { .. })));
        assert!(matches!(read_raw_video(dir.path().join("nope")), Err(Error::Io { .. })));
    }

    #[test]
    fn non_multiple_of_16_rejected() {
        let frames = vec![LumaPlane::filled(20, 16, 0)];
        assert!(matches!(
            RawVideo::new(20, 16, 25, 1, frames.clone()),
            Err(Error::InvalidDimensions { .. })
        ));
        let bad = RawVideo {
            width: 20,
            height: 16,
            fps_num: 25,
            fps_den: 1,
            frames,
        };
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.prvw");
        assert!(write_raw_video(&bad, &path).is_err());
        assert!(!path.exists());
    }

    #[test]
    fn fingerprint_store_roundtrip_and_errors() {
        let dir = tempdir().unwrap();
        let store = FingerprintStore::open(dir.path().join("gallery")).unwrap();
        let values: Vec<f64> = (0..64 * 48).map(|i| ((i as f32).sin() * 0.03) as f64).collect();
        let pattern = PrnuPattern::new(FramePlane::from_vec(64, 48, values).unwrap()).unwrap();
        let record = FingerprintRecord {
            camera_id: "camA".into(),
            pattern: pattern.clone(),
            source_descriptor: "synthetic".into(),
            creation_params: CreationParams {
                method: "weighting".into(),
                n_frames: 50,
            },
        };
        store.store(&record).unwrap();
        let back = store.load("camA").unwrap();
        assert_eq!(back, record);
        for (a, b) in back.pattern.plane().data().iter().zip(pattern.plane().data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert!(matches!(store.store(&record), Err(Error::Duplicate(_))));
        assert!(matches!(store.load("camZ"), Err(Error::NotFound(_))));
        assert_eq!(store.ids().unwrap(), vec!["camA".to_string()]);
    }

    fn mb(frame: usize, x: usize, y: usize, t: MbType, qp: u8, bits: u64) -> MacroblockMeta {
        MacroblockMeta {
            frame_index: frame,
            x,
            y,
            width: 16,
            height: 16,
            mb_type: t,
            qp,
            bits,
            residual_energy: 0.0,
        }
    }

    #[test]
    fn metadata_csv_format() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("meta.csv");
        export_mb_metadata(&[], &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "frame,x,y,w,h,type,qp,bits\n");

        let rows = vec![mb(0, 0, 0, MbType::I, 20, 123), mb(1, 16, 32, MbType::B, 31, 7)];
        export_mb_metadata(&rows, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[1], "0,0,0,16,16,I,20,123");
        assert_eq!(lines[2], "1,16,32,16,16,B,31,7");
        assert_eq!(import_mb_metadata(&path).unwrap(), rows);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]
            #[test]
            fn raw_video_roundtrip(
                wb in 1usize..4, hb in 1usize..4, n in 1usize..6,
                bytes in proptest::collection::vec(any::<u8>(), 64),
            ) {
                let (w, h) = (wb * 16, hb * 16);
                let frames = (0..n)
                    .map(|i| LumaPlane::from_fn(w, h, |x, y| bytes[(x * 3 + y * 5 + i) % 64]))
                    .collect();
                let v = RawVideo::new(w, h, 30000, 1001, frames).unwrap();
                let dir = tempdir().unwrap();
                let path = dir.path().join("p.prvw");
                write_raw_video(&v, &path).unwrap();
                prop_assert_eq!(read_raw_video(&path).unwrap(), v);
            }
        }
    }
}
