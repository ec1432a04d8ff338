//! Quantization-aware contribution weights.
//!
//! Macroblock metadata is turned into per-pixel weight maps that scale each
//! frame's contribution to the estimator: a binary mask drops heavily
//! quantized macroblocks, a weight curve scales them by how much fingerprint
//! they are expected to carry. Splicing regroups the best blocks of many
//! frames into synthetic frames.

use std::cmp::Ordering;
use std::io::Write;
use std::path::Path;

use crate::codec::{MacroblockMeta, MAX_QP, MIN_QP};
use crate::decoder::DecodeOutput;
use crate::error::{Error, Result};
use crate::pipeline::{frame_pces, mean};
use crate::plane::FramePlane;
use crate::prnu::PrnuPattern;
use crate::MB_SIZE;

/// Default QP above which macroblocks are masked out.
pub const DEFAULT_MASK_QP: u8 = 28;
pub const BASE_QP: u8 = 15;
/// Calibrated curves are forced non-increasing from this QP upwards.
pub const ISOTONIC_FROM_QP: u8 = 10;

/// Non-negative per-pixel weights, constant over each macroblock.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMap(pub(crate) FramePlane);

impl WeightMap {
    pub fn new(plane: FramePlane) -> Result<Self> {
        if let Some(&w) = plane.data().iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::NegativeWeight(w));
        }
        Ok(WeightMap(plane))
    }

    pub fn ones(width: usize, height: usize) -> Self {
        WeightMap(FramePlane::filled(width, height, 1.0))
    }

    pub fn plane(&self) -> &FramePlane {
        &self.0
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }

    pub fn sum(&self) -> f64 {
        self.0.data().iter().sum()
    }
}

/// Checks that `meta` tiles a `width` x `height` frame with macroblocks,
/// each exactly once, and returns the macroblocks in raster order.
fn tile(meta: &[MacroblockMeta], width: usize, height: usize) -> Result<Vec<&MacroblockMeta>> {
    let (cols, rows) = (width / MB_SIZE, height / MB_SIZE);
    if cols * MB_SIZE != width || rows * MB_SIZE != height {
        return Err(Error::InvalidDimensions {
            width,
            height,
            reason: "must be multiples of 16",
        });
    }
    let mut grid: Vec<Option<&MacroblockMeta>> = vec![None; cols * rows];
    for m in meta {
        if m.width != MB_SIZE || m.height != MB_SIZE || m.x % MB_SIZE != 0 || m.y % MB_SIZE != 0 || m.x >= width || m.y >= height {
            return Err(Error::CoverageGap(format!(
                "macroblock {}x{} at ({}, {}) is off the grid",
                m.width, m.height, m.x, m.y
            )));
        }
        let slot = &mut grid[(m.y / MB_SIZE) * cols + m.x / MB_SIZE];
        if slot.is_some() {
            return Err(Error::CoverageGap(format!("macroblock at ({}, {}) listed twice", m.x, m.y)));
        }
        *slot = Some(m);
    }
    grid.into_iter()
        .enumerate()
        .map(|(i, m)| m.ok_or_else(|| Error::CoverageGap(format!("no macroblock at ({}, {})", (i % cols) * MB_SIZE, (i / cols) * MB_SIZE))))
        .collect()
}

fn blockwise(meta: &[MacroblockMeta], width: usize, height: usize, weight: impl Fn(&MacroblockMeta) -> f64) -> Result<WeightMap> {
    let mbs = tile(meta, width, height)?;
    let cols = width / MB_SIZE;
    let values: Vec<f64> = mbs.iter().map(|m| weight(m)).collect();
    WeightMap::new(FramePlane::from_fn(width, height, |x, y| {
        values[(y / MB_SIZE) * cols + x / MB_SIZE]
    }))
}

/// 1 where the macroblock QP is at most `threshold_qp`, 0 elsewhere.
pub fn binary_mask(meta: &[MacroblockMeta], width: usize, height: usize, threshold_qp: u8) -> Result<WeightMap> {
    blockwise(meta, width, height, |m| if m.qp <= threshold_qp { 1.0 } else { 0.0 })
}

/// Each macroblock weighted by `curve.weight(qp)`.
pub fn weight_map(meta: &[MacroblockMeta], width: usize, height: usize, curve: &WeightCurve) -> Result<WeightMap> {
    blockwise(meta, width, height, |m| curve.weight(m.qp))
}

/// Piecewise QP to weight mapping.
///
/// Between anchors the weight is interpolated linearly in the log domain, or
/// linearly when either anchor weight is zero. Below the first anchor the
/// first weight holds. Between the last anchor and the cutoff the last
/// segment's slope is extended. Above the cutoff the weight is zero.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightCurve {
    anchors: Vec<(u8, f64)>,
    base_qp: u8,
    cutoff_qp: u8,
}

impl WeightCurve {
    pub fn new(anchors: Vec<(u8, f64)>, base_qp: u8, cutoff_qp: u8) -> Result<Self> {
        if anchors.is_empty() {
            return Err(Error::Config("weight curve needs at least one anchor".into()));
        }
        for pair in anchors.windows(2) {
            if pair[0].0 >= pair[1].0 {
                return Err(Error::Config("weight curve anchors must have increasing qp".into()));
            }
        }
        if let Some(&(qp, w)) = anchors.iter().find(|(_, w)| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config(format!("weight {w} at qp {qp} is not a non-negative number")));
        }
        Ok(WeightCurve {
            anchors,
            base_qp,
            cutoff_qp,
        })
    }

    /// The curve anchored at qp 10, 15 and 25 with weights 1.74, 1 and 0.25,
    /// cut off above qp 28.
    pub fn default_curve() -> Self {
        WeightCurve::new(vec![(10, 1.74), (15, 1.0), (25, 0.25)], BASE_QP, DEFAULT_MASK_QP).expect("valid anchors")
    }

    /// Weight 1 up to `threshold_qp`, 0 above. Weighting with this curve is
    /// binary masking.
    pub fn step(threshold_qp: u8) -> Self {
        WeightCurve::new(vec![(MIN_QP, 1.0)], BASE_QP, threshold_qp).expect("valid anchors")
    }

    pub fn anchors(&self) -> &[(u8, f64)] {
        &self.anchors
    }

    pub fn base_qp(&self) -> u8 {
        self.base_qp
    }

    pub fn cutoff_qp(&self) -> u8 {
        self.cutoff_qp
    }

    pub fn weight(&self, qp: u8) -> f64 {
        if qp > self.cutoff_qp {
            return 0.0;
        }
        let a = &self.anchors;
        let q = f64::from(qp);
        if qp <= a[0].0 {
            return a[0].1;
        }
        if let Some(&(_, w)) = a.iter().find(|&&(aq, _)| aq == qp) {
            return w;
        }
        let seg = match a.iter().position(|&(aq, _)| aq >= qp) {
            Some(i) => i - 1,
            None if a.len() == 1 => return a[0].1,
            None => a.len() - 2,
        };
        let (q0, w0) = (f64::from(a[seg].0), a[seg].1);
        let (q1, w1) = (f64::from(a[seg + 1].0), a[seg + 1].1);
        let t = (q - q0) / (q1 - q0);
        let w = if w0 > 0.0 && w1 > 0.0 {
            (w0.ln() + t * (w1.ln() - w0.ln())).exp()
        } else {
            w0 + t * (w1 - w0)
        };
        w.max(0.0)
    }

    /// One `qp,weight` row for every qp from 1 to 51.
    pub fn write_csv(&self, sink: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["qp", "weight"])?;
        for qp in MIN_QP..=MAX_QP {
            w.write_record([qp.to_string(), format!("{:?}", self.weight(qp))])?;
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file)
    }

    /// Reads a curve table. Every listed qp becomes an anchor, and the cutoff
    /// is the largest qp with a positive weight, so integer QPs evaluate to the
    /// stored weights exactly.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rows = Vec::new();
        for rec in csv::Reader::from_reader(file).deserialize() {
            let (qp, weight): (u8, f64) = rec?;
            rows.push((qp, weight));
        }
        rows.sort_by_key(|r| r.0);
        let cutoff = rows.iter().filter(|r| r.1 > 0.0).map(|r| r.0).max().unwrap_or(0);
        WeightCurve::new(rows, BASE_QP, cutoff)
    }
}

/// Builds a calibrated curve from mean single-frame PCE per QP.
///
/// PCE is normalized by its value at the base QP and the weight is its square
/// root, the ratio of correlation peaks. Weights from qp 10 upwards are made
/// non-increasing by isotonic regression and the curve is renormalized to 1
/// at the base QP. The cutoff is the largest calibrated QP.
pub fn curve_from_mean_pce(points: &[(u8, f64)]) -> Result<WeightCurve> {
    let mut points = points.to_vec();
    points.sort_by_key(|p| p.0);
    let base = points
        .iter()
        .find(|p| p.0 == BASE_QP)
        .map(|p| p.1)
        .ok_or_else(|| Error::Config(format!("calibration grid lacks qp {BASE_QP}")))?;
    if base.is_nan() || base <= 0.0 {
        return Err(Error::Config(format!("mean PCE at qp {BASE_QP} is {base}")));
    }
    let mut weights: Vec<f64> = points.iter().map(|p| (p.1 / base).max(0.0).sqrt()).collect();
    let start = points.iter().position(|p| p.0 >= ISOTONIC_FROM_QP).unwrap_or(points.len());
    isotonic_non_increasing(&mut weights[start..]);
    let at_base = weights[points.iter().position(|p| p.0 == BASE_QP).unwrap()];
    if at_base > 0.0 {
        weights.iter_mut().for_each(|w| *w /= at_base);
    }
    let anchors: Vec<(u8, f64)> = points.iter().map(|p| p.0).zip(weights).collect();
    let cutoff = anchors.last().unwrap().0;
    WeightCurve::new(anchors, BASE_QP, cutoff)
}

/// Calibrates a curve from intervention decodes of one sensor at several QPs,
/// scoring every decoded frame against `reference`.
pub fn calibrate_curve(reference: &PrnuPattern, decodes: &[(u8, &DecodeOutput)]) -> Result<WeightCurve> {
    let mut points = Vec::with_capacity(decodes.len());
    for &(qp, decoded) in decodes {
        let first = decoded
            .frames
            .first()
            .ok_or_else(|| Error::Config(format!("no frames decoded at qp {qp}")))?;
        if first.dims() != reference.dims() {
            return Err(Error::DimensionMismatch {
                left: reference.dims(),
                right: first.dims(),
            });
        }
        points.push((qp, mean(&frame_pces(&decoded.frames, reference)?)));
    }
    curve_from_mean_pce(&points)
}

/// Pool-adjacent-violators fit of a non-increasing sequence, equal weights.
fn isotonic_non_increasing(values: &mut [f64]) {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values.iter() {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (m1, n1) = blocks[blocks.len() - 1];
            let (m0, n0) = blocks[blocks.len() - 2];
            if m0 >= m1 {
                break;
            }
            blocks.truncate(blocks.len() - 2);
            blocks.push(((m0 * n0 as f64 + m1 * n1 as f64) / (n0 + n1) as f64, n0 + n1));
        }
    }
    let mut i = 0;
    for (m, n) in blocks {
        values[i..i + n].iter_mut().for_each(|v| *v = m);
        i += n;
    }
}

/// Ranking criteria for splicing, applied in order. All keys sort best first.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RankKey {
    /// Lower QP first.
    Qp,
    /// Brighter block first.
    Intensity,
    /// Lower coded residual energy first.
    Texture,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpliceRanking {
    pub keys: Vec<RankKey>,
    /// Blocks coded above this QP are never selected.
    pub max_qp: Option<u8>,
}

impl Default for SpliceRanking {
    fn default() -> Self {
        SpliceRanking {
            keys: vec![RankKey::Qp, RankKey::Intensity, RankKey::Texture],
            max_qp: None,
        }
    }
}

/// One decoded frame offered to [`splice_frames`].
#[derive(Clone, Copy, Debug)]
pub struct SpliceSource<'a> {
    pub frame: &'a FramePlane,
    pub residue: &'a FramePlane,
    pub meta: &'a [MacroblockMeta],
}

/// A synthetic frame assembled from blocks of several source frames.
#[derive(Clone, Debug, PartialEq)]
pub struct SplicedFrame {
    pub frame: FramePlane,
    pub residue: FramePlane,
    /// 1 where a block was placed, 0 where the position ran out of blocks.
    pub weights: WeightMap,
    /// Source frame of each macroblock in raster order.
    pub origin: Vec<Option<usize>>,
}

struct Candidate {
    source: usize,
    qp: u8,
    intensity: f64,
    texture: f64,
}

fn compare(keys: &[RankKey], a: &Candidate, b: &Candidate) -> Ordering {
    for key in keys {
        let ord = match key {
            RankKey::Qp => a.qp.cmp(&b.qp),
            RankKey::Intensity => b.intensity.total_cmp(&a.intensity),
            RankKey::Texture => a.texture.total_cmp(&b.texture),
        };
        if ord != Ordering::Equal {
            return ord;
        }
    }
    Ordering::Equal
}

/// Regroups blocks so that spliced frame `j` holds the `j`-th best block of
/// every macroblock position. Blocks keep their position; ties keep source
/// order. Returns as many spliced frames as there are sources.
pub fn splice_frames(sources: &[SpliceSource<'_>], ranking: &SpliceRanking) -> Result<Vec<SplicedFrame>> {
    let Some(first) = sources.first() else {
        return Ok(Vec::new());
    };
    let (w, h) = first.frame.dims();
    let mut tiles = Vec::with_capacity(sources.len());
    for s in sources {
        first.frame.check_same_dims(s.frame)?;
        first.frame.check_same_dims(s.residue)?;
        tiles.push(tile(s.meta, w, h)?);
    }
    let (cols, rows) = (w / MB_SIZE, h / MB_SIZE);
    let mut out: Vec<SplicedFrame> = (0..sources.len())
        .map(|_| SplicedFrame {
            frame: FramePlane::zeros(w, h),
            residue: FramePlane::zeros(w, h),
            weights: WeightMap::ones(w, h),
            origin: vec![None; cols * rows],
        })
        .collect();
    for pos in 0..cols * rows {
        let (x0, y0) = ((pos % cols) * MB_SIZE, (pos / cols) * MB_SIZE);
        let mut candidates: Vec<Candidate> = tiles
            .iter()
            .enumerate()
            .map(|(i, t)| Candidate {
                source: i,
                qp: t[pos].qp,
                intensity: block_mean(sources[i].frame, x0, y0),
                texture: t[pos].residual_energy,
            })
            .filter(|c| ranking.max_qp.is_none_or(|m| c.qp <= m))
            .collect();
        candidates.sort_by(|a, b| compare(&ranking.keys, a, b));
        for (j, spliced) in out.iter_mut().enumerate() {
            let chosen = candidates.get(j).map(|c| c.source);
            spliced.origin[pos] = chosen;
            for y in y0..y0 + MB_SIZE {
                for x in x0..x0 + MB_SIZE {
                    match chosen {
                        Some(s) => {
                            spliced.frame.set(x, y, sources[s].frame.get(x, y));
                            spliced.residue.set(x, y, sources[s].residue.get(x, y));
                        }
                        None => spliced.weights.0.set(x, y, 0.0),
                    }
                }
            }
        }
    }
    Ok(out)
}

fn block_mean(plane: &FramePlane, x0: usize, y0: usize) -> f64 {
    let mut sum = 0.0;
    for y in y0..y0 + MB_SIZE {
        sum += plane.row(y)[x0..x0 + MB_SIZE].iter().sum::<f64>();
    }
    sum / (MB_SIZE * MB_SIZE) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::MbType;
    use proptest::prelude::*;

    fn frame_meta(frame: usize, cols: usize, rows: usize, qp: impl Fn(usize, usize) -> u8) -> Vec<MacroblockMeta> {
        let mut v = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                v.push(MacroblockMeta {
                    frame_index: frame,
                    x: c * MB_SIZE,
                    y: r * MB_SIZE,
                    width: MB_SIZE,
                    height: MB_SIZE,
                    mb_type: MbType::I,
                    qp: qp(c, r),
                    bits: 0,
                    residual_energy: 0.0,
                });
            }
        }
        v
    }

    #[test]
    fn masks_by_threshold() {
        let ones = binary_mask(&frame_meta(0, 4, 2, |_, _| 20), 64, 32, 28).unwrap();
        assert_eq!(ones.sum(), 64.0 * 32.0);
        let zeros = binary_mask(&frame_meta(0, 4, 2, |_, _| 35), 64, 32, 28).unwrap();
        assert_eq!(zeros.sum(), 0.0);
        let half = binary_mask(&frame_meta(0, 4, 2, |c, _| if c < 2 { 20 } else { 35 }), 64, 32, 28).unwrap();
        assert_eq!(half.sum(), 64.0 * 32.0 / 2.0);
    }

    #[test]
    fn coverage_errors() {
        let mut meta = frame_meta(0, 2, 2, |_, _| 20);
        meta.pop();
        assert!(matches!(binary_mask(&meta, 32, 32, 28), Err(Error::CoverageGap(_))));
        let mut dup = frame_meta(0, 2, 2, |_, _| 20);
        dup[3] = dup[0].clone();
        assert!(matches!(binary_mask(&dup, 32, 32, 28), Err(Error::CoverageGap(_))));
        let mut off = frame_meta(0, 2, 2, |_, _| 20);
        off[1].x = 8;
        assert!(matches!(
            weight_map(&off, 32, 32, &WeightCurve::default_curve()),
            Err(Error::CoverageGap(_))
        ));
    }

    #[test]
    fn default_anchors() {
        let c = WeightCurve::default_curve();
        assert_eq!(c.weight(10), 1.74);
        assert_eq!(c.weight(15), 1.0);
        assert_eq!(c.weight(25), 0.25);
        assert_eq!(c.weight(29), 0.0);
        assert_eq!(c.weight(51), 0.0);
        assert_eq!(c.weight(1), 1.74);
        assert!((c.weight(20) - 0.5).abs() < 1e-12);
        assert!((c.weight(10) / c.weight(25) / 7.0 - 1.0).abs() < 0.01);
        let w28 = 0.25 * 0.25f64.powf(0.3);
        assert!((c.weight(28) - w28).abs() < 1e-12);
        for qp in 10..51 {
            assert!(c.weight(qp + 1) <= c.weight(qp), "qp {qp}");
        }
    }

    #[test]
    fn weight_map_uses_curve() {
        let meta = frame_meta(0, 2, 1, |c, _| if c == 0 { 10 } else { 25 });
        let map = weight_map(&meta, 32, 16, &WeightCurve::default_curve()).unwrap();
        assert_eq!(map.plane().get(3, 7), 1.74);
        assert_eq!(map.plane().get(20, 15), 0.25);
    }

    #[test]
    fn zero_anchor_interpolates_linearly() {
        let c = WeightCurve::new(vec![(10, 1.0), (20, 0.0)], 15, 20).unwrap();
        assert!((c.weight(15) - 0.5).abs() < 1e-12);
        assert_eq!(c.weight(20), 0.0);
    }

    #[test]
    fn curve_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        let c = WeightCurve::default_curve();
        c.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 52);
        assert!(text.starts_with("qp,weight\n1,1.74\n"));
        let back = WeightCurve::load(&path).unwrap();
        for qp in MIN_QP..=MAX_QP {
            assert_eq!(back.weight(qp), c.weight(qp), "qp {qp}");
        }
    }

    #[test]
    fn calibration_normalizes_and_enforces_monotonicity() {
        let points = [(5, 9.0), (10, 4.0), (15, 2.0), (20, 2.5), (25, 0.5), (30, 0.0)];
        let c = curve_from_mean_pce(&points).unwrap();
        assert!((c.weight(15) - 1.0).abs() < 1e-12);
        for qp in 10..30 {
            assert!(c.weight(qp + 1) <= c.weight(qp) + 1e-12, "qp {qp}");
        }
        assert_eq!(c.weight(31), 0.0);
        assert!(matches!(curve_from_mean_pce(&[(10, 1.0), (20, 1.0)]), Err(Error::Config(_))));
    }

    #[test]
    fn isotonic_pools_violators() {
        let mut v = [3.0, 1.0, 2.0, 0.5];
        isotonic_non_increasing(&mut v);
        assert_eq!(v, [3.0, 1.5, 1.5, 0.5]);
    }

    fn plane(w: usize, h: usize, v: impl Fn(usize, usize) -> f64) -> FramePlane {
        FramePlane::from_fn(w, h, v)
    }

    #[test]
    fn dominant_frame_is_spliced_first() {
        let frames: Vec<FramePlane> = (0..3).map(|i| plane(32, 32, |x, y| (x + y + i) as f64)).collect();
        let residues: Vec<FramePlane> = (0..3).map(|i| plane(32, 32, |x, y| (x * y * (i + 1)) as f64)).collect();
        let metas: Vec<Vec<MacroblockMeta>> = (0..3).map(|i| frame_meta(i, 2, 2, |_, _| if i == 2 { 10 } else { 30 })).collect();
        let sources: Vec<SpliceSource> = (0..3)
            .map(|i| SpliceSource {
                frame: &frames[i],
                residue: &residues[i],
                meta: &metas[i],
            })
            .collect();
        let out = splice_frames(&sources, &SpliceRanking::default()).unwrap();
        assert_eq!(out[0].residue, residues[2]);
        assert_eq!(out[0].frame, frames[2]);
    }

    #[test]
    fn fully_tied_ranking_keeps_order() {
        let frames: Vec<FramePlane> = (0..2).map(|_| plane(32, 16, |_, _| 50.0)).collect();
        let residues: Vec<FramePlane> = (0..2).map(|i| plane(32, 16, |_, _| i as f64)).collect();
        let metas: Vec<Vec<MacroblockMeta>> = (0..2).map(|i| frame_meta(i, 2, 1, |_, _| 20)).collect();
        let sources: Vec<SpliceSource> = (0..2)
            .map(|i| SpliceSource {
                frame: &frames[i],
                residue: &residues[i],
                meta: &metas[i],
            })
            .collect();
        let out = splice_frames(&sources, &SpliceRanking::default()).unwrap();
        assert_eq!(out[0].residue, residues[0]);
        assert_eq!(out[1].residue, residues[1]);
    }

    #[test]
    fn exhausted_positions_get_zero_weight() {
        let frames: Vec<FramePlane> = (0..2).map(|_| plane(32, 16, |_, _| 50.0)).collect();
        let metas = [
            frame_meta(0, 2, 1, |c, _| if c == 0 { 20 } else { 40 }),
            frame_meta(1, 2, 1, |_, _| 40),
        ];
        let sources: Vec<SpliceSource> = (0..2)
            .map(|i| SpliceSource {
                frame: &frames[i],
                residue: &frames[i],
                meta: &metas[i],
            })
            .collect();
        let ranking = SpliceRanking {
            max_qp: Some(28),
            ..SpliceRanking::default()
        };
        let out = splice_frames(&sources, &ranking).unwrap();
        assert_eq!(out[0].origin, vec![Some(0), None]);
        assert_eq!(out[0].weights.sum(), 256.0);
        assert_eq!(out[1].weights.sum(), 0.0);
    }

    /// Per position, picks the source with the smallest (qp, -intensity,
    /// texture, index) by exhaustive scan.
    fn brute_force_best(qps: &[Vec<u8>], intens: &[Vec<f64>], pos: usize) -> usize {
        let mut best = 0;
        for i in 1..qps.len() {
            let a = (qps[i][pos], -intens[i][pos]);
            let b = (qps[best][pos], -intens[best][pos]);
            if a.0 < b.0 || (a.0 == b.0 && a.1 < b.1) {
                best = i;
            }
        }
        best
    }

    proptest! {
        #[test]
        fn splice_matches_brute_force(
            qps in proptest::collection::vec(proptest::collection::vec(1u8..52, 6), 2..5),
            levels in proptest::collection::vec(proptest::collection::vec(0u8..4, 6), 5),
        ) {
            let n = qps.len();
            let (cols, rows) = (3, 2);
            let frames: Vec<FramePlane> = (0..n)
                .map(|i| plane(48, 32, |x, y| f64::from(levels[i][(y / 16) * cols + x / 16]) * 10.0))
                .collect();
            let residues: Vec<FramePlane> = (0..n).map(|i| plane(48, 32, |x, y| (i * 1000 + y * 48 + x) as f64)).collect();
            let metas: Vec<Vec<MacroblockMeta>> = (0..n).map(|i| frame_meta(i, cols, rows, |c, r| qps[i][r * cols + c])).collect();
            let sources: Vec<SpliceSource> = (0..n)
                .map(|i| SpliceSource { frame: &frames[i], residue: &residues[i], meta: &metas[i] })
                .collect();
            let out = splice_frames(&sources, &SpliceRanking::default()).unwrap();
            let intens: Vec<Vec<f64>> = (0..n).map(|i| levels[i][..6].iter().map(|&l| f64::from(l) * 10.0).collect()).collect();
            for pos in 0..cols * rows {
                let expect = brute_force_best(&qps, &intens, pos);
                prop_assert_eq!(out[0].origin[pos], Some(expect));
                let (x0, y0) = ((pos % cols) * 16, (pos / cols) * 16);
                prop_assert_eq!(out[0].residue.get(x0 + 5, y0 + 9), residues[expect].get(x0 + 5, y0 + 9));
                // every source appears exactly once per position across spliced frames
                let mut seen: Vec<usize> = out.iter().map(|s| s.origin[pos].unwrap()).collect();
                seen.sort();
                prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
            }
        }

        #[test]
        fn mask_is_step_weighting(qps in proptest::collection::vec(1u8..52, 4), t in 1u8..52) {
            let meta = frame_meta(0, 2, 2, |c, r| qps[r * 2 + c]);
            let mask = binary_mask(&meta, 32, 32, t).unwrap();
            let weighted = weight_map(&meta, 32, 32, &WeightCurve::step(t)).unwrap();
            prop_assert_eq!(mask, weighted);
        }

        #[test]
        fn maps_are_blockwise_constant(qps in proptest::collection::vec(1u8..52, 6)) {
            let meta = frame_meta(0, 3, 2, |c, r| qps[r * 3 + c]);
            let map = weight_map(&meta, 48, 32, &WeightCurve::default_curve()).unwrap();
            for y in 0..32 {
                for x in 0..48 {
                    prop_assert_eq!(map.plane().get(x, y), map.plane().get(x / 16 * 16, y / 16 * 16));
                }
            }
        }
    }
}
