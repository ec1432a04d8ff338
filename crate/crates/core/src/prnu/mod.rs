//! Noise residues, the maximum-likelihood PRNU estimator, pattern cleanup and
//! the peak-to-correlation-energy detector.

mod fft;
pub mod wavelet;

use crate::error::{Error, Result};
use crate::plane::FramePlane;
use crate::qp_comp::WeightMap;

pub use wavelet::extract_residue;

/// Division guard used by [`Accumulator::finalize`].
pub const FINALIZE_EPS: f64 = 1e-6;

/// Default half-width of the square window excluded around the correlation
/// peak when measuring the noise floor.
pub const DEFAULT_EXCLUSION_HALFWIDTH: usize = 5;

/// Estimated or reference multiplicative sensor factor.
#[derive(Clone, Debug, PartialEq)]
pub struct PrnuPattern(FramePlane);

impl PrnuPattern {
    pub fn new(plane: FramePlane) -> Result<Self> {
        let (w, h) = plane.dims();
        if w == 0 || h == 0 {
            return Err(Error::InvalidDimensions {
                width: w,
                height: h,
                reason: "pattern dimensions must be positive",
            });
        }
        if let Some(v) = plane.data().iter().find(|v| !v.is_finite()) {
            return Err(Error::Config(format!("non-finite pattern value {v}")));
        }
        Ok(PrnuPattern(plane))
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        PrnuPattern(FramePlane::zeros(width, height))
    }

    pub fn plane(&self) -> &FramePlane {
        &self.0
    }

    pub fn into_plane(self) -> FramePlane {
        self.0
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        PrnuPattern(self.0.map(|v| v * factor))
    }
}

/// Running sums of the weighted estimator
/// `K = sum(I * W * M) / sum(I^2 * M)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Accumulator {
    numerator: FramePlane,
    denominator: FramePlane,
    n_frames: usize,
}

impl Accumulator {
    pub fn new(width: usize, height: usize) -> Self {
        Accumulator {
            numerator: FramePlane::zeros(width, height),
            denominator: FramePlane::zeros(width, height),
            n_frames: 0,
        }
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn numerator(&self) -> &FramePlane {
        &self.numerator
    }

    pub fn denominator(&self) -> &FramePlane {
        &self.denominator
    }

    /// Adds one frame with per-pixel weights.
    pub fn accumulate(&mut self, frame: &FramePlane, residue: &FramePlane, weights: &WeightMap) -> Result<()> {
        self.numerator.check_same_dims(frame)?;
        self.numerator.check_same_dims(residue)?;
        self.numerator.check_same_dims(weights.plane())?;
        if let Some(&w) = weights.plane().data().iter().find(|&&w| w < 0.0) {
            return Err(Error::NegativeWeight(w));
        }
        let num = self.numerator.data_mut();
        let den = self.denominator.data_mut();
        for i in 0..num.len() {
            let f = frame.data()[i];
            let w = weights.plane().data()[i];
            num[i] += f * residue.data()[i] * w;
            den[i] += f * f * w;
        }
        self.n_frames += 1;
        Ok(())
    }

    /// Adds one frame with unit weight everywhere.
    pub fn accumulate_unweighted(&mut self, frame: &FramePlane, residue: &FramePlane) -> Result<()> {
        self.numerator.check_same_dims(frame)?;
        self.numerator.check_same_dims(residue)?;
        let num = self.numerator.data_mut();
        let den = self.denominator.data_mut();
        for i in 0..num.len() {
            let f = frame.data()[i];
            num[i] += f * residue.data()[i];
            den[i] += f * f;
        }
        self.n_frames += 1;
        Ok(())
    }

    /// Plane-wise sum of two partial accumulators.
    pub fn merge(mut self, other: &Accumulator) -> Result<Self> {
        self.numerator.check_same_dims(&other.numerator)?;
        for (a, b) in self.numerator.data_mut().iter_mut().zip(other.numerator.data()) {
            *a += b;
        }
        for (a, b) in self.denominator.data_mut().iter_mut().zip(other.denominator.data()) {
            *a += b;
        }
        self.n_frames += other.n_frames;
        Ok(self)
    }

    pub fn finalize(&self) -> Result<PrnuPattern> {
        if self.n_frames == 0 {
            return Err(Error::EmptyAccumulator);
        }
        let values = self
            .numerator
            .data()
            .iter()
            .zip(self.denominator.data())
            .map(|(n, d)| n / d.max(FINALIZE_EPS))
            .collect();
        PrnuPattern::new(FramePlane::from_vec(self.numerator.width(), self.numerator.height(), values)?)
    }
}

/// Removes row means, then column means.
pub fn zero_mean(pattern: &PrnuPattern) -> PrnuPattern {
    let mut p = pattern.0.clone();
    let (w, h) = p.dims();
    for y in 0..h {
        let row = p.row_mut(y);
        let mean = row.iter().sum::<f64>() / w as f64;
        row.iter_mut().for_each(|v| *v -= mean);
    }
    for x in 0..w {
        let mean = (0..h).map(|y| p.get(x, y)).sum::<f64>() / h as f64;
        for y in 0..h {
            let v = p.get(x, y);
            p.set(x, y, v - mean);
        }
    }
    PrnuPattern(p)
}

/// Attenuates peaky spectral components of a pattern.
///
/// The DFT magnitude (normalized by `sqrt(n)`) is treated as a noisy field
/// whose noise variance is the pattern's variance. Each magnitude is scaled by
/// `var / (local_signal_var + var)`, so bins that stand out from their
/// neighbourhood are suppressed while flat regions of the spectrum pass. The
/// phase is kept.
pub fn wiener_fft(pattern: &PrnuPattern) -> PrnuPattern {
    let plane = &pattern.0;
    let (w, h) = plane.dims();
    let n = plane.len() as f64;
    let var = {
        let mean = plane.mean();
        plane.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
    };
    if var <= 0.0 {
        return pattern.clone();
    }
    let mut spectrum = fft::forward(plane);
    let norm = n.sqrt();
    let magnitude: Vec<f64> = spectrum.data.iter().map(|c| c.norm() / norm).collect();
    let signal_var = fft::min_local_variance(&magnitude, w, h, var);
    for (c, s) in spectrum.data.iter_mut().zip(signal_var) {
        *c *= var / (s + var);
    }
    let out = fft::inverse_real(spectrum).map(|v| v / n);
    PrnuPattern(out)
}

/// Circular cross-correlation `c(k, l) = 1/n * sum a(i, j) b(i + k, j + l)`
/// with `n` the pixel count. Row shift `k` indexes rows of the result.
pub fn cross_correlation(a: &PrnuPattern, b: &PrnuPattern) -> Result<FramePlane> {
    a.0.check_same_dims(&b.0)?;
    let fa = fft::forward(&a.0);
    let mut fb = fft::forward(&b.0);
    for (x, y) in fb.data.iter_mut().zip(&fa.data) {
        *x *= y.conj();
    }
    let n = a.0.len() as f64;
    Ok(fft::inverse_real(fb).map(|v| v / (n * n)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PceResult {
    /// Correlation at zero shift.
    pub peak_corr: f64,
    pub pce: f64,
    /// `(row, col)` shift of the largest |c|, in signed wrapped form.
    pub peak_location: (isize, isize),
    pub exclusion_halfwidth: usize,
}

fn signed_shift(i: usize, n: usize) -> isize {
    if i > n / 2 {
        i as isize - n as isize
    } else {
        i as isize
    }
}

/// Peak-to-correlation energy of `test` against `reference`, using the
/// zero-shift correlation as the peak.
pub fn pce(test: &PrnuPattern, reference: &PrnuPattern, exclusion_halfwidth: usize) -> Result<PceResult> {
    let (w, h) = test.dims();
    let window = 2 * exclusion_halfwidth + 1;
    if window >= w || window >= h {
        return Err(Error::Config(format!(
            "exclusion window {window}x{window} does not fit a {w}x{h} correlation plane"
        )));
    }
    let c = cross_correlation(test, reference)?;
    let in_window = |i: usize, n: usize| {
        let d = signed_shift(i, n).unsigned_abs();
        d <= exclusion_halfwidth
    };
    let mut floor = 0.0;
    let mut best = (0usize, 0usize, f64::NEG_INFINITY);
    for y in 0..h {
        for x in 0..w {
            let v = c.get(x, y);
            if v.abs() > best.2 {
                best = (x, y, v.abs());
            }
            if !(in_window(x, w) && in_window(y, h)) {
                floor += v * v;
            }
        }
    }
    let outside = (w * h - window * window) as f64;
    let floor = floor / outside;
    let peak = c.get(0, 0);
    let numerator = peak * peak;
    let value = if floor > 0.0 {
        (numerator / floor).min(f64::MAX)
    } else if numerator > 0.0 {
        f64::MAX
    } else {
        0.0
    };
    Ok(PceResult {
        peak_corr: peak,
        pce: value,
        peak_location: (signed_shift(best.1, h), signed_shift(best.0, w)),
        exclusion_halfwidth,
    })
}
