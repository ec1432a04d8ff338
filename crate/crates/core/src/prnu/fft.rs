use rustfft::num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use crate::plane::FramePlane;

/// Row-major complex plane.
pub(crate) struct Spectrum {
    pub width: usize,
    pub height: usize,
    pub data: Vec<Complex64>,
}

fn transform_2d(width: usize, height: usize, data: &mut [Complex64], direction: FftDirection) {
    let mut planner = FftPlanner::<f64>::new();
    let row_fft = planner.plan_fft(width, direction);
    let col_fft = planner.plan_fft(height, direction);

    let mut scratch = vec![Complex64::default(); row_fft.get_inplace_scratch_len()];
    for row in data.chunks_exact_mut(width) {
        row_fft.process_with_scratch(row, &mut scratch);
    }

    let mut column = vec![Complex64::default(); height];
    let mut scratch = vec![Complex64::default(); col_fft.get_inplace_scratch_len()];
    for x in 0..width {
        for y in 0..height {
            column[y] = data[y * width + x];
        }
        col_fft.process_with_scratch(&mut column, &mut scratch);
        for y in 0..height {
            data[y * width + x] = column[y];
        }
    }
}

/// Unnormalized forward DFT.
pub(crate) fn forward(plane: &FramePlane) -> Spectrum {
    let (width, height) = plane.dims();
    let mut data: Vec<Complex64> = plane.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform_2d(width, height, &mut data, FftDirection::Forward);
    Spectrum { width, height, data }
}

/// Unnormalized inverse DFT, keeping the real part.
pub(crate) fn inverse_real(mut spectrum: Spectrum) -> FramePlane {
    transform_2d(spectrum.width, spectrum.height, &mut spectrum.data, FftDirection::Inverse);
    let values = spectrum.data.iter().map(|c| c.re).collect();
    FramePlane::from_vec(spectrum.width, spectrum.height, values).expect("dims preserved")
}

/// Mean over a `size`x`size` window centred on every sample, wrapping at the
/// borders.
pub(crate) fn box_mean_periodic(values: &[f64], width: usize, height: usize, size: usize) -> Vec<f64> {
    let half = (size / 2) as isize;
    let wrap = |i: isize, n: usize| i.rem_euclid(n as isize) as usize;

    let mut horizontal = vec![0.0; values.len()];
    for y in 0..height {
        let row = &values[y * width..(y + 1) * width];
        let out = &mut horizontal[y * width..(y + 1) * width];
        let mut acc: f64 = (-half..=half).map(|d| row[wrap(d, width)]).sum();
        for (x, slot) in out.iter_mut().enumerate() {
            *slot = acc;
            let x = x as isize;
            acc += row[wrap(x + half + 1, width)] - row[wrap(x - half, width)];
        }
    }

    let mut out = vec![0.0; values.len()];
    let norm = (size * size) as f64;
    for x in 0..width {
        let at = |y: isize| horizontal[wrap(y, height) * width + x];
        let mut acc: f64 = (-half..=half).map(at).sum();
        for y in 0..height {
            out[y * width + x] = acc / norm;
            let yi = y as isize;
            acc += at(yi + half + 1) - at(yi - half);
        }
    }
    out
}

/// Local variance of zero-mean `coeffs` above `noise_var`, taking the minimum
/// estimate over square windows of sizes 3, 5, 7 and 9.
pub(crate) fn min_local_variance(coeffs: &[f64], width: usize, height: usize, noise_var: f64) -> Vec<f64> {
    let squared: Vec<f64> = coeffs.iter().map(|c| c * c).collect();
    let mut best = vec![f64::INFINITY; coeffs.len()];
    for size in [3, 5, 7, 9] {
        let mean = box_mean_periodic(&squared, width, height, size);
        for (b, m) in best.iter_mut().zip(mean) {
            *b = b.min((m - noise_var).max(0.0));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_mean_matches_direct_sum() {
        let (w, h) = (7, 5);
        let values: Vec<f64> = (0..w * h).map(|i| ((i * 37) % 11) as f64).collect();
        let fast = box_mean_periodic(&values, w, h, 3);
        for y in 0..h {
            for x in 0..w {
                let mut s = 0.0;
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        let xx = (x as isize + dx).rem_euclid(w as isize) as usize;
                        let yy = (y as isize + dy).rem_euclid(h as isize) as usize;
                        s += values[yy * w + xx];
                    }
                }
                assert!((fast[y * w + x] - s / 9.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_inverse_roundtrip() {
        let plane = FramePlane::from_fn(12, 8, |x, y| (x as f64 * 0.7).sin() + y as f64);
        let back = inverse_real(forward(&plane));
        let n = plane.len() as f64;
        for (a, b) in plane.data().iter().zip(back.data()) {
            assert!((a - b / n).abs() < 1e-10);
        }
    }
}
