//! Periodic orthogonal wavelet transform and the subband Wiener denoiser used
//! to extract noise residues.

use crate::error::{Error, Result};
use crate::plane::FramePlane;

use super::fft::min_local_variance;

/// Daubechies scaling filter with 8 taps (4 vanishing moments).
const DB8_LOW: [f64; 8] = [
    0.230_377_813_308_855_23,
    0.714_846_570_552_541_5,
    0.630_880_767_929_590_4,
    -0.027_983_769_416_983_85,
    -0.187_034_811_718_881_14,
    0.030_841_381_835_986_965,
    0.032_883_011_666_982_945,
    -0.010_597_401_784_997_278,
];

pub const DENOISE_LEVELS: usize = 4;
pub const DENOISE_NOISE_VAR: f64 = 4.0;
pub const MIN_RESIDUE_DIM: usize = 32;

fn high_pass() -> [f64; 8] {
    let mut g = [0.0; 8];
    for (n, g) in g.iter_mut().enumerate() {
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        *g = sign * DB8_LOW[7 - n];
    }
    g
}

fn analyze_1d(input: &[f64], low: &mut [f64], high: &mut [f64], g: &[f64; 8]) {
    let n = input.len();
    let half = n / 2;
    for k in 0..half {
        let mut a = 0.0;
        let mut d = 0.0;
        for t in 0..8 {
            let v = input[(2 * k + t) % n];
            a += DB8_LOW[t] * v;
            d += g[t] * v;
        }
        low[k] = a;
        high[k] = d;
    }
}

fn synthesize_1d(low: &[f64], high: &[f64], out: &mut [f64], g: &[f64; 8]) {
    let n = out.len();
    out.iter_mut().for_each(|v| *v = 0.0);
    for k in 0..low.len() {
        for t in 0..8 {
            out[(2 * k + t) % n] += DB8_LOW[t] * low[k] + g[t] * high[k];
        }
    }
}

/// In-place multi-level 2D transform. After the call the top-left
/// `w >> levels` x `h >> levels` corner holds the approximation and each level
/// stores its three detail bands in the usual quadrant layout.
pub fn forward_2d(plane: &mut FramePlane, levels: usize) {
    let g = high_pass();
    let width = plane.width();
    let (mut w, mut h) = plane.dims();
    let mut line = Vec::new();
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for _ in 0..levels {
        let data = plane.data_mut();
        line.resize(w.max(h), 0.0);
        lo.resize(w.max(h) / 2, 0.0);
        hi.resize(w.max(h) / 2, 0.0);
        for y in 0..h {
            line[..w].copy_from_slice(&data[y * width..y * width + w]);
            analyze_1d(&line[..w], &mut lo[..w / 2], &mut hi[..w / 2], &g);
            data[y * width..y * width + w / 2].copy_from_slice(&lo[..w / 2]);
            data[y * width + w / 2..y * width + w].copy_from_slice(&hi[..w / 2]);
        }
        for x in 0..w {
            for y in 0..h {
                line[y] = data[y * width + x];
            }
            analyze_1d(&line[..h], &mut lo[..h / 2], &mut hi[..h / 2], &g);
            for y in 0..h / 2 {
                data[y * width + x] = lo[y];
                data[(y + h / 2) * width + x] = hi[y];
            }
        }
        w /= 2;
        h /= 2;
    }
}

pub fn inverse_2d(plane: &mut FramePlane, levels: usize) {
    let g = high_pass();
    let width = plane.width();
    let (full_w, full_h) = plane.dims();
    let mut line = vec![0.0; full_w.max(full_h)];
    for level in (0..levels).rev() {
        let w = full_w >> level;
        let h = full_h >> level;
        let data = plane.data_mut();
        let mut lo = vec![0.0; h / 2];
        let mut hi = vec![0.0; h / 2];
        for x in 0..w {
            for y in 0..h / 2 {
                lo[y] = data[y * width + x];
                hi[y] = data[(y + h / 2) * width + x];
            }
            synthesize_1d(&lo, &hi, &mut line[..h], &g);
            for y in 0..h {
                data[y * width + x] = line[y];
            }
        }
        for y in 0..h {
            let row = &data[y * width..y * width + w];
            let (lo, hi) = row.split_at(w / 2);
            let (lo, hi) = (lo.to_vec(), hi.to_vec());
            synthesize_1d(&lo, &hi, &mut line[..w], &g);
            data[y * width..y * width + w].copy_from_slice(&line[..w]);
        }
    }
}

fn wiener_band(plane: &mut FramePlane, x0: usize, y0: usize, w: usize, h: usize, noise_var: f64) {
    let width = plane.width();
    let data = plane.data_mut();
    let mut band = Vec::with_capacity(w * h);
    for y in 0..h {
        band.extend_from_slice(&data[(y0 + y) * width + x0..(y0 + y) * width + x0 + w]);
    }
    let signal_var = min_local_variance(&band, w, h, noise_var);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let s = signal_var[i];
            data[(y0 + y) * width + x0 + x] = band[i] * s / (s + noise_var);
        }
    }
}

/// Wavelet-domain local Wiener denoiser: four decomposition levels, detail
/// coefficients shrunk by `s / (s + noise_var)` where `s` is the smallest
/// local signal variance over 3/5/7/9 windows.
pub fn denoise(frame: &FramePlane, noise_var: f64) -> FramePlane {
    let mut coeffs = frame.clone();
    forward_2d(&mut coeffs, DENOISE_LEVELS);
    let (full_w, full_h) = frame.dims();
    for level in 0..DENOISE_LEVELS {
        let w = full_w >> (level + 1);
        let h = full_h >> (level + 1);
        wiener_band(&mut coeffs, w, 0, w, h, noise_var);
        wiener_band(&mut coeffs, 0, h, w, h, noise_var);
        wiener_band(&mut coeffs, w, h, w, h, noise_var);
    }
    inverse_2d(&mut coeffs, DENOISE_LEVELS);
    coeffs
}

/// Noise residue `frame - denoise(frame)`.
pub fn extract_residue(frame: &FramePlane) -> Result<FramePlane> {
    let (w, h) = frame.dims();
    if w < MIN_RESIDUE_DIM || h < MIN_RESIDUE_DIM {
        return Err(Error::InvalidDimensions {
            width: w,
            height: h,
            reason: "residue extraction needs at least 32x32",
        });
    }
    let step = 1 << DENOISE_LEVELS;
    if w % step != 0 || h % step != 0 {
        return Err(Error::InvalidDimensions {
            width: w,
            height: h,
            reason: "residue extraction needs dimensions divisible by 16",
        });
    }
    let denoised = denoise(frame, DENOISE_NOISE_VAR);
    let values = frame.data().iter().zip(denoised.data()).map(|(f, d)| f - d).collect();
    FramePlane::from_vec(w, h, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn filter_is_orthonormal() {
        let norm: f64 = DB8_LOW.iter().map(|v| v * v).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!((DB8_LOW.iter().sum::<f64>() - std::f64::consts::SQRT_2).abs() < 1e-12);
        for shift in [2, 4, 6] {
            let dot: f64 = (0..8 - shift).map(|i| DB8_LOW[i] * DB8_LOW[i + shift]).sum();
            assert!(dot.abs() < 1e-12, "shift {shift}: {dot}");
        }
    }

    #[test]
    fn perfect_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (w, h) in [(32, 32), (64, 48), (48, 96)] {
            let orig = FramePlane::from_fn(w, h, |_, _| rng.random_range(0.0..255.0));
            let mut p = orig.clone();
            forward_2d(&mut p, 4);
            let energy_ratio = p.energy() / orig.energy();
            assert!((energy_ratio - 1.0).abs() < 1e-10);
            inverse_2d(&mut p, 4);
            for (a, b) in orig.data().iter().zip(p.data()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn constant_frame_has_zero_residue() {
        let r = extract_residue(&FramePlane::filled(64, 64, 117.0)).unwrap();
        assert!(r.data().iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn too_small_frame_rejected() {
        assert!(extract_residue(&FramePlane::zeros(16, 64)).is_err());
        assert!(extract_residue(&FramePlane::zeros(40, 64)).is_err());
    }

    fn smooth_scene(rng: &mut ChaCha8Rng, size: usize) -> FramePlane {
        let waves: Vec<(f64, f64, f64, f64)> = (0..4)
            .map(|_| {
                (
                    rng.random_range(-0.08..0.08),
                    rng.random_range(-0.08..0.08),
                    rng.random_range(0.0..std::f64::consts::TAU),
                    rng.random_range(5.0..20.0),
                )
            })
            .collect();
        FramePlane::from_fn(size, size, |x, y| {
            128.0
                + waves
                    .iter()
                    .map(|&(fx, fy, ph, a)| a * (fx * x as f64 + fy * y as f64 + ph).sin())
                    .sum::<f64>()
        })
    }

    #[test]
    fn white_noise_residue_std() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 2.0).unwrap();
        let mut stds = Vec::new();
        for _ in 0..20 {
            let scene = smooth_scene(&mut rng, 128);
            let noisy = FramePlane::from_fn(128, 128, |x, y| scene.get(x, y) + noise.sample(&mut rng));
            let r = extract_residue(&noisy).unwrap();
            stds.push(r.std_dev());
            assert!(r.mean().abs() < 0.5);
        }
        let mean_std = stds.iter().sum::<f64>() / stds.len() as f64;
        assert!((1.0..=2.5).contains(&mean_std), "{mean_std}");
    }

    #[test]
    fn low_frequency_sinusoid_passes_through() {
        let img = FramePlane::from_fn(128, 128, |x, y| {
            128.0 + 60.0 * (2.0 * std::f64::consts::PI * (x as f64 / 64.0 + y as f64 / 128.0)).sin()
        });
        let r = extract_residue(&img).unwrap();
        assert!(r.energy() < 0.01 * img.energy());
    }
}
