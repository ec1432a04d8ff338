//! Synthetic sensor: a ground-truth PRNU factor and videos rendered through
//! the multiplicative sensor model `I = I0 + I0 * K + theta`.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frame_io::RawVideo;
use crate::plane::{FramePlane, LumaPlane};
use crate::prnu::PrnuPattern;

pub const DEFAULT_K_STRENGTH: f64 = 0.03;
pub const DEFAULT_THETA_STD: f64 = 2.0;
pub const DEFAULT_FPS: u32 = 25;
/// Period of the texture strength cycle of [`SceneContent::Mixed`].
pub const MIXED_PERIOD_FRAMES: f64 = 100.0;
/// Texture strength of mixed scenes swings between `1 - depth` and `1 + depth`.
const MIXED_DEPTH: f64 = 0.9;

/// Independent random streams derived from one seed.
const STREAM_FACTOR: u64 = 1;
const STREAM_SCENE: u64 = 2;
const STREAM_FRAME_BASE: u64 = 1 << 32;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// I.i.d. zero-mean Gaussian factor with standard deviation `k_strength`.
pub fn generate_prnu_factor(seed: u64, width: usize, height: usize, k_strength: f64) -> Result<PrnuPattern> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidDimensions {
            width,
            height,
            reason: "must be positive",
        });
    }
    if !k_strength.is_finite() || k_strength < 0.0 {
        return Err(Error::Config(format!("k_strength {k_strength} must be non-negative")));
    }
    if k_strength == 0.0 {
        return Ok(PrnuPattern::zeros(width, height));
    }
    let normal = Normal::new(0.0, k_strength).expect("finite positive std");
    let mut r = rng(seed, STREAM_FACTOR);
    PrnuPattern::new(FramePlane::from_fn(width, height, |_, _| normal.sample(&mut r)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensorProfile {
    pub k_true: PrnuPattern,
    pub k_strength: f64,
    pub theta_std: f64,
}

impl SensorProfile {
    pub fn generate(seed: u64, width: usize, height: usize, k_strength: f64, theta_std: f64) -> Result<Self> {
        if !theta_std.is_finite() || theta_std < 0.0 {
            return Err(Error::Config(format!("theta_std {theta_std} must be non-negative")));
        }
        Ok(SensorProfile {
            k_true: generate_prnu_factor(seed, width, height, k_strength)?,
            k_strength,
            theta_std,
        })
    }

    /// Default strength (0.03) and temporal noise (std 2).
    pub fn with_defaults(seed: u64, width: usize, height: usize) -> Result<Self> {
        Self::generate(seed, width, height, DEFAULT_K_STRENGTH, DEFAULT_THETA_STD)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SceneContent {
    /// Gradient plus a few very low frequency undulations.
    Smooth,
    /// Sum of random mid-frequency gratings.
    Texture,
    /// Smooth base with texture whose strength swells and fades over a
    /// [`MIXED_PERIOD_FRAMES`] cycle, so coding cost varies over time.
    Mixed,
}

impl std::str::FromStr for SceneContent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smooth" => Ok(SceneContent::Smooth),
            "texture" => Ok(SceneContent::Texture),
            "mixed" => Ok(SceneContent::Mixed),
            _ => Err(Error::Config(format!("unknown scene content {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneConfig {
    pub content: SceneContent,
    /// Translation per frame in pixels, `(dx, dy)`.
    pub drift: (f64, f64),
    pub mean_intensity: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            content: SceneContent::Mixed,
            drift: (1.0, 1.0),
            mean_intensity: 128.0,
            seed: 0,
        }
    }
}

struct Grating {
    fx: f64,
    fy: f64,
    phase: f64,
    amplitude: f64,
    texture: bool,
}

/// A continuous intensity field, so drift never needs resampling.
struct Scene {
    mean: f64,
    gradient: (f64, f64),
    gratings: Vec<Grating>,
    /// Phase of the texture strength cycle, `None` for a steady scene.
    swell: Option<f64>,
}

impl Scene {
    fn new(config: &SceneConfig, width: usize, height: usize) -> Self {
        let mut r = rng(config.seed, STREAM_SCENE);
        let headroom = config.mean_intensity.min(255.0 - config.mean_intensity);
        let mut gratings = Vec::new();
        let smooth = matches!(config.content, SceneContent::Smooth | SceneContent::Mixed);
        let texture = matches!(config.content, SceneContent::Texture | SceneContent::Mixed);
        let mut gradient = (0.0, 0.0);
        if smooth {
            let span = 0.3 * headroom;
            let angle = r.random_range(0.0..TAU);
            let extent = (width + height) as f64 / 2.0;
            gradient = (span * angle.cos() / extent, span * angle.sin() / extent);
            for _ in 0..3 {
                let period = r.random_range(96.0..256.0);
                let angle: f64 = r.random_range(0.0..TAU);
                gratings.push(Grating {
                    fx: angle.cos() / period,
                    fy: angle.sin() / period,
                    phase: r.random_range(0.0..TAU),
                    amplitude: 0.08 * headroom,
                    texture: false,
                });
            }
        }
        if texture {
            for _ in 0..12 {
                let period = r.random_range(6.0..40.0);
                let angle: f64 = r.random_range(0.0..TAU);
                gratings.push(Grating {
                    fx: angle.cos() / period,
                    fy: angle.sin() / period,
                    phase: r.random_range(0.0..TAU),
                    amplitude: 0.04 * headroom,
                    texture: true,
                });
            }
        }
        let swell = (config.content == SceneContent::Mixed).then(|| r.random_range(0.0..TAU));
        Scene {
            mean: config.mean_intensity,
            gradient,
            gratings,
            swell,
        }
    }

    fn texture_gain(&self, t: usize) -> f64 {
        self.swell.map_or(1.0, |phase| {
            1.0 + MIXED_DEPTH * (TAU * t as f64 / MIXED_PERIOD_FRAMES + phase).sin()
        })
    }

    fn sample(&self, x: f64, y: f64, cx: f64, cy: f64, gain: f64) -> f64 {
        let mut v = self.mean + self.gradient.0 * (x - cx) + self.gradient.1 * (y - cy);
        for g in &self.gratings {
            let a = if g.texture { g.amplitude * gain } else { g.amplitude };
            v += a * (TAU * (g.fx * x + g.fy * y) + g.phase).cos();
        }
        v
    }
}

/// The noiseless scene `I0` at frame `t`.
pub fn scene_frame(config: &SceneConfig, width: usize, height: usize, t: usize) -> FramePlane {
    let scene = Scene::new(config, width, height);
    render(&scene, config, width, height, t)
}

fn render(scene: &Scene, config: &SceneConfig, width: usize, height: usize, t: usize) -> FramePlane {
    let (ox, oy) = (config.drift.0 * t as f64, config.drift.1 * t as f64);
    let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
    let gain = scene.texture_gain(t);
    FramePlane::from_fn(width, height, |x, y| scene.sample(x as f64 + ox, y as f64 + oy, cx, cy, gain))
}

fn expose(i0: &FramePlane, k: &FramePlane, mut theta: impl FnMut() -> f64) -> LumaPlane {
    let data = i0
        .data()
        .iter()
        .zip(k.data())
        .map(|(&v, &kv)| (v + v * kv + theta()).round().clamp(0.0, 255.0) as u8)
        .collect();
    LumaPlane::from_vec(i0.width(), i0.height(), data).expect("dims match")
}

/// Renders `n_frames` of `scene` through the sensor at 25 fps.
pub fn simulate_video(scene: &SceneConfig, profile: &SensorProfile, n_frames: usize) -> Result<RawVideo> {
    let (width, height) = profile.k_true.dims();
    if !(scene.mean_intensity > 0.0 && scene.mean_intensity < 255.0) {
        return Err(Error::Config(format!("mean intensity {} outside (0, 255)", scene.mean_intensity)));
    }
    if scene.drift.0.abs() >= width as f64 || scene.drift.1.abs() >= height as f64 {
        return Err(Error::Config("drift must be smaller than the frame".into()));
    }
    let field = Scene::new(scene, width, height);
    let noise = (profile.theta_std > 0.0).then(|| Normal::new(0.0, profile.theta_std).expect("finite std"));
    let k = profile.k_true.plane();
    let frames: Vec<LumaPlane> = (0..n_frames)
        .into_par_iter()
        .map(|t| {
            let i0 = render(&field, scene, width, height, t);
            let mut r = rng(scene.seed, STREAM_FRAME_BASE + t as u64);
            expose(&i0, k, || noise.map_or(0.0, |n| n.sample(&mut r)))
        })
        .collect();
    RawVideo::new(width, height, DEFAULT_FPS, 1, frames)
}
