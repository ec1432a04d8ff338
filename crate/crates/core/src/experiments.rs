//! Experiment harnesses over synthetic cameras.
//!
//! Every experiment expands a parameter grid and a list of seeds into
//! independent jobs, runs them on a bounded worker pool and merges the results
//! by job key, so reports are identical whatever the thread count.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::codec::{encode, EncodeOutput, EncoderConfig, GopPattern, MbType, RateMode};
use crate::decoder::{decode, DecodeMode, DecodeOutput};
use crate::error::{Error, Result};
use crate::frame_io::RawVideo;
use crate::pipeline::{accumulate_decoded, fingerprint_decoded, frame_pces, mean, postprocess, Compensation};
use crate::prnu::{pce, Accumulator, DEFAULT_EXCLUSION_HALFWIDTH};
use crate::qp_comp::{WeightCurve, BASE_QP, DEFAULT_MASK_QP};
use crate::sensor::{simulate_video, SceneConfig, SceneContent, SensorProfile};
use crate::PCE_THRESHOLD;

/// Scene seeds are derived from the camera seed so each seed gives a distinct
/// camera and a distinct scene.
const SCENE_SEED_SALT: u64 = 0x5eed_5eed;

/// Achieved bitrate, mean QP and the four method PCEs of one encode.
type MethodCell = (f64, f64, [f64; 4]);

/// Initial QP of bitrate-targeted encodes.
pub const RATE_START_QP: u8 = 26;

/// Shared setup of all experiments.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub width: usize,
    pub height: usize,
    pub fps: u32,
    pub seconds: usize,
    #[serde(serialize_with = "as_string")]
    pub gop: GopPattern,
    pub search_range: usize,
    pub k_strength: f64,
    pub theta_std: f64,
    #[serde(serialize_with = "as_debug")]
    pub content: SceneContent,
    pub seeds: Vec<u64>,
    /// Worker threads for grid jobs; `None` uses the global pool.
    pub threads: Option<usize>,
}

fn as_string<S: serde::Serializer>(v: &GopPattern, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

fn as_debug<S: serde::Serializer>(v: &SceneContent, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{v:?}").to_lowercase())
}

impl Default for ExperimentConfig {
    /// 256x256 at 25 fps, 8 seconds, three seeds.
    fn default() -> Self {
        ExperimentConfig {
            width: 256,
            height: 256,
            fps: 25,
            seconds: 8,
            gop: GopPattern::default(),
            search_range: 8,
            k_strength: 0.01,
            theta_std: 2.0,
            content: SceneContent::Mixed,
            seeds: vec![1, 2, 3],
            threads: None,
        }
    }
}

impl ExperimentConfig {
    pub fn n_frames(&self) -> usize {
        self.seconds * self.fps as usize
    }

    fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.seconds == 0 || self.fps == 0 {
            return Err(Error::Config("duration and frame rate must be positive".into()));
        }
        Ok(())
    }

    pub fn camera(&self, seed: u64) -> Result<SensorProfile> {
        SensorProfile::generate(seed, self.width, self.height, self.k_strength, self.theta_std)
    }

    pub fn scene(&self, seed: u64) -> SceneConfig {
        SceneConfig {
            content: self.content,
            seed: seed ^ SCENE_SEED_SALT,
            ..SceneConfig::default()
        }
    }

    /// The raw video of camera `seed`.
    pub fn video(&self, seed: u64) -> Result<(SensorProfile, RawVideo)> {
        let camera = self.camera(seed)?;
        let mut video = simulate_video(&self.scene(seed), &camera, self.n_frames())?;
        video.fps_num = self.fps;
        video.fps_den = 1;
        Ok((camera, video))
    }

    fn encoder(&self, rate_mode: RateMode, qp: u8) -> EncoderConfig {
        EncoderConfig {
            gop: self.gop.clone(),
            rate_mode,
            qp,
            search_range: self.search_range,
            deblock_enabled: true,
        }
    }

    pub fn constant_qp(&self, qp: u8) -> EncoderConfig {
        self.encoder(RateMode::ConstantQp, qp)
    }

    pub fn target_bitrate(&self, bits_per_second: f64) -> EncoderConfig {
        self.encoder(RateMode::TargetBitrate(bits_per_second), RATE_START_QP)
    }

    /// Runs `f` over `jobs` on the configured pool, results in job order.
    fn run<J: Sync, T: Send>(&self, jobs: &[J], f: impl Fn(&J) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
        match self.threads {
            None => jobs.par_iter().map(&f).collect(),
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
                pool.install(|| jobs.par_iter().map(&f).collect())
            }
        }
    }

    /// Simulated camera and video for every seed, in seed order.
    fn videos(&self) -> Result<Vec<(SensorProfile, RawVideo)>> {
        self.run(&self.seeds, |&s| self.video(s))
    }
}

/// A CSV table with the configuration that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub seeds: Vec<u64>,
    pub config: serde_json::Value,
}

fn num(v: f64) -> String {
    format!("{v:.6}")
}

impl ExperimentReport {
    fn new(name: &str, columns: &[&str], config: &ExperimentConfig, extra: serde_json::Value) -> Self {
        let mut echo = serde_json::to_value(config).expect("config serializes");
        echo["grid"] = extra;
        ExperimentReport {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            seeds: config.seeds.clone(),
            config: echo,
        }
    }

    pub fn write_csv(&self, sink: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Writes `<dir>/<name>.csv` and the configuration echo `<dir>/<name>.json`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv_path = dir.join(format!("{}.csv", self.name));
        std::fs::write(&csv_path, self.to_csv_string()).map_err(|e| Error::io(&csv_path, e))?;
        let json_path = dir.join(format!("{}.json", self.name));
        let echo = serde_json::json!({ "experiment": self.name, "seeds": self.seeds, "config": self.config });
        std::fs::write(&json_path, serde_json::to_string_pretty(&echo)? + "\n").map_err(|e| Error::io(&json_path, e))?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSweepRow {
    pub qp: u8,
    pub mean_pce: f64,
    pub normalized_pce: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSweep {
    pub rows: Vec<QpSweepRow>,
    pub report: ExperimentReport,
}

/// Mean single-frame PCE of intervention-decoded frames against the true
/// factor, per QP, normalized by the value at QP 15.
pub fn exp_qp_sweep(config: &ExperimentConfig, qps: &[u8]) -> Result<QpSweep> {
    config.validate()?;
    if !qps.contains(&BASE_QP) {
        return Err(Error::Config(format!("qp grid must contain {BASE_QP}")));
    }
    let videos = config.videos()?;
    let jobs: Vec<(usize, u8)> = (0..videos.len()).flat_map(|v| qps.iter().map(move |&q| (v, q))).collect();
    let results = config.run(&jobs, |&(v, qp)| {
        let (camera, video) = &videos[v];
        let out = encode(video, &config.constant_qp(qp))?;
        let decoded = decode(&out.bitstream, DecodeMode::Intervention)?;
        Ok(mean(&frame_pces(&decoded.frames, &camera.k_true)?))
    })?;
    let cell = |qi: usize| mean(&(0..videos.len()).map(|v| results[v * qps.len() + qi]).collect::<Vec<_>>());
    let base = cell(qps.iter().position(|&q| q == BASE_QP).unwrap());
    let rows: Vec<QpSweepRow> = qps
        .iter()
        .enumerate()
        .map(|(qi, &qp)| {
            let m = cell(qi);
            QpSweepRow {
                qp,
                mean_pce: m,
                normalized_pce: if qp == BASE_QP { 1.0 } else { m / base },
            }
        })
        .collect();
    let mut report = ExperimentReport::new(
        "qp_sweep",
        &["qp", "mean_pce", "normalized_pce"],
        config,
        serde_json::json!({ "qp": qps }),
    );
    report.rows = rows
        .iter()
        .map(|r| vec![r.qp.to_string(), num(r.mean_pce), num(r.normalized_pce)])
        .collect();
    Ok(QpSweep { rows, report })
}

/// A weight curve calibrated from a QP sweep.
pub fn calibrated_curve(sweep: &QpSweep) -> Result<WeightCurve> {
    crate::qp_comp::curve_from_mean_pce(&sweep.rows.iter().map(|r| (r.qp, r.mean_pce)).collect::<Vec<_>>())
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodRow {
    pub target_bitrate: f64,
    pub achieved_bitrate: f64,
    pub mean_qp: f64,
    pub basic: f64,
    pub loop_comp: f64,
    pub masking: f64,
    pub weighting: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodCompare {
    pub rows: Vec<MethodRow>,
    pub report: ExperimentReport,
}

/// The four estimation methods compared by [`exp_method_compare`].
pub fn method_options(curve: &WeightCurve) -> [(DecodeMode, Compensation); 4] {
    [
        (DecodeMode::Filtered, Compensation::None),
        (DecodeMode::Intervention, Compensation::None),
        (
            DecodeMode::Intervention,
            Compensation::Mask {
                threshold_qp: DEFAULT_MASK_QP,
            },
        ),
        (DecodeMode::Intervention, Compensation::Weight(curve.clone())),
    ]
}

fn decode_both(out: &EncodeOutput) -> Result<(DecodeOutput, DecodeOutput)> {
    Ok((
        decode(&out.bitstream, DecodeMode::Filtered)?,
        decode(&out.bitstream, DecodeMode::Intervention)?,
    ))
}

/// Whole-video fingerprint PCE per bitrate for basic estimation, loop-filter
/// compensation, binary masking and weighting with `curve`.
pub fn exp_method_compare(config: &ExperimentConfig, bitrates: &[f64], curve: &WeightCurve) -> Result<MethodCompare> {
    config.validate()?;
    let videos = config.videos()?;
    let n = config.n_frames();
    let jobs: Vec<(usize, f64)> = (0..videos.len()).flat_map(|v| bitrates.iter().map(move |&b| (v, b))).collect();
    let options = method_options(curve);
    let results = config.run(&jobs, |&(v, rate)| {
        let (camera, video) = &videos[v];
        let out = encode(video, &config.target_bitrate(rate))?;
        let (filtered, intervention) = decode_both(&out)?;
        let mut pces = [0.0; 4];
        for (slot, (mode, comp)) in pces.iter_mut().zip(&options) {
            let decoded = if *mode == DecodeMode::Filtered { &filtered } else { &intervention };
            let k = fingerprint_decoded(decoded, comp, 0..n)?;
            *slot = pce(&k, &camera.k_true, DEFAULT_EXCLUSION_HALFWIDTH)?.pce;
        }
        Ok((out.bitrate(0..n), out.mean_qp(), pces))
    })?;
    let s = videos.len();
    let rows: Vec<MethodRow> = bitrates
        .iter()
        .enumerate()
        .map(|(bi, &rate)| {
            let cell: Vec<&MethodCell> = (0..s).map(|v| &results[v * bitrates.len() + bi]).collect();
            let avg = |f: &dyn Fn(&MethodCell) -> f64| mean(&cell.iter().map(|c| f(c)).collect::<Vec<_>>());
            MethodRow {
                target_bitrate: rate,
                achieved_bitrate: avg(&|c| c.0),
                mean_qp: avg(&|c| c.1),
                basic: avg(&|c| c.2[0]),
                loop_comp: avg(&|c| c.2[1]),
                masking: avg(&|c| c.2[2]),
                weighting: avg(&|c| c.2[3]),
            }
        })
        .collect();
    let mut report = ExperimentReport::new(
        "method_compare",
        &[
            "bitrate",
            "achieved_bitrate",
            "mean_qp",
            "basic",
            "loop_comp",
            "masking",
            "weighting",
        ],
        config,
        serde_json::json!({ "bitrate": bitrates, "curve": curve.anchors(), "cutoff_qp": curve.cutoff_qp() }),
    );
    report.rows = rows
        .iter()
        .map(|r| {
            vec![
                num(r.target_bitrate),
                num(r.achieved_bitrate),
                num(r.mean_qp),
                num(r.basic),
                num(r.loop_comp),
                num(r.masking),
                num(r.weighting),
            ]
        })
        .collect();
    Ok(MethodCompare { rows, report })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameTypeRow {
    pub qp: u8,
    pub frame_type: MbType,
    pub mean_pce: f64,
    pub normalized_pce: f64,
    /// Mean pre-quantization residual energy per macroblock.
    pub mean_residual_energy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameTypeStudy {
    pub rows: Vec<FrameTypeRow>,
    pub report: ExperimentReport,
}

const FRAME_TYPES: [MbType; 3] = [MbType::I, MbType::P, MbType::B];

/// Per QP and frame type: mean single-frame PCE normalized by the I-frame
/// mean, and mean macroblock residual energy.
pub fn exp_frame_type(config: &ExperimentConfig, qps: &[u8]) -> Result<FrameTypeStudy> {
    config.validate()?;
    if FRAME_TYPES.iter().any(|&t| !config.gop.contains(t)) {
        return Err(Error::Config(format!("gop {} lacks a frame type", config.gop)));
    }
    let videos = config.videos()?;
    let jobs: Vec<(usize, u8)> = (0..videos.len()).flat_map(|v| qps.iter().map(move |&q| (v, q))).collect();
    let results = config.run(&jobs, |&(v, qp)| {
        let (camera, video) = &videos[v];
        let out = encode(video, &config.constant_qp(qp))?;
        let decoded = decode(&out.bitstream, DecodeMode::Intervention)?;
        let pces = frame_pces(&decoded.frames, &camera.k_true)?;
        let mut per_type = [(0.0, 0.0); 3];
        for (slot, &t) in per_type.iter_mut().zip(&FRAME_TYPES) {
            let p: Vec<f64> = pces
                .iter()
                .zip(&decoded.frame_types)
                .filter(|(_, &ft)| ft == t)
                .map(|(p, _)| *p)
                .collect();
            let e: Vec<f64> = out.meta.iter().filter(|m| m.mb_type == t).map(|m| m.residual_energy).collect();
            *slot = (mean(&p), mean(&e));
        }
        Ok(per_type)
    })?;
    let mut rows = Vec::new();
    for (qi, &qp) in qps.iter().enumerate() {
        let cells: Vec<&[(f64, f64); 3]> = (0..videos.len()).map(|v| &results[v * qps.len() + qi]).collect();
        let type_mean = |ti: usize, f: fn(&(f64, f64)) -> f64| mean(&cells.iter().map(|c| f(&c[ti])).collect::<Vec<_>>());
        let i_pce = type_mean(0, |c| c.0);
        for (ti, &t) in FRAME_TYPES.iter().enumerate() {
            let m = type_mean(ti, |c| c.0);
            rows.push(FrameTypeRow {
                qp,
                frame_type: t,
                mean_pce: m,
                normalized_pce: if t == MbType::I { 1.0 } else { m / i_pce },
                mean_residual_energy: type_mean(ti, |c| c.1),
            });
        }
    }
    let mut report = ExperimentReport::new(
        "frame_type",
        &["qp", "type", "normalized_pce", "mean_pce", "mean_residual_energy"],
        config,
        serde_json::json!({ "qp": qps }),
    );
    report.rows = rows
        .iter()
        .map(|r| {
            vec![
                r.qp.to_string(),
                r.frame_type.to_string(),
                num(r.normalized_pce),
                num(r.mean_pce),
                num(r.mean_residual_energy),
            ]
        })
        .collect();
    Ok(FrameTypeStudy { rows, report })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DurationMethod {
    Basic,
    LoopComp,
    Weighting,
}

impl DurationMethod {
    pub const ALL: [DurationMethod; 3] = [DurationMethod::Basic, DurationMethod::LoopComp, DurationMethod::Weighting];

    pub fn name(self) -> &'static str {
        match self {
            DurationMethod::Basic => "basic",
            DurationMethod::LoopComp => "loop_comp",
            DurationMethod::Weighting => "weighting",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DurationRow {
    pub target_bitrate: f64,
    pub method: DurationMethod,
    /// Per seed: first whole second reaching the threshold, `None` if the
    /// cap was reached first.
    pub seconds: Vec<Option<usize>>,
    /// Mean over seeds, censored seeds counted at the cap.
    pub mean_seconds: f64,
    pub censored: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MinDuration {
    pub rows: Vec<DurationRow>,
    pub report: ExperimentReport,
}

/// Accumulates one second of frames at a time and records the first whole
/// second whose fingerprint reaches `threshold` PCE against the true factor.
/// The video length is `max_seconds`.
pub fn exp_min_duration(
    config: &ExperimentConfig,
    bitrates: &[f64],
    curve: &WeightCurve,
    threshold: f64,
    max_seconds: usize,
) -> Result<MinDuration> {
    let config = ExperimentConfig {
        seconds: max_seconds,
        ..config.clone()
    };
    config.validate()?;
    let videos = config.videos()?;
    let fps = config.fps as usize;
    let jobs: Vec<(usize, f64)> = (0..videos.len()).flat_map(|v| bitrates.iter().map(move |&b| (v, b))).collect();
    let results = config.run(&jobs, |&(v, rate)| {
        let (camera, video) = &videos[v];
        let out = encode(video, &config.target_bitrate(rate))?;
        let (filtered, intervention) = decode_both(&out)?;
        let mut found = [None; 3];
        for (slot, method) in found.iter_mut().zip(DurationMethod::ALL) {
            let (decoded, comp) = match method {
                DurationMethod::Basic => (&filtered, Compensation::None),
                DurationMethod::LoopComp => (&intervention, Compensation::None),
                DurationMethod::Weighting => (&intervention, Compensation::Weight(curve.clone())),
            };
            let mut acc = Accumulator::new(config.width, config.height);
            for s in 1..=max_seconds {
                accumulate_decoded(&mut acc, decoded, &comp, (s - 1) * fps..s * fps)?;
                let k = postprocess(&acc.finalize()?);
                if pce(&k, &camera.k_true, DEFAULT_EXCLUSION_HALFWIDTH)?.pce >= threshold {
                    *slot = Some(s);
                    break;
                }
            }
        }
        Ok(found)
    })?;
    let mut rows = Vec::new();
    for (bi, &rate) in bitrates.iter().enumerate() {
        for (mi, method) in DurationMethod::ALL.into_iter().enumerate() {
            let seconds: Vec<Option<usize>> = (0..videos.len()).map(|v| results[v * bitrates.len() + bi][mi]).collect();
            let capped: Vec<f64> = seconds.iter().map(|s| s.unwrap_or(max_seconds) as f64).collect();
            rows.push(DurationRow {
                target_bitrate: rate,
                method,
                censored: seconds.iter().filter(|s| s.is_none()).count(),
                mean_seconds: mean(&capped),
                seconds,
            });
        }
    }
    let mut report = ExperimentReport::new(
        "min_duration",
        &["bitrate", "method", "mean_seconds", "censored", "per_seed_seconds"],
        &config,
        serde_json::json!({ "bitrate": bitrates, "threshold": threshold, "max_seconds": max_seconds }),
    );
    report.rows = rows
        .iter()
        .map(|r| {
            let per_seed: Vec<String> = r
                .seconds
                .iter()
                .map(|s| s.map_or(format!(">{max_seconds}"), |v| v.to_string()))
                .collect();
            vec![
                num(r.target_bitrate),
                r.method.name().to_string(),
                num(r.mean_seconds),
                r.censored.to_string(),
                per_seed.join(";"),
            ]
        })
        .collect();
    Ok(MinDuration { rows, report })
}

/// Default PCE threshold for [`exp_min_duration`].
pub const DURATION_THRESHOLD: f64 = PCE_THRESHOLD;
