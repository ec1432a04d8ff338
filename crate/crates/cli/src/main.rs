//! `vidprnu` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 no match in verify mode.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use vidprnu::codec::{encode, Bitstream, EncoderConfig, GopPattern, RateMode};
use vidprnu::decoder::{decode, DecodeMode, DecodeOutput};
use vidprnu::experiments::{
    exp_frame_type, exp_method_compare, exp_min_duration, exp_qp_sweep, ExperimentConfig, ExperimentReport, RATE_START_QP,
};
use vidprnu::frame_io::{
    export_mb_metadata, read_pattern, read_raw_video, write_pattern, write_raw_video, CreationParams, FingerprintRecord, FingerprintStore,
    RawVideo,
};
use vidprnu::pipeline::{fingerprint_decoded, fingerprint_video, rank_gallery, Compensation};
use vidprnu::qp_comp::{calibrate_curve, WeightCurve, DEFAULT_MASK_QP};
use vidprnu::sensor::{simulate_video, SceneConfig, SceneContent, SensorProfile, DEFAULT_K_STRENGTH, DEFAULT_THETA_STD};
use vidprnu::{Error, PrnuPattern, PCE_THRESHOLD};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NO_MATCH: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "vidprnu", version, about = "PRNU camera fingerprints from block-coded video")]
struct Cli {
    /// Base random seed.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file, or directory for experiment reports.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a camera recording a moving scene.
    Simulate(SimulateArgs),
    /// Encode a raw video.
    Encode(EncodeArgs),
    /// Decode a bitstream to a raw video.
    Decode(DecodeArgs),
    /// Estimate a fingerprint from a bitstream or raw video.
    Fingerprint(FingerprintArgs),
    /// Match a video against stored fingerprints.
    Match(MatchArgs),
    /// Derive a weight curve from a reference fingerprint and a raw video.
    Calibrate(CalibrateArgs),
    /// Write per-macroblock metadata of a bitstream as CSV.
    ExportMeta(ExportMetaArgs),
    /// Mean single-frame PCE against QP.
    ExpQpSweep(QpSweepArgs),
    /// Whole-video PCE per bitrate for the four estimation methods.
    ExpMethodCompare(MethodCompareArgs),
    /// Single-frame PCE and residual energy per frame type.
    ExpFrameType(QpSweepArgs),
    /// Seconds of video needed to reach the match threshold.
    ExpMinDuration(MinDurationArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Content {
    Smooth,
    Texture,
    Mixed,
}

impl From<Content> for SceneContent {
    fn from(c: Content) -> Self {
        match c {
            Content::Smooth => SceneContent::Smooth,
            Content::Texture => SceneContent::Texture,
            Content::Mixed => SceneContent::Mixed,
        }
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, default_value_t = 256)]
    width: usize,
    #[arg(long, default_value_t = 256)]
    height: usize,
    #[arg(long, default_value_t = 100)]
    frames: usize,
    #[arg(long, default_value_t = 25)]
    fps: u32,
    #[arg(long, value_enum, default_value_t = Content::Mixed)]
    content: Content,
    #[arg(long, default_value_t = DEFAULT_K_STRENGTH)]
    k_strength: f64,
    #[arg(long, default_value_t = DEFAULT_THETA_STD)]
    theta_std: f64,
    /// Scene seed; defaults to the camera seed.
    #[arg(long)]
    scene_seed: Option<u64>,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    drift_x: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    drift_y: f64,
    /// Ground-truth factor output; defaults to the video path with a `.prnk` extension.
    #[arg(long)]
    pattern: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CodecArgs {
    /// Constant QP, or the starting QP with `--bitrate`.
    #[arg(long)]
    qp: Option<u8>,
    /// Target bitrate in bits per second.
    #[arg(long)]
    bitrate: Option<f64>,
    #[arg(long, default_value = "IBP")]
    gop: String,
    #[arg(long, default_value_t = 8)]
    search_range: usize,
    #[arg(long)]
    no_deblock: bool,
}

impl CodecArgs {
    fn config(&self) -> Result<EncoderConfig, Error> {
        let (rate_mode, qp) = match self.bitrate {
            Some(rate) => (RateMode::TargetBitrate(rate), self.qp.unwrap_or(RATE_START_QP)),
            None => (RateMode::ConstantQp, self.qp.unwrap_or(26)),
        };
        let config = EncoderConfig {
            gop: self.gop.parse()?,
            rate_mode,
            qp,
            search_range: self.search_range,
            deblock_enabled: !self.no_deblock,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args, Debug)]
struct EncodeArgs {
    input: PathBuf,
    #[command(flatten)]
    codec: CodecArgs,
    /// Also write encoder-side macroblock metadata as CSV.
    #[arg(long)]
    meta: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    input: PathBuf,
    /// Return frames before the loop filter.
    #[arg(long)]
    intervention: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum CompensationKind {
    None,
    Mask,
    Weight,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// Estimate from frames before the loop filter.
    #[arg(long)]
    intervention: bool,
    #[arg(long, value_enum, default_value_t = CompensationKind::None)]
    compensation: CompensationKind,
    /// Weight curve CSV; the built-in curve when omitted.
    #[arg(long)]
    curve: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MASK_QP)]
    mask_qp: u8,
    /// Input is an uncompressed raw video rather than a bitstream.
    #[arg(long)]
    raw: bool,
}

impl EstimateArgs {
    fn compensation(&self) -> Result<Compensation, Error> {
        Ok(match self.compensation {
            CompensationKind::None => Compensation::None,
            CompensationKind::Mask => Compensation::Mask {
                threshold_qp: self.mask_qp,
            },
            CompensationKind::Weight => Compensation::Weight(match &self.curve {
                Some(path) if !path.is_file() => return Err(Error::Config(format!("weight curve {} does not exist", path.display()))),
                Some(path) => WeightCurve::load(path)?,
                None => WeightCurve::default_curve(),
            }),
        })
    }

    fn method(&self) -> String {
        let mode = if self.raw {
            "raw"
        } else if self.intervention {
            "intervention"
        } else {
            "filtered"
        };
        format!("{mode}+{:?}", self.compensation).to_lowercase()
    }

    /// Fingerprint of `input` and the number of frames it used.
    fn estimate(&self, input: &Path) -> Result<(PrnuPattern, usize), Error> {
        if self.raw {
            let video = read_raw_video(input)?;
            return Ok((fingerprint_video(&video)?, video.frames.len()));
        }
        let compensation = self.compensation()?;
        let decoded = decode(&Bitstream::read_file(input)?, decode_mode(self.intervention))?;
        let n = decoded.frames.len();
        Ok((fingerprint_decoded(&decoded, &compensation, 0..n)?, n))
    }
}

#[derive(Args, Debug)]
struct FingerprintArgs {
    input: PathBuf,
    #[command(flatten)]
    estimate: EstimateArgs,
    /// Also register the fingerprint in this store.
    #[arg(long, requires = "camera_id")]
    store: Option<PathBuf>,
    #[arg(long)]
    camera_id: Option<String>,
}

#[derive(Args, Debug)]
struct MatchArgs {
    input: PathBuf,
    #[arg(long)]
    store: PathBuf,
    /// Verify against one camera instead of ranking the whole gallery.
    #[arg(long)]
    camera_id: Option<String>,
    #[arg(long, default_value_t = PCE_THRESHOLD)]
    threshold: f64,
    #[command(flatten)]
    estimate: EstimateArgs,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    /// Raw video from the reference camera.
    input: PathBuf,
    /// Reference fingerprint of the camera.
    #[arg(long)]
    reference: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "5,10,15,20,25,30,35")]
    qps: Vec<u8>,
    #[command(flatten)]
    codec: CodecArgs,
}

#[derive(Args, Debug)]
struct ExportMetaArgs {
    input: PathBuf,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[arg(long, default_value_t = 256)]
    width: usize,
    #[arg(long, default_value_t = 256)]
    height: usize,
    #[arg(long, default_value_t = 25)]
    fps: u32,
    #[arg(long, default_value_t = 8)]
    seconds: usize,
    /// Number of seeds, counting up from `--seed`.
    #[arg(long, default_value_t = 3)]
    seeds: u64,
    #[arg(long, default_value = "IBP")]
    gop: String,
    #[arg(long, default_value_t = 8)]
    search_range: usize,
    #[arg(long, value_enum, default_value_t = Content::Mixed)]
    content: Content,
    #[arg(long, default_value_t = 0.01)]
    k_strength: f64,
    #[arg(long, default_value_t = DEFAULT_THETA_STD)]
    theta_std: f64,
}

impl ExperimentArgs {
    fn config(&self, seed: u64, threads: Option<usize>) -> Result<ExperimentConfig, Error> {
        Ok(ExperimentConfig {
            width: self.width,
            height: self.height,
            fps: self.fps,
            seconds: self.seconds,
            gop: self.gop.parse::<GopPattern>()?,
            search_range: self.search_range,
            k_strength: self.k_strength,
            theta_std: self.theta_std,
            content: self.content.into(),
            seeds: (0..self.seeds).map(|i| seed + i).collect(),
            threads,
        })
    }
}

#[derive(Args, Debug)]
struct QpSweepArgs {
    #[command(flatten)]
    common: ExperimentArgs,
    #[arg(long, value_delimiter = ',', default_value = "5,10,15,20,25,30,35")]
    qps: Vec<u8>,
}

#[derive(Args, Debug)]
struct MethodCompareArgs {
    #[command(flatten)]
    common: ExperimentArgs,
    #[arg(long, value_delimiter = ',', default_value = "150000,300000,600000,2000000")]
    bitrates: Vec<f64>,
    /// Weight curve CSV; the built-in curve when omitted.
    #[arg(long)]
    curve: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MinDurationArgs {
    #[command(flatten)]
    common: ExperimentArgs,
    #[arg(long, value_delimiter = ',', default_value = "40000,60000,100000,300000")]
    bitrates: Vec<f64>,
    #[arg(long)]
    curve: Option<PathBuf>,
    #[arg(long, default_value_t = PCE_THRESHOLD)]
    threshold: f64,
    #[arg(long, default_value_t = 8)]
    max_seconds: usize,
}

fn load_curve(path: &Option<PathBuf>) -> Result<WeightCurve, Error> {
    path.as_ref().map_or_else(|| Ok(WeightCurve::default_curve()), WeightCurve::load)
}

fn required_out(out: &Option<PathBuf>) -> Result<&Path, Error> {
    out.as_deref().ok_or_else(|| Error::Config("--out is required".into()))
}

/// Prints a report and, with `--out`, saves it into that directory.
fn emit(report: &ExperimentReport, out: &Option<PathBuf>) -> Result<(), Error> {
    print!("{}", report.to_csv_string());
    if let Some(dir) = out {
        report.save(dir)?;
    }
    Ok(())
}

fn decode_mode(intervention: bool) -> DecodeMode {
    if intervention {
        DecodeMode::Intervention
    } else {
        DecodeMode::Filtered
    }
}

fn simulate(args: &SimulateArgs, seed: u64, out: &Path) -> Result<(), Error> {
    let profile = SensorProfile::generate(seed, args.width, args.height, args.k_strength, args.theta_std)?;
    let scene = SceneConfig {
        content: args.content.into(),
        drift: (args.drift_x, args.drift_y),
        seed: args.scene_seed.unwrap_or(seed),
        ..SceneConfig::default()
    };
    let mut video = simulate_video(&scene, &profile, args.frames)?;
    video.fps_num = args.fps;
    video.fps_den = 1;
    video.validate()?;
    write_raw_video(&video, out)?;
    let pattern_path = args.pattern.clone().unwrap_or_else(|| out.with_extension("prnk"));
    write_pattern(&profile.k_true, pattern_path)
}

/// Returns `Ok(false)` when verification against a single camera fails.
fn run(cli: &Cli) -> Result<bool, Error> {
    match &cli.command {
        Command::Simulate(args) => simulate(args, cli.seed, required_out(&cli.out)?)?,
        Command::Encode(args) => {
            let video: RawVideo = read_raw_video(&args.input)?;
            let out = encode(&video, &args.codec.config()?)?;
            out.bitstream.write_file(required_out(&cli.out)?)?;
            if let Some(meta) = &args.meta {
                export_mb_metadata(&out.meta, meta)?;
            }
            eprintln!(
                "{} frames, {:.0} bit/s, mean qp {:.2}",
                out.frame_qps.len(),
                out.bitrate(0..out.frame_qps.len()),
                out.mean_qp()
            );
        }
        Command::Decode(args) => {
            let stream = Bitstream::read_file(&args.input)?;
            let decoded = decode(&stream, decode_mode(args.intervention))?;
            let video = RawVideo::new(stream.width, stream.height, stream.fps_num, stream.fps_den, decoded.frames)?;
            write_raw_video(&video, required_out(&cli.out)?)?;
        }
        Command::Fingerprint(args) => {
            let out = required_out(&cli.out)?;
            let (pattern, n_frames) = args.estimate.estimate(&args.input)?;
            write_pattern(&pattern, out)?;
            if let (Some(store), Some(id)) = (&args.store, &args.camera_id) {
                FingerprintStore::open(store)?.store(&FingerprintRecord {
                    camera_id: id.clone(),
                    pattern,
                    source_descriptor: args.input.display().to_string(),
                    creation_params: CreationParams {
                        method: args.estimate.method(),
                        n_frames,
                    },
                })?;
            }
        }
        Command::Match(args) => {
            let store = FingerprintStore::open(&args.store)?;
            let (test, _) = args.estimate.estimate(&args.input)?;
            let ranked = rank_gallery(&test, &store, args.camera_id.as_deref(), args.threshold)?;
            println!("camera_id,pce,peak_corr,match");
            for m in &ranked {
                println!("{},{:.6},{:.6e},{}", m.camera_id, m.result.pce, m.result.peak_corr, m.is_match);
            }
            if let Some(out) = &cli.out {
                let text: String = ranked
                    .iter()
                    .map(|m| format!("{},{:.6},{}\n", m.camera_id, m.result.pce, m.is_match))
                    .collect();
                std::fs::write(out, format!("camera_id,pce,match\n{text}")).map_err(|source| Error::Io { path: out.clone(), source })?;
            }
            match ranked.iter().find(|m| m.is_match) {
                Some(best) => eprintln!("match: {} (pce {:.1})", best.camera_id, best.result.pce),
                None => {
                    eprintln!("no match at threshold {}", args.threshold);
                    if args.camera_id.is_some() {
                        return Ok(false);
                    }
                }
            }
        }
        Command::Calibrate(args) => {
            let reference = read_pattern(&args.reference)?;
            let video = read_raw_video(&args.input)?;
            let base = args.codec.config()?;
            let mut decodes = Vec::with_capacity(args.qps.len());
            for &qp in &args.qps {
                let config = EncoderConfig {
                    rate_mode: RateMode::ConstantQp,
                    qp,
                    ..base.clone()
                };
                let out = encode(&video, &config)?;
                decodes.push((qp, decode(&out.bitstream, DecodeMode::Intervention)?));
            }
            let pairs: Vec<(u8, &DecodeOutput)> = decodes.iter().map(|(q, d)| (*q, d)).collect();
            let curve = calibrate_curve(&reference, &pairs)?;
            match &cli.out {
                Some(path) => curve.save(path)?,
                None => curve.write_csv(std::io::stdout().lock())?,
            }
        }
        Command::ExportMeta(args) => {
            let decoded = decode(&Bitstream::read_file(&args.input)?, DecodeMode::Filtered)?;
            export_mb_metadata(&decoded.meta, required_out(&cli.out)?)?;
        }
        Command::ExpQpSweep(args) => {
            let config = args.common.config(cli.seed, cli.threads)?;
            emit(&exp_qp_sweep(&config, &args.qps)?.report, &cli.out)?;
        }
        Command::ExpMethodCompare(args) => {
            let config = args.common.config(cli.seed, cli.threads)?;
            emit(
                &exp_method_compare(&config, &args.bitrates, &load_curve(&args.curve)?)?.report,
                &cli.out,
            )?;
        }
        Command::ExpFrameType(args) => {
            let config = args.common.config(cli.seed, cli.threads)?;
            emit(&exp_frame_type(&config, &args.qps)?.report, &cli.out)?;
        }
        Command::ExpMinDuration(args) => {
            let config = args.common.config(cli.seed, cli.threads)?;
            let d = exp_min_duration(&config, &args.bitrates, &load_curve(&args.curve)?, args.threshold, args.max_seconds)?;
            emit(&d.report, &cli.out)?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_NO_MATCH),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if matches!(e, Error::Config(_)) { EXIT_USAGE } else { EXIT_DATA })
        }
    }
}
