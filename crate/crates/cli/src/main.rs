use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use imuphys::calibration::{calibrate, CalibrationConfig, SENSOR_COUNT};
use imuphys::io::{
    calibration_to_text, frames_to_text, imu_log_from_text, imu_log_to_text, load_motion, motion_to_text, read_file, tracked_header,
    tracked_line, write_file, FrameReader,
};
use imuphys::math::{rot_x, rot_z};
use imuphys::metrics::{evaluate, Alignment, DRIFT_REFERENCE_M};
use imuphys::pipeline::{run_pipeline_threaded, PipelineConfig};
use imuphys::synth::{corrupt_imu, default_attachments, scenario, synthesize_estimator_frames, synthesize_imu, ImuNoise, NoiseSpec};
use imuphys::synth::MotionSequence;
use imuphys::SkeletonModel;
use log::info;
use nalgebra::Vector3;

#[derive(Parser)]
#[command(name = "imuphys", version, about = "Physics-based tracking from sparse IMU estimates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario: ground truth, estimator frames and an IMU log.
    Synth(SynthArgs),
    /// Calibrate the sensor rig from a stand / step / stand IMU log.
    Calibrate(CalibrateArgs),
    /// Track estimator frames with the physics pipeline.
    Track(TrackArgs),
    /// Compare a predicted motion with ground truth.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Scenario name.
    #[arg(long)]
    scenario: String,
    /// Estimator noise, e.g. `angle=1,vel=0.05,seed=3`.
    #[arg(long, default_value = "ideal")]
    noise: String,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Accelerometer noise of the IMU log [m/s²].
    #[arg(long, default_value_t = 0.0)]
    acc_sigma: f64,
    /// Per-sensor heading drift of the IMU log [deg], six comma separated values.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    yaw_drift: Option<Vec<f64>>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Motion file whose first frame is the standing pose; the bundled stance otherwise.
    #[arg(long)]
    pose: Option<PathBuf>,
}

#[derive(Args)]
struct TrackArgs {
    /// TOML pipeline configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    skeleton: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    ground_height: Option<f64>,
    #[arg(long)]
    no_refine_gravity: bool,
    /// Frame period [s].
    #[arg(long)]
    dt: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// `local` or `global`.
    #[arg(long, default_value = "local")]
    alignment: String,
    /// Report path; printed to stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Drift curve as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

/// Inertial frame used for synthetic IMU logs: z up, yawed away from the model frame.
fn synthetic_r_im() -> nalgebra::Matrix3<f64> {
    rot_z(0.7) * rot_x(std::f64::consts::FRAC_PI_2)
}

fn g_model() -> Vector3<f64> {
    Vector3::new(0.0, -9.8, 0.0)
}

fn synth(args: &SynthArgs) -> Result<()> {
    let model = SkeletonModel::humanoid();
    let sc = scenario(&model, &args.scenario)?;
    let noise = NoiseSpec::parse(&args.noise)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| imuphys::Error::io(&args.out_dir, e))?;
    let base = args.out_dir.join(&sc.name);

    let frames = synthesize_estimator_frames(&model, &sc.motion, &g_model().normalize(), &noise)?;
    let attachments = default_attachments(&model)?;
    let r_im = synthetic_r_im();
    let mut imu = synthesize_imu(&model, &sc.motion, &attachments, &r_im, &g_model())?;
    if args.acc_sigma > 0.0 || args.yaw_drift.is_some() {
        let drift = args.yaw_drift.clone().unwrap_or_else(|| vec![0.0; SENSOR_COUNT]);
        let Ok(yaw_drift_deg) = <[f64; SENSOR_COUNT]>::try_from(drift.as_slice()) else {
            bail!(imuphys::Error::Config(format!("--yaw-drift needs {SENSOR_COUNT} values, got {}", drift.len())));
        };
        let imu_noise = ImuNoise {
            acc_sigma: args.acc_sigma,
            yaw_drift_deg,
            seed: noise.seed,
        };
        imu = corrupt_imu(&imu, &(r_im * g_model()), &imu_noise)?;
    }

    let outputs = [
        (base.with_extension("truth"), motion_to_text(&sc.motion)),
        (base.with_extension("frames"), frames_to_text(&frames, model.joint_count())),
        (base.with_extension("imu"), imu_log_to_text(&imu)),
    ];
    for (path, text) in &outputs {
        write_file(path, text)?;
        println!("{}", path.display());
    }
    info!("{}: {} frames at {} Hz", sc.name, sc.motion.len(), sc.motion.frame_rate);
    Ok(())
}

fn standing_pose(model: &SkeletonModel, pose: Option<&Path>) -> Result<MotionSequence> {
    let motion = match pose {
        Some(p) => load_motion(p)?,
        None => scenario(model, "stand")?.motion,
    };
    if motion.is_empty() {
        bail!(imuphys::Error::Config("standing pose file has no frames".into()));
    }
    motion.validate(model)?;
    Ok(motion)
}

fn calibrate_cmd(args: &CalibrateArgs) -> Result<()> {
    let model = SkeletonModel::humanoid();
    let log = imu_log_from_text(&read_file(&args.input)?, &args.input)?;
    let stand = standing_pose(&model, args.pose.as_deref())?;
    let first = model.pose_from_parts(&stand.root[0], &stand.angles[0])?;
    let attachments = default_attachments(&model)?;
    let config = CalibrationConfig {
        g_inertial: synthetic_r_im() * g_model(),
        r_mb: std::array::from_fn(|i| first.rotations[attachments[i].joint]),
        ..CalibrationConfig::default()
    };
    let result = calibrate(&log, &config)?;
    info!(
        "step samples {:?}, pose return {:.2?} deg",
        result.segmentation.step, result.pose_return_deg
    );
    write_file(&args.output, &calibration_to_text(&result))?;
    Ok(())
}

fn track_config(args: &TrackArgs) -> Result<PipelineConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = read_file(path)?;
            toml::from_str::<PipelineConfig>(&text)
                .map_err(|e| imuphys::Error::Config(format!("{}: {e}", path.display())))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(p) = &args.input {
        config.input = Some(p.clone());
    }
    if let Some(p) = &args.output {
        config.output = Some(p.clone());
    }
    if let Some(p) = &args.skeleton {
        config.skeleton = Some(p.clone());
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(g) = args.ground_height {
        config.ground_height = Some(g);
    }
    if args.no_refine_gravity {
        config.refine_gravity = false;
    }
    if let Some(dt) = args.dt {
        config.tracking.dt = dt;
    }
    Ok(config)
}

fn track(args: &TrackArgs) -> Result<()> {
    let config = track_config(args)?;
    let (Some(input), Some(output)) = (config.input.clone(), config.output.clone()) else {
        bail!(imuphys::Error::Config("track needs an input and an output path".into()));
    };
    let reader = FrameReader::open(&input)?;
    config.validate()?;
    let model = config.dynamics_model()?;
    if reader.joints() != model.skeleton.joint_count() {
        bail!(imuphys::Error::Config(format!(
            "{} has {} joints, the skeleton has {}",
            input.display(),
            reader.joints(),
            model.skeleton.joint_count()
        )));
    }
    let file = File::create(&output).map_err(|e| imuphys::Error::io(&output, e))?;
    let mut out = BufWriter::new(file);
    let io_err = |e| imuphys::Error::io(&output, e);
    out.write_all(tracked_header(model.dof(), 1.0 / config.tracking.dt).as_bytes()).map_err(io_err)?;
    let timing = run_pipeline_threaded(model, &config, reader, |o| {
        out.write_all(tracked_line(o).as_bytes()).map_err(io_err)
    })?;
    out.flush().map_err(io_err)?;
    info!(
        "{} frames, {} dropped, mean {:.3} ms, max {:.3} ms per frame",
        timing.frames,
        timing.dropped,
        timing.mean_ms(),
        timing.max_ms()
    );
    if timing.dropped > 0 {
        log::warn!("{} frames dropped after solver failures", timing.dropped);
    }
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<()> {
    let model = SkeletonModel::humanoid();
    let alignment: Alignment = args.alignment.parse()?;
    let pred = load_motion(&args.pred)?;
    let truth = load_motion(&args.truth)?;
    let report = evaluate(&model, &pred, &truth, alignment, DRIFT_REFERENCE_M)?;
    match &args.report {
        Some(path) => write_file(path, &report.to_text())?,
        None => print!("{}", report.to_text()),
    }
    if let Some(path) = &args.csv {
        write_file(path, &report.drift_csv())?;
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use imuphys::Error as E;
    match err.downcast_ref::<E>() {
        Some(E::Config(_)) => 1,
        Some(E::Io { .. } | E::Parse { .. }) => 2,
        Some(E::Dimension { .. } | E::NoConvergence { .. } | E::Numerical(_) | E::Calibration(_)) => 3,
        None => 1,
    }
}

/// Error chain on one line, skipping causes already quoted by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !parts.last().is_some_and(|p| p.contains(&text)) {
            parts.push(text);
        }
    }
    parts.join(": ")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("IMUPHYS_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Synth(a) => synth(a).context("synth"),
        Command::Calibrate(a) => calibrate_cmd(a).context("calibrate"),
        Command::Track(a) => track(a).context("track"),
        Command::Eval(a) => eval(a).context("eval"),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
