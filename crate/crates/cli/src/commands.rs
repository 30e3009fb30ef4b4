use std::fmt;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, ValueEnum};
use serde::Serialize;

use tvf::autodiff::gradcheck::{grad_check_random, grad_target, DEFAULT_FLOOR, DEFAULT_STEP, DEFAULT_TOLERANCE, GRAD_TARGETS};
use tvf::backbone::{control_mode, init_weights, BackboneWeights, Checkpoint, DEFAULT_INIT_NOISE};
use tvf::bench::{bench_csv, benchmark_paths, BenchConfig};
use tvf::engine::{engine, process_with};
use tvf::filter::{frame_count, AudioBuffer, BandPlan, ParamTrajectory};
use tvf::io::stream::{stream_all, BackboneController, TrajectoryController};
use tvf::io::{read_trajectory, read_wav, write_trajectory, write_wav, BitDepth, ResponseGrid};
use tvf::sample::Sample;
use tvf::training::metrics::{lsd, mean_squared_error, si_sdr};
use tvf::training::{data_source, history_csv, predict_trajectory, train_observed, TrainConfig};
use tvf::TvfError;

use super::{Command, EXIT_DATA, EXIT_NUMERICAL, EXIT_USAGE};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<TvfError> for CliError {
    fn from(e: TvfError) -> Self {
        match e {
            TvfError::NonFinite { .. } => CliError::Numerical(e.to_string()),
            TvfError::UnknownName { .. } => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

pub fn run(command: Command) -> CliResult {
    match command {
        Command::Filter(a) => filter(&a),
        Command::Response(a) => response(&a),
        Command::Train(a) => train(&a),
        Command::Gradcheck(a) => gradcheck(&a),
        Command::Bench(a) => bench(&a),
        Command::Eval(a) => eval(&a),
        Command::Init(a) => init(&a),
        Command::Bands(_) => {
            println!("{}", BandPlan::default_plan().to_json());
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EngineMode {
    Serial,
    Systolic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Depth {
    #[value(name = "16")]
    Int16,
    #[value(name = "24")]
    Int24,
    #[value(name = "32f")]
    Float32,
}

impl From<Depth> for BitDepth {
    fn from(d: Depth) -> Self {
        match d {
            Depth::Int16 => BitDepth::Int16,
            Depth::Int24 => BitDepth::Int24,
            Depth::Float32 => BitDepth::Float32,
        }
    }
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["checkpoint", "trajectory"])))]
pub struct FilterArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Controller checkpoint; parameters are predicted from the input.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Stored parameter trajectory; no model is loaded.
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "serial")]
    pub mode: EngineMode,
    /// Pool the controller over the whole clip into one parameter set.
    #[arg(long)]
    pub static_peq: bool,
    #[arg(long, value_enum, default_value = "f32")]
    pub precision: Precision,
    #[arg(long, value_enum, default_value = "32f")]
    pub bit_depth: Depth,
    /// Also write the trajectory that was applied.
    #[arg(long)]
    pub export_trajectory: Option<PathBuf>,
}

enum Source {
    Trajectory(ParamTrajectory),
    Model { weights: BackboneWeights, mode: String },
}

fn load_source(checkpoint: Option<&Path>, trajectory: Option<&Path>, static_peq: bool, audio: &AudioBuffer) -> CliResult<Source> {
    match (checkpoint, trajectory) {
        (None, Some(path)) => {
            if static_peq {
                return Err(CliError::Usage("--static-peq needs --checkpoint".into()));
            }
            let traj = read_trajectory(path, &BandPlan::default_plan())?;
            let needed = frame_count(audio.len(), traj.frame_len);
            if traj.num_frames() != needed {
                return Err(CliError::Data(format!(
                    "frame-count mismatch: trajectory has {} frames, audio needs {needed}",
                    traj.num_frames()
                )));
            }
            Ok(Source::Trajectory(traj))
        }
        (Some(path), None) => {
            let ck = Checkpoint::load(path)?;
            let mode = if static_peq { "static_peq".to_string() } else { ck.mode };
            control_mode(&mode)?;
            Ok(Source::Model { weights: ck.weights, mode })
        }
        _ => Err(CliError::Usage("give exactly one of --checkpoint and --trajectory".into())),
    }
}

fn full_trajectory(source: &Source, audio: &AudioBuffer) -> CliResult<ParamTrajectory> {
    match source {
        Source::Trajectory(t) => Ok(t.clone()),
        Source::Model { weights, mode } => Ok(predict_trajectory(weights, control_mode(mode)?.as_ref(), &audio.samples)?),
    }
}

fn filter_in<F: Sample>(source: &Source, audio: &AudioBuffer, mode: EngineMode) -> CliResult<Vec<f64>> {
    let plan = BandPlan::default_plan();
    let causal = match source {
        Source::Trajectory(_) => true,
        Source::Model { mode, .. } => control_mode(mode)?.is_causal(),
    };
    if mode == EngineMode::Serial && causal {
        // frame-by-frame, one frame of latency
        return Ok(match source {
            Source::Trajectory(t) => stream_all::<_, F>(TrajectoryController::new(t, &plan)?, t.frame_len, &audio.samples)?,
            Source::Model { weights, .. } => {
                stream_all::<_, F>(BackboneController::new(weights), weights.config.frame_len, &audio.samples)?
            }
        });
    }
    let plan = match source {
        Source::Model { weights, .. } => weights.config.band_plan.clone(),
        Source::Trajectory(_) => plan,
    };
    let coeffs = full_trajectory(source, audio)?.to_coeffs(&plan)?;
    let name = match mode {
        EngineMode::Serial => "serial",
        EngineMode::Systolic => "systolic",
    };
    let x: Vec<F> = audio.samples.iter().map(|&v| F::from_f64(v)).collect();
    let (y, _) = process_with(engine::<F>(name)?.as_ref(), &x, &coeffs)?;
    Ok(y.iter().map(|v| v.to_f64()).collect())
}

fn filter(a: &FilterArgs) -> CliResult {
    let audio = read_wav(&a.input)?;
    let source = load_source(a.checkpoint.as_deref(), a.trajectory.as_deref(), a.static_peq, &audio)?;
    let y = match a.precision {
        Precision::F32 => filter_in::<f32>(&source, &audio, a.mode)?,
        Precision::F64 => filter_in::<f64>(&source, &audio, a.mode)?,
    };
    let out = AudioBuffer::new(y, audio.sample_rate)?;
    write_wav(&a.output, &out, a.bit_depth.into())?;
    if let Some(path) = &a.export_trajectory {
        write_trajectory(path, &full_trajectory(&source, &audio)?)?;
    }
    Ok(())
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["checkpoint", "trajectory"])))]
pub struct ResponseArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = tvf::io::DEFAULT_GRID_POINTS)]
    pub grid_points: usize,
    #[arg(long)]
    pub static_peq: bool,
}

fn response(a: &ResponseArgs) -> CliResult {
    let audio = read_wav(&a.input)?;
    let source = load_source(a.checkpoint.as_deref(), a.trajectory.as_deref(), a.static_peq, &audio)?;
    let plan = match &source {
        Source::Model { weights, .. } => weights.config.band_plan.clone(),
        Source::Trajectory(_) => BandPlan::default_plan(),
    };
    let coeffs = full_trajectory(&source, &audio)?.to_coeffs(&plan)?;
    let grid = ResponseGrid::from_trajectory(&coeffs, a.grid_points)?;
    std::fs::write(&a.out, grid.to_csv()).map_err(|e| CliError::Data(format!("{}: {e}", a.out.display())))
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("data_source").args(["synthetic", "data"])))]
pub struct TrainArgs {
    /// TOML training configuration; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Train on generated mixtures (the default).
    #[arg(long)]
    pub synthetic: bool,
    /// Directory with `clean/` and `noise/` WAV files.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// `tv` (time-varying) or `peq` (static).
    #[arg(long, default_value = "tv")]
    pub mode: String,
    /// History CSV; defaults to the checkpoint path with `.history.csv`.
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[arg(long)]
    pub quiet: bool,
}

fn train(a: &TrainArgs) -> CliResult {
    let config = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
            TrainConfig::from_toml(&text)?
        }
        None => TrainConfig::default(),
    };
    let mode = control_mode(&a.mode)?;
    let mut data = match &a.data {
        Some(dir) => data_source("directory", Some(dir), config.seed)?,
        None => data_source("synthetic", None, config.seed)?,
    };
    let quiet = a.quiet;
    let outcome = train_observed(&config, mode.as_ref(), data.as_mut(), &mut |row| {
        if let (false, Some(v)) = (quiet, row.val_loss) {
            eprintln!("step {:>6}  train {:.4}  val {:.4}  {:.1}s", row.step + 1, row.train_loss, v, row.wall_ms / 1e3);
        }
    })?;
    Checkpoint {
        weights: outcome.best,
        mode: mode.name().to_string(),
    }
    .save(&a.out)?;
    let history = a.history.clone().unwrap_or_else(|| a.out.with_extension("history.csv"));
    std::fs::write(&history, history_csv(&outcome.history)).map_err(|e| CliError::Data(format!("{}: {e}", history.display())))
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Targets to check; all registered ones when omitted.
    #[arg(long = "target")]
    pub targets: Vec<String>,
    #[arg(long, default_value_t = 20)]
    pub points: usize,
    #[arg(long, default_value_t = DEFAULT_STEP)]
    pub step: f64,
    #[arg(long, default_value_t = DEFAULT_FLOOR)]
    pub floor: f64,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Serialize)]
struct GradcheckLine {
    target: String,
    max_rel_err: f64,
    worst_index: usize,
    coords_checked: usize,
    tolerance: f64,
    pass: bool,
}

fn gradcheck(a: &GradcheckArgs) -> CliResult {
    let ids: Vec<String> = if a.targets.is_empty() {
        GRAD_TARGETS.iter().map(|s| s.to_string()).collect()
    } else {
        a.targets.clone()
    };
    let mut failed = Vec::new();
    for id in &ids {
        let target = grad_target(id)?;
        let r = grad_check_random(target.as_ref(), a.points, a.seed, a.step, a.floor)?;
        let pass = r.max_rel_err < a.tolerance;
        if !pass {
            failed.push(id.clone());
        }
        let line = GradcheckLine {
            target: r.target,
            max_rel_err: r.max_rel_err,
            worst_index: r.worst_index,
            coords_checked: r.coords_checked,
            tolerance: a.tolerance,
            pass,
        };
        println!("{}", serde_json::to_string(&line).expect("report serializes"));
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numerical(format!("gradient check above tolerance for: {}", failed.join(", "))))
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 35)]
    pub filters: usize,
    /// Frames of audio to process; 47 frames is about one second.
    #[arg(long, default_value_t = 47)]
    pub frames: usize,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Print JSON instead of CSV.
    #[arg(long)]
    pub json: bool,
}

fn bench(a: &BenchArgs) -> CliResult {
    let rows = benchmark_paths(&BenchConfig {
        filters: a.filters,
        frames: a.frames,
        repeats: a.repeats,
        seed: a.seed,
    })
    .map_err(|e| match e {
        TvfError::InvalidParameter(m) => CliError::Usage(m),
        other => other.into(),
    })?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&rows).expect("rows serialize"));
    } else {
        print!("{}", bench_csv(&rows));
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub deg: PathBuf,
}

#[derive(Serialize)]
struct EvalReport {
    lsd_db: f64,
    si_sdr_db: f64,
    mse: f64,
}

fn eval(a: &EvalArgs) -> CliResult {
    let r = read_wav(&a.reference)?;
    let d = read_wav(&a.deg)?;
    let report = EvalReport {
        lsd_db: lsd(&d.samples, &r.samples)?,
        si_sdr_db: si_sdr(&d.samples, &r.samples)?,
        mse: mean_squared_error(&d.samples, &r.samples)?,
    };
    println!("{}", serde_json::to_string(&report).expect("report serializes"));
    Ok(())
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Standard deviation of the initial gain logits.
    #[arg(long, default_value_t = DEFAULT_INIT_NOISE)]
    pub noise: f64,
    #[arg(long, default_value = "tv")]
    pub mode: String,
}

fn init(a: &InitArgs) -> CliResult {
    let mode = control_mode(&a.mode)?;
    let weights = init_weights(a.seed, a.noise).map_err(|e| match e {
        TvfError::InvalidParameter(m) => CliError::Usage(m),
        other => other.into(),
    })?;
    Checkpoint {
        weights,
        mode: mode.name().to_string(),
    }
    .save(&a.out)?;
    Ok(())
}
