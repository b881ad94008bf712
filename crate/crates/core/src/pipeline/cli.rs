//! Argument parsing for the `gpmm` binary.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use super::*;

#[derive(Debug, Parser)]
#[command(name = "gpmm", version, about = "Gaussian process morphable model registration and face model building")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a low-rank prior from a reference mesh and a kernel config.
    BuildPrior(BuildPriorCli),
    /// Register a target mesh, or every mesh in a directory.
    Register(RegisterCli),
    /// Build shape, color and expression models from registrations.
    BuildModel(BuildModelCli),
    /// Write one instance of a prior or morphable model.
    Sample(SampleCli),
    /// Per-region landmark distance statistics.
    EvalLandmarks(EvalLandmarksCli),
}

#[derive(Debug, Args)]
#[group(id = "truncation", multiple = false)]
pub struct Truncation {
    /// Keep exactly this many modes.
    #[arg(long)]
    pub rank: Option<usize>,
    /// Keep the fewest modes reaching this fraction of the variance.
    #[arg(long)]
    pub variance: Option<f64>,
}

impl Truncation {
    fn selection(&self) -> RankSelection {
        match (self.rank, self.variance) {
            (Some(r), _) => RankSelection::Fixed(r),
            (None, Some(f)) => RankSelection::Variance { fraction: f, max_rank: None },
            (None, None) => RankSelection::default(),
        }
    }
}

#[derive(Debug, Args)]
pub struct BuildPriorCli {
    pub reference: PathBuf,
    pub kernel: PathBuf,
    /// Nyström sample points; all vertices when omitted.
    #[arg(long = "nystrom")]
    pub nystrom: Option<usize>,
    #[command(flatten)]
    pub truncation: Truncation,
    /// Pick Nyström points uniformly at random with this seed instead of
    /// farthest-point sampling.
    #[arg(long)]
    pub uniform_sampling: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RegisterCli {
    pub prior: PathBuf,
    /// Target PLY or directory of PLY files.
    pub target: PathBuf,
    #[arg(long)]
    pub landmarks_ref: PathBuf,
    /// Landmark file or directory; defaults to `<target stem>.landmarks.json`
    /// beside each target.
    #[arg(long)]
    pub landmarks_target: Option<PathBuf>,
    /// Registration config JSON; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub landmark_noise: Option<f64>,
    #[arg(long)]
    pub huber_delta: Option<f64>,
    #[arg(long)]
    pub outlier_threshold: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Similarity-align targets to the reference landmarks before registering.
    #[arg(long)]
    pub align: bool,
    /// Worker threads for directory mode.
    #[arg(long, env = "GPMM_JOBS")]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BuildModelCli {
    #[arg(long)]
    pub registrations: PathBuf,
    #[arg(long)]
    pub neutrals: Option<PathBuf>,
    #[arg(long)]
    pub expressions: Option<PathBuf>,
    /// Reference mesh; the first registration when omitted.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long = "nystrom")]
    pub nystrom: Option<usize>,
    #[command(flatten)]
    pub truncation: Truncation,
    #[arg(long, default_value_t = 1.0e-4)]
    pub color_scale: f64,
    #[arg(long, default_value_t = 10.0)]
    pub color_bandwidth: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleCli {
    pub model: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated shape coefficients; missing trailing entries are 0.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub shape: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub color: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub expression: Option<Vec<f64>>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalLandmarksCli {
    pub results: PathBuf,
    pub truth: PathBuf,
    pub regions: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn registration_config(c: &RegisterCli) -> Result<RegistrationConfig> {
    let mut cfg = match &c.config {
        Some(p) => RegistrationConfig::load(p)?,
        None => RegistrationConfig::default(),
    };
    if let Some(v) = c.landmark_noise {
        cfg.landmark_noise = v;
    }
    if let Some(v) = c.huber_delta {
        cfg.huber_delta = v;
    }
    if let Some(v) = c.outlier_threshold {
        cfg.outlier_distance_threshold = v;
    }
    if let Some(v) = c.max_iterations {
        cfg.optimizer.max_iterations = v;
    }
    Ok(cfg)
}

/// Runs one command, writing human output and the final status line to
/// `stdout`. Returns the exit code.
pub fn execute(command: Command, stdout: &mut impl Write) -> i32 {
    let result = match command {
        Command::BuildPrior(c) => build_prior(&BuildPriorArgs {
            reference: c.reference,
            kernel: c.kernel,
            nystrom_points: c.nystrom,
            rank: c.truncation.selection(),
            sampling: c.uniform_sampling.map_or(Sampling::FarthestPoint, |seed| Sampling::Uniform { seed }),
            out: c.out,
        }),
        Command::Register(c) => registration_config(&c).and_then(|config| {
            register_targets(&RegisterArgs {
                prior: c.prior,
                target: c.target,
                reference_landmarks: c.landmarks_ref,
                target_landmarks: c.landmarks_target,
                config,
                align: c.align,
                jobs: c.jobs.unwrap_or_else(default_jobs),
                out: c.out,
            })
        }),
        Command::BuildModel(c) => build_model(&BuildModelArgs {
            registrations: c.registrations,
            neutrals: c.neutrals,
            expressions: c.expressions,
            reference: c.reference,
            color_nystrom_points: c.nystrom,
            color_rank: c.truncation.selection(),
            color_scale: c.color_scale,
            color_bandwidth: c.color_bandwidth,
            out: c.out,
        }),
        Command::Sample(c) => sample(&SampleArgs {
            model: c.model,
            seed: c.seed,
            shape: c.shape,
            color: c.color,
            expression: c.expression,
            out: c.out,
        }),
        Command::EvalLandmarks(c) => {
            eval_landmarks(&EvalLandmarksArgs { results: c.results, truth: c.truth, regions: c.regions, out: c.out })
                .map(|(outcome, table)| {
                    let _ = write!(stdout, "{table}");
                    outcome
                })
        }
    };
    if let Err(e) = &result {
        log::error!("{e}");
    }
    let (line, code) = status(&result);
    let _ = writeln!(stdout, "{line}");
    code
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut impl Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(cli.command, stdout),
        Err(e) if !e.use_stderr() => {
            let _ = write!(stdout, "{e}");
            0
        }
        Err(e) => {
            let _ = e.print();
            let line = json!({ "status": "error", "outputs": [], "metrics": { "error": e.kind().to_string() } });
            let _ = writeln!(stdout, "{line}");
            1
        }
    }
}
