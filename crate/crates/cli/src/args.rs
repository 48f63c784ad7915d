use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Mittag-Leffler numerics and trajectory intersections for `D^α x = A x`.
///
/// Matrices are written row by row: rows separated by `;`, entries by `,`
/// (`"0,1;-1,0"`). Vectors use `,`. Ranges use `lo:hi`. α is a decimal
/// literal; 1/3 is conventionally `0.3333333333`, whose 1e-11 offset moves
/// zeros by far less than the reporting tolerances.
///
/// FRACTRACE_TOL_SCALE (default 1) multiplies every intersection tolerance.
///
/// Exit status: 0 on success, 1 when the computation is rejected, 2 on
/// malformed arguments.
#[derive(Debug, Parser)]
#[command(name = "fractrace", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate E_{α,β}(z) and its derivative.
    MlEval(MlEvalArgs),
    /// Locate zeros of E_{α,β} in a rectangle or disk.
    Zeros(ZerosArgs),
    /// Type I / Type II verdict with critical times.
    Classify(ClassifyArgs),
    /// Sample u(t; x0) on a uniform grid.
    Trajectory(TrajectoryArgs),
    /// The curve γ of initial states reaching x0, optionally evolved.
    InverseCurve(InverseCurveArgs),
    /// All initial states whose trajectories pass through p at time T.
    Eist(EistArgs),
    /// Distinct-time meetings of two trajectories.
    Eidt(EidtArgs),
    /// Nodes and cusps of one trajectory.
    SelfIntersect(SelfIntersectArgs),
    /// Regenerate the four reference figures as CSV + SVG pairs.
    ReproduceFigures(FiguresArgs),
}

#[derive(Debug, Args)]
pub struct SystemArgs {
    /// Fractional order, 0 < α < 1.
    #[arg(long)]
    pub alpha: f64,
    /// Square system matrix, e.g. "0,1;-1,0".
    #[arg(long, allow_hyphen_values = true)]
    pub matrix: String,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// CSV destination; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional SVG plot of the first two coordinates.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MlEvalArgs {
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub beta: f64,
    /// Evaluation point "re,im"; repeat for several.
    #[arg(long = "z", required = true, allow_hyphen_values = true)]
    pub points: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ZerosArgs {
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub beta: f64,
    /// Real range "lo:hi" of the search rectangle.
    #[arg(long, allow_hyphen_values = true, requires = "im", conflicts_with = "radius")]
    pub re: Option<String>,
    /// Imaginary range "lo:hi" of the search rectangle.
    #[arg(long, allow_hyphen_values = true, requires = "re")]
    pub im: Option<String>,
    /// Every zero of modulus at most this radius (instead of a rectangle).
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    /// Zero search radius; defaults to min(20, 60^α).
    #[arg(long)]
    pub radius: Option<f64>,
    /// Write an invertibility scan of E_{α,1}(t^α A) over [0, t-max].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 5.0)]
    pub t_max: f64,
    #[arg(long, default_value_t = 501)]
    pub samples: usize,
}

#[derive(Debug, Args)]
pub struct TrajectoryArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub x0: String,
    #[arg(long, default_value_t = 0.0)]
    pub t_min: f64,
    #[arg(long)]
    pub t_max: f64,
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct InverseCurveArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub x0: String,
    #[arg(long, default_value_t = 0.0)]
    pub t_min: f64,
    #[arg(long)]
    pub t_max: f64,
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    /// Also emit γ for u(T̃; x0) at these times; repeatable.
    #[arg(long = "evolve")]
    pub evolve: Vec<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct EistArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    /// Target point.
    #[arg(long, allow_hyphen_values = true)]
    pub p: String,
    /// Arrival time T > 0.
    #[arg(long)]
    pub t: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EidtArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub x0: String,
    /// Second initial state.
    #[arg(long, allow_hyphen_values = true)]
    pub x: String,
    /// Time window "lo:hi" along u(·; x0).
    #[arg(long, default_value = "0:3")]
    pub window_x0: String,
    /// Time window "lo:hi" along u(·; x).
    #[arg(long, default_value = "0:3")]
    pub window_x: String,
    /// Seed grid size per window.
    #[arg(long, default_value_t = 200)]
    pub grid: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelfIntersectArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub x0: String,
    /// Zero search radius; defaults to min(20, 60^α).
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FiguresArgs {
    /// Directory receiving fig1..fig3b .csv/.svg; created if missing.
    #[arg(long, default_value = "figures")]
    pub outdir: PathBuf,
}
