use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "kfvfgo",
    version,
    about = "Kalman-filter variants and factor-graph optimization for TOA tracking",
    long_about = "Generates TOA datasets, runs filters and factor-graph estimators, compares trajectories and \
                  benchmarks them over Monte-Carlo seeds.\n\nEvery flag may also be given in a key=value file via \
                  --config (key = flag name without dashes). Flags on the command line take precedence over the file."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset CSV and print its SHA-256 hash.
    Simulate(SimulateArgs),
    /// Run one estimator on a dataset; writes a trajectory CSV and prints metrics JSON.
    Run(RunArgs),
    /// Run two estimators on one dataset and check that their trajectories agree.
    Compare(CompareArgs),
    /// Monte-Carlo benchmark over consecutive seeds.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    L2,
    Huber,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum JacobianArg {
    Analytic,
    Ad,
}

/// Data-generation settings.
#[derive(Debug, Clone, Args)]
pub struct SchemeArgs {
    /// Data scheme: L+G, NL+G, L+NG or NL+NG.
    #[arg(long, default_value = "NL+NG")]
    pub scheme: String,
    /// Number of epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Angular rate of the circular trajectory (rad/s).
    #[arg(long)]
    pub omega: Option<f64>,
    /// Epoch spacing (s).
    #[arg(long)]
    pub dt: Option<f64>,
    /// Number of anchors on the anchor circle (>= 3).
    #[arg(long)]
    pub anchor_count: Option<usize>,
    /// Anchor circle radius (m); defaults to 105 for NL schemes and 1000 for L schemes.
    #[arg(long)]
    pub anchor_radius: Option<f64>,
    /// Range noise, e.g. `gaussian:0.1` or `gmm:0.8/0.1,0.2/10` (weight/std in m).
    #[arg(long)]
    pub noise: Option<String>,
}

/// Estimator model overrides.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Process noise diagonal `qpx,qpy,qvx,qvy` (m², m², m²/s², m²/s²).
    #[arg(long)]
    pub q: Option<String>,
    /// Initial covariance diagonal `px,py,vx,vy` (m², m², m²/s², m²/s²).
    #[arg(long)]
    pub p0: Option<String>,
    /// Initial state mean `px,py,vx,vy` (m, m, m/s, m/s).
    #[arg(long)]
    pub init: Option<String>,
    /// Range noise std assumed by the estimators, R = std² I (m); defaults to the dominant noise component.
    #[arg(long)]
    pub r_std: Option<f64>,
}

/// Estimator tunables.
#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Sliding-window length in states (sw-fgo only).
    #[arg(long)]
    pub window: Option<usize>,
    /// Maximum iterations (iterated variants and sw-fgo).
    #[arg(long)]
    pub iters: Option<usize>,
    /// Robust kernel.
    #[arg(long, value_enum)]
    pub kernel: Option<KernelArg>,
    /// Huber threshold on whitened residuals (dimensionless); implies --kernel huber.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Jacobian source for factor-graph estimators.
    #[arg(long, value_enum)]
    pub jacobian: Option<JacobianArg>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scheme: SchemeArgs,
    /// RNG seed.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
    /// key=value file with defaults for any flag.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Dataset CSV produced by `simulate`.
    #[arg(long)]
    pub data: PathBuf,
    /// kf, ekf, iekf, rekf, riekf, fg-ekf, fg-iekf, fg-rekf, fg-riekf (optionally with -ad) or sw-fgo.
    #[arg(long)]
    pub estimator: String,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Iteration stop tolerance on the state step norm (m).
    #[arg(long)]
    pub tol: Option<f64>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Trajectory CSV output path (k,est_px,est_py,true_px,true_py,err).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Metrics JSON output path; metrics are always printed to stdout.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// key=value file with defaults for any flag.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Dataset CSV produced by `simulate`.
    #[arg(long)]
    pub data: PathBuf,
    /// First estimator.
    #[arg(long)]
    pub a: String,
    /// Second estimator.
    #[arg(long)]
    pub b: String,
    /// PASS threshold on the mean position difference (m).
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Report JSON output path; the report is always printed to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// key=value file with defaults for any flag.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub scheme: SchemeArgs,
    /// Comma-separated estimator names.
    #[arg(long, default_value = "ekf,iekf,rekf,riekf")]
    pub estimators: String,
    /// Adds one sw-fgo estimator per listed window length, e.g. `1,2,3,4`.
    #[arg(long)]
    pub sweep_window: Option<String>,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Iteration stop tolerance on the state step norm (m).
    #[arg(long)]
    pub tol: Option<f64>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Number of Monte-Carlo runs.
    #[arg(long, default_value_t = 20)]
    pub runs: usize,
    /// First seed; run i uses seed + i.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Serial single-threaded execution for clean per-epoch timings.
    #[arg(long)]
    pub timing: bool,
    /// Results JSON output path; a summary table is printed to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV of first-epoch residual descent (seed,estimator,iteration,residual_norm).
    #[arg(long)]
    pub traces: Option<PathBuf>,
    /// key=value file with defaults for any flag.
    #[arg(long)]
    pub config: Option<PathBuf>,
}
