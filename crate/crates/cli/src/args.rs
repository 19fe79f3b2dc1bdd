use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Rate functions, Monte Carlo tail checks and large-strike asymptotics for
/// Volterra stochastic volatility models.
///
/// Every run writes CSV outputs and a `manifest.json` into `--out`.
#[derive(Debug, Parser)]
#[command(name = "vldp", version)]
pub struct Cli {
    /// Directory for CSV outputs and the run manifest.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,

    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "VLDP_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the model against the standing assumptions.
    ///
    /// Writes validation.csv: check,status,detail.
    Validate(ConfigArg),

    /// Terminal rate I_T(x).
    ///
    /// Writes rate.csv (x,rate,converged,gradient_norm,n_starts,touches_zero)
    /// and minimizer.csv (t,fdot).
    Rate(RateArgs),

    /// Path rate Q(g) for a piecewise-linear log-price path.
    ///
    /// Writes path_rate.csv (rate,converged,gradient_norm,n_starts) and
    /// minimizer.csv (t,fdot).
    PathRate(PathRateArgs),

    /// Simulate terminal log-prices X_T^ε.
    ///
    /// Writes paths.csv: path_id,x_T (plus x_0..x_n with --full-paths).
    Simulate(SimulateArgs),

    /// Monte Carlo check of ε log P(X_T^ε ≥ c) → −I_T(c).
    ///
    /// Writes ldp.csv (epsilon,n_paths,hits,p_hat,ci_lo,ci_hi,eps_log_p,
    /// eps_log_lo,eps_log_hi,valid) and ldp_summary.csv (key,value).
    LdpCheck(LdpArgs),

    /// Scaling of I_T(c) against c^γ I_T(1) for the shifted-power model.
    ///
    /// Writes scaling.csv: c,rate,predicted,deviation,converged.
    Strike(StrikeArgs),

    /// Quadratic Taylor coefficient of I_T near 0 for the square-transform model.
    ///
    /// Writes taylor.csv (x,rate,quadratic_fit,cubic_fit) and
    /// taylor_summary.csv (key,value).
    Taylor(TaylorArgs),

    /// Re-run the command recorded in a manifest, writing into --out.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// Model config file (key = value lines).
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Gradient {
    Adjoint,
    CentralDifference,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Number of grid steps.
    #[arg(long, default_value_t = 400)]
    pub n: usize,
    /// Also write the kernel weights to weights.csv (i,j,t_i,t_j,w).
    #[arg(long)]
    pub dump_weights: bool,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// Random starts on top of the fixed ones.
    #[arg(long, default_value_t = 8)]
    pub starts: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Gradient::Adjoint)]
    pub gradient: Gradient,
}

#[derive(Debug, Args)]
pub struct RateArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Terminal log-price level.
    #[arg(long, allow_hyphen_values = true)]
    pub x: f64,
}

#[derive(Debug, Args)]
pub struct PathRateArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Target g(t) = slope·t.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "target")]
    pub slope: Option<f64>,
    /// Target path as CSV `t,g` with one row per grid point.
    #[arg(long)]
    pub target: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub eps: f64,
    #[arg(long, default_value_t = 10_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Keep the log-price at every grid point.
    #[arg(long)]
    pub full_paths: bool,
}

#[derive(Debug, Args)]
pub struct LdpArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    // --seed drives both the simulation and the solver starts
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Tail threshold.
    #[arg(long, allow_hyphen_values = true)]
    pub c: f64,
    /// Strictly decreasing ε-ladder.
    #[arg(long, value_delimiter = ',', default_value = "0.4,0.2,0.1,0.05")]
    pub eps: Vec<f64>,
    #[arg(long, default_value_t = 1_000_000)]
    pub paths: usize,
}

#[derive(Debug, Args)]
pub struct StrikeArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,2")]
    pub cs: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct TaylorArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Small nonzero levels; each is used with both signs.
    #[arg(long, value_delimiter = ',', default_value = "0.02,0.05,0.1")]
    pub xs: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run.
    #[arg(long)]
    pub manifest: PathBuf,
}
