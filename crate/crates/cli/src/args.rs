use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "ipv", version, about = "SDP-relaxation robustness verification of ReLU networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Verify robustness of one input.
    Verify(VerifyArgs),
    /// Solve the strict-feasibility problem of one relaxation.
    Diagnose(DiagnoseArgs),
    /// Run a depth sweep over random networks.
    Sweep(SweepArgs),
    /// Compare every variant against the exact margin.
    Compare(CompareArgs),
    /// Write random fixture networks and a manifest.
    GenFixtures(FixtureArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantName {
    Base,
    Eps,
    Leaky,
    Bremove,
    ProblemA,
    ProblemB,
}

#[derive(Debug, Args)]
pub struct Instance {
    /// Network JSON file.
    #[arg(long)]
    pub net: PathBuf,
    /// Input point: comma-separated values or `file.json#k`.
    #[arg(long, allow_hyphen_values = true)]
    pub input: String,
    /// L-infinity perturbation radius.
    #[arg(long)]
    pub rho: f64,
}

#[derive(Debug, Args)]
pub struct Relaxation {
    #[arg(long, value_enum, default_value = "base")]
    pub variant: VariantName,
    /// Complementarity tolerance of the eps variant.
    #[arg(long, default_value_t = 0.01)]
    pub eps: f64,
    /// Negative slope of the leaky variant.
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    /// Rescale the moment matrix by the layer bounds.
    #[arg(long)]
    pub dscale: bool,
    /// Rescale hidden layers to unit minimum row norm.
    #[arg(long)]
    pub wscale: bool,
    /// Keep neurons that are inactive on the whole input box.
    #[arg(long)]
    pub no_prune: bool,
}

#[derive(Debug, Args)]
pub struct Output {
    /// Output file (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Relative duality-gap tolerance of the solver.
    #[arg(long)]
    pub gap_tol: Option<f64>,
    /// Report wall-clock times.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
#[group(id = "targets", multiple = false)]
pub struct Targets {
    /// Check a single label.
    #[arg(long, group = "targets")]
    pub target: Option<usize>,
    /// Check every label other than the prediction (default).
    #[arg(long, group = "targets")]
    pub all_targets: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub instance: Instance,
    #[command(flatten)]
    pub relaxation: Relaxation,
    #[command(flatten)]
    pub targets: Targets,
    /// Also solve the strict-feasibility problem.
    #[arg(long)]
    pub diagnose: bool,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub instance: Instance,
    #[command(flatten)]
    pub relaxation: Relaxation,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub instance: Instance,
    #[command(flatten)]
    pub targets: Targets,
    /// Variants to compare, e.g. `base,eps=0.05,bremove`.
    #[arg(long, value_delimiter = ',', default_value = "base,eps,leaky,bremove,problem-a,problem-b")]
    pub variants: Vec<String>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct Shape {
    /// Hidden-layer counts.
    #[arg(long, value_delimiter = ',', default_value = "2,4,6,8,10,12")]
    pub depths: Vec<usize>,
    /// Number of seeds per depth.
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    /// First seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub width: usize,
    #[arg(long, default_value_t = 4)]
    pub input_dim: usize,
    #[arg(long, default_value_t = 3)]
    pub outputs: usize,
    #[arg(long, default_value_t = 0.05)]
    pub rho: f64,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub shape: Shape,
    /// Methods per cell, e.g. `base,bremove,eps=0.05,dscale,leaky+wscale`.
    #[arg(long, value_delimiter = ',', default_value = "base,bremove")]
    pub variants: Vec<String>,
    /// Output file (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    #[arg(long)]
    pub gap_tol: Option<f64>,
    /// Fill the runtime column.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    #[command(flatten)]
    pub shape: Shape,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}
