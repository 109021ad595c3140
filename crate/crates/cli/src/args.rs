use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "lpf", version, about = "Local probing field analysis, resampling and denoising of point clouds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    #[command(flatten)]
    pub global: GlobalArgs,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Seed for every random choice.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker thread cap (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// TOML file with [analysis], [resample] and [denoise] tables.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit fields and dictionary to a cloud and write a snapshot.
    Analyze(AnalyzeArgs),
    /// Resample a cloud from its reconstructed fields.
    Resample(ResampleArgs),
    /// Denoise a cloud.
    Denoise(DenoiseArgs),
    /// Evaluation reports.
    #[command(subcommand)]
    Metrics(MetricsCommand),
    /// Generate a synthetic test shape.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PatternArg {
    Grid,
    Random,
}

/// Analysis parameters shared by every pipeline command.
#[derive(Debug, Args, Default)]
pub struct AnalysisArgs {
    /// Pattern radius r.
    #[arg(long)]
    pub radius: Option<f64>,

    #[arg(long, value_enum)]
    pub pattern: Option<PatternArg>,

    /// Grid steps across the pattern diameter (grid patterns).
    #[arg(long)]
    pub grid_n: Option<usize>,

    /// Point count M (random patterns).
    #[arg(long)]
    pub points: Option<usize>,

    /// Dictionary size d.
    #[arg(long)]
    pub atoms: Option<usize>,

    /// Sparsity weight; derived from the dictionary size when unset.
    #[arg(long)]
    pub lambda: Option<f64>,

    /// Probing accuracy scale; median NN distance when unset.
    #[arg(long)]
    pub tau_p: Option<f64>,

    #[arg(long)]
    pub outer_iters: Option<usize>,

    #[arg(long)]
    pub dict_iters: Option<usize>,

    /// Seed a field at every k-th point instead of Poisson-disk seeding.
    #[arg(long, value_name = "K")]
    pub lpf_stride: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long = "in", value_name = "CLOUD")]
    pub input: PathBuf,

    /// Snapshot to write.
    #[arg(long, value_name = "FILE")]
    pub state: PathBuf,

    #[command(flatten)]
    pub analysis: AnalysisArgs,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["input", "state"]))]
pub struct ResampleArgs {
    /// Cloud to analyze and resample.
    #[arg(long = "in", value_name = "CLOUD")]
    pub input: Option<PathBuf>,

    /// Resample from an existing snapshot instead of analyzing.
    #[arg(long, value_name = "FILE")]
    pub state: Option<PathBuf>,

    #[arg(long, value_name = "CLOUD")]
    pub out: PathBuf,

    /// Consolidation radius (absolute).
    #[arg(long)]
    pub conflict_radius: Option<f64>,

    /// Consolidation radius in units of the pattern spacing.
    #[arg(long)]
    pub conflict_factor: Option<f64>,

    #[command(flatten)]
    pub analysis: AnalysisArgs,
}

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    #[arg(long = "in", value_name = "CLOUD")]
    pub input: PathBuf,

    #[arg(long, value_name = "CLOUD")]
    pub out: PathBuf,

    /// Snapshot whose pattern, dictionary and parameters start the run.
    #[arg(long, value_name = "FILE")]
    pub state: Option<PathBuf>,

    /// Noise-free cloud; enables per-round RMSE reporting.
    #[arg(long, value_name = "CLOUD")]
    pub reference: Option<PathBuf>,

    /// Blend rate toward the consensus position.
    #[arg(long)]
    pub gamma: Option<f64>,

    #[arg(long)]
    pub rounds: Option<usize>,

    #[command(flatten)]
    pub analysis: AnalysisArgs,
}

#[derive(Debug, Subcommand)]
pub enum MetricsCommand {
    /// RMSE from a test cloud to a reference cloud.
    Rmse {
        #[arg(long = "in", value_name = "CLOUD")]
        input: PathBuf,
        #[arg(long, value_name = "CLOUD")]
        reference: PathBuf,
        /// Larger of the two one-sided values.
        #[arg(long)]
        symmetric: bool,
    },
    /// Nearest-neighbor distance histogram as CSV.
    Hist {
        #[arg(long = "in", value_name = "CLOUD")]
        input: PathBuf,
        #[arg(long, default_value_t = lpf_core::metrics::DEFAULT_BINS)]
        bins: usize,
        /// CSV file (stdout when omitted).
        #[arg(long, value_name = "CSV")]
        out: Option<PathBuf>,
    },
    /// Per-iteration energies of a snapshot as CSV.
    Energy {
        #[arg(long, value_name = "FILE")]
        state: PathBuf,
        /// Divide by the dictionary size.
        #[arg(long)]
        per_atom: bool,
        #[arg(long, value_name = "CSV")]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// plane, cube, cube_with_curve, sphere_curve_net or sinusoid.
    #[arg(long)]
    pub kind: String,

    #[arg(long)]
    pub n: usize,

    /// Per-axis Gaussian noise deviation.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,

    #[arg(long, value_name = "CLOUD")]
    pub out: PathBuf,

    /// Also write the noise-free points.
    #[arg(long, value_name = "CLOUD")]
    pub clean: Option<PathBuf>,
}
