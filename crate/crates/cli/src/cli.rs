use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::pipeline::Usecase;

#[derive(Debug, Parser)]
#[command(name = "motifdisco", version, about = "Motif causality discovery on time-series traces")]
pub struct Cli {
    /// Upper bound on worker threads.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Suppress progress messages on stderr.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic traces from a random planted structure.
    Gen(GenArgs),
    /// Build the motif graph from traces and train the link model.
    Train(TrainArgs),
    /// Score motif pairs with a trained checkpoint.
    Predict(PredictArgs),
    /// Print a graph as DOT or JSON.
    Export(ExportArgs),
    /// Run forecasting, anomaly detection or clustering and print metrics.
    Usecase(UsecaseArgs),
    /// Time training over sweeps of n, tau and motif set size.
    Bench(BenchArgs),
}

#[derive(Debug, Args, Default)]
pub struct ConfigArgs {
    /// RunConfig JSON; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub tau: Option<usize>,
    #[arg(long)]
    pub templates: Option<usize>,
    #[arg(long)]
    pub successors: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub trace_length: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    /// Trace CSV (`trace_id,t,value`); synthetic data when omitted.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Start from this graph JSON instead of building one from traces.
    #[arg(long, conflicts_with = "data")]
    pub graph: Option<PathBuf>,
    #[arg(long)]
    pub trace_length: Option<usize>,
    #[arg(long)]
    pub tau: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Graph the model is attached to; defaults to graph.json next to the
    /// checkpoint.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// One `{source, target}` object or an array of them.
    #[arg(long)]
    pub pairs: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Dot,
    Json,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    pub graph: PathBuf,
    #[arg(long, value_enum, default_value = "dot")]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum UsecaseKind {
    Forecast,
    Anomaly,
    Cluster,
}

impl From<UsecaseKind> for Usecase {
    fn from(k: UsecaseKind) -> Self {
        match k {
            UsecaseKind::Forecast => Usecase::Forecast,
            UsecaseKind::Anomaly => Usecase::Anomaly,
            UsecaseKind::Cluster => Usecase::Cluster,
        }
    }
}

#[derive(Debug, Args)]
pub struct UsecaseArgs {
    #[arg(value_enum)]
    pub which: UsecaseKind,
    #[command(flatten)]
    pub common: ConfigArgs,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub trace_length: Option<usize>,
    /// Use the motif causality model.
    #[arg(long)]
    pub with_mc: bool,
    /// MC anomaly cutoff; also the training edge threshold.
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Forecast or anomaly window length.
    #[arg(long)]
    pub window: Option<usize>,
    /// Use-case model epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Motif model training epochs.
    #[arg(long)]
    pub train_epochs: Option<usize>,
    /// Directory for metrics, per-item CSV and the config echo.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// BenchConfig JSON `{grid, base, train, entropy}`.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub n_values: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub tau_values: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub template_values: Option<Vec<usize>>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the CSV here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
