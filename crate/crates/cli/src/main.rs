mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands::Failure;

#[derive(Debug, Parser)]
#[command(name = "wsc", version, about = "Wasserstein spectral clustering of transaction data")]
pub struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, env = "WSC_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cluster the entities of an `entity_id,amount` CSV.
    Cluster(ClusterArgs),
    /// Compare predicted labels with ground truth (joined by entity id).
    Eval(EvalArgs),
    /// Run the simulation benchmark.
    Bench(BenchArgs),
    /// Write the pairwise Wasserstein distance matrix.
    Distances(DistancesArgs),
    /// Write the spectral embedding used for clustering.
    Embed(EmbedArgs),
    /// Export per-cluster pooled ECDFs and histograms for plotting.
    Plotdata(PlotdataArgs),
    /// Generate a synthetic dataset with its ground truth.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodArg {
    Wsc,
    Subwsc,
    FeatureKmeans,
    Hc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KSelect {
    Fixed,
    Silhouette,
    Eigengap,
}

/// Options shared by every command that reads transactions.
#[derive(Debug, Clone, Args, serde::Serialize)]
pub struct DataArgs {
    /// Transactions CSV with `entity_id,amount` header.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Keep at most this many transactions per entity (random subset).
    #[arg(long)]
    pub cap: Option<usize>,
    /// Standardizing constant; defaults to the largest amount.
    #[arg(long)]
    pub m0: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Options of the spectral pipelines.
#[derive(Debug, Clone, Args, serde::Serialize)]
pub struct GraphArgs {
    /// Kernel scale; defaults to the largest pairwise distance.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Keep only k0-nearest-neighbor edges.
    #[arg(long)]
    pub knn_k0: Option<usize>,
    /// Subsample size for `subwsc`.
    #[arg(long)]
    pub n_s: Option<usize>,
    /// Smallest expected cluster size, used to derive the subsample size.
    #[arg(long)]
    pub n_min: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub graph: GraphArgs,
    #[arg(long, value_enum, default_value_t = MethodArg::Wsc)]
    pub method: MethodArg,
    /// Number of clusters; required unless --k-select picks it.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum, default_value_t = KSelect::Fixed)]
    pub k_select: KSelect,
    /// Candidate range `lo:hi` (inclusive) for automatic selection.
    #[arg(long)]
    pub k_range: Option<String>,
    /// Directory receiving labels.csv and run.json.
    #[arg(long, short, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Predicted `entity_id,label` CSV.
    #[arg(long)]
    pub labels: PathBuf,
    /// Ground-truth `entity_id,label` CSV.
    #[arg(long)]
    pub truth: PathBuf,
    /// Also write the JSON report here.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Print a readable table instead of JSON.
    #[arg(long)]
    pub table: bool,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Simulation example: 1 (continuous) or 2 (discrete).
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub example: u8,
    /// Cluster-size setting a, b or c.
    #[arg(long, default_value = "a")]
    pub setting: String,
    /// Comma-separated cluster sizes overriding --setting.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    /// Poisson mean of the transaction count.
    #[arg(long)]
    pub beta: f64,
    /// Replications.
    #[arg(long, default_value_t = 100)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated methods: feature-kmeans, hc, wsc-dense, wsc-knn[:k0], subwsc[:fraction].
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// SubWSC curve over subsample fractions `start:stop:step`.
    #[arg(long)]
    pub subsample_sweep: Option<String>,
    /// Directory for the CSV outputs.
    #[arg(long, short)]
    pub out_dir: Option<PathBuf>,
    /// Also write per-replication values.
    #[arg(long)]
    pub raw: bool,
}

#[derive(Debug, Clone, Args)]
pub struct DistancesArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub graph: GraphArgs,
    #[arg(long, value_enum, default_value_t = MethodArg::Wsc)]
    pub method: MethodArg,
    #[arg(long)]
    pub k: usize,
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct PlotdataArgs {
    /// Transactions CSV.
    #[arg(long, short)]
    pub input: PathBuf,
    /// `entity_id,label` CSV from `cluster`.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, short)]
    pub out_dir: PathBuf,
    /// Histogram bins shared by all clusters.
    #[arg(long, default_value_t = 30)]
    pub bins: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub example: u8,
    #[arg(long, default_value = "a")]
    pub setting: String,
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub beta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Transactions CSV to write.
    #[arg(long, short)]
    pub output: PathBuf,
    /// Ground-truth labels CSV to write.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            if let Some(hint) = f.hint() {
                eprintln!("hint: {hint}");
            }
            ExitCode::from(f.code())
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "{m}"),
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}
