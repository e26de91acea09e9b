use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "thingp",
    version,
    about = "Gaussian-process approximations for autocorrelated data via thinning"
)]
pub struct Cli {
    /// Worker thread cap for all parallel sections.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Choose the thinning number from the PACF of every series.
    ThinSelect(ThinSelectArgs),
    /// Fit a scaled-Vecchia model and write it to a model file.
    FitSv(FitSvArgs),
    /// Predict with a scaled-Vecchia model file.
    PredictSv(PredictArgs),
    /// Fit a (thinned) twin-style block ensemble.
    FitTwin(FitTwinArgs),
    /// Predict with a twin-style model file.
    PredictTwin(PredictArgs),
    /// Local GP prediction on the nearest block.
    PredictLagp(PredictLagpArgs),
    /// Run a replication, thinning-sweep or stability experiment.
    Bench(BenchArgs),
    /// Write robot-arm training and test sets.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Training CSV file.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub response: String,
    /// Covariate columns; defaults to every column but the response and time.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    /// Time column; row order is used when absent.
    #[arg(long)]
    pub time: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Thinning number; selected from the PACF when omitted.
    #[arg(long = "T")]
    pub thinning: Option<usize>,
    #[arg(long, default_value_t = 30)]
    pub m: usize,
    #[arg(long, default_value_t = 140)]
    pub mp: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// matern15 or sqexp.
    #[arg(long, default_value = "matern15")]
    pub kernel: String,
}

#[derive(Args, Debug)]
pub struct ThinSelectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Largest lag examined.
    #[arg(long, default_value_t = 100)]
    pub h_max: usize,
    /// Leave the response out of the PACF check.
    #[arg(long)]
    pub no_response: bool,
}

#[derive(Args, Debug)]
pub struct FitSvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Fit on thinned conditioning sets.
    #[arg(long)]
    pub thinned: bool,
    /// Use the time column as an extra input.
    #[arg(long, conflicts_with = "thinned")]
    pub include_time: bool,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Write the training conditioning plan here.
    #[arg(long)]
    pub dump_plan: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FitTwinArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub thinned: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// CSV with the covariate (and time) columns of the training data.
    #[arg(long)]
    pub test: PathBuf,
    /// Add the temporal component g(t).
    #[arg(long)]
    pub with_g: bool,
    /// Override the prediction conditioning size stored in the model.
    #[arg(long)]
    pub mp: Option<usize>,
    /// Predictions CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Training residuals used for g (with --with-g).
    #[arg(long)]
    pub residuals: Option<PathBuf>,
    /// Per-block predictions of an ensemble.
    #[arg(long)]
    pub blocks_out: Option<PathBuf>,
    /// Sequential prediction plan of a scaled-Vecchia model.
    #[arg(long)]
    pub dump_plan: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PredictLagpArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub thinned: bool,
    #[arg(long = "T")]
    pub thinning: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Local design size.
    #[arg(long, default_value_t = 30)]
    pub n_end: usize,
    #[arg(long)]
    pub with_g: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub residuals: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// TOML experiment description; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// replication, thinning-sweep or stability.
    #[arg(long)]
    pub protocol: Option<String>,
    /// Comma-separated methods (sv, sv-xt, thinned-sv, twin, thinned-twin, lagp, thinned-lagp).
    #[arg(long)]
    pub methods: Option<String>,
    /// Seeds as `a..b` (inclusive) or a comma list.
    #[arg(long)]
    pub seeds: Option<String>,
    /// AR lag order M of the robot-arm scenario (0 = Latin hypercube).
    #[arg(long = "M")]
    pub lag_order: Option<usize>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Thinning grid for the sweep, same syntax as --seeds (`a..b` or list).
    #[arg(long)]
    pub t_grid: Option<String>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub mp: Option<usize>,
    #[arg(long)]
    pub with_g: bool,
    #[arg(long, default_value = "bench-out")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long = "M", default_value_t = 13)]
    pub lag_order: usize,
    #[arg(long, default_value_t = 20000)]
    pub n_train: usize,
    #[arg(long, default_value_t = 10000)]
    pub n_test: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// TOML file with calibration constants.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}
