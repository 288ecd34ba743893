mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};
use nlicp::citests::{CITestConfig, Method};
use nlicp::stattests::Alternative;
use nlicp::Error;

#[derive(Debug, Parser)]
#[command(name = "nlicp", version, about = "Nonlinear invariant causal prediction")]
struct Cli {
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "NLICP_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Test every candidate subset and report Ŝ and the defining sets.
    Run(RunArgs),
    /// One conditional independence test of the target and environment given a set.
    Citest(CitestArgs),
    /// Classical two-sample and contingency tests.
    Stattest(StattestArgs),
    /// Simulation benchmark on the six-node graph.
    Bench(BenchArgs),
    /// Stratified FWER and Jaccard means of a benchmark table.
    BenchAggregate(AggregateArgs),
    /// Sample data from a structural causal model.
    Simulate(SimulateArgs),
    /// Bounds on the average causal effect of moving the predictors from x to x̃.
    Ace(AceArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Comma-separated input with a header row.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    target: String,
    #[arg(long)]
    env: String,
    /// Panel unit column, for the block bootstrap.
    #[arg(long, requires = "time")]
    unit: Option<String>,
    #[arg(long, requires = "unit")]
    time: Option<String>,
}

#[derive(Debug, Args)]
struct TestArgs {
    /// Test name such as kci, rp:fourier, env-pred, target-pred:gam:f,
    /// resid-dist:gam:levene-wilcoxon or cond-quantile; letters A to F also work.
    #[arg(long, default_value = "cond-quantile")]
    method: Method,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    num_trees: usize,
    #[arg(long, default_value_t = 250)]
    num_sims: usize,
    /// Exceedance levels β for the quantile test.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.5,0.9")]
    quantiles: Vec<f64>,
    #[arg(long, default_value_t = 2.0 / 3.0)]
    train_fraction: f64,
    /// Split train and test rows without stratifying by environment.
    #[arg(long)]
    no_stratify: bool,
    #[arg(long)]
    kci_epsilon: Option<f64>,
    #[arg(long, default_value_t = 50)]
    rp_trees: usize,
    #[arg(long)]
    mtry: Option<usize>,
    #[arg(long, default_value_t = 5)]
    min_leaf: usize,
    #[arg(long)]
    num_features: Option<usize>,
    /// Treat the environment as continuous, cut into this many quantile bins
    /// where categories are needed.
    #[arg(long)]
    env_bins: Option<usize>,
}

impl TestArgs {
    fn config(&self) -> CITestConfig {
        CITestConfig {
            method: self.method,
            alpha: self.alpha,
            seed: self.seed,
            num_sims: self.num_sims,
            quantiles: self.quantiles.clone(),
            train_fraction: self.train_fraction,
            stratify: !self.no_stratify,
            kci_epsilon: self.kci_epsilon,
            num_trees: self.num_trees,
            rp_trees: self.rp_trees,
            mtry: self.mtry,
            min_leaf: self.min_leaf,
            num_features: self.num_features,
            env_bins: self.env_bins,
        }
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    test: TestArgs,
    /// Predictor names to consider; all by default.
    #[arg(long, value_delimiter = ',')]
    candidates: Option<Vec<String>>,
    #[arg(long)]
    max_set_size: Option<usize>,
    /// Stop once the running intersection is empty.
    #[arg(long)]
    early_exit: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CitestArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    test: TestArgs,
    /// Conditioning predictors; empty for the unconditional test.
    #[arg(long, value_delimiter = ',', default_value = "")]
    set: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum StatTest {
    Fisher,
    Wilcoxon,
    Ks,
    Levene,
    FTest,
    Proportion,
}

#[derive(Debug, Args)]
struct StattestArgs {
    test: StatTest,
    /// First sample (wilcoxon, ks; squared errors of the restricted model for f-test).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    a: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    b: Vec<f64>,
    /// Levene groups separated by `;`, values by `,`.
    #[arg(long, allow_hyphen_values = true)]
    groups: Option<String>,
    /// 2×2 table `a,b,c,d` read by rows.
    #[arg(long, value_delimiter = ',')]
    table: Vec<i64>,
    /// Proportion counts `k1,n1,k2,n2`.
    #[arg(long, value_delimiter = ',')]
    counts: Vec<u64>,
    #[arg(long, default_value = "two-sided")]
    alternative: Alternative,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Grid in TOML; built-in desk-scale defaults otherwise.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct AggregateArgs {
    results: PathBuf,
    /// Strata among n, id, target, interv, multiplic, strength, meanshift, shift, df.
    #[arg(long, value_delimiter = ',')]
    by: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("model").required(true).args(["figure7", "chain"])))]
struct SimulateArgs {
    /// Six-node benchmark graph with a randomly drawn setting.
    #[arg(long)]
    figure7: bool,
    /// Three-node chain with six shifted environments.
    #[arg(long)]
    chain: bool,
    #[arg(long, default_value_t = 300)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Setting index within the seed's stream of random settings.
    #[arg(long, default_value_t = 0)]
    index: u64,
    #[arg(long)]
    target: Option<usize>,
    #[arg(long)]
    df: Option<u32>,
    /// Nonlinearity: 1 identity, 2 relu, 3 signed square root, 4 sine.
    #[arg(long)]
    id: Option<u8>,
    #[arg(long)]
    multiplicative: Option<bool>,
    /// Shift interventions when true, do-interventions when false.
    #[arg(long)]
    shift: Option<bool>,
    #[arg(long)]
    strength: Option<f64>,
    #[arg(long)]
    meanshift: Option<f64>,
    /// all, rand or close.
    #[arg(long)]
    interv: Option<nlicp::bench::Interv>,
    /// Intervene on exactly these nodes in environments 2 and 3.
    #[arg(long, value_delimiter = ',')]
    intervene: Option<Vec<usize>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AceArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    test: TestArgs,
    /// Intervened predictor values, in column order.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x_tilde: Vec<f64>,
    /// Reference predictor values, in column order.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x: Vec<f64>,
    /// Regressor for the bands: gam, rf or ols.
    #[arg(long, default_value = "gam")]
    regressor: nlicp::regress::RegressorKind,
    #[arg(long, default_value_t = 100)]
    bootstrap: usize,
    /// iid, or block:L for the panel block bootstrap.
    #[arg(long, default_value = "iid")]
    resampling: nlicp::icp::BootstrapKind,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::MissingColumn(_) | Error::Config(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(j) = cli.jobs {
        if !matches!(cli.command, Command::Bench(_)) {
            // Ignored if a pool already exists; results do not depend on it.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global();
        }
    }
    let result = match &cli.command {
        Command::Run(a) => commands::run(a),
        Command::Citest(a) => commands::citest(a),
        Command::Stattest(a) => commands::stattest(a),
        Command::Bench(a) => commands::bench(a, cli.jobs),
        Command::BenchAggregate(a) => commands::bench_aggregate(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Ace(a) => commands::ace(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
