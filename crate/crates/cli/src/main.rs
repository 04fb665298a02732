//! `probsr`: corpus generation, training, super-resolution, evaluation and
//! timing sweeps.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

use config::{load_config_file, RunConfig, SEED_ENV};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(probsr_core::Error),
}

impl From<probsr_core::Error> for CliError {
    fn from(e: probsr_core::Error) -> Self {
        match e {
            probsr_core::Error::Config(msg) => CliError::Usage(msg),
            other => CliError::Runtime(other),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Runtime(e) => {
                write!(f, "error: {e}")?;
                let mut src = std::error::Error::source(e);
                while let Some(s) = src {
                    write!(f, ": {s}")?;
                    src = s.source();
                }
                Ok(())
            }
        }
    }
}

#[derive(Parser)]
#[command(name = "probsr", version, about = "Probabilistic super-resolution of Poisson solutions")]
struct Cli {
    /// Settings file with `key = value` lines; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an LR training corpus (and HR truth for the test split).
    GenData(GenDataArgs),
    /// Fit the downscaling network by marginal likelihood.
    Train(TrainArgs),
    /// Sample the HR posterior for one LR field.
    Superres(SuperresArgs),
    /// Score ProbSR against bicubic upscaling on the test split.
    Eval(EvalArgs),
    /// Time direct HR solves against LR solve + inference.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SeedArg {
    /// Base seed (falls back to PROBSR_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args)]
struct ChainArgs {
    /// Chain length K.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    /// Langevin step size (default 0.01·σ²).
    #[arg(long, allow_negative_numbers = true)]
    gamma: Option<f64>,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long, allow_negative_numbers = true)]
    n: Option<i64>,
    #[arg(long)]
    l: Option<usize>,
    /// Also solve HR truth for training samples.
    #[arg(long)]
    with_hr: bool,
    /// HR truth policy: none, test-only or all.
    #[arg(long, conflicts_with = "with_hr")]
    hr: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Args)]
struct TrainArgs {
    /// Corpus manifest (file or directory).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    /// Posterior samples per datum, M.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    langevin_steps: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    gamma: Option<f64>,
    /// sgd or adam.
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Args)]
struct SuperresArgs {
    /// LR field (PSRF).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Network checkpoint (PSRN).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Forcing parameters a,b,c,d of the LR field.
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<String>,
    /// Also write every retained sample.
    #[arg(long)]
    save_samples: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    chain: ChainArgs,
    #[command(flatten)]
    model_args: ModelArgs,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Also write per-case mean/std fields and log-std heatmaps.
    #[arg(long)]
    fields: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    chain: ChainArgs,
    #[command(flatten)]
    model_args: ModelArgs,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated HR sizes, each a multiple of 4.
    #[arg(long, value_delimiter = ',')]
    resolutions: Option<Vec<usize>>,
    #[arg(long)]
    repeats: Option<usize>,
    /// Inference chain length per resolution.
    #[arg(long)]
    bench_steps: Option<usize>,
    /// Network checkpoint; defaults to a freshly initialised network.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    model_args: ModelArgs,
    #[command(flatten)]
    seed: SeedArg,
}

/// Collects the flags that were actually given.
#[derive(Default)]
struct Flags(Map<String, Value>);

impl Flags {
    fn set<T: serde::Serialize>(&mut self, key: &str, v: Option<T>) -> &mut Self {
        if let Some(v) = v {
            self.0.insert(key.into(), serde_json::to_value(v).expect("flag serializes"));
        }
        self
    }

    fn model(&mut self, m: ModelArgs) -> &mut Self {
        self.set("sigma", m.sigma).set("epsilon", m.epsilon)
    }

    fn chain(&mut self, c: ChainArgs) -> &mut Self {
        self.set("steps", c.steps)
            .set("burnin", c.burnin)
            .set("thin", c.thin)
            .set("gamma", c.gamma)
    }
}

fn collect_flags(command: Command, threads: Option<usize>) -> Result<(&'static str, Map<String, Value>), CliError> {
    let mut f = Flags::default();
    f.set("threads", threads);
    let name = match command {
        Command::GenData(a) => {
            if let Some(n) = a.n {
                if n < 1 {
                    return Err(CliError::Usage(format!("--n must be at least 1, got {n}")));
                }
            }
            let hr = if a.with_hr { Some("all".to_string()) } else { a.hr };
            f.set("n", a.n).set("l", a.l).set("hr", hr).set("out", a.out).set("seed", a.seed.seed);
            "gen-data"
        }
        Command::Train(a) => {
            f.set("data", a.data)
                .set("epochs", a.epochs)
                .set("lr", a.lr)
                .set("batch", a.batch)
                .set("samples", a.samples)
                .set("langevin_steps", a.langevin_steps)
                .set("gamma", a.gamma)
                .set("optimizer", a.optimizer)
                .set("channels", a.channels)
                .set("checkpoint_every", a.checkpoint_every)
                .set("resume", a.resume)
                .set("out", a.out)
                .set("seed", a.seed.seed)
                .model(a.model);
            "train"
        }
        Command::Superres(a) => {
            f.set("input", a.input)
                .set("model", a.model)
                .set("theta", a.theta)
                .set("save_samples", a.save_samples.then_some(true))
                .set("out", a.out)
                .set("seed", a.seed.seed)
                .chain(a.chain)
                .model(a.model_args);
            "superres"
        }
        Command::Eval(a) => {
            f.set("data", a.data)
                .set("model", a.model)
                .set("fields", a.fields.then_some(true))
                .set("out", a.out)
                .set("seed", a.seed.seed)
                .chain(a.chain)
                .model(a.model_args);
            "eval"
        }
        Command::Bench(a) => {
            f.set("resolutions", a.resolutions)
                .set("repeats", a.repeats)
                .set("bench_steps", a.bench_steps)
                .set("model", a.model)
                .set("out", a.out)
                .set("seed", a.seed.seed)
                .model(a.model_args);
            "bench"
        }
    };
    Ok((name, f.0))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = cli.config.as_deref().map(load_config_file).transpose()?;
    let (name, flags) = collect_flags(cli.command, cli.threads)?;
    let env_seed = std::env::var(SEED_ENV).ok().filter(|s| !s.is_empty());
    let config = RunConfig::resolve(name, env_seed.as_deref(), file, flags)?;
    config.validate()?;
    if let Some(t) = config.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot configure {t} threads: {e}")))?;
    }
    commands::dispatch(&config)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
