//! `neurise`: generate models and samples, fit screening estimators and
//! evaluate them. Every run writes `manifest.json` into its output directory;
//! passing that manifest back as `--config` repeats the run.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use commands::Run;
use config::{
    resolve, CliError, CliResult, EvalConfig, ExpandConfig, FitConfig, GenerateConfig,
    Overrides, Penalty, SampleConfig,
};

#[derive(Parser)]
#[command(name = "neurise", version, about = "Interaction screening experiments")]
struct Cli {
    /// Worker threads for per-variable fits and sampling chains.
    #[arg(long, global = true, env = "NEURISE_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a ground-truth model and draw samples from it.
    Generate(GenerateArgs),
    /// Draw samples from a model, learned conditionals or an energy network.
    Sample(SampleArgs),
    /// Fit GRISE, NeurISE, structure or full-energy models to samples.
    Fit(FitArgs),
    /// Compare learned artifacts against a ground truth.
    Eval(EvalArgs),
    /// Fourier spectrum of an energy or partial energy.
    Expand(ExpandArgs),
}

#[derive(Args)]
struct Common {
    /// JSON config file or a previous run's manifest.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn apply(&self, o: &mut Overrides) {
        o.set("seed", &self.seed).set("out", &self.out);
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    /// one-d, er, hypergraph or random-hypergraph.
    #[arg(long)]
    generator: Option<String>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    order: Option<usize>,
    /// Comma-separated chain strengths, one per order.
    #[arg(long, value_delimiter = ',')]
    theta: Option<Vec<f64>>,
    #[arg(long)]
    degree: Option<f64>,
    /// Strength interval `lo,hi`.
    #[arg(long, value_delimiter = ',')]
    interval: Option<Vec<f64>>,
    /// Give every strength an independent random sign.
    #[arg(long)]
    signed: bool,
    #[arg(long)]
    term_order: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    /// exact or gibbs.
    #[arg(long)]
    sampler: Option<String>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thinning: Option<usize>,
}

impl GenerateArgs {
    fn overrides(&self) -> Overrides {
        let mut o = Overrides::default();
        self.common.apply(&mut o);
        o.set("generator", &self.generator)
            .set("p", &self.p)
            .set("order", &self.order)
            .set("theta", &self.theta)
            .set("degree", &self.degree)
            .set("interval", &self.interval)
            .flag("signed", self.signed)
            .set("term_order", &self.term_order)
            .set("n", &self.n)
            .set("sampler", &self.sampler)
            .set("chains", &self.chains)
            .set("burn_in", &self.burn_in)
            .set("thinning", &self.thinning);
        o
    }
}

#[derive(Args)]
struct SourceArgs {
    /// Explicit model JSON.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Output directory of `fit`.
    #[arg(long)]
    learned: Option<PathBuf>,
    /// Energy network JSON.
    #[arg(long)]
    energy_net: Option<PathBuf>,
}

impl SourceArgs {
    fn apply(&self, o: &mut Overrides) {
        o.set("model", &self.model)
            .set("learned", &self.learned)
            .set("energy_net", &self.energy_net);
    }
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    sampler: Option<String>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thinning: Option<usize>,
}

impl SampleArgs {
    fn overrides(&self) -> Overrides {
        let mut o = Overrides::default();
        self.common.apply(&mut o);
        self.source.apply(&mut o);
        o.set("n", &self.n)
            .set("sampler", &self.sampler)
            .set("chains", &self.chains)
            .set("burn_in", &self.burn_in)
            .set("thinning", &self.thinning);
        o
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    /// Sample file.
    #[arg(long)]
    samples: Option<PathBuf>,
    /// grise, neurise, structure or energy.
    #[arg(long)]
    method: Option<String>,
    /// GRISE interaction order.
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    basis: Option<String>,
    /// penalized or constrained.
    #[arg(long)]
    mode: Option<String>,
    /// GRISE penalty: a number or `auto`.
    #[arg(long)]
    lambda: Option<Penalty>,
    /// Constant `c` in `auto = c * sqrt(ln p / n)`.
    #[arg(long)]
    lambda_c: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    minibatch: Option<usize>,
    /// adam or sgd.
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    final_lr_fraction: Option<f64>,
    /// Input-layer penalty: a number or `auto`.
    #[arg(long)]
    lambda_in: Option<Penalty>,
    #[arg(long)]
    zero_input_init: bool,
    #[arg(long)]
    validation_fraction: Option<f64>,
    #[arg(long)]
    log_every: Option<usize>,
    /// stddev-outlier, rule-of-thumb or manual.
    #[arg(long)]
    threshold: Option<String>,
    #[arg(long)]
    threshold_fraction: Option<f64>,
    #[arg(long)]
    threshold_c: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
}

impl FitArgs {
    fn overrides(&self) -> Overrides {
        let mut o = Overrides::default();
        self.common.apply(&mut o);
        o.set("samples", &self.samples)
            .set("method", &self.method)
            .set("order", &self.order)
            .set("basis", &self.basis)
            .set("mode", &self.mode)
            .set("lambda", &self.lambda)
            .set("lambda_c", &self.lambda_c)
            .set("gamma", &self.gamma)
            .set("tol", &self.tol)
            .set("max_iter", &self.max_iter)
            .set("depth", &self.depth)
            .set("width", &self.width)
            .set("epochs", &self.epochs)
            .set("minibatch", &self.minibatch)
            .set("optimizer", &self.optimizer)
            .set("lr", &self.lr)
            .set("final_lr_fraction", &self.final_lr_fraction)
            .set("lambda_in", &self.lambda_in)
            .flag("zero_input_init", self.zero_input_init)
            .set("validation_fraction", &self.validation_fraction)
            .set("log_every", &self.log_every)
            .set("threshold", &self.threshold)
            .set("threshold_fraction", &self.threshold_fraction)
            .set("threshold_c", &self.threshold_c)
            .set("tau", &self.tau);
        o
    }
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// conditional-error, tvd, spectrum, energy-gap or structure.
    #[arg(long)]
    metric: Option<String>,
    /// Ground-truth model JSON.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Output directory of `fit`.
    #[arg(long)]
    learned: Option<PathBuf>,
    /// Training sample count for the `n` column.
    #[arg(long)]
    n: Option<usize>,
    /// Samples per draw in the TVD protocol.
    #[arg(long)]
    n_draw: Option<usize>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thinning: Option<usize>,
    #[arg(long)]
    site: Option<usize>,
    #[arg(long)]
    max_order: Option<usize>,
}

impl EvalArgs {
    fn overrides(&self) -> Overrides {
        let mut o = Overrides::default();
        self.common.apply(&mut o);
        o.set("metric", &self.metric)
            .set("truth", &self.truth)
            .set("learned", &self.learned)
            .set("n", &self.n)
            .set("n_draw", &self.n_draw)
            .set("chains", &self.chains)
            .set("burn_in", &self.burn_in)
            .set("thinning", &self.thinning)
            .set("site", &self.site)
            .set("max_order", &self.max_order);
        o
    }
}

#[derive(Args)]
struct ExpandArgs {
    /// JSON config file or a previous run's manifest.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    source: SourceArgs,
    /// Expand the partial energy of this variable.
    #[arg(long)]
    site: Option<usize>,
}

impl ExpandArgs {
    fn overrides(&self) -> Overrides {
        let mut o = Overrides::default();
        o.set("out", &self.out).set("site", &self.site);
        self.source.apply(&mut o);
        o
    }
}

#[derive(Serialize)]
struct Manifest<'a, C> {
    command: &'a str,
    version: &'a str,
    config: &'a C,
    status: &'a str,
    error: Option<String>,
    outputs: Vec<PathBuf>,
    summary: Value,
}

/// Resolves the config, runs the command and always leaves a manifest behind
/// once the output directory exists.
fn execute<C, F>(name: &str, file: Option<&Path>, overrides: Overrides, out: F, body: fn(&mut C, &mut Run) -> CliResult<()>) -> CliResult<()>
where
    C: Default + Serialize + serde::de::DeserializeOwned,
    F: Fn(&C) -> PathBuf,
{
    let mut cfg: C = resolve(file, overrides)?;
    let dir = out(&cfg);
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::config(format!("{}: {e}", dir.display())))?;
    let mut run = Run::default();
    let result = body(&mut cfg, &mut run);
    let manifest = Manifest {
        command: name,
        version: env!("CARGO_PKG_VERSION"),
        config: &cfg,
        status: if result.is_ok() { "ok" } else { "failed" },
        error: result.as_ref().err().map(|e| e.message.clone()),
        outputs: run.outputs,
        summary: Value::Object(run.summary),
    };
    neurise_core::io::write_json(dir.join("manifest.json"), &manifest)?;
    result
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Generate(a) => execute(
            "generate",
            a.common.config.as_deref(),
            a.overrides(),
            |c: &GenerateConfig| c.out.clone(),
            commands::generate,
        ),
        Command::Sample(a) => execute(
            "sample",
            a.common.config.as_deref(),
            a.overrides(),
            |c: &SampleConfig| c.out.clone(),
            commands::sample,
        ),
        Command::Fit(a) => execute(
            "fit",
            a.common.config.as_deref(),
            a.overrides(),
            |c: &FitConfig| c.out.clone(),
            commands::fit,
        ),
        Command::Eval(a) => execute(
            "eval",
            a.common.config.as_deref(),
            a.overrides(),
            |c: &EvalConfig| c.out.clone(),
            commands::eval,
        ),
        Command::Expand(a) => execute(
            "expand",
            a.config.as_deref(),
            a.overrides(),
            |c: &ExpandConfig| c.out.clone(),
            commands::expand,
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(config::EXIT_CONFIG as u8);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .expect("thread pool is built once");
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
