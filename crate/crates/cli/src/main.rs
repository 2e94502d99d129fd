//! `martdev`: martingale moderate-deviation experiments from the command line.

mod commands;
mod config;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ExperimentConfig, ListSpec, Scalar};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or parameters: exit 2.
    Usage(String),
    /// A checked inequality or certification failed: exit 1.
    Assertion(String),
    /// Anything else that stopped the run: exit 1.
    Runtime(String),
}

impl From<martdev_core::Error> for CliError {
    fn from(e: martdev_core::Error) -> Self {
        use martdev_core::Error as E;
        match e {
            E::InvalidParameter { .. }
            | E::InvalidLaw(_)
            | E::InfeasibleConstruction(_)
            | E::InvalidChain(_)
            | E::Config(_) => CliError::Usage(e.to_string()),
            E::CertificationFailed { .. } => CliError::Assertion(e.to_string()),
            E::NoRoot(_) | E::Io(_) => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "martdev",
    version,
    about = "Moderate-deviation experiments for martingales"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment config; flags override its fields
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads (0 = all cores); never changes results
    #[arg(long, global = true, value_name = "N", default_value_t = 0)]
    workers: usize,
    /// Directory for artifacts; without it CSV goes to stdout
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every closed-form inequality suite
    Verify,
    /// Certify a model and print its constants as JSON
    Certify(ModelArgs),
    /// Tilted tail estimates against the Gaussian tail
    Tail(TailArgs),
    /// Moderate-deviation rate scan over n
    Mdp(MdpArgs),
    /// Quantile coupling of a Rademacher sum with a standard normal
    Couple(CoupleArgs),
    /// Interlaced block sums of a finite Markov chain
    Mixing(MixingArgs),
}

#[derive(Args, Debug, Default)]
struct ModelArgs {
    /// rademacher | two_point | regime_switch | heavy_left
    #[arg(long)]
    model: Option<String>,
    /// Horizon, or a list `a,b,c` / range `a:b:step` where accepted
    #[arg(long)]
    n: Option<String>,
    /// Model parameter `key=value`, repeatable
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
}

#[derive(Args, Debug)]
struct TailArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Threshold grid `a:b:step` or `x1,x2,…`
    #[arg(long)]
    x: Option<String>,
    /// Samples per grid point, e.g. `1e6`
    #[arg(long)]
    budget: Option<String>,
    /// Points above alpha/ε_n are flagged out of range
    #[arg(long)]
    alpha: Option<f64>,
    /// Constant multiplying the bound
    #[arg(long)]
    c: Option<f64>,
    /// δ_n from N (default) or from L
    #[arg(long, value_name = "n|l")]
    delta_from: Option<String>,
}

#[derive(Args, Debug)]
struct MdpArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    budget: Option<String>,
    /// Exponent γ of a_n = n^γ
    #[arg(long)]
    rate: Option<f64>,
    /// Level b in P(X_n ≥ a_n b)
    #[arg(long)]
    b: Option<f64>,
}

#[derive(Args, Debug)]
struct CoupleArgs {
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    budget: Option<String>,
    /// Event {|W| ≤ alpha·√n}
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args, Debug)]
struct MixingArgs {
    /// JSON chain `{name, states, P, f}`
    #[arg(long, value_name = "FILE")]
    chain: Option<PathBuf>,
    /// Two-state chain with flip probabilities `a,b`
    #[arg(long, value_name = "A,B")]
    two_state: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    x: Option<String>,
    #[arg(long)]
    budget: Option<String>,
    /// Block length exponent, m = ⌊n^alpha⌋
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
}

fn list(s: Option<String>) -> Option<ListSpec> {
    s.map(ListSpec::Text)
}

fn budget(s: Option<String>) -> Option<Scalar> {
    s.map(Scalar::Text)
}

fn model_overlay(args: ModelArgs) -> Result<ExperimentConfig, CliError> {
    let mut params = BTreeMap::new();
    for p in args.params {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--param `{p}` is not key=value")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("--param `{p}`: value is not a number")))?;
        params.insert(k.trim().to_string(), v);
    }
    Ok(ExperimentConfig {
        model: args.model,
        n: list(args.n),
        params,
        ..Default::default()
    })
}

fn flags_overlay(command: Command) -> Result<(&'static str, ExperimentConfig), CliError> {
    Ok(match command {
        Command::Verify => ("verify", ExperimentConfig::default()),
        Command::Certify(m) => ("certify", model_overlay(m)?),
        Command::Tail(t) => (
            "tail",
            ExperimentConfig {
                x: list(t.x),
                budget: budget(t.budget),
                alpha: t.alpha,
                c: t.c,
                delta_from: t.delta_from,
                ..model_overlay(t.model)?
            },
        ),
        Command::Mdp(m) => (
            "mdp",
            ExperimentConfig {
                budget: budget(m.budget),
                rate: m.rate,
                b: m.b,
                ..model_overlay(m.model)?
            },
        ),
        Command::Couple(c) => (
            "couple",
            ExperimentConfig {
                n: list(c.n),
                budget: budget(c.budget),
                alpha: c.alpha,
                ..Default::default()
            },
        ),
        Command::Mixing(m) => {
            let two_state = match m.two_state {
                None => None,
                Some(s) => match config::parse_grid(&s, "two_state")?.as_slice() {
                    [a, b] => Some([*a, *b]),
                    _ => return Err(CliError::Usage("--two-state needs `a,b`".into())),
                },
            };
            (
                "mixing",
                ExperimentConfig {
                    chain_file: m.chain,
                    two_state,
                    n: list(m.n),
                    x: list(m.x),
                    budget: budget(m.budget),
                    alpha: m.alpha,
                    rho: m.rho,
                    ..Default::default()
                },
            )
        }
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    let base = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    let (name, flags) = flags_overlay(cli.command)?;
    let mut cfg = base.overlay(flags);
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    let engine = martdev_core::Engine::new(cli.workers)?;
    let ctx = commands::Context {
        engine,
        out: cli.out,
    };
    match name {
        "verify" => commands::verify(cfg, &ctx),
        "certify" => commands::certify(cfg, &ctx),
        "tail" => commands::tail(cfg, &ctx),
        "mdp" => commands::mdp(cfg, &ctx),
        "couple" => commands::couple(cfg, &ctx),
        _ => commands::mixing(cfg, &ctx),
    }
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
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Assertion(m)) => {
            eprintln!("FAILED: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
