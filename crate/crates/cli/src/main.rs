//! `eqpnp`: runs experiment recipes from TOML configs.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 divergence reported,
//! 3 config or usage error, 4 verifier failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use eqpnp::config::{ExperimentConfig, Recipe};
use eqpnp::experiment::{exit_status_for, run_experiment, ExitStatus, Outcome};

const DEFAULT_SEED: u64 = 0;
const RUNTIME_FAILURE: u8 = 1;

#[derive(Parser, Debug)]
#[command(
    name = "eqpnp",
    version,
    about = "Equivariant plug-and-play solvers, samplers and verifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// PnP forward-backward or RED gradient descent.
    Solve(ConfigArgs),
    /// Unadjusted Langevin sampling; writes mean and variance images.
    Sample(ConfigArgs),
    /// Jacobian symmetry and Lipschitz tables over random patches.
    Analyze(ConfigArgs),
    /// One denoiser application per configured mode.
    Denoise(ConfigArgs),
    /// The proposition verifiers; config optional.
    VerifyProps(OptionalConfigArgs),
    /// Both two-dimensional toy examples with trajectory CSVs; config optional.
    Toy2d(OptionalConfigArgs),
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Config files; several are run in parallel, each on its own thread.
    #[arg(required = true)]
    configs: Vec<PathBuf>,
    /// Overrides `output_dir` (only with a single config).
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OptionalConfigArgs {
    configs: Vec<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Seed when no config is given.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

fn default_config(recipe: Recipe, seed: u64, output_dir: Option<PathBuf>) -> ExperimentConfig {
    let text = format!(
        "recipe = \"{}\"\nseed = {seed}\noutput_dir = \"eqpnp-out/{}\"\n",
        recipe.as_str(),
        recipe.as_str()
    );
    let mut cfg =
        ExperimentConfig::from_toml_str(&text, "default").expect("built-in default parses");
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    cfg
}

fn load(path: &Path, recipe: Recipe, output_dir: Option<&Path>) -> eqpnp::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if cfg.recipe != recipe {
        return Err(eqpnp::Error::Config(format!(
            "{}: recipe `{}` does not match subcommand `{}`",
            path.display(),
            cfg.recipe.as_str(),
            recipe.as_str()
        )));
    }
    if let Some(dir) = output_dir {
        cfg.output_dir = dir.to_path_buf();
    }
    Ok(cfg)
}

fn report(label: &str, result: &anyhow::Result<Outcome>) -> u8 {
    match result {
        Ok(outcome) => {
            println!("== {label}");
            print!("{}", outcome.summary);
            println!("wall_time_s={:.3}", outcome.wall_time);
            outcome.status.code() as u8
        }
        Err(err) => {
            eprintln!("{label}: error: {err:#}");
            err.downcast_ref::<eqpnp::Error>()
                .and_then(exit_status_for)
                .map_or(RUNTIME_FAILURE, |s| s.code() as u8)
        }
    }
}

fn run_one(cfg: eqpnp::Result<ExperimentConfig>, label: &str) -> anyhow::Result<Outcome> {
    let cfg = cfg?;
    run_experiment(&cfg).with_context(|| format!("running {label}"))
}

fn worst(codes: impl IntoIterator<Item = u8>) -> u8 {
    // Config and verifier failures outrank divergence; runtime failures outrank success only.
    let rank = |c: u8| match c {
        0 => 0,
        1 => 1,
        2 => 2,
        4 => 3,
        _ => 4,
    };
    codes.into_iter().max_by_key(|&c| rank(c)).unwrap_or(0)
}

fn run(recipe: Recipe, configs: &[PathBuf], output_dir: Option<PathBuf>, seed: u64) -> u8 {
    if configs.is_empty() {
        let cfg = default_config(recipe, seed, output_dir);
        return report(
            recipe.as_str(),
            &run_experiment(&cfg).map_err(anyhow::Error::from),
        );
    }
    if configs.len() > 1 && output_dir.is_some() {
        eprintln!("error: --output-dir needs a single config");
        return ExitStatus::ConfigError.code() as u8;
    }
    let results: Vec<(String, anyhow::Result<Outcome>)> = thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .map(|path| {
                let out = output_dir.as_deref();
                s.spawn(move || {
                    let label = path.display().to_string();
                    let result = run_one(load(path, recipe, out), &label);
                    (label, result)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join().unwrap_or_else(|_| {
                    (
                        "<thread>".into(),
                        Err(anyhow!("experiment thread panicked")),
                    )
                })
            })
            .collect()
    });
    worst(results.iter().map(|(label, r)| report(label, r)))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                ExitStatus::ConfigError.code() as u8
            } else {
                0
            });
        }
    };
    let code = match cli.command {
        Command::Solve(a) => run(Recipe::Solve, &a.configs, a.output_dir, DEFAULT_SEED),
        Command::Sample(a) => run(Recipe::Sample, &a.configs, a.output_dir, DEFAULT_SEED),
        Command::Analyze(a) => run(Recipe::Analyze, &a.configs, a.output_dir, DEFAULT_SEED),
        Command::Denoise(a) => run(Recipe::Denoise, &a.configs, a.output_dir, DEFAULT_SEED),
        Command::VerifyProps(a) => run(Recipe::VerifyProps, &a.configs, a.output_dir, a.seed),
        Command::Toy2d(a) => run(Recipe::Toy2d, &a.configs, a.output_dir, a.seed),
    };
    ExitCode::from(code)
}
