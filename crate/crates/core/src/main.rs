use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use popsan::commands::{
    cmd_ablate, cmd_convert, cmd_deploy_eval, cmd_quantize, cmd_train, eval_policy, load_policy, load_run_config,
    ConvertOptions, PopulationTarget,
};
use popsan::config::{parse_override_args, RunConfig};
use popsan::conversion::{ResetMode, DEFAULT_FACTORS};
use popsan::gradients::gradcheck;
use popsan::{Error, Result};

#[derive(Parser)]
#[command(name = "popsan", version, about = "Population-coded spiking actor networks for continuous control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent; trailing `--key value` pairs override the config.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
        overrides: Vec<String>,
    },
    /// Evaluate any checkpoint deterministically.
    Eval {
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check the closed-form backward pass against the unrolled oracle and
    /// finite differences on random small networks.
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        rounds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-10)]
        tolerance: f64,
        #[arg(long, default_value_t = 1e-6)]
        fd_tolerance: f64,
    },
    /// Convert a trained population DNN actor into a rate-coded SNN.
    Convert {
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 5)]
        timesteps: usize,
        #[arg(long, default_value_t = ResetMode::Soft)]
        reset: ResetMode,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_FACTORS.to_vec())]
        factors: Vec<f64>,
        #[arg(long, default_value_t = 2_000)]
        profile_steps: usize,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Quantize the spiking layers of a PopSAN checkpoint.
    Quantize {
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 8)]
        bits: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a quantized (or full-precision PopSAN) checkpoint on the
    /// simulated chip and report synaptic operations.
    DeployEval {
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Train one PopSAN per population size, encoder setting and seed.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long, value_enum, default_value_t = PopulationTarget::Input)]
        target: PopulationTarget,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0u64, 1, 2, 3, 4])]
        seeds: Vec<u64>,
        /// Also train with the receptive fields frozen.
        #[arg(long)]
        with_frozen: bool,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
        overrides: Vec<String>,
    },
    /// Print the default configuration as TOML.
    Defaults,
}

fn run_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    load_run_config(path, &parse_override_args(overrides)?)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train { config, overrides } => {
            let cfg = run_config(config.as_deref(), &overrides)?;
            let out = cmd_train(&cfg)?;
            match out.metrics.last() {
                Some(last) => println!(
                    "trained {} steps: final return {:.2} ± {:.2}",
                    last.step, last.eval_return_mean, last.eval_return_std
                ),
                None => println!("no training steps requested"),
            }
            println!("outputs in {}", cfg.run.out_dir);
            Ok(true)
        }
        Command::Eval {
            checkpoint,
            episodes,
            seed,
        } => {
            let stats = eval_policy(&load_policy(&checkpoint)?, episodes, seed)?;
            println!("return {:.3} ± {:.3} over {episodes} episodes", stats.mean, stats.std);
            Ok(true)
        }
        Command::Gradcheck {
            config,
            rounds,
            seed,
            tolerance,
            fd_tolerance,
        } => {
            let cfg = run_config(config.as_deref(), &[])?;
            let report = gradcheck(rounds, seed, &cfg.surrogate())?;
            let pass = report.passes(tolerance, fd_tolerance);
            println!(
                "{} instances: oracle max rel. err {:.3e} (tol {tolerance:e}), finite-difference max rel. err {:.3e} (tol {fd_tolerance:e}): {}",
                report.instances,
                report.oracle_error,
                report.fd_error,
                if pass { "pass" } else { "FAIL" }
            );
            Ok(pass)
        }
        Command::Convert {
            checkpoint,
            timesteps,
            reset,
            factors,
            profile_steps,
            episodes,
            seed,
            out_dir,
        } => {
            let opts = ConvertOptions {
                timesteps,
                reset,
                factors,
                profile_steps,
                episodes,
                seed,
            };
            let (_, grid) = cmd_convert(&checkpoint, &opts, &out_dir)?;
            let best = &grid.stats[grid.best];
            println!(
                "converted ({timesteps}, {reset}): factor {} return {:.3} ± {:.3}",
                grid.best_factor(),
                best.mean,
                best.std
            );
            Ok(true)
        }
        Command::Quantize { checkpoint, bits, out } => {
            cmd_quantize(&checkpoint, bits, &out)?;
            println!("wrote {bits}-bit network to {}", out.display());
            Ok(true)
        }
        Command::DeployEval {
            checkpoint,
            episodes,
            seed,
            out_dir,
        } => {
            let (stats, ops) = cmd_deploy_eval(&checkpoint, episodes, seed, &out_dir)?;
            println!("return {:.3} ± {:.3} over {episodes} episodes", stats.mean, stats.std);
            println!(
                "{} synaptic ops per inference over {} inferences",
                ops.synaptic_ops_per_inference(),
                ops.inferences
            );
            Ok(true)
        }
        Command::Ablate {
            config,
            sizes,
            target,
            seeds,
            with_frozen,
            overrides,
        } => {
            let cfg = run_config(config.as_deref(), &overrides)?;
            let encoders: &[bool] = if with_frozen { &[true, false] } else { &[true] };
            for r in cmd_ablate(&cfg, &sizes, target, encoders, &seeds)? {
                println!(
                    "size {:>3} {} seed {}: final return {:.2}, encoding distance {:.3}",
                    r.pop_size,
                    if r.learn_encoder { "learned" } else { "frozen " },
                    r.seed,
                    r.final_return,
                    r.encoding_distance
                );
            }
            Ok(true)
        }
        Command::Defaults => {
            print!("{}", RunConfig::default().to_toml_string());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
