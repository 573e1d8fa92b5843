//! Command-line interface of the `l2m` binary.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use super::config::{ExperimentConfig, Method};
use super::manifest::{Invocation, LabeledInput};
use super::run::{execute, replay};
use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "l2m", version, about = "Uncertainty bands for small regression MLPs")]
pub struct Cli {
    /// Seed for the command's stochastic steps (data for gen-data, training
    /// for train, training and sampling for uq and compare).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory [default: current directory; for replay, the
    /// directory recorded in the manifest].
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,

    /// JSON experiment config; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the cubic toy dataset.
    GenData(GenDataArgs),
    /// Train the MAP network with AdamW and write a checkpoint.
    Train(TrainArgs),
    /// Run one uncertainty method and write its predictive bands.
    Uq(UqArgs),
    /// Merge predictive outputs (or run every method) and summarize.
    Compare(CompareArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub x_low: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub x_high: Option<f64>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct OptimFlags {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub eps_opt: Option<f64>,
    #[arg(long)]
    pub hidden_layers: Option<usize>,
    #[arg(long)]
    pub hidden_units: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Train with inverted dropout at this rate (for MC dropout).
    #[arg(long)]
    pub dropout_rate: Option<f64>,
    #[command(flatten)]
    pub optim: OptimFlags,
}

#[derive(Debug, Args)]
pub struct MethodFlags {
    /// Monte Carlo samples for the predictive summary.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub grid_low: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub grid_high: Option<f64>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Add observation noise σ in quadrature to the reported std.
    #[arg(long)]
    pub add_noise_sigma: Option<f64>,
    /// Numerical floor added to the L2M precision.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Ensemble and RPF size.
    #[arg(long)]
    pub members: Option<usize>,
    /// Dropout rate when mc-dropout trains its own network.
    #[arg(long)]
    pub dropout_rate: Option<f64>,
    /// RPF prior scale.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Train RPF members on the full dataset instead of bootstrap resamples.
    #[arg(long)]
    pub no_bootstrap: bool,
    #[arg(long)]
    pub swag_start: Option<usize>,
    #[arg(long)]
    pub swag_every: Option<usize>,
    #[arg(long)]
    pub hmc_step_size: Option<f64>,
    #[arg(long)]
    pub hmc_leapfrog_steps: Option<usize>,
    #[arg(long)]
    pub hmc_samples: Option<usize>,
    #[arg(long)]
    pub hmc_burn_in: Option<usize>,
    #[command(flatten)]
    pub optim: OptimFlags,
}

#[derive(Debug, Args)]
pub struct UqArgs {
    #[arg(value_enum)]
    pub method: Method,
    /// Training data (required except for l2m and mc-dropout).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Trained checkpoint (required for l2m and mc-dropout; HMC starts from it).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub flags: MethodFlags,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Predictive CSVs as `label=path` (or a path labeled by its stem).
    #[arg(long, num_args = 1..)]
    pub inputs: Vec<String>,
    /// Run methods on this dataset instead of merging existing outputs.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Methods to run with --dataset [default: all].
    #[arg(long, value_enum, value_delimiter = ',')]
    pub methods: Vec<Method>,
    #[arg(long)]
    pub inner_radius: Option<f64>,
    #[arg(long)]
    pub outer_radius: Option<f64>,
    #[command(flatten)]
    pub flags: MethodFlags,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub from_manifest: PathBuf,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn apply_optim(cfg: &mut ExperimentConfig, f: &OptimFlags) {
    set(&mut cfg.train.epochs, f.epochs);
    set(&mut cfg.train.lr, f.lr);
    set(&mut cfg.train.weight_decay, f.weight_decay);
    set(&mut cfg.train.beta1, f.beta1);
    set(&mut cfg.train.beta2, f.beta2);
    set(&mut cfg.train.eps_opt, f.eps_opt);
    set(&mut cfg.model.hidden_layers, f.hidden_layers);
    set(&mut cfg.model.hidden_units, f.hidden_units);
}

fn apply_method(cfg: &mut ExperimentConfig, f: &MethodFlags, seed: Option<u64>) {
    apply_optim(cfg, &f.optim);
    set(&mut cfg.train.seed, seed);
    set(&mut cfg.predictive.seed, seed);
    set(&mut cfg.predictive.samples, f.samples);
    set(&mut cfg.grid.low, f.grid_low);
    set(&mut cfg.grid.high, f.grid_high);
    set(&mut cfg.grid.points, f.grid_points);
    if f.add_noise_sigma.is_some() {
        cfg.predictive.add_noise_sigma = f.add_noise_sigma;
    }
    set(&mut cfg.l2m.eps, f.eps);
    set(&mut cfg.ensemble.members, f.members);
    set(&mut cfg.rpf.members, f.members);
    set(&mut cfg.mc_dropout.rate, f.dropout_rate);
    set(&mut cfg.rpf.beta, f.beta);
    if f.no_bootstrap {
        cfg.rpf.bootstrap = false;
    }
    set(&mut cfg.swag.start_epoch, f.swag_start);
    set(&mut cfg.swag.collect_every, f.swag_every);
    set(&mut cfg.hmc.step_size, f.hmc_step_size);
    set(&mut cfg.hmc.leapfrog_steps, f.hmc_leapfrog_steps);
    set(&mut cfg.hmc.num_samples, f.hmc_samples);
    set(&mut cfg.hmc.burn_in, f.hmc_burn_in);
}

/// Resolves the effective config and invocation, then runs it.
pub fn run(cli: Cli, argv: Vec<String>) -> Result<()> {
    if let Command::Replay(args) = &cli.command {
        if cli.config.is_some() || cli.seed.is_some() {
            return Err(Error::Usage(
                "replay takes its config and seeds from the manifest".into(),
            ));
        }
        replay(&args.from_manifest, cli.out_dir.as_deref(), argv)?;
        return Ok(());
    }
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let invocation = match cli.command {
        Command::GenData(a) => {
            set(&mut cfg.data.n, a.n);
            set(&mut cfg.data.x_low, a.x_low);
            set(&mut cfg.data.x_high, a.x_high);
            set(&mut cfg.data.noise_sigma, a.noise_sigma);
            set(&mut cfg.data.seed, cli.seed);
            Invocation::GenData
        }
        Command::Train(a) => {
            apply_optim(&mut cfg, &a.optim);
            set(&mut cfg.train.seed, cli.seed);
            set(&mut cfg.model.dropout_rate, a.dropout_rate);
            Invocation::Train { dataset: a.dataset }
        }
        Command::Uq(a) => {
            apply_method(&mut cfg, &a.flags, cli.seed);
            Invocation::Uq {
                method: a.method,
                dataset: a.dataset,
                checkpoint: a.checkpoint,
            }
        }
        Command::Compare(a) => {
            apply_method(&mut cfg, &a.flags, cli.seed);
            set(&mut cfg.compare.inner_radius, a.inner_radius);
            set(&mut cfg.compare.outer_radius, a.outer_radius);
            let inputs = a
                .inputs
                .iter()
                .map(|s| LabeledInput::parse(s))
                .collect::<Result<Vec<_>>>()?;
            Invocation::Compare {
                inputs,
                dataset: a.dataset,
                methods: a.methods,
            }
        }
        Command::Replay(_) => unreachable!(),
    };
    let out_dir = cli.out_dir.unwrap_or_else(|| PathBuf::from("."));
    execute(invocation, &cfg, &out_dir, argv)?;
    Ok(())
}

/// Sizes the global thread pool from `L2M_THREADS` when set.
pub fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var("L2M_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Error::Usage(format!("L2M_THREADS must be a positive integer, got {raw:?}")))?;
    if n == 0 {
        return Err(Error::Usage("L2M_THREADS must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Usage(format!("cannot size the thread pool: {e}")))
}
