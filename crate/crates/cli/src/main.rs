//! `storesim`: persona building, simulated A/B sessions and evaluation.

mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use storesim::evaluation::AlignmentMode;
use storesim::persona::PersonaMode;

use commands::Ctx;
use config::{PolicyKind, RunConfig};

#[derive(Parser)]
#[command(name = "storesim", version, about = "Simulated shoppers for storefront A/B tests")]
struct Cli {
    /// Master seed; overrides `master_seed` in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Persona construction from clickstreams.
    Personas {
        #[command(subcommand)]
        cmd: PersonasCmd,
    },
    /// Agent sessions against store variants.
    Simulate {
        #[command(subcommand)]
        cmd: SimulateCmd,
    },
    /// Reports over session logs and human clickstreams.
    Eval {
        #[command(subcommand)]
        cmd: EvalCmd,
    },
    /// Synthetic input fixtures.
    Synth {
        #[command(subcommand)]
        cmd: SynthCmd,
    },
}

#[derive(Subcommand)]
enum PersonasCmd {
    Build {
        #[arg(long)]
        clickstream: PathBuf,
        #[arg(long)]
        catalog: PathBuf,
    },
}

#[derive(Subcommand)]
enum SimulateCmd {
    Run {
        /// Store spec file (one document or `{"stores": [...]}`).
        #[arg(long)]
        stores: PathBuf,
        /// personas.json, or the directory `personas build` wrote to.
        #[arg(long)]
        personas: PathBuf,
        #[arg(long)]
        agents: Option<usize>,
        #[arg(long)]
        trials: Option<u32>,
        /// full_persona, intent_only or product_only.
        #[arg(long)]
        persona_mode: Option<PersonaMode>,
        #[arg(long, value_enum)]
        policy: Option<PolicyKind>,
        #[arg(long)]
        no_memory: bool,
        /// Reuse per-shop logs from an interrupted run with the same config and inputs.
        #[arg(long)]
        resume: bool,
    },
}

#[derive(Args)]
struct LogInputs {
    /// Session log files, or directories written by `simulate run`.
    #[arg(long, required = true, num_args = 1..)]
    logs: Vec<PathBuf>,
    #[arg(long)]
    truth: PathBuf,
}

#[derive(Subcommand)]
enum EvalCmd {
    Report {
        #[command(flatten)]
        inputs: LogInputs,
        /// per_trial or sign_of_mean.
        #[arg(long)]
        alignment_mode: Option<AlignmentMode>,
        #[arg(long)]
        resamples: Option<usize>,
    },
    Sensitivity {
        #[command(flatten)]
        inputs: LogInputs,
        /// Comma-separated agent budgets.
        #[arg(long, value_delimiter = ',')]
        budgets: Option<Vec<usize>>,
        #[arg(long)]
        resamples: Option<usize>,
    },
    Cohorts {
        #[arg(long)]
        clickstream: PathBuf,
        /// Fitted cluster model; fitted on the clickstream when absent.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 10)]
        restarts: usize,
    },
}

#[derive(Subcommand)]
enum SynthCmd {
    /// Shop pairs with designed A2C shifts plus matching ground truth.
    Oracle {
        #[arg(long, default_value_t = 20)]
        shops: usize,
        #[arg(long, default_value_t = 400)]
        sessions: usize,
    },
    /// One shop's sessions drawn from five behavioral cohorts.
    Cohorts {
        #[arg(long, default_value_t = 10_000)]
        sessions: usize,
    },
}

fn run(cli: Cli) -> Result<()> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Simulate {
            cmd: SimulateCmd::Run { agents, trials, persona_mode, policy, no_memory, .. },
        } => {
            config.agents_per_shop = agents.unwrap_or(config.agents_per_shop);
            config.trials = trials.unwrap_or(config.trials);
            config.persona_mode = persona_mode.unwrap_or(config.persona_mode);
            config.policy = policy.unwrap_or(config.policy);
            config.memory_enabled &= !no_memory;
        }
        Command::Eval { cmd: EvalCmd::Report { alignment_mode, resamples, .. } } => {
            config.eval.mode = alignment_mode.unwrap_or(config.eval.mode);
            config.eval.resamples = resamples.unwrap_or(config.eval.resamples);
        }
        Command::Eval { cmd: EvalCmd::Sensitivity { budgets, resamples, .. } } => {
            if let Some(b) = budgets {
                config.sensitivity.budgets = b.clone();
            }
            config.sensitivity.resamples = resamples.unwrap_or(config.sensitivity.resamples);
        }
        _ => {}
    }
    let config = config.seeded(cli.seed);
    if config.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build_global()
            .context("cannot start the worker pool")?;
    }
    let ctx = Ctx { config, out: cli.out };
    match cli.command {
        Command::Personas { cmd: PersonasCmd::Build { clickstream, catalog } } => {
            commands::personas_build(&ctx, &clickstream, &catalog)
        }
        Command::Simulate { cmd: SimulateCmd::Run { stores, personas, resume, .. } } => {
            commands::simulate_run(&ctx, &stores, &personas, resume)
        }
        Command::Eval { cmd } => match cmd {
            EvalCmd::Report { inputs, .. } => commands::eval_report(&ctx, &inputs.logs, &inputs.truth),
            EvalCmd::Sensitivity { inputs, .. } => commands::eval_sensitivity(&ctx, &inputs.logs, &inputs.truth),
            EvalCmd::Cohorts { clickstream, model, k, restarts } => {
                commands::eval_cohorts(&ctx, &clickstream, model.as_deref(), k, restarts)
            }
        },
        Command::Synth { cmd } => match cmd {
            SynthCmd::Oracle { shops, sessions } => commands::synth_oracle(&ctx, shops, sessions),
            SynthCmd::Cohorts { sessions } => commands::synth_cohorts(&ctx, sessions),
        },
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
