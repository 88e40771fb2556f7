//! failprob: rare-event failure probability estimation pipeline.
//!
//! Exit codes are a stable scripting contract: 0 success, 2 usage or
//! configuration errors, 3 runtime/oracle errors, 4 analytics with empty
//! input (e.g. TV over zero failures).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use failprob_core::space::ParamSpace;
use failprob_core::Error;

#[derive(Parser)]
#[command(name = "failprob", version, about = "Rare-event failure probability estimation")]
struct Cli {
    /// Master seed; overrides the seed in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for result files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads for parallel sections (0 = rayon default).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,

    /// Experiment config file (run, baseline, sweep, coverage).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect a template's parameter space; optionally render one instance.
    Space {
        /// Template definition file.
        #[arg(long)]
        template: PathBuf,
        /// Render the instance at this index.
        #[arg(long)]
        render: Option<u128>,
    },
    /// Generate synthetic oracles with known ground truth.
    Synth {
        #[command(subcommand)]
        kind: SynthKind,
    },
    /// Learn a failure-prone proposal and estimate the failure probability.
    Run,
    /// Uniform-sampling baseline with the exact binomial interval.
    Baseline,
    /// Execute an (N, M, lambda) grid with replicate coverage, frontier, and gains.
    Sweep,
    /// Verify confidence-interval coverage over replicate sample sets.
    Coverage,
    /// Per-dimension failure concentration (TV distances) from a samples file.
    Tv {
        /// Samples JSONL ({index, weight, failed}) from run/baseline output.
        #[arg(long)]
        samples: PathBuf,
        /// Template file defining the space.
        #[arg(long)]
        template: Option<PathBuf>,
        /// Comma-separated space shape, e.g. 10,10,10.
        #[arg(long)]
        shape: Option<String>,
    },
    /// Tabulate estimate.json files under a directory into one CSV.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum SynthKind {
    /// Planted Bernoulli failure model.
    Planted {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Cached generation pool with designed wrong-answer modes.
    Pool {
        #[arg(long)]
        spec: PathBuf,
    },
}

fn required_config(cli: &Cli) -> Result<&PathBuf, Error> {
    cli.config
        .as_ref()
        .ok_or_else(|| Error::Contract("this command requires --config <file>".into()))
}

fn tv_space(
    template: Option<&PathBuf>,
    shape: Option<&String>,
) -> Result<std::sync::Arc<ParamSpace>, Error> {
    match (template, shape) {
        (Some(path), None) => {
            let tpl = failprob_core::template::Template::load(path)?;
            Ok(tpl.space().clone())
        }
        (None, Some(text)) => {
            let dims = text
                .split(',')
                .map(|s| s.trim().parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| Error::Contract(format!("bad --shape '{text}'")))?;
            Ok(ParamSpace::from_shape(&dims)?.into_arc())
        }
        _ => Err(Error::Contract(
            "tv requires exactly one of --template or --shape".into(),
        )),
    }
}

/// Exit-code classification. Configuration and contract problems are usage
/// errors (2); oracle, cache, and I/O problems during execution are runtime
/// errors (3); analytics over empty inputs exit 4.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::EmptyInput(_) => 4,
        Error::Contract(_)
        | Error::InvalidSpace(_)
        | Error::Template(_)
        | Error::Expr(_)
        | Error::InvalidProposal(_)
        | Error::Json(_)
        | Error::Io(_) => 2,
        Error::Oracle { source, .. } => exit_code(source).max(3),
        _ => 3,
    }
}

fn dispatch(cli: &Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Space { template, render } => commands::cmd_space(template, *render),
        Command::Synth { kind } => match kind {
            SynthKind::Planted { spec } => commands::cmd_synth_planted(spec, &cli.out),
            SynthKind::Pool { spec } => commands::cmd_synth_pool(spec, &cli.out),
        },
        Command::Run => commands::cmd_run(required_config(cli)?, cli.seed, &cli.out),
        Command::Baseline => commands::cmd_baseline(required_config(cli)?, cli.seed, &cli.out),
        Command::Sweep => commands::cmd_sweep(required_config(cli)?, cli.seed, &cli.out),
        Command::Coverage => commands::cmd_coverage(required_config(cli)?, cli.seed, &cli.out),
        Command::Tv { samples, template, shape } => {
            let space = tv_space(template.as_ref(), shape.as_ref())?;
            commands::cmd_tv(samples, space, &cli.out)
        }
        Command::Report { dir } => commands::cmd_report(dir, &cli.out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    #[cfg(feature = "parallel")]
    if cli.workers > 0 {
        // Ignore failure: the pool can only be initialized once.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.workers)
            .build_global();
    }

    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
