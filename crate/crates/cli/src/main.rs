use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gensynth_cli::{
    cmd_check, cmd_eval, cmd_report, cmd_sample, cmd_synth, scorecard_row, Failure, SeedSpec,
    SynthArgs, EXIT_CHECK, EXIT_OK, EXIT_RUNTIME,
};
use gensynth_core::selfcheck::CheckOptions;

#[derive(Parser)]
#[command(
    name = "gensynth",
    version,
    about = "Learn generators of efficient feedforward networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run synthesis and write state.json, best_generator.json, report.csv, summary.json
    Synth(SynthCmd),
    /// Emit one network document per seed from a generator checkpoint
    Sample(SampleCmd),
    /// Train and score one network; prints a single CSV row
    Eval(EvalCmd),
    /// Re-render summary.json from a state checkpoint
    Report(ReportCmd),
    /// Run the built-in oracles
    Check(CheckCmd),
}

#[derive(Args)]
struct SynthCmd {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    verbose: bool,
    /// Continue from a saved state.json
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Stop once this many cycles have executed
    #[arg(long)]
    stop_after: Option<u64>,
}

#[derive(Args)]
struct SampleCmd {
    checkpoint: PathBuf,
    /// Comma-separated seed values
    #[arg(
        long,
        value_delimiter = ',',
        conflicts_with = "count",
        required_unless_present = "count"
    )]
    seeds: Vec<u64>,
    /// Use seeds 0..N
    #[arg(long)]
    count: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalCmd {
    network: PathBuf,
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct ReportCmd {
    state: PathBuf,
    /// Defaults to the state file's directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckCmd {
    #[arg(long, hide = true)]
    perturb_macs: bool,
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Synth(c) => {
            let args = SynthArgs {
                config: c.config,
                out: c.out,
                workers: c.workers,
                verbose: c.verbose,
                resume: c.resume,
                stop_after: c.stop_after,
            };
            let partial = args.stop_after.is_some();
            let best = cmd_synth(&args, &mut std::io::stderr())?;
            if best || partial {
                Ok(EXIT_OK)
            } else {
                eprintln!("no generator reached the satisfaction floor");
                Ok(EXIT_RUNTIME)
            }
        }
        Command::Sample(c) => {
            let spec = match c.count {
                Some(n) => SeedSpec::Count(n),
                None => SeedSpec::List(c.seeds),
            };
            cmd_sample(&c.checkpoint, &spec, &c.out)?;
            Ok(EXIT_OK)
        }
        Command::Eval(c) => {
            println!("{}", scorecard_row(&cmd_eval(&c.network, &c.config)?));
            Ok(EXIT_OK)
        }
        Command::Report(c) => {
            let out = c
                .out
                .unwrap_or_else(|| c.state.parent().map(PathBuf::from).unwrap_or_default());
            cmd_report(&c.state, &out)?;
            Ok(EXIT_OK)
        }
        Command::Check(c) => {
            let outcomes = cmd_check(CheckOptions {
                perturb_macs: c.perturb_macs,
            });
            for o in &outcomes {
                println!("{o}");
            }
            Ok(if outcomes.iter().all(|o| o.passed) {
                EXIT_OK
            } else {
                EXIT_CHECK
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
