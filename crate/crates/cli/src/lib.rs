//! Command implementations behind the `gensynth` binary.

pub mod config;

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use gensynth_core::generator::GeneratorCheckpoint;
use gensynth_core::metrics::score;
use gensynth_core::selfcheck::{run_checks, CheckOptions, OracleOutcome};
use gensynth_core::synthesis::{RunOptions, SynthesisError, SynthesisState};
use gensynth_core::trainer::{evaluate, fit};
use gensynth_core::{serialize, Scorecard, Seed};

use config::{load_network, load_run};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CHECK: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

/// An error carrying the process exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn io_failure(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::runtime(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(io_failure(path))
}

fn synthesis_failure(e: SynthesisError) -> Failure {
    match e {
        SynthesisError::Config(_) | SynthesisError::DatasetMismatch { .. } => {
            Failure::config(e.to_string())
        }
        SynthesisError::Inquisitor(
            gensynth_core::inquisitor::InquisitorError::StimulusTooLarge { .. },
        ) => Failure::config(format!("synthesis.stimuli_n: {e}")),
        _ => Failure::runtime(e.to_string()),
    }
}

pub const STATE_FILE: &str = "state.json";
pub const BEST_FILE: &str = "best_generator.json";
pub const REPORT_FILE: &str = "report.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone)]
pub struct SynthArgs {
    pub config: PathBuf,
    pub out: PathBuf,
    pub workers: usize,
    pub verbose: bool,
    /// Continue a saved state instead of starting fresh.
    pub resume: Option<PathBuf>,
    /// Stop after this many executed cycles (the state can be resumed later).
    pub stop_after: Option<u64>,
}

/// Returns `true` iff a best checkpoint exists once the run stops.
pub fn cmd_synth(args: &SynthArgs, log: &mut dyn Write) -> Result<bool, Failure> {
    let run = load_run(&args.config)?;
    if args.workers == 0 {
        return Err(Failure::config("--workers must be >= 1"));
    }
    let opts = RunOptions {
        workers: args.workers,
    };
    let mut state = match &args.resume {
        Some(path) => {
            let state = SynthesisState::load(path)
                .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
            if state.config != run.synthesis_config() {
                return Err(Failure::config(
                    "synthesis: config differs from the resumed state's",
                ));
            }
            state
        }
        None => SynthesisState::start(
            run.prototype.clone(),
            &run.dataset,
            run.config.requirement,
            run.config.metric,
            run.synthesis_config(),
            opts,
        )
        .map_err(synthesis_failure)?,
    };
    fs::create_dir_all(&args.out).map_err(io_failure(&args.out))?;
    let until = args.stop_after.unwrap_or(state.config.cycles);
    let verbose = args.verbose;
    state
        .advance(&run.dataset, until, opts, |r| {
            if verbose {
                let c = &r.scorecard;
                let _ = writeln!(
                    log,
                    "cycle {} seed {} acc {} params {} satisfies {} E[params] {:.1}",
                    r.cycle,
                    r.seed.0,
                    c.accuracy,
                    c.params,
                    u8::from(c.satisfies),
                    r.expected_params
                );
            }
        })
        .map_err(synthesis_failure)?;
    write_file(&args.out.join(STATE_FILE), &state.to_json())?;
    write_file(&args.out.join(REPORT_FILE), &state.report_csv())?;
    write_summary(&state, &args.out.join(SUMMARY_FILE))?;
    match &state.best {
        Some(best) => {
            write_file(&args.out.join(BEST_FILE), &best.generator.to_json())?;
            Ok(true)
        }
        None => Ok(false),
    }
}

fn write_summary(state: &SynthesisState, path: &Path) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(&state.summary()).expect("summary serializes");
    text.push('\n');
    write_file(path, &text)
}

pub enum SeedSpec {
    List(Vec<u64>),
    Count(u64),
}

/// Writes `<seed>.json` per seed; returns the paths written.
pub fn cmd_sample(
    checkpoint: &Path,
    seeds: &SeedSpec,
    out: &Path,
) -> Result<Vec<PathBuf>, Failure> {
    let (gen, _) = GeneratorCheckpoint::load(checkpoint)
        .map_err(|e| Failure::config(format!("{}: {e}", checkpoint.display())))?;
    let seeds: Vec<u64> = match seeds {
        SeedSpec::List(v) => v.clone(),
        SeedSpec::Count(n) => (0..*n).collect(),
    };
    if seeds.is_empty() {
        return Err(Failure::config("--seeds: at least one seed is required"));
    }
    fs::create_dir_all(out).map_err(io_failure(out))?;
    let mut written = Vec::with_capacity(seeds.len());
    for s in seeds {
        let path = out.join(format!("{s}.json"));
        write_file(&path, &serialize(&gen.sample(Seed(s))))?;
        written.push(path);
    }
    Ok(written)
}

pub fn scorecard_row(c: &Scorecard) -> String {
    format!(
        "{},{},{},{},{},{}",
        c.accuracy,
        c.params,
        c.macs,
        c.info_density,
        c.netscore
            .map_or_else(|| "undefined".to_string(), |v| v.to_string()),
        u8::from(c.satisfies)
    )
}

/// Train `network` per the config's trainer section and score it.
pub fn cmd_eval(network: &Path, config: &Path) -> Result<Scorecard, Failure> {
    let g = load_network(network)?;
    let run = load_run(config)?;
    if g.input_shape() != run.dataset.shape() {
        return Err(Failure::config(format!(
            "{}: input shape {} does not match dataset shape {}",
            network.display(),
            g.input_shape(),
            run.dataset.shape()
        )));
    }
    let req = run.config.requirement;
    let (w, _) =
        fit(&g, &run.dataset, &run.config.trainer).map_err(|e| Failure::runtime(e.to_string()))?;
    let eval = evaluate(&g, &w, &run.dataset, req.eval_split)
        .map_err(|e| Failure::runtime(e.to_string()))?;
    score(&g, &eval, &run.config.metric, &req).map_err(|e| Failure::runtime(e.to_string()))
}

/// Re-render summary.json from a saved state.
pub fn cmd_report(state_path: &Path, out: &Path) -> Result<(), Failure> {
    let state = SynthesisState::load(state_path)
        .map_err(|e| Failure::config(format!("{}: {e}", state_path.display())))?;
    fs::create_dir_all(out).map_err(io_failure(out))?;
    write_summary(&state, &out.join(SUMMARY_FILE))
}

pub fn cmd_check(opts: CheckOptions) -> Vec<OracleOutcome> {
    run_checks(opts)
}
