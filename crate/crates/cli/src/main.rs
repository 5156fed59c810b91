//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 when a run or check fails (commutativity
//! failure, spec violation, unexpected counterexample outcome), 2 on parse
//! or validation errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use scrlab_cli::report::MachineKind;
use scrlab_cli::runner;
use scrlab_cli::scenario::Scenario;

#[derive(Debug, Parser)]
#[command(name = "scrlab", version)]
#[command(about = "Commutativity laboratory: SIM checks, constructed machines, seeded fuzzing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check whether the scenario's region y SIM-commutes in x ++ y
    CheckSim {
        /// Scenario file to check.
        #[arg(long)]
        scenario: PathBuf,

        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,

        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },

    /// Reproduce the bundled counterexample run
    Counterexample {
        /// Machine to drive: the flawed construction or the revised one.
        #[arg(long, value_enum, default_value_t = MachineKind::Rule)]
        machine: MachineKind,

        /// Override the scenario's witness search bound.
        #[arg(long)]
        witness_bound: Option<usize>,

        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,

        /// Override the scenario's read-check perturbation count.
        #[arg(long)]
        perturbations: Option<usize>,

        #[arg(long)]
        out: Option<PathBuf>,

        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },

    /// Drive a machine over the scenario's input script
    Run {
        #[arg(long)]
        scenario: PathBuf,

        #[arg(long, value_enum)]
        machine: MachineKind,

        #[arg(long)]
        seed: Option<u64>,

        #[arg(long)]
        witness_bound: Option<usize>,

        #[arg(long)]
        perturbations: Option<usize>,

        #[arg(long)]
        out: Option<PathBuf>,

        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },

    /// Fuzz the oracle machine with seeded random invocation scripts
    Fuzz {
        #[arg(long)]
        scenario: PathBuf,

        /// Number of fuzz runs; must be at least 1.
        #[arg(long)]
        runs: usize,

        #[arg(long)]
        seed: Option<u64>,

        #[arg(long)]
        out: Option<PathBuf>,

        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
}

const EXIT_OK: u8 = 0;
const EXIT_FAILED: u8 = 1;
const EXIT_INVALID: u8 = 2;

fn emit<T: Serialize>(
    report: &T,
    text: String,
    format: Format,
    out: Option<&PathBuf>,
) -> std::io::Result<()> {
    let rendered = match format {
        Format::Json => {
            let mut json = serde_json::to_string_pretty(report).expect("reports serialize");
            json.push('\n');
            json
        }
        Format::Text => text,
    };
    match out {
        Some(path) => std::fs::write(path, rendered),
        None => {
            print!("{rendered}");
            Ok(())
        }
    }
}

fn fail_invalid(err: impl std::fmt::Display) -> u8 {
    eprintln!("error: {err}");
    EXIT_INVALID
}

fn apply_overrides(
    scenario: &mut Scenario,
    seed: Option<u64>,
    witness_bound: Option<usize>,
    perturbations: Option<usize>,
) {
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    if let Some(wb) = witness_bound {
        scenario.witness_bound = wb;
    }
    if let Some(p) = perturbations {
        if p > 0 {
            scenario.perturbations = p;
        }
    }
}

fn cmd_check_sim(path: &PathBuf, out: Option<&PathBuf>, format: Format) -> u8 {
    let scenario = match Scenario::load(path) {
        Ok(s) => s,
        Err(e) => return fail_invalid(e),
    };
    let report = match runner::check_sim(&scenario) {
        Ok(r) => r,
        Err(e) => return fail_invalid(e),
    };
    let text = report.to_text();
    if let Err(e) = emit(&report, text, format, out) {
        return fail_invalid(e);
    }
    match report.verdict {
        scrlab_core::spec::Verdict::Commutes => EXIT_OK,
        scrlab_core::spec::Verdict::FailsToCommute => EXIT_FAILED,
    }
}

fn cmd_counterexample(
    machine: MachineKind,
    seed: Option<u64>,
    witness_bound: Option<usize>,
    perturbations: Option<usize>,
    out: Option<&PathBuf>,
    format: Format,
) -> u8 {
    let mut scenario = runner::bundled_counterexample();
    apply_overrides(&mut scenario, seed, witness_bound, perturbations);
    if let Err(e) = scenario.validate_sim() {
        return fail_invalid(e);
    }
    let report = runner::counterexample(&scenario, machine);
    let text = report.to_text();
    if let Err(e) = emit(&report, text, format, out) {
        return fail_invalid(e);
    }
    if report.reproduced {
        EXIT_OK
    } else {
        EXIT_FAILED
    }
}

fn cmd_run(
    path: &PathBuf,
    machine: MachineKind,
    seed: Option<u64>,
    witness_bound: Option<usize>,
    perturbations: Option<usize>,
    out: Option<&PathBuf>,
    format: Format,
) -> u8 {
    let mut scenario = match Scenario::load(path) {
        Ok(s) => s,
        Err(e) => return fail_invalid(e),
    };
    apply_overrides(&mut scenario, seed, witness_bound, perturbations);
    if let Err(e) = scenario.validate_sim() {
        return fail_invalid(e);
    }
    if machine == MachineKind::Rule {
        if let Err(e) = scenario.validate_exhibited() {
            return fail_invalid(e);
        }
    }
    let report = runner::run_machine(&scenario, machine);
    let text = report.to_text();
    if let Err(e) = emit(&report, text, format, out) {
        return fail_invalid(e);
    }
    if runner::trace_succeeded(&report) {
        EXIT_OK
    } else {
        EXIT_FAILED
    }
}

fn cmd_fuzz(
    path: &PathBuf,
    runs: usize,
    seed: Option<u64>,
    out: Option<&PathBuf>,
    format: Format,
) -> u8 {
    if runs == 0 {
        return fail_invalid("fuzz requires at least one run");
    }
    let mut scenario = match Scenario::load(path) {
        Ok(s) => s,
        Err(e) => return fail_invalid(e),
    };
    apply_overrides(&mut scenario, seed, None, None);
    if let Err(e) = scenario.validate_sim() {
        return fail_invalid(e);
    }
    let summary = runner::fuzz(&scenario, runs);
    let text = summary.to_text();
    if let Err(e) = emit(&summary, text, format, out) {
        return fail_invalid(e);
    }
    if summary.violations == 0 {
        EXIT_OK
    } else {
        EXIT_FAILED
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::CheckSim {
            scenario,
            out,
            format,
        } => cmd_check_sim(scenario, out.as_ref(), *format),
        Command::Counterexample {
            machine,
            witness_bound,
            seed,
            perturbations,
            out,
            format,
        } => cmd_counterexample(
            *machine,
            *seed,
            *witness_bound,
            *perturbations,
            out.as_ref(),
            *format,
        ),
        Command::Run {
            scenario,
            machine,
            seed,
            witness_bound,
            perturbations,
            out,
            format,
        } => cmd_run(
            scenario,
            *machine,
            *seed,
            *witness_bound,
            *perturbations,
            out.as_ref(),
            *format,
        ),
        Command::Fuzz {
            scenario,
            runs,
            seed,
            out,
            format,
        } => cmd_fuzz(scenario, *runs, *seed, out.as_ref(), *format),
    };
    ExitCode::from(code)
}
