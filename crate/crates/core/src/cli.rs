//! Command-line driver.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::approx::{differential_soundness, SoundnessOptions};
use crate::concrete::{self, Outcome};
use crate::eval::{verify, EvalOptions};
use crate::parse::parse_program;
use crate::print::show_value;
use crate::report::{check_counts, Report};
use crate::smt::Smt;
use crate::syntax::Program;

pub const EXIT_VERIFIED: i32 = 0;
pub const EXIT_BLAMED: i32 = 1;
pub const EXIT_UNKNOWN: i32 = 2;
pub const EXIT_USAGE: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "scv", version, about = "Verify modules of a contract language against their contracts")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// Solver command line, or `none`.
    #[arg(long, global = true, env = "SCV_SOLVER", default_value = "z3 -in")]
    solver: String,
    /// Maximum state expansions (reduction steps for `run`).
    #[arg(long, global = true, default_value_t = 100_000)]
    budget: usize,
    #[arg(long, global = true)]
    no_summarize: bool,
    /// Print every witness step with its expression.
    #[arg(long, global = true)]
    trace: bool,
    #[arg(long, global = true)]
    json: bool,
    /// Worker threads for exploration.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Verify every module of FILE (the default command).
    Verify { file: PathBuf },
    /// Run FILE with the concrete interpreter.
    Run { file: PathBuf },
    /// Differential soundness check on generated programs.
    Soundness {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        count: usize,
    },
}

const COMMANDS: [&str; 4] = ["verify", "run", "soundness", "help"];

/// `scv FILE ...` means `scv verify FILE ...`.
fn with_default_command(args: Vec<String>) -> Vec<String> {
    let mut args = args;
    let first = args.get(1).map(String::as_str);
    let explicit = match first {
        None => true,
        Some(a) => COMMANDS.contains(&a) || matches!(a, "-h" | "--help" | "-V" | "--version"),
    };
    if !explicit {
        args.insert(1, "verify".to_string());
    }
    args
}

/// Runs the command line `args` (including the program name) and returns the exit code.
pub fn run(args: Vec<String>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(with_default_command(args)) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let shown = e.render().to_string();
            return if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{shown}");
                0
            } else {
                let _ = write!(err, "{shown}");
                EXIT_USAGE
            };
        }
    };
    let c = &cli.common;
    match &cli.cmd {
        Cmd::Verify { file } => match load(file) {
            Ok(p) => verify_cmd(&p, file, c, out),
            Err(msg) => {
                let _ = writeln!(err, "{msg}");
                EXIT_USAGE
            }
        },
        Cmd::Run { file } => match load(file) {
            Ok(p) => run_cmd(&p, c, out, err),
            Err(msg) => {
                let _ = writeln!(err, "{msg}");
                EXIT_USAGE
            }
        },
        Cmd::Soundness { seed, count } => {
            let oracle = Smt::from_command(&c.solver);
            let mut opts = SoundnessOptions::default();
            opts.eval.summarize = !c.no_summarize;
            opts.eval.budget = c.budget.min(opts.eval.budget);
            let rep = differential_soundness(*seed, *count, &oracle, &opts);
            if c.json {
                let _ = writeln!(out, "{}", serde_json::to_string_pretty(&rep).expect("report serializes"));
            } else {
                let _ = writeln!(
                    out,
                    "seed {}: {} programs, {} abstractions, {} checked, {} skipped, {} violations",
                    rep.seed,
                    rep.programs,
                    rep.abstractions,
                    rep.checked,
                    rep.skipped,
                    rep.violations.len()
                );
                for v in &rep.violations {
                    let _ = writeln!(out, "\n{}: {}\nprogram:\n{}abstraction:\n{}", v.kind, v.detail, v.program, v.abstraction);
                }
            }
            if rep.violations.is_empty() {
                0
            } else {
                EXIT_BLAMED
            }
        }
    }
}

fn load(file: &PathBuf) -> Result<Program, String> {
    let text = std::fs::read_to_string(file).map_err(|e| format!("{}: {e}", file.display()))?;
    parse_program(&text).map_err(|e| format!("{}:{e}", file.display()))
}

fn verify_cmd(p: &Program, file: &Path, c: &Common, out: &mut dyn Write) -> i32 {
    let oracle = Smt::from_command(&c.solver);
    let opts = EvalOptions { budget: c.budget, summarize: !c.no_summarize, jobs: c.jobs.max(1), ..EvalOptions::default() };
    let start = Instant::now();
    let (modules, r) = verify(p, &oracle, &opts);
    let rep = Report {
        file: file.display().to_string(),
        modules,
        checks: check_counts(p),
        discarded: Report::discarded_of(p, &r),
        expansions: r.expansions,
        states: r.states,
        exhausted: r.exhausted,
        budget: c.budget,
        summarize: opts.summarize,
        solver: c.solver.clone(),
        solver_queries: oracle.queries(),
        elapsed_ms: start.elapsed().as_millis(),
    };
    if c.json {
        let _ = writeln!(out, "{}", rep.to_json());
    } else {
        let _ = write!(out, "{}", rep.to_text(c.trace));
    }
    rep.exit_code()
}

fn run_cmd(p: &Program, c: &Common, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    if let Some(m) = p.modules.iter().find(|m| m.is_opaque()) {
        let _ = writeln!(err, "cannot run: module {} is opaque", m.name);
        return EXIT_USAGE;
    }
    match concrete::run(p, c.budget) {
        Outcome::Value(v) => {
            let _ = writeln!(out, "{}", show_value(&v));
            0
        }
        Outcome::Blame(pos, src) => {
            let _ = writeln!(out, "blame {pos} (contract from {src})");
            EXIT_BLAMED
        }
        Outcome::Timeout => {
            let _ = writeln!(out, "out of fuel after {} steps", c.budget);
            EXIT_UNKNOWN
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn verify_is_the_default_command() {
        assert_eq!(with_default_command(argv("scv f.scv --json")), argv("scv verify f.scv --json"));
        assert_eq!(with_default_command(argv("scv run f.scv")), argv("scv run f.scv"));
        assert_eq!(with_default_command(argv("scv --help")), argv("scv --help"));
    }

    #[test]
    fn usage_errors_exit_3() {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        assert_eq!(run(argv("scv verify"), &mut o, &mut e), EXIT_USAGE);
        assert_eq!(run(argv("scv /nonexistent/x.scv"), &mut o, &mut e), EXIT_USAGE);
        assert_eq!(run(argv("scv soundness --count x"), &mut o, &mut e), EXIT_USAGE);
    }
}
