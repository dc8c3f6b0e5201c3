//! Internals of the `qrefine` binary.

pub mod args;
pub mod output;

mod input;
mod refine;
mod report;
mod setup;
mod simulate;
mod validate;

use anyhow::Result;
use serde::Serialize;

pub use args::Cli;
use args::Command;

/// How a command finished when it did not fail outright. Failures map to
/// exit code 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Clean = 0,
    /// Hallucinations found, or a refinement that did not converge.
    Findings = 1,
}

pub fn run(cli: &Cli) -> Result<Status> {
    let g = &cli.global;
    match &cli.command {
        Command::Validate { input } => validate::run(g, input),
        Command::Refine { input, out, record } => refine::run(g, input, out.as_deref(), record.as_deref()),
        Command::Simulate { params, out } => simulate::run(g, params, out.as_deref()),
        Command::Report { traces } => report::run(g, traces),
    }
}

fn emit_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}
