use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "qrefine", version, about = "Score and refine multiple-choice questions")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Global {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// Seed for the simulator and for retry jitter.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Model backend: `live`, `fixtures:DIR` or `scripted:FILE`.
    #[arg(long, global = true, value_name = "SPEC")]
    pub transport: Option<TransportSpec>,
    /// Knowledge base file, one fact per line.
    #[arg(long, global = true, value_name = "FILE")]
    pub kb: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set termination.t_max=5`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportSpec {
    Live,
    Fixtures(PathBuf),
    Scripted(PathBuf),
}

impl FromStr for TransportSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "live" {
            return Ok(TransportSpec::Live);
        }
        let nonempty = |p: &str| {
            if p.is_empty() {
                Err(format!("`{s}` needs a path after the colon"))
            } else {
                Ok(PathBuf::from(p))
            }
        };
        if let Some(p) = s.strip_prefix("fixtures:") {
            return nonempty(p).map(TransportSpec::Fixtures);
        }
        if let Some(p) = s.strip_prefix("scripted:") {
            return nonempty(p).map(TransportSpec::Scripted);
        }
        Err(format!("unknown transport `{s}`, expected live, fixtures:DIR or scripted:FILE"))
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the four detectors once over each question and score it.
    Validate {
        /// Questions as a JSON object, a JSON array or JSON Lines.
        input: PathBuf,
    },
    /// Detect, score and revise each question until it converges, stalls or
    /// runs out of iterations. Writes one trace file per question.
    Refine {
        /// Questions or generation specs as JSON or JSON Lines.
        input: PathBuf,
        /// Trace directory (default from the configuration).
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Also save every model exchange as a replayable fixture.
        #[arg(long, value_name = "DIR")]
        record: Option<PathBuf>,
    },
    /// Monte Carlo convergence curve for a parameter file.
    Simulate {
        /// TOML simulation parameters.
        params: PathBuf,
        /// Write the CSV curve here instead of stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Aggregate trace files: outcomes, iterations and cost.
    Report {
        /// Trace files or directories holding `*.jsonl` traces.
        #[arg(required = true)]
        traces: Vec<PathBuf>,
    },
}
