use std::path::Path;

use anyhow::{Context, Result};
use qrefine_core::simulator::{analytic_expectation, run_convergence, SimCurve, SimParams};

use crate::args::Global;
use crate::output::SimulationOutput;
use crate::{emit_json, Status};

pub fn load_params(path: &Path) -> Result<SimParams> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let params: SimParams = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    params.validate().with_context(|| format!("invalid parameters in {}", path.display()))?;
    Ok(params)
}

/// Reduction at `t = min(7, last iteration)`.
fn late_reduction(c: &SimCurve) -> Option<f64> {
    let t = c.points.len().checked_sub(1)?.min(7);
    c.reduction_at(t as u32)
}

fn pct(x: Option<f64>) -> String {
    x.map_or_else(|| "undefined".into(), |v| format!("{:.2}%", 100.0 * v))
}

pub fn run(g: &Global, params: &Path, out: Option<&Path>) -> Result<Status> {
    let mut p = load_params(params)?;
    if let Some(seed) = g.seed {
        p.seed = seed;
    }
    let curve = run_convergence(&p)?;
    let expected = analytic_expectation(&p)?;
    let csv = curve.to_csv();
    if let Some(path) = out {
        std::fs::write(path, &csv).with_context(|| format!("writing {}", path.display()))?;
    }
    let summary = SimulationOutput {
        reduction_t1: curve.reduction_at(1),
        reduction_t7: late_reduction(&curve),
        params: p,
        curve,
        expected,
        csv: out.map(Path::to_path_buf),
    };
    if g.json {
        return emit_json(&summary).map(|_| Status::Clean);
    }
    // the CSV owns stdout unless it went to a file
    let line = |s: String| {
        if out.is_some() {
            println!("{s}");
        } else {
            eprintln!("{s}");
        }
    };
    if out.is_none() {
        print!("{csv}");
    }
    let last_t = summary.curve.points.len().saturating_sub(1).min(7);
    line(format!(
        "{} questions, {} iterations, seed {}",
        summary.params.n_questions, summary.params.n_iterations, summary.params.seed
    ));
    line(format!(
        "mean score reduction at t=1: {} (expected {})",
        pct(summary.reduction_t1),
        pct(summary.expected.reduction_at(1))
    ));
    line(format!(
        "mean score reduction at t={last_t}: {} (expected {})",
        pct(summary.reduction_t7),
        pct(late_reduction(&summary.expected))
    ));
    Ok(Status::Clean)
}
