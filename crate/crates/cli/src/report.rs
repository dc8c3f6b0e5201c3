use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use qrefine_core::llm::{accrue_cost, CostModel, Usage};
use qrefine_core::model::check_trace;
use qrefine_core::{Outcome, Trace, Usd};

use crate::args::Global;
use crate::output::{Projection, ReportOutput};
use crate::{emit_json, setup, Status};

/// Expands directories to their `*.jsonl` files, sorted.
fn trace_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file() && f.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

pub fn aggregate(traces: &[Trace], cost_model: &CostModel) -> ReportOutput {
    let mut outcomes = BTreeMap::new();
    for o in [Outcome::Converged, Outcome::Stalled, Outcome::Budget] {
        outcomes.insert(o.to_string(), 0);
    }
    let mut usage = Usage::default();
    let mut converged_iters = Vec::new();
    let mut inconsistent = Vec::new();
    for t in traces {
        *outcomes.entry(t.outcome.to_string()).or_insert(0) += 1;
        if t.outcome == Outcome::Converged {
            converged_iters.push(t.last().map_or(0, |r| r.t));
        }
        for call in t.records.iter().flat_map(|r| &r.token_usage) {
            usage.input_tokens += call.input_tokens;
            usage.output_tokens += call.output_tokens;
        }
        let v = check_trace(t);
        if !v.is_empty() {
            inconsistent.push((t.mcq_id().to_string(), v.len()));
        }
    }
    let total_cost: Usd = traces.iter().map(|t| t.total_cost).sum();
    let mean_cost = match traces.len() {
        0 => Usd::ZERO,
        n => Usd::from_pico(total_cost.pico() / n as u64),
    };
    let mean_iterations_converged = (!converged_iters.is_empty())
        .then(|| converged_iters.iter().map(|&t| f64::from(t)).sum::<f64>() / converged_iters.len() as f64);

    let mut priced: Vec<(String, Usd)> = cost_model
        .models()
        .filter_map(|(m, _)| accrue_cost(&usage, m, cost_model).ok().map(|c| (m.to_string(), c)))
        .collect();
    priced.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    // ratios against the cheapest price per million tokens, so they stay
    // meaningful when no tokens were spent
    let unit = Usage {
        input_tokens: 1_000_000,
        output_tokens: 1_000_000,
    };
    let unit_cost = |m: &str| accrue_cost(&unit, m, cost_model).map(|c| c.pico()).unwrap_or(0);
    let cheapest = priced
        .iter()
        .map(|(m, _)| unit_cost(m))
        .filter(|&c| c > 0)
        .min()
        .unwrap_or(0);
    let projections = priced
        .into_iter()
        .map(|(model, cost)| Projection {
            ratio: if cheapest == 0 {
                1.0
            } else {
                unit_cost(&model) as f64 / cheapest as f64
            },
            model,
            cost,
        })
        .collect();

    ReportOutput {
        traces: traces.len(),
        skipped: vec![],
        inconsistent,
        outcomes,
        mean_iterations_converged,
        total_cost,
        mean_cost,
        input_tokens: usage.input_tokens,
        output_tokens: usage.output_tokens,
        projections,
    }
}

pub fn run(g: &Global, inputs: &[PathBuf]) -> Result<Status> {
    let cfg = setup::load_config(g)?;
    let mut traces = Vec::new();
    let mut skipped = Vec::new();
    for path in trace_paths(inputs)? {
        match read_trace(&path) {
            Ok(t) => traces.push(t),
            Err(e) => {
                log::warn!("skipping {}: {e:#}", path.display());
                skipped.push((path, format!("{e:#}")));
            }
        }
    }
    if traces.is_empty() {
        let why = skipped
            .first()
            .map(|(p, e)| format!(" ({}: {e})", p.display()))
            .unwrap_or_default();
        bail!("no readable traces among the given paths{why}");
    }
    let mut report = aggregate(&traces, &cfg.cost_model());
    report.skipped = skipped;
    if g.json {
        emit_json(&report)?;
    } else {
        print_report(&report);
    }
    Ok(Status::Clean)
}

fn read_trace(path: &Path) -> Result<Trace> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(Trace::read_jsonl(std::io::BufReader::new(file))?)
}

fn print_report(r: &ReportOutput) {
    println!("traces: {}", r.traces);
    let hist: Vec<String> = r.outcomes.iter().map(|(k, v)| format!("{k} {v}")).collect();
    println!("outcomes: {}", hist.join(", "));
    match r.mean_iterations_converged {
        Some(m) => println!("mean iterations to convergence: {m:.2}"),
        None => println!("mean iterations to convergence: n/a (nothing converged)"),
    }
    println!(
        "tokens: {} input, {} output",
        r.input_tokens, r.output_tokens
    );
    println!("cost: total {}, mean {} per trace", r.total_cost, r.mean_cost);
    println!("projected cost of these tokens:");
    let width = r.projections.iter().map(|p| p.model.len()).max().unwrap_or(0);
    for p in &r.projections {
        println!("  {:<width$}  {}  ({:.1}x)", p.model, p.cost, p.ratio);
    }
    for (id, n) in &r.inconsistent {
        println!("warning: trace {id} has {n} consistency violation(s)");
    }
    for (p, e) in &r.skipped {
        println!("skipped {}: {e}", p.display());
    }
}
