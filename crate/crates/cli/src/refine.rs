use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use qrefine_core::orchestrator::refine_batch;
use qrefine_core::{Outcome, Trace, Usd};

use crate::args::{Global, TransportSpec};
use crate::input::{read_records, to_refine_input};
use crate::output::{RefineOutput, RefineRow};
use crate::{emit_json, setup, Status};

/// File name for a question id: anything outside `[A-Za-z0-9._-]` becomes `_`.
pub fn trace_file_name(id: &str) -> String {
    let stem: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect();
    format!("{stem}.trace.jsonl")
}

pub fn run(g: &Global, input: &Path, out: Option<&Path>, record: Option<&Path>) -> Result<Status> {
    let cfg = setup::load_config(g)?;
    let records = read_records(input)?;
    let inputs = records.iter().map(to_refine_input).collect::<Result<Vec<_>>>()?;
    let mut names = BTreeSet::new();
    for i in &inputs {
        if !names.insert(trace_file_name(i.id())) {
            bail!("{}: more than one input maps to the trace file {}", input.display(), trace_file_name(i.id()));
        }
    }

    let transport = g.transport.clone().unwrap_or(TransportSpec::Live);
    let gw = setup::gateway(&cfg, &transport, record)?;
    let templates = setup::templates(&cfg)?;
    let kb = setup::load_knowledge_base(&cfg)?;
    let detectors = setup::detectors(&cfg, kb, Some((gw.clone(), templates.clone())));
    let generator = setup::generator(&cfg, gw, templates);
    let refine_cfg = cfg.refine_config()?;

    let dir: PathBuf = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output.dir.clone());
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    let ids: Vec<String> = inputs.iter().map(|i| i.id().to_string()).collect();
    let results = refine_batch(inputs, &detectors, &generator, &refine_cfg, cfg.orchestrator.workers);

    // results arrive in input order; all writing happens here
    let mut rows = Vec::with_capacity(results.len());
    for (id, result) in ids.into_iter().zip(results) {
        let row = match result {
            Ok(trace) => {
                let path = dir.join(trace_file_name(&id));
                write_trace(&trace, &path)?;
                row_for(&trace, path)
            }
            Err(e) => RefineRow {
                id,
                outcome: None,
                iterations: None,
                final_score: None,
                total_cost: Usd::ZERO,
                trace: None,
                error: Some(e.to_string()),
            },
        };
        if !g.json {
            print_row(&row);
        }
        rows.push(row);
    }
    let all_converged = rows.iter().all(|r| r.outcome == Some(Outcome::Converged));
    let out = RefineOutput { all_converged, rows };
    if g.json {
        emit_json(&out)?;
    } else {
        let spent: Usd = out.rows.iter().map(|r| r.total_cost).sum();
        let converged = out.rows.iter().filter(|r| r.outcome == Some(Outcome::Converged)).count();
        println!("{converged} of {} converged, total cost {spent}", out.rows.len());
    }
    Ok(if all_converged { Status::Clean } else { Status::Findings })
}

fn write_trace(trace: &Trace, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = std::io::BufWriter::new(file);
    trace
        .write_jsonl(&mut w)
        .and_then(|_| std::io::Write::flush(&mut w))
        .with_context(|| format!("writing {}", path.display()))
}

fn row_for(trace: &Trace, path: PathBuf) -> RefineRow {
    let last = trace.last();
    RefineRow {
        id: trace.mcq_id().to_string(),
        outcome: Some(trace.outcome),
        iterations: last.map(|r| r.t),
        final_score: last.map(|r| r.score),
        total_cost: trace.total_cost,
        trace: Some(path),
        error: trace.error().map(str::to_string),
    }
}

fn print_row(r: &RefineRow) {
    match (r.outcome, r.iterations, r.final_score) {
        (Some(o), Some(t), Some(s)) => {
            let note = r.error.as_deref().map(|e| format!("  ({e})")).unwrap_or_default();
            println!(
                "{}  {o}  iterations={t}  final_score={s:.4}  cost={}{note}",
                r.id, r.total_cost
            );
        }
        _ => println!("{}  failed: {}", r.id, r.error.as_deref().unwrap_or("unknown error")),
    }
}
