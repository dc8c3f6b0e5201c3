use std::path::Path;

use anyhow::Result;
use qrefine_core::detectors::DetectorKind;
use qrefine_core::model::Component;
use qrefine_core::orchestrator::run_pass;
use qrefine_core::scoring::composite_score;
use qrefine_core::Usd;

use crate::args::Global;
use crate::input::{read_records, to_mcq};
use crate::output::{ValidationOutput, ValidationRow};
use crate::{emit_json, setup, Status};

pub fn run(g: &Global, input: &Path) -> Result<Status> {
    let cfg = setup::load_config(g)?;
    let records = read_records(input)?;
    let mcqs = records.iter().map(to_mcq).collect::<Result<Vec<_>>>()?;

    let kb = setup::load_knowledge_base(&cfg)?;
    // rule-based unless a model backend was asked for
    let llm = match &g.transport {
        Some(t) => {
            let templates = setup::templates(&cfg)?;
            Some((setup::gateway(&cfg, t, None)?, templates))
        }
        None => None,
    };
    let detectors = setup::detectors(&cfg, kb, llm);
    let policy = cfg.routing_policy()?;

    let mut rows = Vec::with_capacity(mcqs.len());
    for mcq in &mcqs {
        let pass = run_pass(mcq, &detectors, &policy, true)?;
        let score = composite_score(&pass.vector, &cfg.weights);
        rows.push(ValidationRow {
            id: mcq.id.clone(),
            vector: pass.vector,
            score: score.value,
            partial: score.partial,
            detector_path: pass.path,
            reports: pass.reports,
            cost: pass.calls.iter().map(|c| c.cost).sum::<Usd>(),
        });
    }
    let eps = cfg.termination.epsilon1;
    let clean = rows.iter().all(|r| r.score < eps);
    let out = ValidationOutput {
        epsilon1: eps,
        clean,
        rows,
    };
    if g.json {
        emit_json(&out)?;
    } else {
        print_table(&out);
    }
    Ok(if clean { Status::Clean } else { Status::Findings })
}

fn cell(c: Component) -> &'static str {
    match c {
        Component::Clear => "0",
        Component::Flagged => "1",
        Component::Unchecked => "-",
    }
}

fn print_table(out: &ValidationOutput) {
    let width = out.rows.iter().map(|r| r.id.chars().count()).max().unwrap_or(2).max(2);
    println!("{:<width$}  h1 h2 h3 h4  score", "id");
    for r in &out.rows {
        let c = r.vector.components();
        let mark = if r.partial { " (partial)" } else { "" };
        println!(
            "{:<width$}  {:>2} {:>2} {:>2} {:>2}  {:.4}{mark}",
            r.id,
            cell(c[0]),
            cell(c[1]),
            cell(c[2]),
            cell(c[3]),
            r.score
        );
    }
    for r in &out.rows {
        for rep in r.reports.iter().filter(|rep| !rep.feedback.trim().is_empty()) {
            println!("{} {}: {}", r.id, kind_label(rep.kind), rep.feedback.trim());
        }
    }
    let flagged = out.rows.iter().filter(|r| r.score >= out.epsilon1).count();
    println!(
        "{} question(s), {flagged} at or above epsilon1 = {}",
        out.rows.len(),
        out.epsilon1
    );
}

fn kind_label(k: DetectorKind) -> String {
    format!("h{} {}", k.component_index() + 1, k.name())
}
