//! The generate, detect, revise loop.
//!
//! Each iteration runs one detector pass over the current question. The pass
//! starts at the policy's first kind and follows routing decisions until a
//! defect is found (unless `full_pass` is set) or every kind has run. The
//! pass is scored, the termination rules are applied to the score history,
//! and on `Continue` the generator revises the question using the flagged
//! reports' feedback.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{GenerationFailed, GenerationSpec, Generator};
use crate::detectors::{DetectError, DetectorKind, DetectorReport, DetectorSet, Indicator, ReportSource};
use crate::model::{AgentCall, HallucinationVector, IterationRecord, Mcq, Outcome, Trace, TraceHeader, Usd, Weights};
use crate::scoring::{composite_score, decide, PassSummary, ScoringError, TerminationConfig, TerminationDecision};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutingKind {
    StaticOrder,
    CooccurrencePriority,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RoutingError {
    #[error("static order must list each detector kind exactly once")]
    NotPermutation,
    #[error("co-occurrence matrix entry [{row}][{col}] = {value} must be a nonnegative number")]
    BadEntry { row: usize, col: usize, value: f64 },
}

/// How the next detector within a pass is chosen once the last report's
/// own suggestion is used up.
///
/// The matrix is indexed by component order (consistency, solvability,
/// factual, math); row `i` weighs which kind tends to go wrong after kind
/// `i`. Rows are normalized on construction; an all-zero row becomes
/// uniform.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingPolicy {
    kind: RoutingKind,
    order: [DetectorKind; 4],
    matrix: [[f64; 4]; 4],
}

pub const DEFAULT_ORDER: [DetectorKind; 4] = [
    DetectorKind::Solvability,
    DetectorKind::Math,
    DetectorKind::Factual,
    DetectorKind::Consistency,
];

impl Default for RoutingPolicy {
    fn default() -> Self {
        RoutingPolicy {
            kind: RoutingKind::StaticOrder,
            order: DEFAULT_ORDER,
            matrix: [[0.25; 4]; 4],
        }
    }
}

fn check_permutation(order: &[DetectorKind; 4]) -> Result<(), RoutingError> {
    let set: BTreeSet<_> = order.iter().collect();
    if set.len() == 4 {
        Ok(())
    } else {
        Err(RoutingError::NotPermutation)
    }
}

impl RoutingPolicy {
    pub fn static_order(order: [DetectorKind; 4]) -> Result<Self, RoutingError> {
        check_permutation(&order)?;
        Ok(RoutingPolicy {
            order,
            ..RoutingPolicy::default()
        })
    }

    /// Ties between equal matrix entries go to the kind earlier in `order`.
    pub fn cooccurrence(matrix: [[f64; 4]; 4], order: [DetectorKind; 4]) -> Result<Self, RoutingError> {
        check_permutation(&order)?;
        let mut m = matrix;
        for (row, r) in m.iter_mut().enumerate() {
            for (col, v) in r.iter().enumerate() {
                if !v.is_finite() || *v < 0.0 {
                    return Err(RoutingError::BadEntry { row, col, value: *v });
                }
            }
            let sum: f64 = r.iter().sum();
            if sum == 0.0 {
                *r = [0.25; 4];
            } else {
                r.iter_mut().for_each(|v| *v /= sum);
            }
        }
        Ok(RoutingPolicy {
            kind: RoutingKind::CooccurrencePriority,
            order,
            matrix: m,
        })
    }

    pub fn kind(&self) -> RoutingKind {
        self.kind
    }

    pub fn order(&self) -> [DetectorKind; 4] {
        self.order
    }

    pub fn matrix(&self) -> [[f64; 4]; 4] {
        self.matrix
    }

    pub fn first(&self) -> DetectorKind {
        self.order[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Next(DetectorKind),
    EndOfPass,
}

/// Picks the detector to run after `last`. Its suggestion wins when still
/// unvisited; otherwise the policy decides.
pub fn route_next(last: &DetectorReport, visited: &BTreeSet<DetectorKind>, policy: &RoutingPolicy) -> Route {
    if let Some(s) = last.suggested_next {
        if !visited.contains(&s) {
            return Route::Next(s);
        }
    }
    let unvisited = policy.order.iter().copied().filter(|k| !visited.contains(k));
    let pick = match policy.kind {
        RoutingKind::StaticOrder => unvisited.into_iter().next(),
        RoutingKind::CooccurrencePriority => {
            let row = &policy.matrix[last.kind.component_index()];
            // first strictly greater entry wins, so ties keep static order
            unvisited.fold(None, |best: Option<(DetectorKind, f64)>, k| {
                let v = row[k.component_index()];
                match best {
                    Some((_, bv)) if bv >= v => best,
                    _ => Some((k, v)),
                }
            })
            .map(|(k, _)| k)
        }
    };
    pick.map_or(Route::EndOfPass, Route::Next)
}

#[derive(Debug, Clone, PartialEq)]
#[derive(Default)]
pub struct RefineConfig {
    pub weights: Weights,
    pub termination: TerminationConfig,
    pub policy: RoutingPolicy,
    /// Run all four detectors every iteration instead of stopping at the
    /// first defect.
    pub full_pass: bool,
}


/// Where a run starts: an existing question, or a spec to generate one from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RefineInput {
    Mcq(Mcq),
    Spec(GenerationSpec),
}

impl RefineInput {
    pub fn id(&self) -> &str {
        match self {
            RefineInput::Mcq(m) => &m.id,
            RefineInput::Spec(s) => &s.id,
        }
    }
}

#[derive(Debug, Error)]
pub enum RefineError {
    #[error("no detector configured for {0}")]
    MissingDetector(DetectorKind),
    #[error(transparent)]
    Config(#[from] ScoringError),
    #[error("could not generate the initial question: {0}")]
    InitialGeneration(GenerationFailed),
}

/// Result of one detector pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Pass {
    pub vector: HallucinationVector,
    pub path: Vec<DetectorKind>,
    pub reports: Vec<DetectorReport>,
    pub calls: Vec<AgentCall>,
}

impl Pass {
    /// Flagged feedback, newest first, one per line.
    pub fn feedback(&self) -> String {
        self.reports
            .iter()
            .rev()
            .filter(|r| r.indicator == Indicator::Flagged)
            .map(|r| r.feedback.trim())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Runs one detector pass. A detector that errors leaves its component
/// unchecked and is recorded with an indeterminate report.
pub fn run_pass(mcq: &Mcq, detectors: &DetectorSet, policy: &RoutingPolicy, full_pass: bool) -> Result<Pass, RefineError> {
    let mut visited = BTreeSet::new();
    let mut pass = Pass {
        vector: HallucinationVector::default(),
        path: Vec::new(),
        reports: Vec::new(),
        calls: Vec::new(),
    };
    let mut next = policy.first();
    loop {
        let kind = next;
        let detector = detectors.get(kind).ok_or(RefineError::MissingDetector(kind))?;
        visited.insert(kind);
        pass.path.push(kind);
        let report = match detector.detect(mcq) {
            Ok(d) => {
                pass.calls.extend(d.calls);
                d.report
            }
            Err(e) => {
                log::warn!("{kind} detector failed on {}: {e}", mcq.id);
                let source = match e {
                    DetectError::Llm(_) => ReportSource::Llm,
                    DetectError::Kb(_) => ReportSource::Rule,
                };
                DetectorReport {
                    escalate: false,
                    ..DetectorReport::indeterminate(kind, format!("detector failed: {e}"), source)
                }
            }
        };
        pass.vector.set(kind.component_index(), report.indicator.component());
        let stop = report.indicator == Indicator::Flagged && !full_pass;
        let route = route_next(&report, &visited, policy);
        pass.reports.push(report);
        if stop {
            break;
        }
        match route {
            Route::Next(k) => next = k,
            Route::EndOfPass => break,
        }
    }
    Ok(pass)
}

fn check_detectors(detectors: &DetectorSet) -> Result<(), RefineError> {
    match DetectorKind::ALL.into_iter().find(|k| detectors.get(*k).is_none()) {
        Some(k) => Err(RefineError::MissingDetector(k)),
        None => Ok(()),
    }
}

/// Runs the loop to termination. A generator failure after the first
/// question ends the run with the records so far, outcome `Budget`, and the
/// failure in the header.
pub fn refine(
    input: RefineInput,
    detectors: &DetectorSet,
    generator: &dyn Generator,
    config: &RefineConfig,
) -> Result<Trace, RefineError> {
    config.termination.validate()?;
    check_detectors(detectors)?;
    let (base_spec, mut mcq, mut gen_calls, mut repair_rounds) = match input {
        RefineInput::Mcq(m) => (None, m, Vec::new(), 0),
        RefineInput::Spec(spec) => {
            let g = generator.generate(&spec).map_err(RefineError::InitialGeneration)?;
            (Some(spec), g.mcq, g.calls, g.repair_rounds)
        }
    };
    let mut header = TraceHeader::new(mcq.id.clone(), config.weights, &config.termination);
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut passes: Vec<PassSummary> = Vec::new();
    let outcome = loop {
        let t = records.len() as u32;
        let pass = run_pass(&mcq, detectors, &config.policy, config.full_pass)?;
        let score = composite_score(&pass.vector, &config.weights);
        let feedback = pass.feedback();
        let mut calls = std::mem::take(&mut gen_calls);
        calls.extend(pass.calls);
        let record = IterationRecord {
            t,
            mcq: mcq.clone(),
            vector: pass.vector,
            score: score.value,
            partial: score.partial,
            detector_path: pass.path,
            reports: pass.reports,
            cost: calls.iter().map(|c| c.cost).sum(),
            token_usage: calls,
            feedback,
            repair_rounds,
        };
        passes.push(record.pass_summary());
        let decision = decide(&passes, &config.termination)?;
        log::debug!("{} t={t} score={} decision={decision:?}", mcq.id, record.score);
        records.push(record);
        if decision != TerminationDecision::Continue {
            break Outcome::from_decision(decision);
        }
        let last = records.last().expect("just pushed");
        let spec = GenerationSpec::revision(base_spec.as_ref(), &mcq, &last.feedback);
        match generator.generate(&spec) {
            Ok(g) => {
                mcq = g.mcq;
                gen_calls = g.calls;
                repair_rounds = g.repair_rounds;
            }
            Err(f) => {
                log::warn!("{}: {f}", header.mcq_id);
                let last = records.last_mut().expect("just pushed");
                last.cost += f.calls.iter().map(|c| c.cost).sum::<Usd>();
                last.token_usage.extend(f.calls);
                header.error = Some(f.reason);
                header.failed_reply = f.raw;
                break Outcome::Budget;
            }
        }
    };
    let total_cost = records.iter().map(|r| r.cost).sum();
    Ok(Trace {
        header,
        records,
        outcome,
        total_cost,
    })
}

/// Runs many inputs on a pool of at most `workers` threads (0 = one per
/// core). Results come back in input order.
pub fn refine_batch(
    inputs: Vec<RefineInput>,
    detectors: &DetectorSet,
    generator: &dyn Generator,
    config: &RefineConfig,
    workers: usize,
) -> Vec<Result<Trace, RefineError>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool builds");
    pool.install(|| {
        inputs
            .into_par_iter()
            .map(|input| refine(input, detectors, generator, config))
            .collect()
    })
}
