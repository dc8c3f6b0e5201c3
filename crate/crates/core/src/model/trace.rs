use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{HallucinationVector, Mcq, Usd, Weights};
use crate::detectors::{DetectorKind, DetectorReport};
use crate::scoring::{composite_score, decide, PassSummary, TerminationConfig, TerminationDecision};

/// Token usage and price of one model call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentCall {
    /// `generator` or a detector kind name.
    pub agent: String,
    pub model: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub attempts: u32,
    pub cost: Usd,
}

/// The state of one iteration: the question as it stood, what the detectors
/// found, and what it cost to get here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: u32,
    pub mcq: Mcq,
    pub vector: HallucinationVector,
    pub score: f64,
    pub partial: bool,
    pub detector_path: Vec<DetectorKind>,
    pub reports: Vec<DetectorReport>,
    /// Calls made at this iteration: the generator call that produced `mcq`
    /// (if any) followed by detector calls.
    pub token_usage: Vec<AgentCall>,
    pub cost: Usd,
    /// Feedback of this iteration's flagged reports, newest first. This is
    /// what the generator receives when the loop continues.
    pub feedback: String,
    #[serde(default)]
    pub repair_rounds: u32,
}

impl IterationRecord {
    pub fn pass_summary(&self) -> PassSummary {
        PassSummary {
            score: self.score,
            checked: self.vector.checked_mask(),
            complete: self.detector_path.len() == DetectorKind::ALL.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Converged,
    Stalled,
    Budget,
}

impl Outcome {
    /// The outcome for a terminating decision. `Continue` means the run was
    /// cut short, which is reported as exhausting the budget.
    pub fn from_decision(d: TerminationDecision) -> Outcome {
        match d {
            TerminationDecision::Converged => Outcome::Converged,
            TerminationDecision::Stalled => Outcome::Stalled,
            TerminationDecision::Budget | TerminationDecision::Continue => Outcome::Budget,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Converged => "Converged",
            Outcome::Stalled => "Stalled",
            Outcome::Budget => "Budget",
        })
    }
}

/// First line of a trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub mcq_id: String,
    pub weights: Weights,
    pub epsilon1: f64,
    pub epsilon2: f64,
    pub t_max: u32,
    /// Why the run stopped early, if it did.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// The unusable model reply behind `error`, when there was one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_reply: Option<String>,
}

impl TraceHeader {
    pub fn new(mcq_id: impl Into<String>, weights: Weights, term: &TerminationConfig) -> Self {
        TraceHeader {
            mcq_id: mcq_id.into(),
            weights,
            epsilon1: term.epsilon1,
            epsilon2: term.epsilon2,
            t_max: term.t_max,
            error: None,
            failed_reply: None,
        }
    }

    pub fn termination(&self) -> TerminationConfig {
        TerminationConfig {
            epsilon1: self.epsilon1,
            epsilon2: self.epsilon2,
            t_max: self.t_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub header: TraceHeader,
    pub records: Vec<IterationRecord>,
    pub outcome: Outcome,
    pub total_cost: Usd,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("trace has no header line")]
    MissingHeader,
    #[error("trace has no iteration records")]
    NoRecords,
    #[error("invalid termination settings in header: {0}")]
    Header(String),
}

impl Trace {
    pub fn mcq_id(&self) -> &str {
        &self.header.mcq_id
    }

    pub fn scores(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.score).collect()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    pub fn error(&self) -> Option<&str> {
        self.header.error.as_deref()
    }

    /// Total input plus output tokens over every call.
    pub fn total_tokens(&self) -> u64 {
        self.records
            .iter()
            .flat_map(|r| &r.token_usage)
            .map(|c| c.input_tokens + c.output_tokens)
            .sum()
    }

    /// Outcome implied by the records under the header's thresholds.
    pub fn recompute_outcome(
        header: &TraceHeader,
        records: &[IterationRecord],
    ) -> Result<Outcome, TraceError> {
        let passes: Vec<PassSummary> = records.iter().map(IterationRecord::pass_summary).collect();
        let d = decide(&passes, &header.termination()).map_err(|e| TraceError::Header(e.to_string()))?;
        Ok(Outcome::from_decision(d))
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    /// Reads a header line then one record per line. Blank lines are
    /// skipped. The outcome and total are derived from the records.
    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Trace, TraceError> {
        let mut header: Option<TraceHeader> = None;
        let mut records = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let lineno = i + 1;
            if header.is_none() {
                header = Some(
                    serde_json::from_str(&line).map_err(|source| TraceError::Json { line: lineno, source })?,
                );
            } else {
                records.push(
                    serde_json::from_str(&line).map_err(|source| TraceError::Json { line: lineno, source })?,
                );
            }
        }
        let header = header.ok_or(TraceError::MissingHeader)?;
        if records.is_empty() {
            return Err(TraceError::NoRecords);
        }
        let outcome = Trace::recompute_outcome(&header, &records)?;
        let total_cost = records.iter().map(|r: &IterationRecord| r.cost).sum();
        Ok(Trace {
            header,
            records,
            outcome,
            total_cost,
        })
    }

    pub fn from_jsonl(text: &str) -> Result<Trace, TraceError> {
        Trace::read_jsonl(text.as_bytes())
    }
}

/// A broken trace invariant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum TraceViolation {
    Empty,
    NonConsecutiveT { index: usize, t: u32 },
    ScoreMismatch { t: u32, stored: f64, recomputed: f64 },
    PartialFlagMismatch { t: u32 },
    CheckedWithoutDetector { t: u32, component: usize },
    PathTooLong { t: u32, len: usize },
    RepeatedDetector { t: u32, kind: DetectorKind },
    RecordCostMismatch { t: u32 },
    TotalCostMismatch,
    ConvergedAboveThreshold { score: f64 },
    StalledWithLargeDelta { delta: f64 },
    OutcomeMismatch { stored: Outcome, recomputed: Outcome },
    BadHeader { reason: String },
}

impl fmt::Display for TraceViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", serde_json::to_string(self).map_err(|_| fmt::Error)?)
    }
}

/// Checks every stored field that can be recomputed. Returns all violations
/// found; an empty list means the trace is consistent.
pub fn check_trace(trace: &Trace) -> Vec<TraceViolation> {
    let mut out = Vec::new();
    let term = trace.header.termination();
    if let Err(e) = term.validate() {
        out.push(TraceViolation::BadHeader { reason: e.to_string() });
        return out;
    }
    if trace.records.is_empty() {
        out.push(TraceViolation::Empty);
        return out;
    }
    for (i, r) in trace.records.iter().enumerate() {
        if r.t as usize != i {
            out.push(TraceViolation::NonConsecutiveT { index: i, t: r.t });
        }
        let s = composite_score(&r.vector, &trace.header.weights);
        if s.value != r.score {
            out.push(TraceViolation::ScoreMismatch {
                t: r.t,
                stored: r.score,
                recomputed: s.value,
            });
        }
        if s.partial != r.partial {
            out.push(TraceViolation::PartialFlagMismatch { t: r.t });
        }
        if r.detector_path.len() > DetectorKind::ALL.len() {
            out.push(TraceViolation::PathTooLong {
                t: r.t,
                len: r.detector_path.len(),
            });
        }
        let mut seen = BTreeSet::new();
        for &k in &r.detector_path {
            if !seen.insert(k) {
                out.push(TraceViolation::RepeatedDetector { t: r.t, kind: k });
            }
        }
        for (c, checked) in r.vector.checked_mask().iter().enumerate() {
            if *checked && !seen.iter().any(|k| k.component_index() == c) {
                out.push(TraceViolation::CheckedWithoutDetector { t: r.t, component: c });
            }
        }
        let calls: Usd = r.token_usage.iter().map(|c| c.cost).sum();
        if calls != r.cost {
            out.push(TraceViolation::RecordCostMismatch { t: r.t });
        }
    }
    let total: Usd = trace.records.iter().map(|r| r.cost).sum();
    if total != trace.total_cost {
        out.push(TraceViolation::TotalCostMismatch);
    }
    let scores = trace.scores();
    let last = *scores.last().unwrap();
    match trace.outcome {
        Outcome::Converged if last >= term.epsilon1 => {
            out.push(TraceViolation::ConvergedAboveThreshold { score: last });
        }
        Outcome::Stalled => {
            let delta = if scores.len() >= 2 {
                (last - scores[scores.len() - 2]).abs()
            } else {
                f64::INFINITY
            };
            if !(delta < term.epsilon2) {
                out.push(TraceViolation::StalledWithLargeDelta { delta });
            }
        }
        _ => {}
    }
    if let Ok(recomputed) = Trace::recompute_outcome(&trace.header, &trace.records) {
        if recomputed != trace.outcome {
            out.push(TraceViolation::OutcomeMismatch {
                stored: trace.outcome,
                recomputed,
            });
        }
    }
    out
}
