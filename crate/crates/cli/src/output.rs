//! Shapes of the `--json` output. Every type deserializes from what it
//! serializes to.

use std::collections::BTreeMap;
use std::path::PathBuf;

use qrefine_core::detectors::{DetectorKind, DetectorReport};
use qrefine_core::simulator::{SimCurve, SimParams};
use qrefine_core::{HallucinationVector, Outcome, Usd};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub id: String,
    pub vector: HallucinationVector,
    pub score: f64,
    pub partial: bool,
    pub detector_path: Vec<DetectorKind>,
    pub reports: Vec<DetectorReport>,
    /// Model cost of the pass; zero for rule-only detection.
    pub cost: Usd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationOutput {
    pub epsilon1: f64,
    /// Every score is below `epsilon1`.
    pub clean: bool,
    pub rows: Vec<ValidationRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineRow {
    pub id: String,
    /// Missing when the run could not start.
    pub outcome: Option<Outcome>,
    /// Revisions made: the `t` of the last record.
    pub iterations: Option<u32>,
    pub final_score: Option<f64>,
    pub total_cost: Usd,
    pub trace: Option<PathBuf>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineOutput {
    pub all_converged: bool,
    pub rows: Vec<RefineRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationOutput {
    pub params: SimParams,
    pub curve: SimCurve,
    /// Closed-form expectation for the same parameters.
    pub expected: SimCurve,
    /// Fractional reduction of the mean score at t = 1 and at the last
    /// iteration up to t = 7.
    pub reduction_t1: Option<f64>,
    pub reduction_t7: Option<f64>,
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub model: String,
    pub cost: Usd,
    /// Relative to the cheapest priced model.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOutput {
    pub traces: usize,
    /// Files that could not be read, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
    /// Traces that fail the consistency checks, with the violation count.
    pub inconsistent: Vec<(String, usize)>,
    pub outcomes: BTreeMap<String, usize>,
    /// Mean `t` of the last record over converged traces.
    pub mean_iterations_converged: Option<f64>,
    pub total_cost: Usd,
    pub mean_cost: Usd,
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// The same tokens priced under each cost-model entry.
    pub projections: Vec<Projection>,
}
