//! The four hallucination detectors and the report type they share.
//!
//! | kind          | component | question asked                                   |
//! |---------------|-----------|--------------------------------------------------|
//! | `Consistency` | h1        | does the explanation conclude the stated answer? |
//! | `Solvability` | h2        | does exactly one choice solve the question?      |
//! | `Factual`     | h3        | is every factual claim in the knowledge base?    |
//! | `Math`        | h4        | does every arithmetic step evaluate as stated?   |
//!
//! Rule-based detectors never guess: when their heuristics cannot decide
//! they return [`Indicator::Indeterminate`] with `escalate` set, and the
//! hybrid wrapper in [`crate::agents`] hands the case to an LLM detector.

mod consistency;
mod factual;
mod math;
mod solvability;
pub mod text;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::llm::LlmError;
use crate::model::{AgentCall, Component, Label, Mcq};

pub use consistency::ConsistencyDetector;
pub use factual::{check_facts, load_kb, FactualDetector, FactualReport, KbError, KnowledgeBase};
pub use math::{check_math, MathCheckReport, MathDetector, MathStep};
pub use solvability::{check_solvability, SolvabilityMethod, SolvabilityReport, SolvabilityDetector};
pub use consistency::check_consistency;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Consistency,
    Solvability,
    Factual,
    Math,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 4] = [
        DetectorKind::Consistency,
        DetectorKind::Solvability,
        DetectorKind::Factual,
        DetectorKind::Math,
    ];

    /// Position of this kind's component in the hallucination vector.
    pub fn component_index(self) -> usize {
        match self {
            DetectorKind::Consistency => 0,
            DetectorKind::Solvability => 1,
            DetectorKind::Factual => 2,
            DetectorKind::Math => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Consistency => "consistency",
            DetectorKind::Solvability => "solvability",
            DetectorKind::Factual => "factual",
            DetectorKind::Math => "math",
        }
    }

    pub fn parse(s: &str) -> Option<DetectorKind> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "consistency" | "h1" => Some(DetectorKind::Consistency),
            "solvability" | "h2" => Some(DetectorKind::Solvability),
            "factual" | "h3" => Some(DetectorKind::Factual),
            "math" | "h4" => Some(DetectorKind::Math),
            _ => None,
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A detector verdict. Serialized as `0`, `1` or `"indeterminate"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Indicator {
    Clear,
    Flagged,
    Indeterminate,
}

impl Indicator {
    pub fn component(self) -> Component {
        match self {
            Indicator::Clear => Component::Clear,
            Indicator::Flagged => Component::Flagged,
            Indicator::Indeterminate => Component::Unchecked,
        }
    }
}

impl Serialize for Indicator {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Indicator::Clear => s.serialize_u8(0),
            Indicator::Flagged => s.serialize_u8(1),
            Indicator::Indeterminate => s.serialize_str("indeterminate"),
        }
    }
}

impl<'de> Deserialize<'de> for Indicator {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        match &v {
            serde_json::Value::Number(n) if n.as_u64() == Some(0) => Ok(Indicator::Clear),
            serde_json::Value::Number(n) if n.as_u64() == Some(1) => Ok(Indicator::Flagged),
            serde_json::Value::String(s) if s == "indeterminate" => Ok(Indicator::Indeterminate),
            _ => Err(serde::de::Error::custom(format!("invalid indicator {v}"))),
        }
    }
}

/// One structured piece of evidence behind a verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Finding {
    /// The explanation concludes a different label than the answer.
    LabelMismatch {
        concluded: Label,
        answer: Label,
        source: String,
    },
    /// The explanation's conclusion and the labels it maps to.
    Conclusion {
        source: String,
        matched: Vec<Label>,
    },
    /// Choices equal to the solved value.
    ValidAnswers {
        solved_value: String,
        a_valid: Vec<Label>,
    },
    UnsupportedClaim {
        claim: String,
        best_match: Option<String>,
        similarity: f64,
    },
    FailedStep {
        expression: String,
        stated: String,
        computed: String,
    },
    UnverifiedStep {
        text: String,
        reason: String,
    },
    FinalMismatch {
        stated: String,
        answer_value: String,
    },
    Note {
        text: String,
    },
}

/// Kind-specific detail attached to a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "detail", rename_all = "snake_case")]
pub enum ReportDetail {
    Solvability(SolvabilityReport),
    Factual(FactualReport),
    Math(MathCheckReport),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportSource {
    Rule,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("a flagged report needs evidence")]
    FlaggedWithoutEvidence,
    #[error("a flagged report needs feedback for the generator")]
    FlaggedWithoutFeedback,
    #[error("confidence {0} outside [0, 1]")]
    Confidence(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawReport")]
pub struct DetectorReport {
    pub kind: DetectorKind,
    pub indicator: Indicator,
    pub evidence: Vec<Finding>,
    pub feedback: String,
    pub suggested_next: Option<DetectorKind>,
    pub confidence: f64,
    pub source: ReportSource,
    /// Set when the rule set could not decide and an LLM detector should look.
    pub escalate: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub detail: Option<ReportDetail>,
}

#[derive(Deserialize)]
struct RawReport {
    kind: DetectorKind,
    indicator: Indicator,
    evidence: Vec<Finding>,
    feedback: String,
    suggested_next: Option<DetectorKind>,
    confidence: f64,
    source: ReportSource,
    escalate: bool,
    #[serde(default)]
    detail: Option<ReportDetail>,
}

impl TryFrom<RawReport> for DetectorReport {
    type Error = ReportError;
    fn try_from(r: RawReport) -> Result<Self, Self::Error> {
        let mut rep = DetectorReport::new(r.kind, r.indicator, r.evidence, r.feedback, r.source)?;
        rep.suggested_next = r.suggested_next;
        rep.escalate = r.escalate;
        rep.detail = r.detail;
        rep.with_confidence(r.confidence)
    }
}

impl DetectorReport {
    /// Builds a report, enforcing that a flagged verdict carries evidence
    /// and feedback.
    pub fn new(
        kind: DetectorKind,
        indicator: Indicator,
        evidence: Vec<Finding>,
        feedback: String,
        source: ReportSource,
    ) -> Result<Self, ReportError> {
        if indicator == Indicator::Flagged {
            if evidence.is_empty() {
                return Err(ReportError::FlaggedWithoutEvidence);
            }
            if feedback.trim().is_empty() {
                return Err(ReportError::FlaggedWithoutFeedback);
            }
        }
        Ok(DetectorReport {
            kind,
            indicator,
            evidence,
            feedback,
            suggested_next: None,
            confidence: 1.0,
            source,
            escalate: indicator == Indicator::Indeterminate,
            detail: None,
        })
    }

    pub fn with_confidence(mut self, confidence: f64) -> Result<Self, ReportError> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(ReportError::Confidence(confidence.to_string()));
        }
        self.confidence = confidence;
        Ok(self)
    }

    pub fn suggest(mut self, next: Option<DetectorKind>) -> Self {
        self.suggested_next = next.filter(|&k| k != self.kind);
        self
    }

    pub fn with_detail(mut self, detail: ReportDetail) -> Self {
        self.detail = Some(detail);
        self
    }

    /// An undecided verdict with a reason, asking for escalation.
    pub fn indeterminate(kind: DetectorKind, reason: impl Into<String>, source: ReportSource) -> Self {
        DetectorReport {
            kind,
            indicator: Indicator::Indeterminate,
            evidence: vec![Finding::Note { text: reason.into() }],
            feedback: String::new(),
            suggested_next: None,
            confidence: 0.0,
            source,
            escalate: true,
            detail: None,
        }
    }
}

/// A report plus whatever LLM calls it took to produce it.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub report: DetectorReport,
    pub calls: Vec<AgentCall>,
}

impl From<DetectorReport> for Detection {
    fn from(report: DetectorReport) -> Self {
        Detection {
            report,
            calls: Vec::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum DetectError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Kb(#[from] KbError),
}

pub trait Detector: Send + Sync {
    fn kind(&self) -> DetectorKind;
    fn detect(&self, mcq: &Mcq) -> Result<Detection, DetectError>;
}

/// One detector per kind.
#[derive(Clone)]
pub struct DetectorSet {
    detectors: BTreeMap<DetectorKind, Arc<dyn Detector>>,
}

impl DetectorSet {
    pub fn new(detectors: Vec<Arc<dyn Detector>>) -> Self {
        DetectorSet {
            detectors: detectors.into_iter().map(|d| (d.kind(), d)).collect(),
        }
    }

    /// The four rule-based detectors. Without a knowledge base the factual
    /// detector returns indeterminate.
    pub fn rule_based(kb: Option<Arc<KnowledgeBase>>, opts: &DetectorOptions) -> Self {
        DetectorSet::new(vec![
            Arc::new(ConsistencyDetector::new(opts.eval)),
            Arc::new(SolvabilityDetector::new(opts.eval)),
            Arc::new(FactualDetector::new(kb, opts.jaccard_threshold)),
            Arc::new(MathDetector::new(opts.eval)),
        ])
    }

    pub fn get(&self, kind: DetectorKind) -> Option<&Arc<dyn Detector>> {
        self.detectors.get(&kind)
    }

    pub fn insert(&mut self, detector: Arc<dyn Detector>) {
        self.detectors.insert(detector.kind(), detector);
    }

    pub fn is_complete(&self) -> bool {
        DetectorKind::ALL.iter().all(|k| self.detectors.contains_key(k))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorOptions {
    pub eval: crate::expr::EvalOptions,
    pub jaccard_threshold: f64,
}

impl Default for DetectorOptions {
    fn default() -> Self {
        DetectorOptions {
            eval: crate::expr::EvalOptions::default(),
            jaccard_threshold: 0.8,
        }
    }
}
