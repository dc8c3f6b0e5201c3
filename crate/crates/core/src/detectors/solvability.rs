use serde::{Deserialize, Serialize};

use crate::expr::{format_rational, EvalOptions};
use crate::model::{Label, Mcq};

use super::text::{final_value, matching_labels};
use super::{
    DetectError, Detection, Detector, DetectorKind, DetectorReport, Finding, Indicator,
    ReportDetail, ReportSource,
};

const KIND: DetectorKind = DetectorKind::Solvability;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolvabilityMethod {
    /// Each choice evaluated against the explanation's solved value.
    ChoiceEvaluation,
    /// Decided by an LLM detector.
    Delegated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolvabilityReport {
    /// Labels consistent with the solution, in label order.
    pub a_valid: Vec<Label>,
    pub method: SolvabilityMethod,
    pub solved_value: Option<String>,
}

/// Unsolvable or ambiguous framing (h2): flagged unless exactly one choice
/// equals the value the explanation solves to.
pub fn check_solvability(mcq: &Mcq, opts: &EvalOptions) -> DetectorReport {
    let Some((_, value, source)) = final_value(&mcq.explanation, opts) else {
        return DetectorReport::indeterminate(
            KIND,
            "unparseable: the explanation yields no numeric value to test the choices against",
            ReportSource::Rule,
        );
    };
    let a_valid = matching_labels(mcq, &value, opts);
    let solved = format_rational(&value);
    let detail = ReportDetail::Solvability(SolvabilityReport {
        a_valid: a_valid.clone(),
        method: SolvabilityMethod::ChoiceEvaluation,
        solved_value: Some(solved.clone()),
    });
    let evidence = vec![Finding::ValidAnswers {
        solved_value: solved.clone(),
        a_valid: a_valid.clone(),
    }];
    if a_valid.len() == 1 {
        return DetectorReport::new(KIND, Indicator::Clear, evidence, String::new(), ReportSource::Rule)
            .expect("clear report")
            .with_detail(detail);
    }
    let feedback = if a_valid.is_empty() {
        format!(
            "No choice equals the solved value {solved} (from \"{source}\"). Make exactly one \
             choice equal to the correct result, or fix the question so that it is solvable."
        )
    } else {
        let labels: Vec<String> = a_valid.iter().map(ToString::to_string).collect();
        format!(
            "Choices {} all equal the solved value {solved}, so the question has more than one \
             correct answer. Keep exactly one correct choice and make the others distinct \
             distractors.",
            labels.join(", ")
        )
    };
    DetectorReport::new(KIND, Indicator::Flagged, evidence, feedback, ReportSource::Rule)
        .expect("flagged report has evidence and feedback")
        .with_detail(detail)
        .suggest(Some(DetectorKind::Consistency))
}

pub struct SolvabilityDetector {
    opts: EvalOptions,
}

impl SolvabilityDetector {
    pub fn new(opts: EvalOptions) -> Self {
        SolvabilityDetector { opts }
    }
}

impl Detector for SolvabilityDetector {
    fn kind(&self) -> DetectorKind {
        KIND
    }

    fn detect(&self, mcq: &Mcq) -> Result<Detection, DetectError> {
        Ok(check_solvability(mcq, &self.opts).into())
    }
}
