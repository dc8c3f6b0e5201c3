use serde::{Deserialize, Serialize};

use crate::expr::{evaluate, format_rational, EvalOptions};
use crate::model::Mcq;

use super::text::{choice_value, find_steps};
use super::{
    DetectError, Detection, Detector, DetectorKind, DetectorReport, Finding, Indicator,
    ReportDetail, ReportSource,
};

const KIND: DetectorKind = DetectorKind::Math;

/// One verified reasoning step. Values are exact rationals written `n` or `n/d`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MathStep {
    pub expression: String,
    pub stated: String,
    pub computed: String,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MathCheckReport {
    pub steps: Vec<MathStep>,
    /// Whether the last step's stated value equals the answer choice's value;
    /// `None` when the answer choice is not numeric.
    pub final_ok: Option<bool>,
}

/// Arithmetic errors (h4): every `expression = value` step is evaluated
/// exactly and compared with the value as written.
pub fn check_math(mcq: &Mcq, opts: &EvalOptions) -> DetectorReport {
    let mut steps = Vec::new();
    let mut evidence = Vec::new();
    let mut unverified = Vec::new();
    let mut last_stated = None;
    for raw in find_steps(&mcq.explanation) {
        let text = format!("{} = {}", raw.expression, raw.value);
        let computed = evaluate(&raw.expression, opts);
        let stated = evaluate(&raw.value, opts);
        match (computed, stated) {
            (Ok(computed), Ok(stated)) => {
                let ok = computed == stated;
                if !ok {
                    evidence.push(Finding::FailedStep {
                        expression: raw.expression.clone(),
                        stated: format_rational(&stated),
                        computed: format_rational(&computed),
                    });
                }
                steps.push(MathStep {
                    expression: raw.expression,
                    stated: format_rational(&stated),
                    computed: format_rational(&computed),
                    ok,
                });
                last_stated = Some(stated);
            }
            (Err(e), _) | (_, Err(e)) => unverified.push(Finding::UnverifiedStep {
                text,
                reason: e.to_string(),
            }),
        }
    }

    let Some(last_stated) = last_stated else {
        let mut r = DetectorReport::indeterminate(
            KIND,
            "no arithmetic step of the form `expression = value` could be parsed",
            ReportSource::Rule,
        );
        r.evidence.extend(unverified);
        return r;
    };

    let answer_value = choice_value(mcq.answer_text(), opts);
    let final_ok = answer_value.as_ref().map(|v| *v == last_stated);
    if final_ok == Some(false) {
        evidence.push(Finding::FinalMismatch {
            stated: format_rational(&last_stated),
            answer_value: format_rational(answer_value.as_ref().unwrap()),
        });
    }

    let flagged = !evidence.is_empty();
    let mut feedback = Vec::new();
    for f in &evidence {
        match f {
            Finding::FailedStep {
                expression,
                stated,
                computed,
            } => feedback.push(format!(
                "The step `{expression} = {stated}` is wrong: {expression} evaluates to {computed}. \
                 Correct it and every result derived from it."
            )),
            Finding::FinalMismatch {
                stated,
                answer_value,
            } => feedback.push(format!(
                "The final computed result {stated} does not equal the value of answer choice {} \
                 ({answer_value}).",
                mcq.answer
            )),
            _ => {}
        }
    }
    let detail = ReportDetail::Math(MathCheckReport { steps, final_ok });
    evidence.extend(unverified);
    let indicator = if flagged { Indicator::Flagged } else { Indicator::Clear };
    let report = DetectorReport::new(KIND, indicator, evidence, feedback.join(" "), ReportSource::Rule)
        .expect("flagged math report carries evidence and feedback")
        .with_detail(detail);
    if flagged {
        report.suggest(Some(DetectorKind::Consistency))
    } else {
        report
    }
}

pub struct MathDetector {
    opts: EvalOptions,
}

impl MathDetector {
    pub fn new(opts: EvalOptions) -> Self {
        MathDetector { opts }
    }
}

impl Detector for MathDetector {
    fn kind(&self) -> DetectorKind {
        KIND
    }

    fn detect(&self, mcq: &Mcq) -> Result<Detection, DetectError> {
        Ok(check_math(mcq, &self.opts).into())
    }
}
