use crate::expr::{format_rational, EvalOptions};
use crate::model::Mcq;

use super::text::{conclusion, matching_labels, Conclusion};
use super::{
    DetectError, Detection, Detector, DetectorKind, DetectorReport, Finding, Indicator,
    ReportSource,
};

const KIND: DetectorKind = DetectorKind::Consistency;

/// Answer/explanation agreement (h1).
///
/// The conclusion is the last explicit label ("the answer is B") or the
/// final computed value matched against the choice texts. Anything that
/// does not pin down a single label is indeterminate.
pub fn check_consistency(mcq: &Mcq, opts: &EvalOptions) -> DetectorReport {
    let (concluded, source) = match conclusion(mcq, opts) {
        None => {
            return DetectorReport::indeterminate(
                KIND,
                "no concluded answer could be extracted from the explanation",
                ReportSource::Rule,
            )
        }
        Some(Conclusion::Label { label, text }) => (label, text),
        Some(Conclusion::Value { value, text }) => {
            let matched = matching_labels(mcq, &value, opts);
            if matched.len() != 1 {
                let mut r = DetectorReport::indeterminate(
                    KIND,
                    format!(
                        "final value {} matches {} choices",
                        format_rational(&value),
                        matched.len()
                    ),
                    ReportSource::Rule,
                );
                r.evidence.push(Finding::Conclusion {
                    source: text,
                    matched,
                });
                return r.suggest(Some(DetectorKind::Solvability));
            }
            (matched[0], text)
        }
    };

    if concluded == mcq.answer {
        DetectorReport::new(
            KIND,
            Indicator::Clear,
            vec![Finding::Conclusion {
                source,
                matched: vec![concluded],
            }],
            String::new(),
            ReportSource::Rule,
        )
        .expect("clear report")
    } else {
        let feedback = format!(
            "The explanation concludes choice {concluded} but the answer key is {}. \
             Make the explanation and the answer label agree; if the reasoning is right, change \
             the answer label, otherwise fix the reasoning.",
            mcq.answer
        );
        DetectorReport::new(
            KIND,
            Indicator::Flagged,
            vec![Finding::LabelMismatch {
                concluded,
                answer: mcq.answer,
                source,
            }],
            feedback,
            ReportSource::Rule,
        )
        .expect("flagged report has evidence and feedback")
        .suggest(Some(DetectorKind::Math))
    }
}

pub struct ConsistencyDetector {
    opts: EvalOptions,
}

impl ConsistencyDetector {
    pub fn new(opts: EvalOptions) -> Self {
        ConsistencyDetector { opts }
    }
}

impl Detector for ConsistencyDetector {
    fn kind(&self) -> DetectorKind {
        KIND
    }

    fn detect(&self, mcq: &Mcq) -> Result<Detection, DetectError> {
        Ok(check_consistency(mcq, &self.opts).into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_mcq, Label};
    use serde_json::json;

    fn mcq(choices: [&str; 4], answer: &str, explanation: &str) -> Mcq {
        validate_mcq(&json!({
            "id": "c", "question": "q?",
            "choices": [
                {"label": "A", "text": choices[0]}, {"label": "B", "text": choices[1]},
                {"label": "C", "text": choices[2]}, {"label": "D", "text": choices[3]},
            ],
            "answer": answer, "explanation": explanation,
        }))
        .unwrap()
    }

    fn check(m: &Mcq) -> DetectorReport {
        check_consistency(m, &EvalOptions::default())
    }

    #[test]
    fn declared_label_matches_answer() {
        let m = mcq(["a", "b", "c", "d"], "B", "Some reasoning, therefore the answer is B.");
        assert_eq!(check(&m).indicator, Indicator::Clear);
    }

    #[test]
    fn declared_label_contradicts_answer() {
        let m = mcq(["a", "b", "c", "d"], "B", "Some reasoning, so the answer is C.");
        let r = check(&m);
        assert_eq!(r.indicator, Indicator::Flagged);
        assert!(matches!(
            r.evidence[0],
            Finding::LabelMismatch { concluded: Label::C, answer: Label::B, .. }
        ));
        assert!(!r.feedback.is_empty());
    }

    #[test]
    fn computed_value_matched_to_choice() {
        // 6×7 evaluates to 42; exactly one choice (B) has that value.
        let m = mcq(["40", "42", "44", "46"], "B", "compute 6×7 = 42");
        assert_eq!(check(&m).indicator, Indicator::Clear);
        let m = mcq(["40", "42", "44", "46"], "A", "compute 6×7 = 42");
        assert_eq!(check(&m).indicator, Indicator::Flagged);
    }

    #[test]
    fn no_conclusion_is_indeterminate() {
        let m = mcq(["a", "b", "c", "d"], "B", "It follows from the definition.");
        let r = check(&m);
        assert_eq!(r.indicator, Indicator::Indeterminate);
        assert!(r.escalate);
    }

    #[test]
    fn ambiguous_value_is_indeterminate() {
        let m = mcq(["42", "42", "1", "2"], "B", "6 × 7 = 42");
        assert_eq!(check(&m).indicator, Indicator::Indeterminate);
    }
}
