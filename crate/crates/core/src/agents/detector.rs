use std::sync::Arc;

use serde_json::{Map, Value};

use super::{agent_call, last_json_object, Templates};
use crate::detectors::{
    DetectError, Detection, Detector, DetectorKind, DetectorReport, Finding, Indicator, ReportSource,
};
use crate::llm::{CallContext, ChatRequest, Gateway, Message};
use crate::model::Mcq;

/// Reads a verdict object into a report. The indicator accepts 0/1,
/// booleans, their string forms, and `"indeterminate"` or null.
pub fn parse_verdict(kind: DetectorKind, obj: &Map<String, Value>) -> Result<DetectorReport, String> {
    let indicator = match obj.get("indicator") {
        Some(Value::Number(n)) if n.as_f64() == Some(0.0) => Indicator::Clear,
        Some(Value::Number(n)) if n.as_f64() == Some(1.0) => Indicator::Flagged,
        Some(Value::Bool(b)) => {
            if *b {
                Indicator::Flagged
            } else {
                Indicator::Clear
            }
        }
        Some(Value::String(s)) => match s.trim().to_ascii_lowercase().as_str() {
            "0" | "false" | "no" => Indicator::Clear,
            "1" | "true" | "yes" => Indicator::Flagged,
            "indeterminate" | "unknown" => Indicator::Indeterminate,
            other => return Err(format!("indicator `{other}` is not 0, 1 or indeterminate")),
        },
        Some(Value::Null) => Indicator::Indeterminate,
        Some(other) => return Err(format!("indicator {other} is not 0, 1 or indeterminate")),
        None => return Err("missing `indicator`".into()),
    };
    let evidence = match obj.get("evidence") {
        None | Some(Value::Null) => vec![],
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            })
            .filter(|s| !s.trim().is_empty())
            .map(|text| Finding::Note { text })
            .collect(),
        Some(Value::String(s)) if !s.trim().is_empty() => vec![Finding::Note { text: s.clone() }],
        Some(Value::String(_)) => vec![],
        Some(other) => return Err(format!("evidence {other} is not a list")),
    };
    let feedback = match obj.get("feedback") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(other) => return Err(format!("feedback {other} is not text")),
    };
    let suggested_next = match obj.get("suggested_next") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) if s.trim().is_empty() => None,
        Some(Value::String(s)) => Some(
            DetectorKind::parse(s).ok_or_else(|| format!("suggested_next `{s}` is not a detector kind"))?,
        ),
        Some(other) => return Err(format!("suggested_next {other} is not a detector kind")),
    };
    let report = DetectorReport::new(kind, indicator, evidence, feedback, ReportSource::Llm)
        .map_err(|e| e.to_string())?
        .suggest(suggested_next);
    match obj.get("confidence").and_then(Value::as_f64) {
        Some(c) => report.with_confidence(c).map_err(|e| e.to_string()),
        None => Ok(report),
    }
}

/// One hallucination check done by a model.
pub struct LlmDetector {
    kind: DetectorKind,
    gateway: Arc<Gateway>,
    model: String,
    templates: Arc<Templates>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl LlmDetector {
    pub fn new(
        kind: DetectorKind,
        gateway: Arc<Gateway>,
        model: impl Into<String>,
        templates: Arc<Templates>,
    ) -> Self {
        LlmDetector {
            kind,
            gateway,
            model: model.into(),
            templates,
            temperature: 0.0,
            max_tokens: 1024,
        }
    }
}

impl Detector for LlmDetector {
    fn kind(&self) -> DetectorKind {
        self.kind
    }

    fn detect(&self, mcq: &Mcq) -> Result<Detection, DetectError> {
        let render = |name: &str, vars: &[(&str, &str)]| {
            self.templates
                .render(name, vars)
                .map_err(|e| DetectError::Llm(crate::llm::LlmError::InvalidRequest(e.to_string())))
        };
        let mcq_text = serde_json::to_string_pretty(mcq).expect("Mcq serializes");
        let mut messages = vec![
            Message::system(render("detector_system", &[])?),
            Message::user(render(self.kind.name(), &[("mcq", &mcq_text)])?),
        ];
        let mut calls = Vec::new();
        for round in 0..2 {
            let req = ChatRequest {
                model: self.model.clone(),
                messages: messages.clone(),
                temperature: self.temperature,
                max_tokens: self.max_tokens,
                context: CallContext {
                    agent: self.kind.name().into(),
                    scope: mcq.id.clone(),
                },
            };
            let completion = self.gateway.complete(&req)?;
            calls.push(agent_call(&req, &completion));
            let raw = completion.response.content;
            let parsed = last_json_object(&raw)
                .ok_or_else(|| "no JSON object found in the reply".to_string())
                .and_then(|obj| parse_verdict(self.kind, &obj));
            match parsed {
                Ok(report) => return Ok(Detection { report, calls }),
                Err(e) if round == 0 => {
                    let repair = render("repair", &[("errors", &format!("- {e}"))])?;
                    messages.push(Message::assistant(raw));
                    messages.push(Message::user(repair));
                }
                Err(e) => {
                    log::info!("{} verdict for {} unusable after repair: {e}", self.kind, mcq.id);
                    let report = DetectorReport::indeterminate(
                        self.kind,
                        format!("model verdict unusable: {e}"),
                        ReportSource::Llm,
                    );
                    let report = DetectorReport {
                        escalate: false,
                        ..report
                    };
                    return Ok(Detection { report, calls });
                }
            }
        }
        unreachable!("the loop returns by the second round")
    }
}

/// Rule-based check first; an undecided verdict goes to the model.
pub struct HybridDetector {
    rule: Arc<dyn Detector>,
    llm: Arc<dyn Detector>,
}

impl HybridDetector {
    pub fn new(rule: Arc<dyn Detector>, llm: Arc<dyn Detector>) -> Self {
        assert_eq!(rule.kind(), llm.kind(), "hybrid detector halves must check the same kind");
        HybridDetector { rule, llm }
    }
}

impl Detector for HybridDetector {
    fn kind(&self) -> DetectorKind {
        self.rule.kind()
    }

    fn detect(&self, mcq: &Mcq) -> Result<Detection, DetectError> {
        let first = self.rule.detect(mcq)?;
        if first.report.indicator != Indicator::Indeterminate {
            return Ok(first);
        }
        let mut second = self.llm.detect(mcq)?;
        let mut calls = first.calls;
        calls.append(&mut second.calls);
        Ok(Detection {
            report: second.report,
            calls,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn obj(v: Value) -> Map<String, Value> {
        v.as_object().unwrap().clone()
    }

    #[test]
    fn verdict_forms() {
        let r = parse_verdict(
            DetectorKind::Consistency,
            &obj(json!({"indicator": 1, "evidence": ["answer says B, explanation concludes C"],
                        "feedback": "make them agree", "suggested_next": "math"})),
        )
        .unwrap();
        assert_eq!(r.indicator, Indicator::Flagged);
        assert_eq!(r.suggested_next, Some(DetectorKind::Math));
        assert_eq!(r.source, ReportSource::Llm);

        let r = parse_verdict(DetectorKind::Math, &obj(json!({"indicator": "0"}))).unwrap();
        assert_eq!(r.indicator, Indicator::Clear);
        assert!(r.feedback.is_empty());

        let r = parse_verdict(DetectorKind::Math, &obj(json!({"indicator": null}))).unwrap();
        assert_eq!(r.indicator, Indicator::Indeterminate);
    }

    #[test]
    fn invalid_verdicts() {
        let k = DetectorKind::Factual;
        assert!(parse_verdict(k, &obj(json!({}))).is_err());
        assert!(parse_verdict(k, &obj(json!({"indicator": 2}))).is_err());
        assert!(parse_verdict(k, &obj(json!({"indicator": 1, "feedback": "x"}))).is_err());
        assert!(parse_verdict(k, &obj(json!({"indicator": 1, "evidence": ["e"]}))).is_err());
        assert!(parse_verdict(k, &obj(json!({"indicator": 0, "suggested_next": "h9"}))).is_err());
    }
}
