use std::sync::Arc;

use serde_json::Value;
use thiserror::Error;

use super::{agent_call, last_json_object, GenerationSpec, Templates};
use crate::llm::{CallContext, ChatRequest, Gateway, Message};
use crate::model::{validate_mcq, AgentCall, Mcq};

/// A produced question and what it took.
#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub mcq: Mcq,
    pub calls: Vec<AgentCall>,
    pub repair_rounds: u32,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("generation failed: {reason}")]
pub struct GenerationFailed {
    pub reason: String,
    /// The last model reply, kept for the trace.
    pub raw: Option<String>,
    /// Calls that were paid for before giving up.
    pub calls: Vec<AgentCall>,
}

pub trait Generator: Send + Sync {
    fn generate(&self, spec: &GenerationSpec) -> Result<Generation, GenerationFailed>;
}

impl<F> Generator for F
where
    F: Fn(&GenerationSpec) -> Result<Generation, GenerationFailed> + Send + Sync,
{
    fn generate(&self, spec: &GenerationSpec) -> Result<Generation, GenerationFailed> {
        self(spec)
    }
}

pub struct LlmGenerator {
    gateway: Arc<Gateway>,
    model: String,
    templates: Arc<Templates>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl LlmGenerator {
    pub fn new(gateway: Arc<Gateway>, model: impl Into<String>, templates: Arc<Templates>) -> Self {
        LlmGenerator {
            gateway,
            model: model.into(),
            templates,
            temperature: 0.8,
            max_tokens: 2048,
        }
    }

    fn prompt(&self, spec: &GenerationSpec) -> Result<Vec<Message>, String> {
        let system = self
            .templates
            .render("generator_system", &[])
            .map_err(|e| e.to_string())?;
        let user = match (&spec.prior, &spec.feedback) {
            (Some(prior), feedback) => {
                let mcq = serde_json::to_string_pretty(prior).expect("Mcq serializes");
                self.templates.render(
                    "revise",
                    &[
                        ("mcq", &mcq),
                        ("feedback", feedback.as_deref().unwrap_or("")),
                        ("id", &spec.id),
                    ],
                )
            }
            (None, _) => self.templates.render(
                "generate",
                &[
                    ("subject", &spec.subject),
                    ("topic", &spec.topic),
                    ("difficulty", &spec.difficulty),
                    ("style", &spec.style),
                    ("id", &spec.id),
                ],
            ),
        }
        .map_err(|e| e.to_string())?;
        Ok(vec![Message::system(system), Message::user(user)])
    }

    fn request(&self, spec: &GenerationSpec, messages: Vec<Message>) -> ChatRequest {
        ChatRequest {
            model: self.model.clone(),
            messages,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            context: CallContext {
                agent: "generator".into(),
                scope: spec.id.clone(),
            },
        }
    }
}

/// Reads the question out of a reply. The id is forced to the spec's and a
/// missing subject is filled from it.
fn parse_reply(raw: &str, spec: &GenerationSpec) -> Result<Mcq, Vec<String>> {
    let mut obj = last_json_object(raw).ok_or_else(|| vec!["no JSON object found in the reply".to_string()])?;
    obj.insert("id".into(), Value::String(spec.id.clone()));
    if !obj.contains_key("subject") {
        obj.insert("subject".into(), Value::String(spec.subject.clone()));
    }
    validate_mcq(&Value::Object(obj)).map_err(|errs| errs.iter().map(ToString::to_string).collect())
}

impl Generator for LlmGenerator {
    fn generate(&self, spec: &GenerationSpec) -> Result<Generation, GenerationFailed> {
        let fail = |reason: String, raw: Option<String>, calls: Vec<AgentCall>| GenerationFailed {
            reason,
            raw,
            calls,
        };
        spec.validate().map_err(|e| fail(e, None, vec![]))?;
        let mut messages = self.prompt(spec).map_err(|e| fail(e, None, vec![]))?;
        let mut calls = Vec::new();
        let mut repair_rounds = 0;
        loop {
            let req = self.request(spec, messages.clone());
            let completion = self
                .gateway
                .complete(&req)
                .map_err(|e| fail(e.to_string(), None, calls.clone()))?;
            calls.push(agent_call(&req, &completion));
            let raw = completion.response.content;
            match parse_reply(&raw, spec) {
                Ok(mcq) => {
                    return Ok(Generation {
                        mcq,
                        calls,
                        repair_rounds,
                    })
                }
                Err(errors) if repair_rounds == 0 => {
                    repair_rounds += 1;
                    let list = errors.iter().map(|e| format!("- {e}")).collect::<Vec<_>>().join("\n");
                    let repair = self
                        .templates
                        .render("repair", &[("errors", &list)])
                        .map_err(|e| fail(e.to_string(), Some(raw.clone()), calls.clone()))?;
                    log::info!("generator reply for {} unusable, asking for a repair", spec.id);
                    messages.push(Message::assistant(raw));
                    messages.push(Message::user(repair));
                }
                Err(errors) => {
                    return Err(fail(
                        format!("reply still invalid after repair: {}", errors.join("; ")),
                        Some(raw),
                        calls,
                    ))
                }
            }
        }
    }
}
