//! LLM-backed generator and detectors.
//!
//! Prompts are plain-text templates with `{{name}}` placeholders. The
//! built-in set is compiled in and any file of the same name in an override
//! directory replaces it. Replies may open with free-form reasoning; the
//! structured part is always the last JSON object in the reply.

mod detector;
mod generator;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::llm::{ChatRequest, Completion};
use crate::model::{AgentCall, Mcq};

pub use detector::{parse_verdict, HybridDetector, LlmDetector};
pub use generator::{GenerationFailed, Generation, Generator, LlmGenerator};

const BUILTIN: [(&str, &str); 9] = [
    ("generator_system", include_str!("../../templates/generator_system.txt")),
    ("generate", include_str!("../../templates/generate.txt")),
    ("revise", include_str!("../../templates/revise.txt")),
    ("repair", include_str!("../../templates/repair.txt")),
    ("detector_system", include_str!("../../templates/detector_system.txt")),
    ("consistency", include_str!("../../templates/consistency.txt")),
    ("solvability", include_str!("../../templates/solvability.txt")),
    ("factual", include_str!("../../templates/factual.txt")),
    ("math", include_str!("../../templates/math.txt")),
];

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("unknown template `{0}`")]
    Unknown(String),
    #[error("template `{template}` has no value for placeholder `{placeholder}`")]
    MissingValue { template: String, placeholder: String },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// The prompt template set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    texts: BTreeMap<String, String>,
}

impl Default for Templates {
    fn default() -> Self {
        Templates {
            texts: BUILTIN
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }
}

impl Templates {
    /// Built-ins, with `<dir>/<name>.txt` replacing any template it names.
    pub fn with_overrides(dir: &Path) -> Result<Self, TemplateError> {
        let mut t = Templates::default();
        for (name, _) in BUILTIN {
            let path = dir.join(format!("{name}.txt"));
            if path.is_file() {
                let text = std::fs::read_to_string(&path).map_err(|source| TemplateError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                t.texts.insert(name.to_string(), text);
            }
        }
        Ok(t)
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.texts.get(name).map(String::as_str)
    }

    /// Fills every `{{name}}` in template `name`. A placeholder without a
    /// value is an error; unused values are ignored.
    pub fn render(&self, name: &str, vars: &[(&str, &str)]) -> Result<String, TemplateError> {
        let text = self
            .get(name)
            .ok_or_else(|| TemplateError::Unknown(name.to_string()))?;
        let mut out = String::with_capacity(text.len());
        let mut rest = text;
        while let Some(start) = rest.find("{{") {
            let Some(len) = rest[start + 2..].find("}}") else {
                break;
            };
            let key = rest[start + 2..start + 2 + len].trim();
            let value = vars
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .ok_or_else(|| TemplateError::MissingValue {
                    template: name.to_string(),
                    placeholder: key.to_string(),
                })?;
            out.push_str(&rest[..start]);
            out.push_str(value);
            rest = &rest[start + 2 + len + 2..];
        }
        out.push_str(rest);
        Ok(out)
    }
}

/// What to write, and for a revision the question and feedback to work from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationSpec {
    /// Id given to the produced question.
    pub id: String,
    pub subject: String,
    pub topic: String,
    #[serde(default = "default_difficulty")]
    pub difficulty: String,
    #[serde(default)]
    pub style: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<Mcq>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<String>,
}

fn default_difficulty() -> String {
    "medium".into()
}

impl GenerationSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.subject.trim().is_empty() {
            return Err("generation spec needs a nonempty subject".into());
        }
        if self.topic.trim().is_empty() {
            return Err("generation spec needs a nonempty topic".into());
        }
        if self.id.trim().is_empty() {
            return Err("generation spec needs a nonempty id".into());
        }
        Ok(())
    }

    /// A revision turn on `prior`, keeping its id.
    pub fn revision(base: Option<&GenerationSpec>, prior: &Mcq, feedback: &str) -> Self {
        let subject = base
            .map(|b| b.subject.clone())
            .filter(|s| !s.trim().is_empty())
            .or_else(|| Some(prior.subject.clone()).filter(|s| !s.trim().is_empty()))
            .unwrap_or_else(|| "general".into());
        GenerationSpec {
            id: prior.id.clone(),
            subject,
            topic: base
                .map(|b| b.topic.clone())
                .unwrap_or_else(|| format!("revision of {}", prior.id)),
            difficulty: base.map(|b| b.difficulty.clone()).unwrap_or_else(default_difficulty),
            style: base.map(|b| b.style.clone()).unwrap_or_default(),
            prior: Some(prior.clone()),
            feedback: Some(feedback.to_string()),
        }
    }
}

/// The last top-level JSON object in `text`, skipping anything that does
/// not parse.
pub fn last_json_object(text: &str) -> Option<serde_json::Map<String, Value>> {
    let mut found = None;
    let mut i = 0;
    while let Some(off) = text[i..].find('{') {
        let start = i + off;
        let mut stream = serde_json::Deserializer::from_str(&text[start..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(Value::Object(map))) => {
                found = Some(map);
                i = start + stream.byte_offset();
            }
            _ => i = start + 1,
        }
    }
    found
}

pub(crate) fn agent_call(request: &ChatRequest, c: &Completion) -> AgentCall {
    AgentCall {
        agent: request.context.agent.clone(),
        model: request.model.clone(),
        input_tokens: c.response.usage.input_tokens,
        output_tokens: c.response.usage.output_tokens,
        attempts: c.attempts,
        cost: c.cost,
    }
}
