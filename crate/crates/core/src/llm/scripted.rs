use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ChatRequest, ChatResponse, Transport, TransportError, Usage};

/// One canned reply in a script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawStep", into = "RawStep")]
pub enum ScriptStep {
    /// Raw reply text.
    Content { text: String, usage: Option<Usage> },
    /// A question object, sent back as JSON after a short reasoning preamble.
    Mcq { mcq: Value, usage: Option<Usage> },
    /// A detector verdict object, sent back as JSON.
    Verdict { verdict: Value, usage: Option<Usage> },
    /// A failed attempt: `rate_limited`, `server_error`, `timeout`, `auth`
    /// or `malformed`.
    Error { error: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStep {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    content: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mcq: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    verdict: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    usage: Option<Usage>,
}

const ERROR_NAMES: [&str; 5] = ["rate_limited", "server_error", "timeout", "auth", "malformed"];

impl TryFrom<RawStep> for ScriptStep {
    type Error = String;
    fn try_from(r: RawStep) -> Result<Self, String> {
        match (r.content, r.mcq, r.verdict, r.error) {
            (Some(text), None, None, None) => Ok(ScriptStep::Content { text, usage: r.usage }),
            (None, Some(mcq), None, None) => Ok(ScriptStep::Mcq { mcq, usage: r.usage }),
            (None, None, Some(verdict), None) => Ok(ScriptStep::Verdict {
                verdict,
                usage: r.usage,
            }),
            (None, None, None, Some(error)) => {
                if ERROR_NAMES.contains(&error.as_str()) {
                    Ok(ScriptStep::Error { error })
                } else {
                    Err(format!("unknown error kind `{error}`, expected one of {ERROR_NAMES:?}"))
                }
            }
            _ => Err("a step needs exactly one of `content`, `mcq`, `verdict`, `error`".into()),
        }
    }
}

impl From<ScriptStep> for RawStep {
    fn from(s: ScriptStep) -> Self {
        let mut r = RawStep {
            content: None,
            mcq: None,
            verdict: None,
            error: None,
            usage: None,
        };
        match s {
            ScriptStep::Content { text, usage } => {
                r.content = Some(text);
                r.usage = usage;
            }
            ScriptStep::Mcq { mcq, usage } => {
                r.mcq = Some(mcq);
                r.usage = usage;
            }
            ScriptStep::Verdict { verdict, usage } => {
                r.verdict = Some(verdict);
                r.usage = usage;
            }
            ScriptStep::Error { error } => r.error = Some(error),
        }
        r
    }
}

/// Replies per agent (`generator` or a detector kind name) for one scope.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Script {
    /// Keep replaying the final step once a list runs out.
    #[serde(default)]
    pub repeat_last: bool,
    #[serde(flatten)]
    pub agents: BTreeMap<String, Vec<ScriptStep>>,
}

/// A declarative offline scenario: scripts keyed by scope (question id),
/// with `*` as the fallback for any scope.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub scripts: BTreeMap<String, Script>,
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}: {e}", path.display()))
        })
    }
}

/// Answers each call with the next step of the matching script, ignoring
/// the prompt text. Cursors are kept per (scope, agent).
#[derive(Debug)]
pub struct ScriptedTransport {
    scenario: Scenario,
    cursors: Mutex<BTreeMap<(String, String), usize>>,
}

fn estimate_tokens(chars: usize) -> u64 {
    chars.div_ceil(4) as u64
}

impl ScriptedTransport {
    pub fn new(scenario: Scenario) -> Self {
        ScriptedTransport {
            scenario,
            cursors: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    fn script_for(&self, scope: &str) -> Option<&Script> {
        self.scenario
            .scripts
            .get(scope)
            .or_else(|| self.scenario.scripts.get("*"))
    }
}

impl Transport for ScriptedTransport {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        let ctx = &request.context;
        let script = self.script_for(&ctx.scope).ok_or_else(|| {
            TransportError::Fatal(format!("scenario has no script for scope `{}`", ctx.scope))
        })?;
        let steps = script
            .agents
            .get(&ctx.agent)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| {
                TransportError::Fatal(format!(
                    "scenario script for `{}` has no steps for agent `{}`",
                    ctx.scope, ctx.agent
                ))
            })?;
        let idx = {
            let mut cursors = self.cursors.lock().unwrap();
            let c = cursors.entry((ctx.scope.clone(), ctx.agent.clone())).or_insert(0);
            let i = *c;
            *c += 1;
            i
        };
        let step = match steps.get(idx) {
            Some(s) => s,
            None if script.repeat_last => steps.last().unwrap(),
            None => {
                return Err(TransportError::Fatal(format!(
                    "script for `{}`/`{}` exhausted after {} steps",
                    ctx.scope,
                    ctx.agent,
                    steps.len()
                )))
            }
        };
        let (content, usage) = match step {
            ScriptStep::Error { error } => {
                return Err(match error.as_str() {
                    "rate_limited" => TransportError::Transient {
                        status: Some(429),
                        message: "scripted rate limit".into(),
                    },
                    "server_error" => TransportError::Transient {
                        status: Some(500),
                        message: "scripted server error".into(),
                    },
                    "timeout" => TransportError::Transient {
                        status: None,
                        message: "scripted timeout".into(),
                    },
                    "auth" => TransportError::Auth("scripted auth failure".into()),
                    _ => TransportError::Malformed("scripted malformed response".into()),
                })
            }
            ScriptStep::Content { text, usage } => (text.clone(), *usage),
            ScriptStep::Mcq { mcq, usage } => (
                format!(
                    "Revised question below.\n{}",
                    serde_json::to_string_pretty(mcq).expect("value serializes")
                ),
                *usage,
            ),
            ScriptStep::Verdict { verdict, usage } => (
                serde_json::to_string(verdict).expect("value serializes"),
                *usage,
            ),
        };
        let usage = usage.unwrap_or_else(|| Usage {
            input_tokens: estimate_tokens(
                request.messages.iter().map(|m| m.content.chars().count()).sum(),
            ),
            output_tokens: estimate_tokens(content.chars().count()),
        });
        Ok(ChatResponse { content, usage })
    }
}
