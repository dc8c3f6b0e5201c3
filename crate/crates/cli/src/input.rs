use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use qrefine_core::agents::GenerationSpec;
use qrefine_core::model::validate_mcq;
use qrefine_core::orchestrator::RefineInput;
use qrefine_core::Mcq;
use serde_json::Value;

/// One JSON value and where it came from, for error messages.
#[derive(Debug)]
pub struct Record {
    pub origin: String,
    pub value: Value,
}

/// Reads a single JSON object, a JSON array, or JSON Lines. Errors name the
/// offending line.
pub fn read_records(path: &Path) -> Result<Vec<Record>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let name = path.display().to_string();
    if text.trim().is_empty() {
        bail!("{name}: no questions found");
    }
    match serde_json::from_str::<Value>(&text) {
        Ok(Value::Array(items)) => Ok(items
            .into_iter()
            .enumerate()
            .map(|(i, value)| Record {
                origin: format!("{name}: item {}", i + 1),
                value,
            })
            .collect()),
        Ok(value) => Ok(vec![Record {
            origin: name,
            value,
        }]),
        // several documents in a row: read as JSON Lines
        Err(e) if e.to_string().starts_with("trailing characters") => {
            let mut out = Vec::new();
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let value = serde_json::from_str(line)
                    .map_err(|e| anyhow!("{name}: line {}: malformed JSON: {e}", i + 1))?;
                out.push(Record {
                    origin: format!("{name}: line {}", i + 1),
                    value,
                });
            }
            Ok(out)
        }
        Err(e) => Err(anyhow!("{name}: line {}: malformed JSON: {e}", e.line())),
    }
}

pub fn to_mcq(r: &Record) -> Result<Mcq> {
    validate_mcq(&r.value).map_err(|errs| {
        let msgs: Vec<String> = errs.iter().map(ToString::to_string).collect();
        anyhow!("{}: invalid question: {}", r.origin, msgs.join("; "))
    })
}

/// A question when the record has choices, otherwise a generation spec.
pub fn to_refine_input(r: &Record) -> Result<RefineInput> {
    if r.value.get("choices").is_some() {
        return to_mcq(r).map(RefineInput::Mcq);
    }
    let spec: GenerationSpec = serde_json::from_value(r.value.clone())
        .map_err(|e| anyhow!("{}: neither a question nor a generation spec: {e}", r.origin))?;
    spec.validate().map_err(|e| anyhow!("{}: {e}", r.origin))?;
    Ok(RefineInput::Spec(spec))
}
