#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use qrefine_core::agents::{Generation, GenerationFailed, GenerationSpec, LlmGenerator, Templates};
use qrefine_core::detectors::{load_kb, DetectorOptions, DetectorSet};
use qrefine_core::llm::{CostModel, Gateway, ManualClock, Scenario, ScriptedTransport, Transport};
use qrefine_core::model::validate_mcq;
use qrefine_core::orchestrator::{refine, RefineConfig, RefineInput};
use qrefine_core::{Mcq, Trace};
use serde_json::{json, Value};

pub fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

pub fn read_mcq(rel: &str) -> Mcq {
    let v: Value = serde_json::from_str(&std::fs::read_to_string(data(rel)).unwrap()).unwrap();
    validate_mcq(&v).unwrap()
}

pub fn numeric_mcq(id: &str, choices: [&str; 4], answer: &str, explanation: &str) -> Mcq {
    validate_mcq(&json!({
        "id": id,
        "question": "Compute the value.",
        "choices": [
            {"label": "A", "text": choices[0]},
            {"label": "B", "text": choices[1]},
            {"label": "C", "text": choices[2]},
            {"label": "D", "text": choices[3]},
        ],
        "answer": answer,
        "explanation": explanation,
        "subject": "Math",
    }))
    .unwrap()
}

/// A generator that swaps in the explanation from `fixed` whatever the
/// feedback says.
pub fn replace_with(fixed: Mcq) -> impl Fn(&GenerationSpec) -> Result<Generation, GenerationFailed> + Send + Sync {
    move |_spec| {
        Ok(Generation {
            mcq: fixed.clone(),
            calls: vec![],
            repair_rounds: 0,
        })
    }
}

/// Runs the shipped four-defect scenario end to end through the scripted
/// transport, the model-backed generator and the rule-based detectors.
pub fn run_four_defects() -> Trace {
    let scenario = Scenario::load(data(&format!("{FOUR_DEFECTS}/scenario.json"))).unwrap();
    run_four_defects_with(Arc::new(ScriptedTransport::new(scenario)))
}

pub const FOUR_DEFECTS: &str = "scenarios/four_defects";

/// The four-defect run over any transport that can answer its generator calls.
pub fn run_four_defects_with(transport: Arc<dyn Transport>) -> Trace {
    let dir = FOUR_DEFECTS;
    let gateway = Arc::new(
        Gateway::new(transport, CostModel::default()).with_clock(Arc::new(ManualClock::default())),
    );
    let generator = LlmGenerator::new(gateway, "gpt-4.1-nano", Arc::new(Templates::default()));
    let kb = load_kb(data(&format!("{dir}/kb.txt"))).unwrap();
    let detectors = DetectorSet::rule_based(Some(Arc::new(kb)), &DetectorOptions::default());
    let config = RefineConfig {
        full_pass: true,
        ..RefineConfig::default()
    };
    let mcq = read_mcq(&format!("{dir}/mcq.json"));
    refine(RefineInput::Mcq(mcq), &detectors, &generator, &config).unwrap()
}
