//! Multiple-choice question refinement against four hallucination checks.
//!
//! A question is the tuple of stem, four labelled choices, answer label and
//! explanation ([`model::Mcq`]). Four detectors score it for answer/explanation
//! inconsistency, unsolvable framing, unsupported factual claims and
//! arithmetic slips; the [`scoring`] module folds those binary verdicts into a
//! weighted composite, and the [`orchestrator`] drives a generator to revise
//! the question until the composite falls below threshold or stops improving.
//!
//! [`simulator`] models the same loop stochastically, with a closed-form
//! expectation to check it against.

pub mod agents;
pub mod config;
pub mod detectors;
pub mod expr;
pub mod llm;
pub mod model;
pub mod orchestrator;
pub mod scoring;
pub mod simulator;

pub use model::{
    validate_mcq, Choice, HallucinationVector, IterationRecord, Label, Mcq, Outcome, Trace, Usd,
    Weights,
};
