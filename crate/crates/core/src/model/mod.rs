//! Shared value types: the question tuple, hallucination vector, weights and
//! iteration traces.

mod mcq;
mod money;
mod trace;
mod vector;

pub use mcq::{validate_mcq, Choice, Label, Mcq, ValidationError};
pub use money::Usd;
pub use trace::{
    check_trace, AgentCall, IterationRecord, Outcome, Trace, TraceError, TraceHeader,
    TraceViolation,
};
pub use vector::{Component, HallucinationVector, Weights, WeightsError};
