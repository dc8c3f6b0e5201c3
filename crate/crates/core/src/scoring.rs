//! Composite hallucination score and the loop's stopping rules.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{HallucinationVector, Weights};

/// Weighted sum of the checked components. `partial` is set when at least one
/// component was not checked and therefore contributed zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeScore {
    pub value: f64,
    pub partial: bool,
}

/// `w1·h1 + w2·h2 + w3·h3 + w4·h4`, summed in component order so that the
/// same inputs always give the same bits.
pub fn composite_score(vector: &HallucinationVector, weights: &Weights) -> CompositeScore {
    let w = weights.as_array();
    let c = vector.components();
    let mut value = 0.0;
    for i in 0..4 {
        value += w[i] * c[i].value();
    }
    // Simplex weights can sum to 1 + 1e-9; keep the score inside [0, 1].
    CompositeScore {
        value: value.clamp(0.0, 1.0),
        partial: vector.is_partial(),
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoringError {
    #[error("score history is empty")]
    EmptyHistory,
    #[error("invalid termination config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerminationConfig {
    pub epsilon1: f64,
    pub epsilon2: f64,
    pub t_max: u32,
}

impl TerminationConfig {
    pub fn new(epsilon1: f64, epsilon2: f64, t_max: u32) -> Result<Self, ScoringError> {
        let cfg = TerminationConfig {
            epsilon1,
            epsilon2,
            t_max,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ScoringError> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !open_unit(self.epsilon1) {
            return Err(ScoringError::InvalidConfig(format!(
                "epsilon1 = {} must lie in (0, 1)",
                self.epsilon1
            )));
        }
        if !open_unit(self.epsilon2) {
            return Err(ScoringError::InvalidConfig(format!(
                "epsilon2 = {} must lie in (0, 1)",
                self.epsilon2
            )));
        }
        if self.t_max < 1 {
            return Err(ScoringError::InvalidConfig("t_max must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for TerminationConfig {
    fn default() -> Self {
        TerminationConfig {
            epsilon1: 0.05,
            epsilon2: 0.01,
            t_max: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationDecision {
    /// Last score below `epsilon1`.
    Converged,
    /// Last change in score below `epsilon2`.
    Stalled,
    /// Iteration budget spent.
    Budget,
    Continue,
}

impl TerminationDecision {
    /// Identifier of the rule that fired.
    pub fn rule(self) -> Option<&'static str> {
        match self {
            TerminationDecision::Converged => Some("score_below_epsilon1"),
            TerminationDecision::Stalled => Some("delta_below_epsilon2"),
            TerminationDecision::Budget => Some("t_max_reached"),
            TerminationDecision::Continue => None,
        }
    }

    pub fn is_terminal(self) -> bool {
        self != TerminationDecision::Continue
    }
}

/// Stopping rule over the score history `H(0), …, H(t)`.
///
/// Rules are tried in priority order: converged, stalled, budget.
pub fn should_terminate(
    history: &[f64],
    config: &TerminationConfig,
) -> Result<TerminationDecision, ScoringError> {
    let (&last, rest) = history.split_last().ok_or(ScoringError::EmptyHistory)?;
    if last < config.epsilon1 {
        return Ok(TerminationDecision::Converged);
    }
    if let Some(&prev) = rest.last() {
        if (last - prev).abs() < config.epsilon2 {
            return Ok(TerminationDecision::Stalled);
        }
    }
    if history.len() as u64 > u64::from(config.t_max) {
        return Ok(TerminationDecision::Budget);
    }
    Ok(TerminationDecision::Continue)
}

/// What the refinement loop knows about one detector pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassSummary {
    pub score: f64,
    /// Which components reached a verdict.
    pub checked: [bool; 4],
    /// Whether every detector ran (the pass was not cut short by a defect).
    pub complete: bool,
}

/// [`should_terminate`] with two guards for passes cut short after the first
/// defect: convergence needs a complete pass, and a stall is only declared
/// between passes that checked the same components. On complete passes with
/// identical check masks this agrees with `should_terminate` exactly.
pub fn decide(
    passes: &[PassSummary],
    config: &TerminationConfig,
) -> Result<TerminationDecision, ScoringError> {
    let (last, rest) = passes.split_last().ok_or(ScoringError::EmptyHistory)?;
    if last.score < config.epsilon1 && last.complete {
        return Ok(TerminationDecision::Converged);
    }
    if let Some(prev) = rest.last() {
        if (last.score - prev.score).abs() < config.epsilon2 && prev.checked == last.checked {
            return Ok(TerminationDecision::Stalled);
        }
    }
    if passes.len() as u64 > u64::from(config.t_max) {
        return Ok(TerminationDecision::Budget);
    }
    Ok(TerminationDecision::Continue)
}
