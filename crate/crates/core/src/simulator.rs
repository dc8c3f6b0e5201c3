//! Stochastic model of the refinement loop.
//!
//! Each question carries four defect bits. At every iteration a present
//! defect of type `i` is caught with probability `r[i]` and, once caught,
//! fixed with probability `f[i]`; a type absent at the start of the
//! iteration reappears with probability `g[i]`. The expected defect rate then
//! follows `e(t+1) = e(t)(1 - r f) + (1 - e(t)) g`, which
//! [`analytic_expectation`] evaluates in closed form.
//!
//! Randomness: question `q` draws from `ChaCha8Rng::seed_from_u64(seed)`
//! with `set_stream(q)`. Within a question the draws go iteration by
//! iteration and type by type (h1..h4): first the initial bits, one draw
//! each; then per iteration and type, one draw for a present defect's
//! detection plus one for its fix when detected, or one draw for an absent
//! defect's reappearance. A draw `u` in [0, 1) succeeds when `u < p`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Weights;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimParams {
    pub n_questions: usize,
    pub n_iterations: u32,
    pub p0: [f64; 4],
    pub r: [f64; 4],
    pub f: [f64; 4],
    #[serde(default)]
    pub g: [f64; 4],
    #[serde(default)]
    pub weights: Weights,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("n_questions must be positive")]
    NoQuestions,
    #[error("{name}[{index}] = {value} is not a probability")]
    BadProbability {
        name: &'static str,
        index: usize,
        value: f64,
    },
}

impl SimParams {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_questions == 0 {
            return Err(SimError::NoQuestions);
        }
        for (name, arr) in [("p0", &self.p0), ("r", &self.r), ("f", &self.f), ("g", &self.g)] {
            for (index, &value) in arr.iter().enumerate() {
                if !(0.0..=1.0).contains(&value) {
                    return Err(SimError::BadProbability { name, index, value });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimPoint {
    pub iteration: u32,
    pub mean_score: f64,
    pub rates: [f64; 4],
    /// `1 - mean_t / mean_0`; undefined when the initial mean is zero.
    /// Negative when defects are introduced faster than they are fixed.
    pub reduction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCurve {
    pub points: Vec<SimPoint>,
}

impl SimCurve {
    fn from_rates(rates: Vec<[f64; 4]>, weights: &Weights) -> SimCurve {
        let w = weights.as_array();
        let means: Vec<f64> = rates
            .iter()
            .map(|r| r.iter().zip(w).map(|(e, w)| e * w).sum())
            .collect();
        let m0 = means.first().copied().unwrap_or(0.0);
        let points = rates
            .into_iter()
            .zip(means)
            .enumerate()
            .map(|(t, (rates, mean_score))| SimPoint {
                iteration: t as u32,
                mean_score,
                rates,
                reduction: (m0 > 0.0).then(|| 1.0 - mean_score / m0),
            })
            .collect();
        SimCurve { points }
    }

    pub fn mean_scores(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mean_score).collect()
    }

    pub fn reduction_at(&self, t: u32) -> Option<f64> {
        self.points.get(t as usize).and_then(|p| p.reduction)
    }

    /// Columns: iteration, mean_score, rate_h1..rate_h4, pct_reduction
    /// (percent; empty when undefined).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,mean_score,rate_h1,rate_h2,rate_h3,rate_h4,pct_reduction\n");
        for p in &self.points {
            let _ = write!(s, "{},{:.6}", p.iteration, p.mean_score);
            for r in p.rates {
                let _ = write!(s, ",{r:.6}");
            }
            match p.reduction {
                Some(x) => {
                    let _ = writeln!(s, ",{:.4}", 100.0 * x);
                }
                None => s.push_str(",\n"),
            }
        }
        s
    }
}

fn simulate_question(params: &SimParams, q: u64) -> Vec<[bool; 4]> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(q);
    let mut hit = |p: f64| rng.random::<f64>() < p;
    let mut bits = [false; 4];
    for i in 0..4 {
        bits[i] = hit(params.p0[i]);
    }
    let mut out = Vec::with_capacity(params.n_iterations as usize + 1);
    out.push(bits);
    for _ in 0..params.n_iterations {
        for i in 0..4 {
            bits[i] = if bits[i] {
                !(hit(params.r[i]) && hit(params.f[i]))
            } else {
                hit(params.g[i])
            };
        }
        out.push(bits);
    }
    out
}

/// Monte Carlo run. Questions are simulated in parallel; since each has its
/// own stream and results are integer counts, the output does not depend on
/// scheduling.
pub fn run_convergence(params: &SimParams) -> Result<SimCurve, SimError> {
    params.validate()?;
    let len = params.n_iterations as usize + 1;
    let counts = (0..params.n_questions as u64)
        .into_par_iter()
        .map(|q| {
            simulate_question(params, q)
                .into_iter()
                .map(|b| b.map(u64::from))
                .collect::<Vec<[u64; 4]>>()
        })
        .reduce(
            || vec![[0u64; 4]; len],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    for i in 0..4 {
                        x[i] += y[i];
                    }
                }
                a
            },
        );
    let n = params.n_questions as f64;
    let rates = counts.into_iter().map(|c| c.map(|k| k as f64 / n)).collect();
    Ok(SimCurve::from_rates(rates, &params.weights))
}

/// Expected curve: per type `e(t) = e* + (e0 - e*)(1 - r f - g)^t` with
/// `e* = g / (r f + g)`, or `e(t) = e0` when `r f + g = 0`.
pub fn analytic_expectation(params: &SimParams) -> Result<SimCurve, SimError> {
    params.validate()?;
    let rates = (0..=params.n_iterations)
        .map(|t| {
            let mut e = [0.0; 4];
            for i in 0..4 {
                let rf = params.r[i] * params.f[i];
                let a = rf + params.g[i];
                e[i] = if a == 0.0 {
                    params.p0[i]
                } else {
                    let fixed = params.g[i] / a;
                    fixed + (params.p0[i] - fixed) * (1.0 - a).powi(t as i32)
                };
            }
            e
        })
        .collect();
    Ok(SimCurve::from_rates(rates, &params.weights))
}

/// Standard error of the Monte Carlo mean at each point of an expected
/// curve: per type `sqrt(e(1-e)/n)` and for the composite
/// `sqrt(sum w^2 e(1-e) / n)`, types being independent.
pub fn standard_errors(expected: &SimCurve, weights: &Weights, n: usize) -> Vec<(f64, [f64; 4])> {
    let w = weights.as_array();
    let n = n as f64;
    expected
        .points
        .iter()
        .map(|p| {
            let var = p.rates.map(|e| e * (1.0 - e));
            let composite = var.iter().zip(w).map(|(v, w)| w * w * v).sum::<f64>() / n;
            (composite.sqrt(), var.map(|v| (v / n).sqrt()))
        })
        .collect()
}
