use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{LlmError, Usage};
use crate::model::Usd;

/// Price per million tokens in whole micro-dollars, for input and output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Price {
    pub input_micros_per_million: u64,
    pub output_micros_per_million: u64,
}

fn to_micros(dollars: f64) -> Result<u64, String> {
    if !dollars.is_finite() || dollars < 0.0 {
        return Err(format!("price {dollars} must be a nonnegative number"));
    }
    Ok((dollars * 1e6).round() as u64)
}

impl Price {
    /// One price for every token, in USD per million tokens.
    pub fn per_million(dollars: f64) -> Result<Self, String> {
        let m = to_micros(dollars)?;
        Ok(Price {
            input_micros_per_million: m,
            output_micros_per_million: m,
        })
    }

    pub fn split(input: f64, output: f64) -> Result<Self, String> {
        Ok(Price {
            input_micros_per_million: to_micros(input)?,
            output_micros_per_million: to_micros(output)?,
        })
    }
}

/// Config form: either `per_million` or both `input_per_million` and
/// `output_per_million`, in USD.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PriceEntry {
    #[serde(skip_serializing_if = "Option::is_none")]
    per_million: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    input_per_million: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    output_per_million: Option<f64>,
}

impl TryFrom<PriceEntry> for Price {
    type Error = String;
    fn try_from(e: PriceEntry) -> Result<Self, String> {
        match (e.per_million, e.input_per_million, e.output_per_million) {
            (Some(p), None, None) => Price::per_million(p),
            (None, Some(i), Some(o)) => Price::split(i, o),
            _ => Err("give either `per_million` or both `input_per_million` and `output_per_million`".into()),
        }
    }
}

impl From<Price> for PriceEntry {
    fn from(p: Price) -> Self {
        let f = |m: u64| m as f64 / 1e6;
        if p.input_micros_per_million == p.output_micros_per_million {
            PriceEntry {
                per_million: Some(f(p.input_micros_per_million)),
                input_per_million: None,
                output_per_million: None,
            }
        } else {
            PriceEntry {
                per_million: None,
                input_per_million: Some(f(p.input_micros_per_million)),
                output_per_million: Some(f(p.output_micros_per_million)),
            }
        }
    }
}

/// Model name to token price.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, PriceEntry>", into = "BTreeMap<String, PriceEntry>")]
pub struct CostModel {
    prices: BTreeMap<String, Price>,
}

impl TryFrom<BTreeMap<String, PriceEntry>> for CostModel {
    type Error = String;
    fn try_from(m: BTreeMap<String, PriceEntry>) -> Result<Self, String> {
        let mut prices = BTreeMap::new();
        for (k, v) in m {
            prices.insert(k.clone(), Price::try_from(v).map_err(|e| format!("model `{k}`: {e}"))?);
        }
        Ok(CostModel { prices })
    }
}

impl From<CostModel> for BTreeMap<String, PriceEntry> {
    fn from(c: CostModel) -> Self {
        c.prices.into_iter().map(|(k, v)| (k, v.into())).collect()
    }
}

impl Default for CostModel {
    /// The two reference price points: a lightweight model at $0.10 and a
    /// reasoning model at $1.10 per million tokens.
    fn default() -> Self {
        let mut prices = BTreeMap::new();
        prices.insert("gpt-4.1-nano".to_string(), Price::per_million(0.10).unwrap());
        prices.insert("gpt-o3-mini".to_string(), Price::per_million(1.10).unwrap());
        CostModel { prices }
    }
}

impl CostModel {
    pub fn empty() -> Self {
        CostModel {
            prices: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, model: impl Into<String>, price: Price) {
        self.prices.insert(model.into(), price);
    }

    pub fn contains(&self, model: &str) -> bool {
        self.prices.contains_key(model)
    }

    pub fn get(&self, model: &str) -> Option<Price> {
        self.prices.get(model).copied()
    }

    pub fn models(&self) -> impl Iterator<Item = (&str, Price)> {
        self.prices.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Merges `other` over `self`; entries in `other` win.
    pub fn merged(mut self, other: &CostModel) -> Self {
        for (k, v) in &other.prices {
            self.prices.insert(k.clone(), *v);
        }
        self
    }
}

/// Cost of `usage` tokens at `model`'s price. A price of `p` micro-dollars
/// per million tokens is `p` pico-dollars per token, so this is exact.
pub fn accrue_cost(usage: &Usage, model: &str, cost_model: &CostModel) -> Result<Usd, LlmError> {
    let price = cost_model
        .get(model)
        .ok_or_else(|| LlmError::UnknownModel(model.to_string()))?;
    let pico = usage
        .input_tokens
        .saturating_mul(price.input_micros_per_million)
        .saturating_add(usage.output_tokens.saturating_mul(price.output_micros_per_million));
    Ok(Usd::from_pico(pico))
}
