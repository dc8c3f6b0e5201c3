use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// One binary hallucination indicator, or `Unchecked` when no detector
/// reached a verdict for it in this iteration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub enum Component {
    #[default]
    Unchecked,
    Clear,
    Flagged,
}

impl Component {
    pub fn is_checked(self) -> bool {
        self != Component::Unchecked
    }

    /// 0 or 1 for checked components; unchecked ones contribute nothing.
    pub fn value(self) -> f64 {
        match self {
            Component::Flagged => 1.0,
            _ => 0.0,
        }
    }

    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Component::Flagged
        } else {
            Component::Clear
        }
    }
}

impl Serialize for Component {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Component::Unchecked => s.serialize_none(),
            Component::Clear => s.serialize_u8(0),
            Component::Flagged => s.serialize_u8(1),
        }
    }
}

impl<'de> Deserialize<'de> for Component {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match Option::<u8>::deserialize(d)? {
            None => Ok(Component::Unchecked),
            Some(0) => Ok(Component::Clear),
            Some(1) => Ok(Component::Flagged),
            Some(n) => Err(serde::de::Error::custom(format!(
                "hallucination indicator must be 0, 1 or null, got {n}"
            ))),
        }
    }
}

/// The four indicators: answer/explanation inconsistency, unsolvable
/// framing, unsupported factual claim, arithmetic error. JSON uses `null`
/// for unchecked components.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HallucinationVector {
    pub h1: Component,
    pub h2: Component,
    pub h3: Component,
    pub h4: Component,
}

impl HallucinationVector {
    pub fn from_bits(bits: [bool; 4]) -> Self {
        Self::from_components(bits.map(Component::from_bit))
    }

    pub fn from_components(c: [Component; 4]) -> Self {
        HallucinationVector {
            h1: c[0],
            h2: c[1],
            h3: c[2],
            h4: c[3],
        }
    }

    pub fn components(&self) -> [Component; 4] {
        [self.h1, self.h2, self.h3, self.h4]
    }

    pub fn get(&self, index: usize) -> Component {
        self.components()[index]
    }

    pub fn set(&mut self, index: usize, value: Component) {
        match index {
            0 => self.h1 = value,
            1 => self.h2 = value,
            2 => self.h3 = value,
            3 => self.h4 = value,
            _ => panic!("hallucination component index {index} out of range"),
        }
    }

    pub fn is_partial(&self) -> bool {
        self.components().iter().any(|c| !c.is_checked())
    }

    pub fn checked_mask(&self) -> [bool; 4] {
        self.components().map(Component::is_checked)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WeightsError {
    #[error("weight w{index} = {value} is negative or not finite")]
    Negative { index: usize, value: f64 },
    #[error("weights sum to {sum}, expected 1 within 1e-9")]
    NotNormalized { sum: f64 },
}

/// Nonnegative weights on the four components, summing to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWeights", into = "RawWeights")]
pub struct Weights {
    w: [f64; 4],
}

#[derive(Serialize, Deserialize)]
struct RawWeights {
    w1: f64,
    w2: f64,
    w3: f64,
    w4: f64,
}

impl TryFrom<RawWeights> for Weights {
    type Error = WeightsError;
    fn try_from(r: RawWeights) -> Result<Self, Self::Error> {
        Weights::new([r.w1, r.w2, r.w3, r.w4])
    }
}

impl From<Weights> for RawWeights {
    fn from(w: Weights) -> Self {
        RawWeights {
            w1: w.w[0],
            w2: w.w[1],
            w3: w.w[2],
            w4: w.w[3],
        }
    }
}

impl Weights {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(w: [f64; 4]) -> Result<Self, WeightsError> {
        for (i, &v) in w.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(WeightsError::Negative {
                    index: i + 1,
                    value: v,
                });
            }
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(WeightsError::NotNormalized { sum });
        }
        Ok(Weights { w })
    }

    pub fn uniform() -> Self {
        Weights { w: [0.25; 4] }
    }

    pub fn as_array(&self) -> [f64; 4] {
        self.w
    }
}

impl Default for Weights {
    fn default() -> Self {
        Self::uniform()
    }
}
