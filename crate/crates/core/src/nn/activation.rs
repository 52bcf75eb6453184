use serde::{Deserialize, Serialize};

/// `ln(1 + e^z)`, stable for large |z| and floored at the smallest normal
/// f64 so it stays strictly positive.
pub fn softplus(z: f64) -> f64 {
    (z.max(0.0) + (-z.abs()).exp().ln_1p()).max(f64::MIN_POSITIVE)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Smallest representable value above one.
const ABOVE_ONE: f64 = 1.0 + f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadActivation {
    Linear,
    Softplus,
    /// `1 + softplus(z)`, for parameters that must exceed one.
    SoftplusPlusOne,
}

impl HeadActivation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            HeadActivation::Linear => z,
            HeadActivation::Softplus => softplus(z),
            HeadActivation::SoftplusPlusOne => (1.0 + softplus(z)).max(ABOVE_ONE),
        }
    }

    pub fn derivative(self, z: f64) -> f64 {
        match self {
            HeadActivation::Linear => 1.0,
            HeadActivation::Softplus | HeadActivation::SoftplusPlusOne => sigmoid(z),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            HeadActivation::Linear => "linear",
            HeadActivation::Softplus => "softplus",
            HeadActivation::SoftplusPlusOne => "softplus1p",
        }
    }
}
