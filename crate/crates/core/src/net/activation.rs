use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// Elementwise or vector-valued activation applied after a layer's affine map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Tanh,
    /// Exponential linear unit with α = 1.
    Elu,
    Softmax,
    /// `softmax(β·z)`; β = 100 concentrates the output near a one-hot vector.
    BetaSoftmax(f64),
    Linear,
}

impl Activation {
    /// Inverse temperature for the softmax family.
    pub fn softmax_beta(self) -> Option<f64> {
        match self {
            Activation::Softmax => Some(1.0),
            Activation::BetaSoftmax(b) => Some(b),
            _ => None,
        }
    }

    pub fn forward(self, z: &[f64]) -> Vec<f64> {
        match self {
            Activation::Tanh => z.iter().map(|v| v.tanh()).collect(),
            Activation::Elu => z
                .iter()
                .map(|&v| if v > 0.0 { v } else { v.exp_m1() })
                .collect(),
            Activation::Softmax => beta_softmax(z, 1.0),
            Activation::BetaSoftmax(b) => beta_softmax(z, b),
            Activation::Linear => z.to_vec(),
        }
    }

    /// Maps `dL/da` to `dL/dz` given the cached pre-activation `z` and output `a`.
    pub fn backward(self, z: &[f64], a: &[f64], da: &[f64]) -> Vec<f64> {
        match self {
            Activation::Tanh => a.iter().zip(da).map(|(a, g)| g * (1.0 - a * a)).collect(),
            Activation::Elu => z
                .iter()
                .zip(a)
                .zip(da)
                .map(|((&z, &a), &g)| if z > 0.0 { g } else { g * (a + 1.0) })
                .collect(),
            Activation::Softmax | Activation::BetaSoftmax(_) => {
                let beta = self.softmax_beta().unwrap_or(1.0);
                let inner: f64 = a.iter().zip(da).map(|(a, g)| a * g).sum();
                a.iter()
                    .zip(da)
                    .map(|(a, g)| beta * a * (g - inner))
                    .collect()
            }
            Activation::Linear => da.to_vec(),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Tanh => f.write_str("tanh"),
            Activation::Elu => f.write_str("elu"),
            Activation::Softmax => f.write_str("softmax"),
            Activation::BetaSoftmax(b) => write!(f, "beta_softmax:{b:e}"),
            Activation::Linear => f.write_str("linear"),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let s = s.trim();
        Ok(match s {
            "tanh" => Activation::Tanh,
            "elu" => Activation::Elu,
            "softmax" => Activation::Softmax,
            "linear" => Activation::Linear,
            _ => {
                let beta = s
                    .strip_prefix("beta_softmax:")
                    .or_else(|| s.strip_prefix("beta_softmax(").and_then(|r| r.strip_suffix(')')))
                    .ok_or_else(|| Error::InvalidSpec(format!("unknown activation `{s}`")))?;
                let beta: f64 = beta
                    .parse()
                    .map_err(|_| Error::InvalidSpec(format!("bad β in `{s}`")))?;
                if !(beta > 0.0 && beta.is_finite()) {
                    return Err(Error::InvalidSpec(format!("β must be positive, got {beta}")));
                }
                Activation::BetaSoftmax(beta)
            }
        })
    }
}

/// `softmax(β·z)` with max subtraction.
pub fn beta_softmax(z: &[f64], beta: f64) -> Vec<f64> {
    let max = z.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut out: Vec<f64> = z.iter().map(|&v| (beta * (v - max)).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    out
}

/// `log softmax(β·z)` evaluated without forming the probabilities.
pub fn log_beta_softmax(z: &[f64], beta: f64) -> Vec<f64> {
    let max = z.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let lse = z
        .iter()
        .map(|&v| (beta * (v - max)).exp())
        .sum::<f64>()
        .ln();
    z.iter().map(|&v| beta * (v - max) - lse).collect()
}
