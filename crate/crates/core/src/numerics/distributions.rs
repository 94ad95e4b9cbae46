use std::f64::consts::PI;

use super::Rng;
use crate::error::{Error, Result};

/// Tolerance on `Σ p_i = 1` for categorical inputs.
pub const SIMPLEX_TOL: f64 = 1e-9;

pub fn sample_gaussian(rng: &mut Rng, mean: f64, std: f64) -> Result<f64> {
    check_std(std)?;
    Ok(mean + std * rng.standard_normal())
}

pub fn log_prob_gaussian(x: f64, mean: f64, std: f64) -> Result<f64> {
    check_std(std)?;
    let z = (x - mean) / std;
    Ok(-0.5 * z * z - std.ln() - 0.5 * (2.0 * PI).ln())
}

fn check_std(std: f64) -> Result<()> {
    if std > 0.0 && std.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidStd(std))
    }
}

pub fn check_simplex(probs: &[f64]) -> Result<()> {
    let sum: f64 = probs.iter().sum();
    if probs.is_empty()
        || probs.iter().any(|p| !(*p >= 0.0))
        || (sum - 1.0).abs() > SIMPLEX_TOL
    {
        return Err(Error::NotNormalized { sum });
    }
    Ok(())
}

/// Inverse-CDF draw; zero-probability entries are never returned.
pub fn sample_categorical(rng: &mut Rng, probs: &[f64]) -> Result<usize> {
    check_simplex(probs)?;
    let u = rng.uniform();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        last_positive = i;
        acc += p;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(last_positive)
}

pub fn log_prob_categorical(probs: &[f64], index: usize) -> Result<f64> {
    check_simplex(probs)?;
    probs
        .get(index)
        .map(|p| p.ln())
        .ok_or_else(|| Error::InvalidAction(format!("index {index} out of {}", probs.len())))
}
