//! Differential entropy of Gaussian node statistics and the unsupervised
//! information-gain objective built on it.

use std::f64::consts::{E, PI};

use crate::error::{Error, Result};
use crate::linalg::{add_ridge, log_det_spd, mean_and_covariance};

/// `ln det(Λ(S) + reg·I)` for the unbiased sample covariance `Λ(S)`.
pub fn log_det_covariance(samples: &[&[f64]], reg: f64) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::Data(format!(
            "covariance needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let d = samples[0].len();
    let (_, mut cov) = mean_and_covariance(samples, d, true);
    add_ridge(&mut cov, reg);
    log_det_spd(&cov)
}

/// Differential entropy in nats of a Gaussian fitted to `samples`:
/// `½ ln((2πe)^d det(Λ + reg·I))`.
pub fn gaussian_entropy(samples: &[&[f64]], reg: f64) -> Result<f64> {
    let log_det = log_det_covariance(samples, reg)?;
    let d = samples[0].len() as f64;
    Ok(0.5 * (d * (2.0 * PI * E).ln() + log_det))
}

/// Information gain of splitting `left ∪ right`:
/// `ln|Λ(S)| − Σ_side (|S_side| / |S|) ln|Λ(S_side)|`.
///
/// A side with fewer than `min_leaf` samples scores `-inf`. The value may
/// be negative; callers only accept strictly positive gains.
pub fn info_gain(left: &[&[f64]], right: &[&[f64]], reg: f64, min_leaf: usize) -> f64 {
    if left.len() < min_leaf.max(2) || right.len() < min_leaf.max(2) {
        return f64::NEG_INFINITY;
    }
    let parent: Vec<&[f64]> = left.iter().chain(right.iter()).copied().collect();
    let Ok(parent_ld) = log_det_covariance(&parent, reg) else {
        return f64::NEG_INFINITY;
    };
    split_gain(parent_ld, left, right, reg)
}

pub(crate) fn split_gain(parent_log_det: f64, left: &[&[f64]], right: &[&[f64]], reg: f64) -> f64 {
    let total = (left.len() + right.len()) as f64;
    let (Ok(l), Ok(r)) = (log_det_covariance(left, reg), log_det_covariance(right, reg)) else {
        return f64::NEG_INFINITY;
    };
    parent_log_det - (left.len() as f64 / total) * l - (right.len() as f64 / total) * r
}
