//! Small dense helpers for covariance matrices and Gaussian densities.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Sample mean and covariance of `rows`. The covariance divides by `m - 1`
/// when `unbiased`, else by `m`. Returns a zero matrix when the divisor
/// would be zero.
pub fn mean_and_covariance(rows: &[&[f64]], d: usize, unbiased: bool) -> (Vec<f64>, DMatrix<f64>) {
    let m = rows.len();
    let mut mean = vec![0.0; d];
    for r in rows {
        for (acc, v) in mean.iter_mut().zip(r.iter()) {
            *acc += v;
        }
    }
    if m > 0 {
        mean.iter_mut().for_each(|v| *v /= m as f64);
    }
    let mut cov = DMatrix::zeros(d, d);
    let mut centered = vec![0.0; d];
    for r in rows {
        for j in 0..d {
            centered[j] = r[j] - mean[j];
        }
        for a in 0..d {
            for b in a..d {
                cov[(a, b)] += centered[a] * centered[b];
            }
        }
    }
    let denom = if unbiased { m.saturating_sub(1) } else { m };
    for a in 0..d {
        for b in a..d {
            let v = if denom > 0 { cov[(a, b)] / denom as f64 } else { 0.0 };
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    (mean, cov)
}

pub fn add_ridge(m: &mut DMatrix<f64>, ridge: f64) {
    for i in 0..m.nrows() {
        m[(i, i)] += ridge;
    }
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))
}

/// `ln det` of a symmetric positive-definite matrix.
pub fn log_det_spd(m: &DMatrix<f64>) -> Result<f64> {
    let l = cholesky(m)?;
    Ok(2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

pub fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let d = m.nrows();
    (0..d).flat_map(|i| (0..d).map(move |j| m[(i, j)])).collect()
}

pub fn from_row_major(values: &[f64], d: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(d, d, values)
}

/// A multivariate normal with a cached Cholesky factor.
#[derive(Debug, Clone)]
pub struct GaussianFactor {
    mean: Vec<f64>,
    chol: DMatrix<f64>,
    log_norm: f64,
}

impl GaussianFactor {
    pub fn new(mean: &[f64], covariance: &DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: covariance.nrows(),
            });
        }
        let chol = cholesky(covariance)?;
        let half_log_det: f64 = chol.diagonal().iter().map(|v| v.ln()).sum();
        Ok(Self {
            mean: mean.to_vec(),
            chol,
            log_norm: -0.5 * d as f64 * LN_2PI - half_log_det,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Squared Mahalanobis distance via forward substitution.
    pub fn mahalanobis_sq(&self, x: &[f64]) -> f64 {
        let d = self.mean.len();
        let mut y = [0.0f64; 16];
        let mut heap;
        let y: &mut [f64] = if d <= 16 {
            &mut y[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        let mut total = 0.0;
        for i in 0..d {
            let mut s = x[i] - self.mean[i];
            for k in 0..i {
                s -= self.chol[(i, k)] * y[k];
            }
            y[i] = s / self.chol[(i, i)];
            total += y[i] * y[i];
        }
        total
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        self.log_norm - 0.5 * self.mahalanobis_sq(x)
    }
}

/// `ln Σ exp(v)`, `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
