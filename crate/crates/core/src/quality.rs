//! Surrogate quality scores on held-out data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpr::{Doe, Rpd};
use crate::linalg::Matrix;

/// Variance floor applied before taking logarithms in [`tll`].
pub const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    pub relmse: f64,
    pub tll: f64,
}

/// Which of two scores [`prefer`] picked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preference {
    First,
    Second,
}

/// Relative mean squared error `Σ(y − ŷ)² / Σ(y − ȳ)²`, i.e. `1 − R²`.
pub fn relmse(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::DimensionMismatch { expected: y_true.len(), found: y_pred.len() });
    }
    if y_true.len() < 2 {
        return Err(Error::DegenerateVariance("RelMSE needs at least two values".into()));
    }
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let ss_dev: f64 = y_true.iter().map(|y| (y - mean).powi(2)).sum();
    if !(ss_dev > 0.0) {
        return Err(Error::DegenerateVariance("control vector is constant".into()));
    }
    let ss_err: f64 = y_true.iter().zip(y_pred).map(|(y, p)| (y - p).powi(2)).sum();
    Ok(ss_err / ss_dev)
}

/// Mean log predictive density of observations under independent Gaussians.
pub fn tll_from_moments(y: &[f64], mean: &[f64], var: &[f64]) -> Result<f64> {
    if y.is_empty() || y.len() != mean.len() || y.len() != var.len() {
        return Err(Error::DimensionMismatch { expected: y.len(), found: mean.len().min(var.len()) });
    }
    let mut acc = 0.0;
    for (j, ((&yj, &mj), &vj)) in y.iter().zip(mean).zip(var).enumerate() {
        if !vj.is_finite() || vj < 0.0 || !mj.is_finite() {
            return Err(Error::DegenerateDensity { index: j });
        }
        let v = vj.max(VARIANCE_FLOOR);
        acc += 0.5 * (v.ln() + (yj - mj).powi(2) / v);
    }
    Ok(-(2.0 * std::f64::consts::PI).ln() / 2.0 - acc / y.len() as f64)
}

/// Test log-likelihood of `test` under the fitted distribution.
pub fn tll(test: &Doe, rpd: &Rpd) -> Result<f64> {
    let (mean, var) = predict_all(test.x(), rpd)?;
    tll_from_moments(test.y(), &mean, &var)
}

fn predict_all(x: &Matrix, rpd: &Rpd) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut mean = Vec::with_capacity(x.rows());
    let mut var = Vec::with_capacity(x.rows());
    for row in x.iter_rows() {
        let (m, v) = rpd.predict(row)?;
        mean.push(m);
        var.push(v);
    }
    Ok((mean, var))
}

/// RelMSE and TLL of `rpd` on `test`.
pub fn score(test: &Doe, rpd: &Rpd) -> Result<QualityScore> {
    let (mean, var) = predict_all(test.x(), rpd)?;
    Ok(QualityScore {
        relmse: relmse(test.y(), &mean)?,
        tll: tll_from_moments(test.y(), &mean, &var)?,
    })
}

/// RelMSE of per-row replicate means against the predictive mean, for noisy
/// objectives evaluated `R` times at each test design.
pub fn replicate_mean_relmse(test_x: &Matrix, replicates: &[Vec<f64>], rpd: &Rpd) -> Result<f64> {
    if replicates.len() != test_x.rows() {
        return Err(Error::DimensionMismatch { expected: test_x.rows(), found: replicates.len() });
    }
    let mut means = Vec::with_capacity(replicates.len());
    for r in replicates {
        if r.is_empty() {
            return Err(Error::InvalidInput("each test row needs at least one replicate".into()));
        }
        means.push(r.iter().sum::<f64>() / r.len() as f64);
    }
    let (pred, _) = predict_all(test_x, rpd)?;
    relmse(&means, &pred)
}

/// Mixed RelMSE/TLL preference. When both RelMSE values are below
/// `r_threshold` the higher TLL wins; otherwise the lower RelMSE wins, with
/// TLL breaking exact ties. Remaining ties go to `a`.
pub fn prefer(a: &QualityScore, b: &QualityScore, r_threshold: f64) -> Preference {
    if a.relmse < r_threshold && b.relmse < r_threshold {
        return if b.tll > a.tll { Preference::Second } else { Preference::First };
    }
    if b.relmse < a.relmse || (b.relmse == a.relmse && b.tll > a.tll) {
        Preference::Second
    } else {
        Preference::First
    }
}
