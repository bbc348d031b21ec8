//! First- and total-order Sobol' indices from Saltelli designs.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::Objective;
use crate::rng::{substream, Stream};
use crate::sampling::{saltelli_design, SaltelliDesign};
use crate::stats::{quantile_sorted, variance};

/// Percentile bootstrap bounds for one input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexCi {
    pub s1_low: f64,
    pub s1_high: f64,
    pub st_low: f64,
    pub st_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub n_base: usize,
    pub s1: Vec<f64>,
    pub st: Vec<f64>,
    /// Confidence level of `ci`, when bounds were computed.
    pub level: Option<f64>,
    pub ci: Vec<IndexCi>,
}

/// Estimates from row indices `base` of each block; `base` may repeat.
fn estimate(design: &SaltelliDesign, y: &[f64], base: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
    let (ao, bo) = (design.a_offset(), design.b_offset());
    let pooled: Vec<f64> = base.iter().flat_map(|&j| [y[ao + j], y[bo + j]]).collect();
    let var = variance(&pooled);
    // centering makes the first-order estimator exactly shift invariant
    let center = pooled.iter().sum::<f64>() / pooled.len() as f64;
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::DegenerateVariance("model output has zero variance".into()));
    }
    let n = base.len() as f64;
    let mut s1 = Vec::with_capacity(design.dim());
    let mut st = Vec::with_capacity(design.dim());
    for i in 0..design.dim() {
        let abo = design.ab_offset(i);
        let (mut first, mut total) = (0.0, 0.0);
        for &j in base {
            let (ya, yb, yab) = (y[ao + j], y[bo + j], y[abo + j]);
            first += (yb - center) * (yab - ya);
            total += (ya - yab).powi(2);
        }
        s1.push(first / n / var);
        st.push(total / n / (2.0 * var));
    }
    Ok((s1, st))
}

fn check_len(design: &SaltelliDesign, y: &[f64]) -> Result<()> {
    let expected = design.rows().rows();
    if y.len() != expected {
        return Err(Error::DimensionMismatch { expected, found: y.len() });
    }
    if let Some(j) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite model output at row {j}")));
    }
    Ok(())
}

/// Point estimates of `S1` and `ST` for each input.
pub fn sobol_indices(design: &SaltelliDesign, y: &[f64]) -> Result<SensitivityReport> {
    check_len(design, y)?;
    let all: Vec<usize> = (0..design.n_base()).collect();
    let (s1, st) = estimate(design, y, &all)?;
    Ok(SensitivityReport { n_base: design.n_base(), s1, st, level: None, ci: Vec::new() })
}

/// Percentile bootstrap over base-sample indices, resampling rows of all
/// blocks jointly.
pub fn bootstrap_ci<R: Rng + ?Sized>(
    design: &SaltelliDesign,
    y: &[f64],
    level: f64,
    resamples: usize,
    rng: &mut R,
) -> Result<Vec<IndexCi>> {
    check_len(design, y)?;
    if resamples < 100 {
        return Err(Error::InvalidInput(format!("bootstrap needs at least 100 resamples, got {resamples}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::ParameterDomain(format!("confidence level {level} must lie in (0, 1)")));
    }
    let n = design.n_base();
    let d = design.dim();
    let mut s1_draws = vec![Vec::with_capacity(resamples); d];
    let mut st_draws = vec![Vec::with_capacity(resamples); d];
    let mut idx = vec![0usize; n];
    for _ in 0..resamples {
        for v in idx.iter_mut() {
            *v = rng.gen_range(0..n);
        }
        // a degenerate resample carries no information about spread; skip it
        if let Ok((s1, st)) = estimate(design, y, &idx) {
            for i in 0..d {
                s1_draws[i].push(s1[i]);
                st_draws[i].push(st[i]);
            }
        }
    }
    if s1_draws[0].is_empty() {
        return Err(Error::DegenerateVariance("every bootstrap resample was constant".into()));
    }
    let (lo_p, hi_p) = ((1.0 - level) / 2.0, (1.0 + level) / 2.0);
    Ok((0..d)
        .map(|i| {
            s1_draws[i].sort_by(f64::total_cmp);
            st_draws[i].sort_by(f64::total_cmp);
            IndexCi {
                s1_low: quantile_sorted(&s1_draws[i], lo_p),
                s1_high: quantile_sorted(&s1_draws[i], hi_p),
                st_low: quantile_sorted(&st_draws[i], lo_p),
                st_high: quantile_sorted(&st_draws[i], hi_p),
            }
        })
        .collect())
}

/// Point estimates together with bootstrap bounds.
pub fn analyze<R: Rng + ?Sized>(
    design: &SaltelliDesign,
    y: &[f64],
    level: f64,
    resamples: usize,
    rng: &mut R,
) -> Result<SensitivityReport> {
    let mut report = sobol_indices(design, y)?;
    report.ci = bootstrap_ci(design, y, level, resamples, rng)?;
    report.level = Some(level);
    Ok(report)
}

/// Evaluates `objective` on every design row, in parallel unless it is serial.
pub fn evaluate_design(objective: &dyn Objective, design: &SaltelliDesign) -> Result<Vec<f64>> {
    let rows = design.rows();
    if objective.dim() != rows.cols() {
        return Err(Error::DimensionMismatch { expected: rows.cols(), found: objective.dim() });
    }
    if objective.is_serial() {
        rows.iter_rows().map(|r| objective.evaluate(r)).collect()
    } else {
        (0..rows.rows()).into_par_iter().map(|j| objective.evaluate(rows.row(j))).collect()
    }
}

/// One report per base size, each from a freshly built design. Bootstrap
/// draws for entry `k` use their own substream of `seed`.
pub fn convergence_curve(
    objective: &dyn Objective,
    n_bases: &[usize],
    level: f64,
    resamples: usize,
    seed: u64,
) -> Result<Vec<SensitivityReport>> {
    if n_bases.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("base sizes must be strictly increasing".into()));
    }
    n_bases
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let design = saltelli_design(objective.dim(), n)?;
            let y = evaluate_design(objective, &design)?;
            analyze(&design, &y, level, resamples, &mut substream(seed, Stream::Bootstrap, k as u64))
        })
        .collect()
}

/// Delimited table with one row per input:
/// `name,S1,S1_low,S1_high,ST,ST_low,ST_high`.
pub fn report_table(report: &SensitivityReport, names: &[String], delimiter: char) -> String {
    let header = ["name", "S1", "S1_low", "S1_high", "ST", "ST_low", "ST_high"];
    let mut out = header.join(&delimiter.to_string());
    out.push('\n');
    for i in 0..report.s1.len() {
        let name = names.get(i).cloned().unwrap_or_else(|| format!("x{}", i + 1));
        let ci = report.ci.get(i);
        let fields = [
            report.s1[i],
            ci.map_or(f64::NAN, |c| c.s1_low),
            ci.map_or(f64::NAN, |c| c.s1_high),
            report.st[i],
            ci.map_or(f64::NAN, |c| c.st_low),
            ci.map_or(f64::NAN, |c| c.st_high),
        ];
        out.push_str(&name);
        for v in fields {
            out.push(delimiter);
            out.push_str(&format!("{v:.6}"));
        }
        out.push('\n');
    }
    out
}
