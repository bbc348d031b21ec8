//! Candidate selection (uniform and categorical) and the exploitation-score filter.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sq_dist, Matrix};

/// A proposed design together with the acquisition that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub x: Vec<f64>,
    pub acquisition: usize,
}

/// Median over rows of the distance to the nearest other row.
pub fn mmd(u: &Matrix) -> Result<f64> {
    let n = u.rows();
    if n < 2 {
        return Err(Error::InvalidInput(format!("MMD needs at least two rows, got {n}")));
    }
    let mut nearest: Vec<f64> = (0..n)
        .map(|j| {
            (0..n)
                .filter(|&k| k != j)
                .map(|k| sq_dist(u.row(j), u.row(k)))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect();
    nearest.sort_by(f64::total_cmp);
    Ok(if n % 2 == 1 {
        nearest[n / 2]
    } else {
        0.5 * (nearest[n / 2 - 1] + nearest[n / 2])
    })
}

/// Distance from `x` to the closest row of `design`.
pub fn d_min(x: &[f64], design: &Matrix) -> Result<f64> {
    if design.rows() == 0 {
        return Err(Error::InvalidInput("empty design".into()));
    }
    if x.len() != design.cols() {
        return Err(Error::DimensionMismatch { expected: design.cols(), found: x.len() });
    }
    Ok(design
        .iter_rows()
        .map(|r| sq_dist(x, r))
        .fold(f64::INFINITY, f64::min)
        .sqrt())
}

/// `ln(mmd / d_min)` from precomputed parts; duplicates score `+∞`.
pub fn exploitation_score_from(mmd_value: f64, d_min_value: f64) -> f64 {
    if d_min_value == 0.0 {
        f64::INFINITY
    } else {
        (mmd_value / d_min_value).ln()
    }
}

/// Exploitation score of `x` against the design `design`.
pub fn exploitation_score(x: &[f64], design: &Matrix) -> Result<f64> {
    let d = d_min(x, design)?;
    Ok(exploitation_score_from(mmd(design)?, d))
}

/// Exploitation scores of all candidates against `design`.
pub fn candidate_scores(candidates: &[Candidate], design: &Matrix) -> Result<Vec<f64>> {
    let m = mmd(design)?;
    candidates
        .iter()
        .map(|c| Ok(exploitation_score_from(m, d_min(&c.x, design)?)))
        .collect()
}

/// Indices of candidates whose score is at most `t`; all indices when none qualify.
pub fn filter_by_score(scores: &[f64], t: f64) -> Vec<usize> {
    let kept: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] <= t).collect();
    if kept.is_empty() {
        (0..scores.len()).collect()
    } else {
        kept
    }
}

/// Keeps candidates with exploitation score at most `t` against `design`,
/// returning all of them when the filter would leave none.
pub fn filter_candidates(candidates: &[Candidate], design: &Matrix, t: f64) -> Result<Vec<Candidate>> {
    let scores = candidate_scores(candidates, design)?;
    Ok(filter_by_score(&scores, t)
        .into_iter()
        .map(|i| candidates[i].clone())
        .collect())
}

/// Uniformly random position in `0..len`. A single entry consumes no randomness.
pub fn sel_uniform<R: Rng + ?Sized>(len: usize, rng: &mut R) -> usize {
    assert!(len > 0, "selection from an empty candidate set");
    if len == 1 {
        0
    } else {
        rng.gen_range(0..len)
    }
}

/// Improvement counts behind categorical selection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatState {
    counts: Vec<u64>,
    last_selected: Option<usize>,
}

impl CatState {
    pub fn new(n_acquisitions: usize) -> Self {
        assert!(n_acquisitions > 0, "categorical selection needs at least one acquisition");
        Self { counts: vec![1; n_acquisitions], last_selected: None }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn last_selected(&self) -> Option<usize> {
        self.last_selected
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let total = self.total() as f64;
        self.counts.iter().map(|&n| n as f64 / total).collect()
    }
}

/// Samples a position in `acquisitions` (the acquisition indices of the
/// surviving candidates) with probability proportional to their counts.
pub fn sel_cat<R: Rng + ?Sized>(acquisitions: &[usize], state: &CatState, rng: &mut R) -> usize {
    assert!(!acquisitions.is_empty(), "selection from an empty candidate set");
    if acquisitions.len() == 1 {
        return 0;
    }
    let weights: Vec<u64> = acquisitions.iter().map(|&a| state.counts[a]).collect();
    let total: u64 = weights.iter().sum();
    let mut draw = rng.gen_range(0..total);
    for (pos, w) in weights.iter().enumerate() {
        if draw < *w {
            return pos;
        }
        draw -= w;
    }
    unreachable!("draw below total weight")
}

/// Records that acquisition `selected` was used; its count grows when the new
/// observation matched or beat the previous minimum.
pub fn cat_update(state: &CatState, selected: usize, improved: bool) -> Result<CatState> {
    if selected >= state.counts.len() {
        return Err(Error::InvalidInput(format!(
            "acquisition index {selected} out of range for {} acquisitions",
            state.counts.len()
        )));
    }
    let mut next = state.clone();
    if improved {
        next.counts[selected] += 1;
    }
    next.last_selected = Some(selected);
    Ok(next)
}

/// Per-iteration exploitation-score thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EsSchedule {
    Constant { value: f64 },
    /// Linear from `start` at the first iteration to `end` at the last.
    Linear { start: f64, end: f64 },
    /// Explicit values; iterations past the end reuse the last one.
    Explicit { values: Vec<f64> },
}

impl Default for EsSchedule {
    fn default() -> Self {
        EsSchedule::Linear { start: 0.5, end: 2.0 }
    }
}

impl EsSchedule {
    /// Threshold at 1-based iteration `i` of `total`.
    pub fn threshold(&self, i: usize, total: usize) -> f64 {
        match self {
            EsSchedule::Constant { value } => *value,
            EsSchedule::Linear { start, end } => {
                if total <= 1 {
                    *start
                } else {
                    let frac = (i.clamp(1, total) - 1) as f64 / (total - 1) as f64;
                    start + (end - start) * frac
                }
            }
            EsSchedule::Explicit { values } => values[(i.max(1) - 1).min(values.len() - 1)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::ParameterDomain(format!("es_schedule: {what}")));
        match self {
            EsSchedule::Constant { value } if value.is_nan() => bad("value is NaN"),
            EsSchedule::Linear { start, end } if !start.is_finite() || !end.is_finite() => {
                bad("start and end must be finite")
            }
            EsSchedule::Explicit { values } if values.is_empty() => bad("values is empty"),
            EsSchedule::Explicit { values } if values.iter().any(|v| v.is_nan()) => bad("values contain NaN"),
            _ => Ok(()),
        }
    }
}
