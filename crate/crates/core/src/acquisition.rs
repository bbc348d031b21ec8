//! Acquisition functions (minimization convention) and their inner maximizer.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpr::Rpd;
use crate::sampling::SobolStream;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;
/// Below this standardized improvement the log variants switch to asymptotics.
const ASYMPTOTIC_Z: f64 = -6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum AcquisitionKind {
    Ei,
    LogEi,
    Pi,
    LogPi,
    Ucb { beta: f64 },
}

impl AcquisitionKind {
    pub const DEFAULT_BETA: f64 = 2.0;

    pub fn ucb() -> Self {
        AcquisitionKind::Ucb { beta: Self::DEFAULT_BETA }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AcquisitionKind::Ei => "ei",
            AcquisitionKind::LogEi => "logei",
            AcquisitionKind::Pi => "pi",
            AcquisitionKind::LogPi => "logpi",
            AcquisitionKind::Ucb { .. } => "ucb",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            AcquisitionKind::Ucb { beta } if !(beta >= 0.0 && beta.is_finite()) => {
                Err(Error::ParameterDomain(format!("beta = {beta} must be finite and non-negative")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for AcquisitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AcquisitionKind::Ucb { beta } => write!(f, "ucb({beta})"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for AcquisitionKind {
    type Err = Error;

    /// Accepts `ei`, `logei`, `pi`, `logpi`, `ucb` and `ucb(<beta>)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if let Some(inner) = s.strip_prefix("ucb(").and_then(|r| r.strip_suffix(')')) {
            let beta = inner
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad UCB beta `{inner}`")))?;
            let k = AcquisitionKind::Ucb { beta };
            k.validate()?;
            return Ok(k);
        }
        match s.as_str() {
            "ei" => Ok(AcquisitionKind::Ei),
            "logei" => Ok(AcquisitionKind::LogEi),
            "pi" => Ok(AcquisitionKind::Pi),
            "logpi" => Ok(AcquisitionKind::LogPi),
            "ucb" | "lcb" => Ok(AcquisitionKind::ucb()),
            other => Err(Error::Parse(format!("unknown acquisition `{other}`"))),
        }
    }
}

pub fn norm_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

pub fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// `Σ_k (−1)^k (2k−1)!! / z^{2k}` summed until the terms stop shrinking.
fn mills_series(z: f64, offset: f64) -> f64 {
    // offset = 1 gives the Mills-ratio series, offset = 3 the EI series
    let inv = 1.0 / (z * z);
    let mut term: f64 = 1.0;
    let mut sum: f64 = 1.0;
    let mut k = 1.0;
    loop {
        let next = -term * (2.0 * k - 2.0 + offset) * inv;
        if next.abs() >= term.abs() || next.abs() < 1e-17 * sum.abs() {
            break;
        }
        sum += next;
        term = next;
        k += 1.0;
        if k > 200.0 {
            break;
        }
    }
    sum
}

/// `ln Φ(z)`, accurate deep into the lower tail.
pub fn log_norm_cdf(z: f64) -> f64 {
    if z > -20.0 {
        norm_cdf(z).ln()
    } else {
        // Φ(z) ≈ φ(z)/|z| · (1 − 1/z² + 3/z⁴ − …)
        -0.5 * z * z - LN_SQRT_2PI - (-z).ln() + mills_series(z, 1.0).ln()
    }
}

/// `h(z) = zΦ(z) + φ(z)`, the expected improvement of a unit Gaussian.
pub fn ei_unit(z: f64) -> f64 {
    if z < ASYMPTOTIC_Z {
        log_ei_unit(z).exp()
    } else {
        z * norm_cdf(z) + norm_pdf(z)
    }
}

/// `ln h(z)`; uses the asymptotic expansion `h(z) ≈ φ(z)/z² · (1 − 3/z² + 15/z⁴ − …)`
/// in the lower tail where the direct form cancels.
pub fn log_ei_unit(z: f64) -> f64 {
    if z < ASYMPTOTIC_Z {
        -0.5 * z * z - LN_SQRT_2PI - 2.0 * (-z).ln() + mills_series(z, 3.0).ln()
    } else {
        (z * norm_cdf(z) + norm_pdf(z)).ln()
    }
}

/// Acquisition value from predictive moments. `incumbent` is the smallest
/// observed objective value.
pub fn acq_value(kind: AcquisitionKind, mean: f64, var: f64, incumbent: f64) -> f64 {
    let sd = var.max(0.0).sqrt();
    if let AcquisitionKind::Ucb { beta } = kind {
        return -mean + beta * sd;
    }
    if sd == 0.0 {
        let gap = incumbent - mean;
        return match kind {
            AcquisitionKind::Ei => gap.max(0.0),
            AcquisitionKind::LogEi => gap.max(0.0).ln(),
            AcquisitionKind::Pi => f64::from(u8::from(gap > 0.0)),
            AcquisitionKind::LogPi => f64::from(u8::from(gap > 0.0)).ln(),
            AcquisitionKind::Ucb { .. } => unreachable!(),
        };
    }
    let z = (incumbent - mean) / sd;
    match kind {
        AcquisitionKind::Ei => sd * ei_unit(z),
        AcquisitionKind::LogEi => sd.ln() + log_ei_unit(z),
        AcquisitionKind::Pi => norm_cdf(z),
        AcquisitionKind::LogPi => log_norm_cdf(z),
        AcquisitionKind::Ucb { .. } => unreachable!(),
    }
}

/// Acquisition value of `rpd` at `x`.
pub fn acq_eval(kind: AcquisitionKind, rpd: &Rpd, x: &[f64], incumbent: f64) -> Result<f64> {
    let (m, v) = rpd.predict(x)?;
    Ok(acq_value(kind, m, v, incumbent))
}

/// Work budget of [`acq_maximize`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaximizerBudget {
    /// Sobol' points scored before refinement.
    pub seed_count: usize,
    /// Number of best seeds that are refined locally.
    pub refine_top: usize,
    /// Ascent iterations per refined seed.
    pub refine_steps: usize,
    /// Initial move length in the unit cube.
    pub initial_step: f64,
}

impl Default for MaximizerBudget {
    fn default() -> Self {
        Self { seed_count: 512, refine_top: 4, refine_steps: 100, initial_step: 0.05 }
    }
}

const FD_STEP: f64 = 1e-6;
const MIN_STEP: f64 = 1e-10;
const MAX_STEP: f64 = 0.5;

/// Approximate argmax of the acquisition over `[0,1]^D`.
///
/// Scores `seed_count` Sobol' points (at a block offset drawn from `rng`),
/// then refines the best `refine_top` by projected finite-difference ascent
/// along the normalized gradient, doubling the step after a success and
/// halving it after a failure.
pub fn acq_maximize<R: Rng + ?Sized>(
    kind: AcquisitionKind,
    rpd: &Rpd,
    incumbent: f64,
    budget: MaximizerBudget,
    rng: &mut R,
) -> Vec<f64> {
    let dim = rpd.dim();
    let f = |x: &[f64]| -> f64 {
        let v = acq_eval(kind, rpd, x, incumbent).unwrap_or(f64::NEG_INFINITY);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };

    let seeds = budget.seed_count.max(1);
    let block = rng.gen_range(0u64..1024) * seeds.next_power_of_two() as u64;
    let mut stream = SobolStream::new(dim).expect("acquisition dimension within table");
    stream.seek(block);
    let mut scored: Vec<(f64, usize, Vec<f64>)> = (0..seeds)
        .map(|i| {
            let p = stream.next_point();
            (f(&p), i, p)
        })
        .collect();
    // descending by value, earliest index on ties
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut best = scored[0].2.clone();
    let mut best_val = scored[0].0;
    for (val, _, start) in scored.into_iter().take(budget.refine_top) {
        let (x, v) = refine(&f, start, val, budget);
        if v > best_val {
            best = x;
            best_val = v;
        }
    }
    best
}

fn refine(f: &impl Fn(&[f64]) -> f64, mut x: Vec<f64>, mut fx: f64, budget: MaximizerBudget) -> (Vec<f64>, f64) {
    let dim = x.len();
    let mut step = budget.initial_step;
    let mut grad = vec![0.0; dim];
    let mut stale = true;
    for _ in 0..budget.refine_steps {
        if stale {
            if !fx.is_finite() {
                break;
            }
            for j in 0..dim {
                let (lo, hi) = ((x[j] - FD_STEP).max(0.0), (x[j] + FD_STEP).min(1.0));
                let mut p = x.clone();
                p[j] = hi;
                let fh = f(&p);
                p[j] = lo;
                let fl = f(&p);
                grad[j] = if fh.is_finite() && fl.is_finite() { (fh - fl) / (hi - lo) } else { 0.0 };
            }
            // drop components that push against an active bound
            for j in 0..dim {
                if (x[j] <= 0.0 && grad[j] < 0.0) || (x[j] >= 1.0 && grad[j] > 0.0) {
                    grad[j] = 0.0;
                }
            }
            stale = false;
        }
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            break;
        }
        let cand: Vec<f64> = x
            .iter()
            .zip(&grad)
            .map(|(xi, gi)| (xi + step * gi / norm).clamp(0.0, 1.0))
            .collect();
        let fc = f(&cand);
        if fc > fx {
            x = cand;
            fx = fc;
            step = (step * 2.0).min(MAX_STEP);
            stale = true;
        } else {
            step *= 0.5;
            if step < MIN_STEP {
                break;
            }
        }
    }
    (x, fx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpr::{fit_mle, Doe};
    use crate::kernels::{KernelFamily, KernelSpec};
    use crate::linalg::Matrix;
    use crate::rng::seeded;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    /// Independent oracle: `ln h(z) = ln φ(z) + ln ∫_0^∞ s·exp(z s − s²/2) ds`
    /// by composite Simpson quadrature.
    fn log_h_quadrature(z: f64) -> f64 {
        let scale = 1.0 / (-z).max(1.0);
        let upper = 40.0 * scale + 12.0;
        let n = 200_000;
        let h = upper / n as f64;
        let g = |s: f64| s * (z * s - 0.5 * s * s).exp();
        let mut acc = g(0.0) + g(upper);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * g(i as f64 * h);
        }
        (-0.5 * z * z - LN_SQRT_2PI) + (acc * h / 3.0).ln()
    }

    #[test]
    fn log_ei_matches_quadrature_oracle() {
        for z in [-40.0, -25.0, -12.0, -6.5, -6.0, -5.9, -3.0, -1.0, 0.0, 1.5, 4.0] {
            let oracle = log_h_quadrature(z);
            assert_abs_diff_eq!(log_ei_unit(z), oracle, epsilon = 1e-6);
        }
    }

    #[test]
    fn log_ei_consistent_with_ei() {
        for i in 0..400 {
            let z = -37.0 + i as f64 * 0.1;
            let ei = ei_unit(z);
            if ei > 1e-300 {
                assert_abs_diff_eq!(log_ei_unit(z), ei.ln(), epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn log_pi_tail() {
        for z in [-30.0, -21.0, -19.0, -8.0, -1.0, 2.0] {
            // Φ(z) for z > -37 is representable; compare in log space
            let direct = norm_cdf(z).ln();
            assert_abs_diff_eq!(log_norm_cdf(z), direct, epsilon = 1e-8);
        }
        assert!(log_norm_cdf(-60.0).is_finite());
    }

    #[test]
    fn worked_examples() {
        assert_abs_diff_eq!(acq_value(AcquisitionKind::Ei, 1.0, 1.0, 1.0), 0.398942, epsilon = 1e-6);
        for sd in [0.1, 1.0, 7.0] {
            assert_eq!(acq_value(AcquisitionKind::Pi, 2.0, sd * sd, 2.0), 0.5);
        }
        let ucb = acq_value(AcquisitionKind::Ucb { beta: 2.0 }, 1.0, 0.25, 0.0);
        assert_abs_diff_eq!(ucb, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_variance_limits() {
        assert_eq!(acq_value(AcquisitionKind::Ei, 1.0, 0.0, 3.0), 2.0);
        assert_eq!(acq_value(AcquisitionKind::Ei, 4.0, 0.0, 3.0), 0.0);
        assert_eq!(acq_value(AcquisitionKind::Pi, 1.0, 0.0, 3.0), 1.0);
        assert_eq!(acq_value(AcquisitionKind::Pi, 4.0, 0.0, 3.0), 0.0);
        assert_eq!(acq_value(AcquisitionKind::LogPi, 4.0, 0.0, 3.0), f64::NEG_INFINITY);
    }

    #[test]
    fn parse_kinds() {
        assert_eq!("LogEI".parse::<AcquisitionKind>().unwrap(), AcquisitionKind::LogEi);
        assert_eq!("ucb(0.5)".parse::<AcquisitionKind>().unwrap(), AcquisitionKind::Ucb { beta: 0.5 });
        assert!("ucb(-1)".parse::<AcquisitionKind>().is_err());
        assert!("foo".parse::<AcquisitionKind>().is_err());
    }

    proptest! {
        #[test]
        fn ei_nonnegative(m in -5.0f64..5.0, v in 0.0f64..4.0, inc in -5.0f64..5.0) {
            prop_assert!(acq_value(AcquisitionKind::Ei, m, v, inc) >= 0.0);
        }

        #[test]
        fn pi_in_unit_interval_and_monotone(z1 in -10.0f64..10.0, dz in 0.001f64..3.0) {
            let a = norm_cdf(z1);
            let b = norm_cdf(z1 + dz);
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!(b >= a);
        }

        #[test]
        fn ei_increases_with_sigma(gap in 0.01f64..3.0, s in 0.01f64..3.0, ds in 0.01f64..3.0) {
            let a = acq_value(AcquisitionKind::Ei, 0.0, s * s, gap);
            let b = acq_value(AcquisitionKind::Ei, 0.0, (s + ds).powi(2), gap);
            prop_assert!(b >= a);
        }
    }

    fn sphere_rpd() -> Rpd {
        let xs: Vec<[f64; 1]> = [0.05, 0.2, 0.35, 0.8, 0.95].iter().map(|&v| [v]).collect();
        let y = xs.iter().map(|x| (10.0 * x[0] - 5.0).powi(2)).collect();
        let doe = Doe::new(Matrix::from_rows(&xs), y).unwrap();
        fit_mle(&doe, &KernelSpec::new(KernelFamily::Matern32), 4, &mut seeded(0)).unwrap()
    }

    #[test]
    fn maximizer_beats_all_seeds() {
        let rpd = sphere_rpd();
        let inc = rpd.doe().y().iter().fold(f64::INFINITY, |a, &b| a.min(b)) * rpd.y_std() + rpd.y_mean();
        let kind = AcquisitionKind::LogEi;
        let budget = MaximizerBudget::default();
        let x = acq_maximize(kind, &rpd, inc, budget, &mut seeded(4));
        let best = acq_eval(kind, &rpd, &x, inc).unwrap();
        // replay the seed block
        let mut rng = seeded(4);
        let block = rng.gen_range(0u64..1024) * 512;
        let seeds = crate::sampling::sobol_points(1, 512, block).unwrap();
        for p in seeds.iter_rows() {
            assert!(best >= acq_eval(kind, &rpd, p, inc).unwrap());
        }
        assert_eq!(x, acq_maximize(kind, &rpd, inc, budget, &mut seeded(4)));
    }

    #[test]
    fn ucb_without_exploration_minimizes_mean() {
        let rpd = sphere_rpd();
        let kind = AcquisitionKind::Ucb { beta: 0.0 };
        let x = acq_maximize(kind, &rpd, 0.0, MaximizerBudget::default(), &mut seeded(8));
        let (mx, _) = rpd.predict(&x).unwrap();
        let mut rng = seeded(8);
        let block = rng.gen_range(0u64..1024) * 512;
        let grid_min = crate::sampling::sobol_points(1, 512, block)
            .unwrap()
            .iter_rows()
            .map(|p| rpd.predict(p).unwrap().0)
            .fold(f64::INFINITY, f64::min);
        assert!(mx <= grid_min + 1e-9);
    }

    #[test]
    fn ei_and_log_ei_agree_on_argmax() {
        let rpd = sphere_rpd();
        let inc = 2.0;
        let b = MaximizerBudget::default();
        let xa = acq_maximize(AcquisitionKind::Ei, &rpd, inc, b, &mut seeded(21));
        let xb = acq_maximize(AcquisitionKind::LogEi, &rpd, inc, b, &mut seeded(21));
        let ea = acq_eval(AcquisitionKind::Ei, &rpd, &xa, inc).unwrap();
        let eb = acq_eval(AcquisitionKind::Ei, &rpd, &xb, inc).unwrap();
        assert!((ea - eb).abs() / ea.max(eb) < 1e-6, "{ea} vs {eb}");
    }
}
