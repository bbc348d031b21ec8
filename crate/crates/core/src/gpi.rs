//! Surrogate model search over kernel families and restricted likelihood domains.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpr::{fit_mle, param_bounds, Doe, Rpd};
use crate::kernels::{KernelFamily, KernelSpec, ParamKind};
use crate::quality::{prefer, score, Preference, QualityScore};

/// Low, mid and high fixture values for one parameter kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Nominal {
    pub low: f64,
    pub mid: f64,
    pub high: f64,
}

impl Nominal {
    /// Bound endpoints and their geometric midpoint.
    pub fn from_bounds(kind: ParamKind) -> Self {
        let (lo, hi) = param_bounds(kind);
        Self { low: lo, mid: (lo * hi).sqrt(), high: hi }
    }

    pub fn values(&self) -> [f64; 3] {
        [self.low, self.mid, self.high]
    }
}

/// Fixture values for every parameter kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NominalValues {
    pub c: Nominal,
    pub lambda: Nominal,
    pub s2: Nominal,
    pub alpha: Nominal,
}

impl Default for NominalValues {
    fn default() -> Self {
        Self {
            c: Nominal::from_bounds(ParamKind::Scale),
            lambda: Nominal::from_bounds(ParamKind::LengthScale),
            s2: Nominal::from_bounds(ParamKind::Noise),
            alpha: Nominal::from_bounds(ParamKind::Shape),
        }
    }
}

impl NominalValues {
    pub fn get(&self, kind: ParamKind) -> Nominal {
        match kind {
            ParamKind::Scale => self.c,
            ParamKind::LengthScale => self.lambda,
            ParamKind::Noise => self.s2,
            ParamKind::Shape => self.alpha,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpiConfig {
    pub kernel_set: Vec<KernelFamily>,
    /// Largest number of simultaneously fixed parameters (0, 1 or 2).
    pub max_depth: usize,
    pub nominal: NominalValues,
    /// Maximum number of trials `Q`.
    pub trial_threshold: usize,
    /// RelMSE threshold `R` of the preference rule.
    pub relmse_threshold: f64,
    /// The search stops once the best RelMSE falls below this value.
    pub accept_relmse: f64,
    pub test_fraction: f64,
    pub mle_restarts: usize,
}

impl Default for GpiConfig {
    fn default() -> Self {
        Self {
            kernel_set: KernelFamily::ALL.to_vec(),
            max_depth: 2,
            nominal: NominalValues::default(),
            trial_threshold: 20,
            relmse_threshold: 0.05,
            accept_relmse: 0.05,
            test_fraction: 0.2,
            mle_restarts: 5,
        }
    }
}

impl GpiConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ParameterDomain(msg));
        if self.kernel_set.is_empty() {
            return bad("gpi.kernel_set is empty".into());
        }
        if self.max_depth > 2 {
            return bad(format!("gpi.max_depth = {} must be at most 2", self.max_depth));
        }
        if self.trial_threshold == 0 {
            return bad("gpi.trial_threshold must be at least 1".into());
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("gpi.test_fraction = {} must lie in (0, 1)", self.test_fraction));
        }
        if self.relmse_threshold.is_nan() || self.accept_relmse.is_nan() {
            return bad("gpi thresholds must not be NaN".into());
        }
        for kind in [ParamKind::Scale, ParamKind::LengthScale, ParamKind::Noise, ParamKind::Shape] {
            let (lo, hi) = param_bounds(kind);
            for v in self.nominal.get(kind).values() {
                if !(lo..=hi).contains(&v) {
                    return bad(format!("gpi nominal {} = {v} outside [{lo}, {hi}]", kind.symbol()));
                }
            }
        }
        Ok(())
    }
}

/// Outcome of [`gpi_search`]: the winning fitted spec and its held-out score.
#[derive(Debug, Clone)]
pub struct GpiResult {
    pub spec: KernelSpec,
    pub score: QualityScore,
    pub trials_used: usize,
    /// The winning fit on the training data.
    pub rpd: Rpd,
}

/// Candidate likelihood domains in search order: each unrestricted family,
/// then one fixed parameter per family, index and level, then every pair of
/// fixed parameters with the first parameter's level varying fastest.
pub fn enumerate_rlds(config: &GpiConfig) -> Vec<KernelSpec> {
    let mut out: Vec<KernelSpec> = config.kernel_set.iter().map(|&f| KernelSpec::new(f)).collect();
    let levels = |kind: ParamKind| config.nominal.get(kind).values();
    if config.max_depth >= 1 {
        for &family in &config.kernel_set {
            let layout = family.layout();
            for (t, &kind) in layout.iter().enumerate() {
                for v in levels(kind) {
                    out.push(pin(family, &[(t, v)]));
                }
            }
        }
    }
    if config.max_depth >= 2 {
        for &family in &config.kernel_set {
            let layout = family.layout();
            for t1 in 0..layout.len() {
                for t2 in t1 + 1..layout.len() {
                    for v2 in levels(layout[t2]) {
                        for v1 in levels(layout[t1]) {
                            out.push(pin(family, &[(t1, v1), (t2, v2)]));
                        }
                    }
                }
            }
        }
    }
    out
}

fn pin(family: KernelFamily, fixtures: &[(usize, f64)]) -> KernelSpec {
    fixtures
        .iter()
        .try_fold(KernelSpec::new(family), |s, &(t, v)| s.fix(t, v))
        .expect("nominal values validated against bounds")
}

/// Searches the enumeration for the best surrogate on `test`, fitting each
/// candidate domain on `train`. A `previous` winner is tried first. Stops
/// when the best RelMSE drops below the acceptance level or after
/// `trial_threshold` trials; failed fits count as trials.
pub fn gpi_search<R: Rng + ?Sized>(
    train: &Doe,
    test: &Doe,
    config: &GpiConfig,
    previous: Option<&KernelSpec>,
    rng: &mut R,
) -> Result<GpiResult> {
    config.validate()?;
    let queue = previous.cloned().into_iter().chain(enumerate_rlds(config));
    let mut best: Option<GpiResult> = None;
    let mut trials = 0;
    let mut last_err = None;
    for skeleton in queue {
        if trials >= config.trial_threshold {
            break;
        }
        trials += 1;
        let fitted = fit_mle(train, &skeleton, config.mle_restarts, rng).and_then(|rpd| {
            let s = score(test, &rpd)?;
            Ok((rpd, s))
        });
        let (rpd, s) = match fitted {
            Ok(v) => v,
            Err(e @ Error::DegenerateVariance(_)) => return Err(e),
            Err(e) => {
                log::debug!("gpi trial {trials} ({}) failed: {e}", skeleton.label());
                last_err = Some(e);
                continue;
            }
        };
        let replace = match &best {
            None => true,
            Some(b) => prefer(&b.score, &s, config.relmse_threshold) == Preference::Second,
        };
        if replace {
            best = Some(GpiResult { spec: rpd.spec().clone(), score: s, trials_used: 0, rpd });
        }
        if best.as_ref().is_some_and(|b| b.score.relmse < config.accept_relmse) {
            break;
        }
    }
    match best {
        Some(mut b) => {
            b.trials_used = trials;
            Ok(b)
        }
        None => Err(Error::SurrogateUnavailable(format!(
            "all {trials} trials failed{}",
            last_err.map(|e| format!(", last error: {e}")).unwrap_or_default()
        ))),
    }
}

/// Random split holding back `floor(fraction · N)` rows for testing. Both
/// halves keep the original row order.
pub fn split_train_test<R: Rng + ?Sized>(doe: &Doe, fraction: f64, rng: &mut R) -> Result<(Doe, Doe)> {
    let n = doe.len();
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::ParameterDomain(format!("test fraction {fraction} must lie in (0, 1)")));
    }
    let n_test = (fraction * n as f64).floor() as usize;
    if n < 5 || n_test == 0 || n_test >= n {
        return Err(Error::InvalidInput(format!(
            "cannot split {n} rows with test fraction {fraction}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((doe.subset(&train), doe.subset(&test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::rng::seeded;
    use crate::sampling::sobol_points;

    fn binom2(n: usize) -> usize {
        n * (n - 1) / 2
    }

    #[test]
    fn enumeration_size_matches_count_formula() {
        let cfg = GpiConfig::default();
        let expected = 3 + KernelFamily::ALL
            .iter()
            .map(|f| 3 * f.n_params() + 9 * binom2(f.n_params()))
            .sum::<usize>();
        assert_eq!(expected, 141);
        assert_eq!(enumerate_rlds(&cfg).len(), expected);
    }

    #[test]
    fn enumeration_order() {
        let cfg = GpiConfig::default();
        let e = enumerate_rlds(&cfg);
        assert_eq!(e[0], KernelSpec::new(KernelFamily::Rbf));
        assert_eq!(e[1], KernelSpec::new(KernelFamily::Matern32));
        assert_eq!(e[2], KernelSpec::new(KernelFamily::RationalQuadratic));
        let c = cfg.nominal.c;
        for (k, v) in c.values().into_iter().enumerate() {
            assert_eq!(e[3 + k].family, KernelFamily::Rbf);
            assert_eq!(e[3 + k].fixed, vec![Some(v), None, None]);
        }
        // first depth-two entry: RBF with c low and lambda low, then c mid
        let d2 = 3 + 9 + 9 + 12;
        let lam = cfg.nominal.lambda;
        assert_eq!(e[d2].fixed, vec![Some(c.low), Some(lam.low), None]);
        assert_eq!(e[d2 + 1].fixed, vec![Some(c.mid), Some(lam.low), None]);
        assert_eq!(e[d2 + 3].fixed, vec![Some(c.low), Some(lam.mid), None]);
        assert!(e.iter().all(|s| s.validate().is_ok()));
        assert_eq!(enumerate_rlds(&cfg), e);
    }

    #[test]
    fn depth_limits() {
        let cfg = GpiConfig { max_depth: 0, ..Default::default() };
        assert_eq!(enumerate_rlds(&cfg).len(), 3);
        let cfg = GpiConfig { max_depth: 1, ..Default::default() };
        assert_eq!(enumerate_rlds(&cfg).len(), 3 + 9 + 9 + 12);
    }

    #[test]
    fn nominal_defaults_are_geometric() {
        let n = NominalValues::default();
        assert_eq!(n.lambda.low, 1e-3);
        assert!((n.lambda.mid - 0.1f64.sqrt()).abs() < 1e-15);
        assert_eq!(n.lambda.high, 1e2);
    }

    #[test]
    fn split_sizes() {
        let doe = |n: usize| {
            let x = sobol_points(2, n, 0).unwrap();
            let y = (0..n).map(|i| i as f64).collect();
            Doe::new(x, y).unwrap()
        };
        let (tr, te) = split_train_test(&doe(64), 0.2, &mut seeded(1)).unwrap();
        assert_eq!((tr.len(), te.len()), (52, 12));
        let (tr, te) = split_train_test(&doe(5), 0.2, &mut seeded(1)).unwrap();
        assert_eq!((tr.len(), te.len()), (4, 1));
        let mut all: Vec<f64> = tr.y().iter().chain(te.y()).copied().collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        let a = split_train_test(&doe(30), 0.2, &mut seeded(7)).unwrap();
        let b = split_train_test(&doe(30), 0.2, &mut seeded(7)).unwrap();
        assert_eq!(a, b);
        assert!(split_train_test(&doe(4), 0.2, &mut seeded(1)).is_err());
    }

    fn sphere(n: usize, skip: u64) -> Doe {
        let x = sobol_points(2, n, skip).unwrap();
        let y = x.iter_rows().map(|r| r.iter().map(|v| (10.0 * v - 5.0).powi(2)).sum()).collect();
        Doe::new(x, y).unwrap()
    }

    #[test]
    fn single_trial_returns_unrestricted_rbf() {
        let cfg = GpiConfig { trial_threshold: 1, ..Default::default() };
        let r = gpi_search(&sphere(24, 0), &sphere(8, 64), &cfg, None, &mut seeded(2)).unwrap();
        assert_eq!(r.trials_used, 1);
        assert_eq!(r.spec.family, KernelFamily::Rbf);
        assert!(!r.spec.is_restricted());
    }

    #[test]
    fn never_worse_than_first_trial() {
        let train = sphere(12, 0);
        let test = sphere(8, 32);
        let first = gpi_search(&train, &test, &GpiConfig { trial_threshold: 1, ..Default::default() }, None, &mut seeded(9))
            .unwrap();
        let cfg = GpiConfig { trial_threshold: 12, accept_relmse: 0.0, ..Default::default() };
        let full = gpi_search(&train, &test, &cfg, None, &mut seeded(9)).unwrap();
        assert!(full.trials_used <= 12);
        assert!(full.score.relmse <= first.score.relmse);
    }

    #[test]
    fn early_stop_on_accurate_fit() {
        // a smooth quadratic is learned almost exactly by the first trial
        let r = gpi_search(&sphere(40, 0), &sphere(10, 64), &GpiConfig::default(), None, &mut seeded(0)).unwrap();
        assert!(r.score.relmse < 0.05);
        assert_eq!(r.trials_used, 1);
    }

    #[test]
    fn warm_start_is_first_trial() {
        let prev = KernelSpec::new(KernelFamily::Matern32).fix(1, 0.5).unwrap();
        let cfg = GpiConfig { trial_threshold: 1, ..Default::default() };
        let r = gpi_search(&sphere(24, 0), &sphere(8, 64), &cfg, Some(&prev), &mut seeded(2)).unwrap();
        assert_eq!(r.spec.family, KernelFamily::Matern32);
        assert_eq!(r.spec.fixed, prev.fixed);
    }

    #[test]
    fn constant_test_data_is_rejected() {
        let x = Matrix::from_rows(&[[0.1], [0.9]]);
        let test = Doe::new(x, vec![1.0, 1.0]).unwrap();
        let r = gpi_search(&sphere(10, 0).subset(&[0, 1, 2]), &test, &GpiConfig::default(), None, &mut seeded(0));
        assert!(r.is_err());
    }
}
