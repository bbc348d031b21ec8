//! Outer optimization loops: standard BO and the GPi / adaptive-selection variants.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::{acq_maximize, AcquisitionKind, MaximizerBudget};
use crate::error::{Error, Result};
use crate::gpi::{gpi_search, split_train_test, GpiConfig};
use crate::gpr::{fit_mle, Doe, Rpd};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::objective::Objective;
use crate::rng::{substream, Stream};
use crate::selection::{candidate_scores, cat_update, filter_by_score, sel_cat, sel_uniform, Candidate, CatState, EsSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Bo,
    BoGpi,
    BoAda,
    #[serde(rename = "bo_iada")]
    BoIAda,
    BoGpiAda,
    #[serde(rename = "bo_gpi_iada")]
    BoGpiIAda,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Bo,
        Variant::BoGpi,
        Variant::BoAda,
        Variant::BoIAda,
        Variant::BoGpiAda,
        Variant::BoGpiIAda,
    ];

    pub fn uses_gpi(self) -> bool {
        matches!(self, Variant::BoGpi | Variant::BoGpiAda | Variant::BoGpiIAda)
    }

    /// Whether the variant proposes one candidate per acquisition in the set.
    pub fn is_adaptive(self) -> bool {
        matches!(self, Variant::BoAda | Variant::BoIAda | Variant::BoGpiAda | Variant::BoGpiIAda)
    }

    pub fn uses_es_filter(self) -> bool {
        matches!(self, Variant::BoIAda | Variant::BoGpiIAda)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Bo => "bo",
            Variant::BoGpi => "bo_gpi",
            Variant::BoAda => "bo_ada",
            Variant::BoIAda => "bo_iada",
            Variant::BoGpiAda => "bo_gpi_ada",
            Variant::BoGpiIAda => "bo_gpi_iada",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == norm)
            .ok_or_else(|| Error::Parse(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionKind {
    Uniform,
    Categorical,
}

impl SelectionKind {
    pub fn name(self) -> &'static str {
        match self {
            SelectionKind::Uniform => "uniform",
            SelectionKind::Categorical => "categorical",
        }
    }
}

/// When GPi re-runs after the first iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum GpiCondition {
    /// At iterations `1, 1 + period, 1 + 2·period, …`.
    Periodic { period: usize },
    /// After `iterations` consecutive iterations without a new incumbent.
    Stagnation { iterations: usize },
    Never,
}

impl Default for GpiCondition {
    fn default() -> Self {
        GpiCondition::Periodic { period: 25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub variant: Variant,
    /// Surrogate kernel of the non-GPi variants, also the start of their fits.
    pub kernel: KernelSpec,
    /// The single acquisition of non-adaptive variants.
    pub acquisition: AcquisitionKind,
    /// The acquisition portfolio of adaptive variants.
    pub acquisition_set: Vec<AcquisitionKind>,
    pub selection: SelectionKind,
    pub gpi: GpiConfig,
    pub gpi_condition: GpiCondition,
    pub es_schedule: EsSchedule,
    pub iterations: usize,
    pub seed: u64,
    pub mle_restarts: usize,
    pub maximizer: MaximizerBudget,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Bo,
            kernel: KernelSpec::new(KernelFamily::Matern32),
            acquisition: AcquisitionKind::LogEi,
            acquisition_set: vec![AcquisitionKind::LogEi, AcquisitionKind::LogPi, AcquisitionKind::ucb()],
            selection: SelectionKind::Uniform,
            gpi: GpiConfig::default(),
            gpi_condition: GpiCondition::default(),
            es_schedule: EsSchedule::default(),
            iterations: 50,
            seed: 0,
            mle_restarts: 5,
            maximizer: MaximizerBudget::default(),
        }
    }
}

impl OptimizerConfig {
    /// Acquisitions that propose candidates each iteration.
    pub fn active_acquisitions(&self) -> &[AcquisitionKind] {
        if self.variant.is_adaptive() {
            &self.acquisition_set
        } else {
            std::slice::from_ref(&self.acquisition)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ParameterDomain(msg));
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if self.variant.is_adaptive() && self.acquisition_set.is_empty() {
            return bad(format!("acquisition_set is required for {}", self.variant));
        }
        if self.acquisition_set.len() > 255 {
            return bad("acquisition_set has more than 255 entries".into());
        }
        for a in self.active_acquisitions() {
            a.validate()?;
        }
        if let GpiCondition::Periodic { period: 0 } | GpiCondition::Stagnation { iterations: 0 } = self.gpi_condition {
            return bad("gpi_condition period must be at least 1".into());
        }
        if self.maximizer.seed_count == 0 {
            return bad("maximizer.seed_count must be at least 1".into());
        }
        self.kernel.validate()?;
        self.es_schedule.validate()?;
        if self.variant.uses_gpi() {
            self.gpi.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub x: Vec<f64>,
    pub y: f64,
    /// Smallest observed value including this iteration.
    pub incumbent: f64,
    /// Position of the chosen acquisition in the active set.
    pub acquisition: usize,
    pub gpi_event: bool,
    /// Exploitation score of each acquisition's candidate.
    pub candidate_es: Vec<f64>,
    pub kernel: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    pub initial_x: Vec<Vec<f64>>,
    pub initial_y: Vec<f64>,
    pub records: Vec<IterationRecord>,
    /// Reason the run stopped early, if it did.
    pub aborted: Option<String>,
}

impl RunHistory {
    pub fn initial_min(&self) -> f64 {
        self.initial_y.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Incumbent after iteration `i` (0 is the initial design).
    pub fn incumbent_curve(&self) -> Vec<f64> {
        std::iter::once(self.initial_min())
            .chain(self.records.iter().map(|r| r.incumbent))
            .collect()
    }

    pub fn final_incumbent(&self) -> f64 {
        self.records.last().map_or_else(|| self.initial_min(), |r| r.incumbent)
    }

    pub fn evaluations(&self) -> usize {
        self.initial_y.len() + self.records.len()
    }

    pub fn recommendation(&self) -> (Vec<f64>, f64) {
        recommend(self).expect("a history always holds its initial design")
    }
}

/// Best observed design and value over the whole history, earliest on ties.
pub fn recommend(history: &RunHistory) -> Result<(Vec<f64>, f64)> {
    let all = history
        .initial_x
        .iter()
        .zip(&history.initial_y)
        .chain(history.records.iter().map(|r| (&r.x, &r.y)));
    let mut best: Option<(&Vec<f64>, f64)> = None;
    for (x, &y) in all {
        if best.map_or(true, |(_, b)| y < b) {
            best = Some((x, y));
        }
    }
    best.map(|(x, y)| (x.clone(), y))
        .ok_or_else(|| Error::InvalidInput("empty history".into()))
}

/// Standard BO with a fixed kernel and a single acquisition.
pub fn run_bo(objective: &dyn Objective, initial: &Doe, config: &OptimizerConfig) -> Result<RunHistory> {
    if config.variant != Variant::Bo {
        return Err(Error::InvalidInput(format!("run_bo expects variant bo, got {}", config.variant)));
    }
    run_adaptive_bo(objective, initial, None, config)
}

/// Runs any variant. `test` replaces the per-event random hold-out used by
/// GPi; without it GPi splits the current design.
pub fn run_adaptive_bo(
    objective: &dyn Objective,
    initial: &Doe,
    test: Option<&Doe>,
    config: &OptimizerConfig,
) -> Result<RunHistory> {
    config.validate()?;
    if objective.dim() != initial.dim() {
        return Err(Error::DimensionMismatch { expected: objective.dim(), found: initial.dim() });
    }
    if let Some(t) = test {
        if t.dim() != initial.dim() {
            return Err(Error::DimensionMismatch { expected: initial.dim(), found: t.dim() });
        }
    }
    Engine::new(objective, initial, test, config).run()
}

struct Engine<'a> {
    objective: &'a dyn Objective,
    test: Option<&'a Doe>,
    config: &'a OptimizerConfig,
    doe: Doe,
    spec: KernelSpec,
    cat: CatState,
    history: RunHistory,
    last_improvement: usize,
    last_gpi: usize,
}

impl<'a> Engine<'a> {
    fn new(objective: &'a dyn Objective, initial: &Doe, test: Option<&'a Doe>, config: &'a OptimizerConfig) -> Self {
        Self {
            objective,
            test,
            config,
            doe: initial.clone(),
            spec: config.kernel.clone(),
            cat: CatState::new(config.active_acquisitions().len()),
            history: RunHistory {
                initial_x: initial.x().iter_rows().map(<[f64]>::to_vec).collect(),
                initial_y: initial.y().to_vec(),
                records: Vec::with_capacity(config.iterations),
                aborted: None,
            },
            last_improvement: 0,
            last_gpi: 0,
        }
    }

    fn run(mut self) -> Result<RunHistory> {
        for i in 1..=self.config.iterations {
            if let Err(e) = self.step(i) {
                match e {
                    Error::Objective(_) | Error::SurrogateUnavailable(_) | Error::IllConditioned { .. } => {
                        log::warn!("run aborted at iteration {i}: {e}");
                        self.history.aborted = Some(format!("iteration {i}: {e}"));
                        break;
                    }
                    other => return Err(other),
                }
            }
        }
        Ok(self.history)
    }

    fn gpi_due(&self, i: usize) -> bool {
        if i == 1 {
            return true;
        }
        match self.config.gpi_condition {
            GpiCondition::Periodic { period } => (i - 1) % period == 0,
            GpiCondition::Stagnation { iterations } => {
                let since_improvement = i - 1 - self.last_improvement;
                let since_gpi = i - self.last_gpi;
                since_improvement >= iterations && since_gpi > iterations
            }
            GpiCondition::Never => false,
        }
    }

    fn surrogate(&mut self, i: usize) -> Result<(Rpd, bool)> {
        let cfg = self.config;
        let seed = cfg.seed;
        if cfg.variant.uses_gpi() && self.gpi_due(i) {
            let previous = (self.last_gpi > 0).then(|| self.spec.clone());
            let mut split_rng = substream(seed, Stream::Split, i as u64);
            let mut gpi_rng = substream(seed, Stream::Gpi, i as u64);
            let result = match self.test {
                Some(t) => gpi_search(&self.doe, t, &cfg.gpi, previous.as_ref(), &mut gpi_rng)?,
                None => {
                    let (train, test) = split_train_test(&self.doe, cfg.gpi.test_fraction, &mut split_rng)?;
                    gpi_search(&train, &test, &cfg.gpi, previous.as_ref(), &mut gpi_rng)?
                }
            };
            log::debug!("iteration {i}: gpi chose {} after {} trials", result.spec.label(), result.trials_used);
            self.spec = result.spec;
            self.last_gpi = i;
            let rpd = Rpd::condition(&self.doe, &self.spec)?;
            return Ok((rpd, true));
        }
        let mut rng = substream(seed, Stream::MleRestarts, i as u64);
        let rpd = fit_mle(&self.doe, &self.spec, cfg.mle_restarts, &mut rng)?;
        self.spec = rpd.spec().clone();
        Ok((rpd, false))
    }

    fn step(&mut self, i: usize) -> Result<()> {
        let cfg = self.config;
        let (rpd, gpi_event) = self.surrogate(i)?;
        let incumbent = self.doe.min_y();
        let acqs = cfg.active_acquisitions();
        let candidates: Vec<Candidate> = acqs
            .par_iter()
            .enumerate()
            .map(|(a, &kind)| {
                let mut rng = substream(cfg.seed, Stream::Acquisition, ((i as u64) << 8) | a as u64);
                Candidate { x: acq_maximize(kind, &rpd, incumbent, cfg.maximizer, &mut rng), acquisition: a }
            })
            .collect();

        let scores = if self.doe.len() >= 2 {
            candidate_scores(&candidates, self.doe.x())?
        } else {
            Vec::new()
        };
        let survivors = if cfg.variant.uses_es_filter() {
            filter_by_score(&scores, cfg.es_schedule.threshold(i, cfg.iterations))
        } else {
            (0..candidates.len()).collect()
        };
        let mut rng = substream(cfg.seed, Stream::Selection, i as u64);
        let pick = match cfg.selection {
            SelectionKind::Uniform => sel_uniform(survivors.len(), &mut rng),
            SelectionKind::Categorical => {
                let tags: Vec<usize> = survivors.iter().map(|&k| candidates[k].acquisition).collect();
                sel_cat(&tags, &self.cat, &mut rng)
            }
        };
        let chosen = &candidates[survivors[pick]];

        let y = self.objective.evaluate(&chosen.x)?;
        if !y.is_finite() {
            return Err(Error::Objective(format!("non-finite value {y} at {:?}", chosen.x)));
        }
        let improved = y <= incumbent;
        self.cat = cat_update(&self.cat, chosen.acquisition, improved)?;
        if y < incumbent {
            self.last_improvement = i;
        }
        self.doe.push(&chosen.x, y)?;
        self.history.records.push(IterationRecord {
            iteration: i,
            x: chosen.x.clone(),
            y,
            incumbent: incumbent.min(y),
            acquisition: chosen.acquisition,
            gpi_event,
            candidate_es: scores,
            kernel: self.spec.label(),
        });
        Ok(())
    }
}
