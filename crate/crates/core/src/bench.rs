//! Synthetic benchmark objectives, ensemble execution across seeds and
//! configurations, quartile curves, and run persistence.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gpr::Doe;
use crate::objective::Objective;
use crate::optimizer::{run_adaptive_bo, IterationRecord, OptimizerConfig, RunHistory, SelectionKind, Variant};
use crate::sampling::sobol_points;
use crate::stats::five_number;

/// Per-coordinate maximum of `√x·sin x` on `[0, 10]`, reached at `x ≈ 7.917`.
pub const ALPINE_N2_PEAK: f64 = 2.808_131_180_006_956_4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticKind {
    /// `Σ x_d²` on `[−5, 5]^D`.
    Sphere,
    /// `−Π √x_d · sin x_d` on `[0, 10]^D`.
    AlpineN2,
    /// Ishigami function (`a = 7`, `b = 0.1`) on `[−π, π]³`.
    Ishigami,
    /// `x_1` on `[0, 1]^D`.
    Linear,
}

impl SyntheticKind {
    pub fn name(self) -> &'static str {
        match self {
            SyntheticKind::Sphere => "sphere",
            SyntheticKind::AlpineN2 => "alpinen2",
            SyntheticKind::Ishigami => "ishigami",
            SyntheticKind::Linear => "linear",
        }
    }
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "sphere" => Ok(SyntheticKind::Sphere),
            "alpinen2" | "alpine2" => Ok(SyntheticKind::AlpineN2),
            "ishigami" => Ok(SyntheticKind::Ishigami),
            "linear" => Ok(SyntheticKind::Linear),
            _ => Err(Error::Parse(format!("unknown objective `{s}`"))),
        }
    }
}

/// A built-in objective evaluated on the unit cube and mapped affinely onto
/// its native domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticObjective {
    pub kind: SyntheticKind,
    pub dim: usize,
}

impl SyntheticObjective {
    pub fn new(kind: SyntheticKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ParameterDomain("objective dimension must be positive".into()));
        }
        if kind == SyntheticKind::Ishigami && dim != 3 {
            return Err(Error::ParameterDomain(format!("ishigami is three-dimensional, got {dim}")));
        }
        Ok(Self { kind, dim })
    }

    /// Native domain `[lo, hi]` shared by every coordinate.
    pub fn bounds(&self) -> (f64, f64) {
        match self.kind {
            SyntheticKind::Sphere => (-5.0, 5.0),
            SyntheticKind::AlpineN2 => (0.0, 10.0),
            SyntheticKind::Ishigami => (-std::f64::consts::PI, std::f64::consts::PI),
            SyntheticKind::Linear => (0.0, 1.0),
        }
    }

    /// Global minimum value, used as the shift that keeps report ratios positive.
    pub fn lower_bound(&self) -> f64 {
        match self.kind {
            SyntheticKind::Sphere => 0.0,
            SyntheticKind::AlpineN2 => -ALPINE_N2_PEAK.powi(self.dim as i32),
            SyntheticKind::Ishigami => {
                // −1 − 0.1·π⁴ at sin x₁ = −1, x₂ = 0, |x₃| = π
                -1.0 - 0.1 * std::f64::consts::PI.powi(4)
            }
            SyntheticKind::Linear => 0.0,
        }
    }

    /// Value at a point of the native domain.
    pub fn eval_native(&self, x: &[f64]) -> f64 {
        match self.kind {
            SyntheticKind::Sphere => x.iter().map(|v| v * v).sum(),
            SyntheticKind::AlpineN2 => -x.iter().map(|v| v.sqrt() * v.sin()).product::<f64>(),
            SyntheticKind::Ishigami => x[0].sin() + 7.0 * x[1].sin().powi(2) + 0.1 * x[2].powi(4) * x[0].sin(),
            SyntheticKind::Linear => x[0],
        }
    }

    pub fn to_native(&self, u: &[f64]) -> Vec<f64> {
        let (lo, hi) = self.bounds();
        u.iter().map(|v| lo + (hi - lo) * v).collect()
    }

    pub fn label(&self) -> String {
        format!("{}-{}d", self.kind.name(), self.dim)
    }
}

impl fmt::Display for SyntheticObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl Objective for SyntheticObjective {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: x.len() });
        }
        Ok(self.eval_native(&self.to_native(x)))
    }
}

/// Index of the first Sobol' point of a run's initial design. Seed `s` uses
/// block `s + 1`, so the sequence origin is never part of an initial design.
pub fn initial_skip(seed: u64, n_init: usize, config_index: usize, n_configs: usize, shared: bool) -> Result<u64> {
    let block = if shared {
        seed.checked_add(1)
    } else {
        seed.checked_add(1).and_then(|b| b.checked_mul(n_configs as u64)).and_then(|b| b.checked_add(config_index as u64))
    };
    block
        .and_then(|b| b.checked_mul(n_init as u64))
        .filter(|s| s.saturating_add(n_init as u64) <= 1u64 << 32)
        .ok_or_else(|| Error::InvalidInput(format!("seed {seed} is too large for the Sobol' sequence")))
}

/// Sobol' initial design of `n_init` points starting at `skip`, evaluated.
pub fn initial_doe(objective: &dyn Objective, n_init: usize, skip: u64) -> Result<Doe> {
    let x = sobol_points(objective.dim(), n_init, skip)?;
    let y = x.iter_rows().map(|r| objective.evaluate(r)).collect::<Result<Vec<_>>>()?;
    Doe::new(x, y)
}

/// An optimizer configuration with a display label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedConfig {
    pub label: String,
    pub config: OptimizerConfig,
}

/// SHA-256 over the configuration's debug rendering with the seed cleared.
pub fn config_digest(config: &OptimizerConfig) -> String {
    let canonical = OptimizerConfig { seed: 0, ..config.clone() };
    hex::encode(Sha256::digest(format!("{canonical:?}").as_bytes()))
}

/// The standard BO reference set: every kernel family with LogEI, LogPI and UCB.
pub fn reference_configs(base: &OptimizerConfig) -> Vec<NamedConfig> {
    use crate::acquisition::AcquisitionKind;
    use crate::kernels::{KernelFamily, KernelSpec};
    let ucb = match base.acquisition_set.iter().find(|a| matches!(a, AcquisitionKind::Ucb { .. })) {
        Some(&u) => u,
        None => AcquisitionKind::ucb(),
    };
    let mut out = Vec::new();
    for family in KernelFamily::ALL {
        for acq in [AcquisitionKind::LogEi, AcquisitionKind::LogPi, ucb] {
            out.push(NamedConfig {
                label: format!("bo-{}-{}", family.name(), acq.name()),
                config: OptimizerConfig {
                    variant: Variant::Bo,
                    kernel: KernelSpec::new(family),
                    acquisition: acq,
                    ..base.clone()
                },
            });
        }
    }
    out
}

/// Settings shared by every run of [`run_ensemble`].
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSettings {
    pub objective_name: String,
    /// Objective lower bound recorded for report shifts.
    pub lower_bound: f64,
    pub n_init: usize,
    pub seeds: Vec<u64>,
    /// Give every configuration the same initial design at a given seed.
    pub shared_init: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub history: RunHistory,
}

/// All runs of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEnsemble {
    pub label: String,
    pub objective: String,
    pub lower_bound: f64,
    pub variant: Variant,
    pub selection: SelectionKind,
    pub config_digest: String,
    pub iterations: usize,
    pub runs: Vec<SeedRun>,
}

impl RunEnsemble {
    /// Incumbent after iterations `1..=I` of each run; aborted runs carry
    /// their last incumbent forward.
    pub fn incumbent_curves(&self) -> Vec<Vec<f64>> {
        self.runs
            .iter()
            .map(|r| {
                let mut c: Vec<f64> = r.history.records.iter().map(|rec| rec.incumbent).collect();
                let last = c.last().copied().unwrap_or_else(|| r.history.initial_min());
                c.resize(self.iterations, last);
                c
            })
            .collect()
    }

    /// Iterations at which GPi ran in any seed.
    pub fn gpi_event_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.iterations];
        for r in &self.runs {
            for rec in &r.history.records {
                if rec.gpi_event {
                    counts[rec.iteration - 1] += 1;
                }
            }
        }
        counts
    }

    pub fn aborted_runs(&self) -> usize {
        self.runs.iter().filter(|r| r.history.aborted.is_some()).count()
    }
}

/// Five-number summary of the incumbent across seeds at each iteration:
/// `curves[k][i]` is quartile `k` after iteration `i + 1`.
pub fn quartile_curves(ensemble: &RunEnsemble) -> Result<[Vec<f64>; 5]> {
    if ensemble.runs.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "quartile curves need at least two runs, `{}` has {}",
            ensemble.label,
            ensemble.runs.len()
        )));
    }
    let curves = ensemble.incumbent_curves();
    let mut out: [Vec<f64>; 5] = Default::default();
    for i in 0..ensemble.iterations {
        let column: Vec<f64> = curves.iter().map(|c| c[i]).collect();
        for (k, q) in five_number(&column).into_iter().enumerate() {
            out[k].push(q);
        }
    }
    Ok(out)
}

/// Runs every configuration at every seed. Runs execute in parallel on the
/// current rayon pool unless the objective is serial; results are ordered by
/// configuration, then seed. Failing runs are kept as aborted histories.
pub fn run_ensemble(
    objective: &dyn Objective,
    configs: &[NamedConfig],
    settings: &EnsembleSettings,
) -> Result<Vec<RunEnsemble>> {
    if settings.seeds.is_empty() {
        return Err(Error::InvalidInput("at least one seed is required".into()));
    }
    if settings.n_init == 0 {
        return Err(Error::InvalidInput("initial design size must be positive".into()));
    }
    for c in configs {
        c.config.validate()?;
    }
    let jobs: Vec<(usize, u64)> = (0..configs.len())
        .flat_map(|c| settings.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let run_one = |&(c, seed): &(usize, u64)| -> Result<SeedRun> {
        let skip = initial_skip(seed, settings.n_init, c, configs.len(), settings.shared_init)?;
        let config = OptimizerConfig { seed, ..configs[c].config.clone() };
        let history = match initial_doe(objective, settings.n_init, skip) {
            Ok(doe) => run_adaptive_bo(objective, &doe, None, &config).unwrap_or_else(|e| RunHistory {
                initial_x: doe.x().iter_rows().map(<[f64]>::to_vec).collect(),
                initial_y: doe.y().to_vec(),
                records: Vec::new(),
                aborted: Some(e.to_string()),
            }),
            Err(e) => RunHistory {
                initial_x: Vec::new(),
                initial_y: Vec::new(),
                records: Vec::new(),
                aborted: Some(format!("initial design: {e}")),
            },
        };
        Ok(SeedRun { seed, history })
    };
    let results: Vec<SeedRun> = if objective.is_serial() {
        jobs.iter().map(run_one).collect::<Result<_>>()?
    } else {
        jobs.par_iter().map(run_one).collect::<Result<_>>()?
    };
    let mut results = results.into_iter();
    Ok(configs
        .iter()
        .map(|nc| RunEnsemble {
            label: nc.label.clone(),
            objective: settings.objective_name.clone(),
            lower_bound: settings.lower_bound,
            variant: nc.config.variant,
            selection: nc.config.selection,
            config_digest: config_digest(&nc.config),
            iterations: nc.config.iterations,
            runs: results.by_ref().take(settings.seeds.len()).collect(),
        })
        .collect())
}

const RUN_COLUMNS: &str = "iteration\ty\tincumbent\tacquisition\tgpi_event\tkernel\tx\tes";

fn join_floats(v: &[f64]) -> String {
    v.iter().map(|f| format!("{f:?}")).collect::<Vec<_>>().join(",")
}

fn parse_floats(s: &str) -> Result<Vec<f64>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| t.parse::<f64>().map_err(|_| Error::Parse(format!("bad number `{t}`"))))
        .collect()
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

/// Text form of one run: `# key\tvalue` header lines, a column header, the
/// initial design as iteration-0 rows, then one row per iteration. Floats
/// use Rust's shortest round-trip formatting.
pub fn format_run(ensemble: &RunEnsemble, run: &SeedRun) -> String {
    let h = &run.history;
    let mut out = String::new();
    let meta = [
        ("label", ensemble.label.clone()),
        ("config_digest", ensemble.config_digest.clone()),
        ("seed", run.seed.to_string()),
        ("objective", ensemble.objective.clone()),
        ("lower_bound", format!("{:?}", ensemble.lower_bound)),
        ("variant", ensemble.variant.name().to_string()),
        ("selection", ensemble.selection.name().to_string()),
        ("iterations", ensemble.iterations.to_string()),
        ("aborted", h.aborted.clone().unwrap_or_else(|| "-".into()).replace(['\t', '\n'], " ")),
    ];
    for (k, v) in meta {
        out.push_str(&format!("# {k}\t{v}\n"));
    }
    out.push_str(RUN_COLUMNS);
    out.push('\n');
    for (x, y) in h.initial_x.iter().zip(&h.initial_y) {
        out.push_str(&format!("0\t{y:?}\t-\t-\t-\t-\t{}\t\n", join_floats(x)));
    }
    for r in &h.records {
        out.push_str(&format!(
            "{}\t{:?}\t{:?}\t{}\t{}\t{}\t{}\t{}\n",
            r.iteration,
            r.y,
            r.incumbent,
            r.acquisition,
            u8::from(r.gpi_event),
            r.kernel,
            join_floats(&r.x),
            join_floats(&r.candidate_es)
        ));
    }
    out
}

/// Header fields and run parsed back from [`format_run`] output.
pub fn parse_run(text: &str) -> Result<(BTreeMap<String, String>, SeedRun)> {
    let mut meta = BTreeMap::new();
    let mut lines = text.lines();
    let mut header_seen = false;
    for line in lines.by_ref() {
        if let Some(rest) = line.strip_prefix("# ") {
            let (k, v) = rest.split_once('\t').ok_or_else(|| Error::Parse(format!("bad header `{line}`")))?;
            meta.insert(k.to_string(), v.to_string());
        } else if line == RUN_COLUMNS {
            header_seen = true;
            break;
        } else {
            return Err(Error::Parse(format!("unexpected line `{line}`")));
        }
    }
    if !header_seen {
        return Err(Error::Parse("missing column header".into()));
    }
    let seed: u64 = meta
        .get("seed")
        .ok_or_else(|| Error::Parse("missing seed".into()))?
        .parse()
        .map_err(|_| Error::Parse("bad seed".into()))?;
    let mut history = RunHistory {
        initial_x: Vec::new(),
        initial_y: Vec::new(),
        records: Vec::new(),
        aborted: meta.get("aborted").filter(|a| a.as_str() != "-").cloned(),
    };
    let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad number `{s}`")));
    for line in lines {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 8 {
            return Err(Error::Parse(format!("expected 8 columns, got {}: `{line}`", f.len())));
        }
        let iteration: usize = f[0].parse().map_err(|_| Error::Parse(format!("bad iteration `{}`", f[0])))?;
        if iteration == 0 {
            history.initial_x.push(parse_floats(f[6])?);
            history.initial_y.push(num(f[1])?);
        } else {
            history.records.push(IterationRecord {
                iteration,
                y: num(f[1])?,
                incumbent: num(f[2])?,
                acquisition: f[3].parse().map_err(|_| Error::Parse(format!("bad index `{}`", f[3])))?,
                gpi_event: f[4] == "1",
                kernel: f[5].to_string(),
                x: parse_floats(f[6])?,
                candidate_es: parse_floats(f[7])?,
            });
        }
    }
    Ok((meta, SeedRun { seed, history }))
}

pub const INDEX_FILE: &str = "index.tsv";
const INDEX_COLUMNS: &str = "label\tconfig_digest\tseed\tfile";

/// Writes one file per run under `dir/runs/` and an index mapping
/// configurations to run files.
pub fn write_ensembles(dir: &Path, ensembles: &[RunEnsemble]) -> Result<()> {
    let runs_dir = dir.join("runs");
    fs::create_dir_all(&runs_dir)?;
    let mut index = format!("{INDEX_COLUMNS}\n");
    for (ci, e) in ensembles.iter().enumerate() {
        for run in &e.runs {
            let name = format!("{ci:03}-{}-seed{}.tsv", sanitize(&e.label), run.seed);
            fs::write(runs_dir.join(&name), format_run(e, run))?;
            index.push_str(&format!("{}\t{}\t{}\truns/{name}\n", e.label, e.config_digest, run.seed));
        }
    }
    fs::write(dir.join(INDEX_FILE), index)?;
    Ok(())
}

/// Reads ensembles written by [`write_ensembles`], in index order.
pub fn load_ensembles(dir: &Path) -> Result<Vec<RunEnsemble>> {
    let index = fs::read_to_string(dir.join(INDEX_FILE))?;
    let mut lines = index.lines();
    if lines.next() != Some(INDEX_COLUMNS) {
        return Err(Error::Parse(format!("{} has an unexpected header", INDEX_FILE)));
    }
    let mut out: Vec<RunEnsemble> = Vec::new();
    for line in lines {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(Error::Parse(format!("bad index line `{line}`")));
        }
        let (meta, run) = parse_run(&fs::read_to_string(dir.join(f[3]))?)?;
        let get = |k: &str| meta.get(k).cloned().ok_or_else(|| Error::Parse(format!("{}: missing `{k}`", f[3])));
        let digest = get("config_digest")?;
        match out.last_mut() {
            Some(e) if e.label == f[0] && e.config_digest == digest => e.runs.push(run),
            _ => out.push(RunEnsemble {
                label: get("label")?,
                objective: get("objective")?,
                lower_bound: get("lower_bound")?.parse().map_err(|_| Error::Parse("bad lower_bound".into()))?,
                variant: get("variant")?.parse()?,
                selection: match get("selection")?.as_str() {
                    "uniform" => SelectionKind::Uniform,
                    "categorical" => SelectionKind::Categorical,
                    other => return Err(Error::Parse(format!("unknown selection `{other}`"))),
                },
                config_digest: digest,
                iterations: get("iterations")?.parse().map_err(|_| Error::Parse("bad iterations".into()))?,
                runs: vec![run],
            }),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquisition::MaximizerBudget;
    use approx::assert_abs_diff_eq;

    /// Golden-section search for the 1-D maximum of `√x sin x` near 7.9.
    fn alpine_peak_oracle() -> f64 {
        let f = |x: f64| x.sqrt() * x.sin();
        let (mut a, mut b) = (7.0, 9.0);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if f(c) > f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        f(0.5 * (a + b))
    }

    #[test]
    fn objective_values() {
        let sphere = SyntheticObjective::new(SyntheticKind::Sphere, 3).unwrap();
        assert_eq!(sphere.evaluate(&[0.5; 3]).unwrap(), 0.0);
        assert_eq!(sphere.evaluate(&[1.0, 0.5, 0.5]).unwrap(), 25.0);
        let peak = alpine_peak_oracle();
        assert_abs_diff_eq!(peak, ALPINE_N2_PEAK, epsilon = 1e-12);
        let a1 = SyntheticObjective::new(SyntheticKind::AlpineN2, 1).unwrap();
        let u = 7.917052684666 / 10.0;
        assert_abs_diff_eq!(a1.evaluate(&[u]).unwrap(), -peak, epsilon = 1e-9);
        let a3 = SyntheticObjective::new(SyntheticKind::AlpineN2, 3).unwrap();
        assert_abs_diff_eq!(a3.evaluate(&[u; 3]).unwrap(), -peak.powi(3), epsilon = 1e-8);
        assert_abs_diff_eq!(a3.lower_bound(), -22.1438, epsilon = 1e-4);
        assert_eq!(a3.evaluate(&[0.0, 0.3, 0.6]).unwrap(), 0.0);
        assert!(SyntheticObjective::new(SyntheticKind::Ishigami, 2).is_err());
        assert_eq!("Alpine-N2".parse::<SyntheticKind>().unwrap(), SyntheticKind::AlpineN2);
    }

    fn quick_configs() -> Vec<NamedConfig> {
        let base = OptimizerConfig {
            iterations: 4,
            mle_restarts: 2,
            maximizer: MaximizerBudget { seed_count: 64, refine_top: 1, refine_steps: 10, initial_step: 0.05 },
            ..Default::default()
        };
        reference_configs(&base).into_iter().take(2).collect()
    }

    fn settings(shared: bool) -> EnsembleSettings {
        EnsembleSettings {
            objective_name: "sphere-2d".into(),
            lower_bound: 0.0,
            n_init: 6,
            seeds: vec![0, 1, 2],
            shared_init: shared,
        }
    }

    #[test]
    fn ensembles_and_shared_init() {
        let obj = SyntheticObjective::new(SyntheticKind::Sphere, 2).unwrap();
        let ens = run_ensemble(&obj, &quick_configs(), &settings(true)).unwrap();
        assert_eq!(ens.len(), 2);
        assert!(ens.iter().all(|e| e.runs.len() == 3));
        for s in 0..3 {
            assert_eq!(ens[0].runs[s].history.initial_x, ens[1].runs[s].history.initial_x);
        }
        assert_ne!(ens[0].runs[0].history.initial_x, ens[0].runs[1].history.initial_x);
        let unshared = run_ensemble(&obj, &quick_configs(), &settings(false)).unwrap();
        assert_ne!(unshared[0].runs[0].history.initial_x, unshared[1].runs[0].history.initial_x);

        let q = quartile_curves(&ens[0]).unwrap();
        for k in 0..5 {
            assert_eq!(q[k].len(), 4);
            assert!(q[k].windows(2).all(|w| w[1] <= w[0]));
        }
        for i in 0..4 {
            assert!((0..4).all(|k| q[k][i] <= q[k + 1][i]));
        }
        assert_eq!(reference_configs(&OptimizerConfig::default()).len(), 9);
    }

    #[test]
    fn quartiles_of_two_and_identical_runs() {
        let obj = SyntheticObjective::new(SyntheticKind::Sphere, 2).unwrap();
        let mut e = run_ensemble(&obj, &quick_configs()[..1], &settings(true)).unwrap().remove(0);
        e.runs.truncate(2);
        let q = quartile_curves(&e).unwrap();
        let c = e.incumbent_curves();
        for i in 0..4 {
            assert_eq!(q[0][i], c[0][i].min(c[1][i]));
            assert_eq!(q[4][i], c[0][i].max(c[1][i]));
            assert_abs_diff_eq!(q[2][i], 0.5 * (c[0][i] + c[1][i]), epsilon = 1e-15 * c[0][i].abs().max(1.0));
        }
        e.runs[1] = e.runs[0].clone();
        let q = quartile_curves(&e).unwrap();
        assert!((1..5).all(|k| q[k] == q[0]));
        e.runs.truncate(1);
        assert!(quartile_curves(&e).is_err());
    }

    #[test]
    fn persistence_round_trip() {
        let obj = SyntheticObjective::new(SyntheticKind::Sphere, 2).unwrap();
        let ens = run_ensemble(&obj, &quick_configs(), &settings(true)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_ensembles(dir.path(), &ens).unwrap();
        let back = load_ensembles(dir.path()).unwrap();
        assert_eq!(back, ens);
        for (a, b) in ens.iter().zip(&back) {
            assert_eq!(quartile_curves(a).unwrap(), quartile_curves(b).unwrap());
        }
    }

    #[test]
    fn skips_are_disjoint_and_bounded() {
        assert_eq!(initial_skip(0, 16, 0, 9, true).unwrap(), 16);
        assert_eq!(initial_skip(0, 16, 3, 9, false).unwrap(), (9 + 3) * 16);
        assert!(initial_skip(u64::MAX / 2, 16, 0, 1, true).is_err());
    }
}
