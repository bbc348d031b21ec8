//! The batch commands. Every file they write is a pure function of the
//! experiment spec, so reruns reproduce outputs byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use adabo::bench::{load_ensembles, write_ensembles};
use adabo::{
    convergence_curve, emit_history_plotdata, emit_table, report_table, run_ensemble, wcri_table, EnsembleSettings,
    NamedConfig, Objective, RunEnsemble, SensitivityReport,
};

use crate::config::{config_err, CliError, ExperimentSpec, Mode};

pub const SUMMARY_FILE: &str = "summary.tsv";
pub const WCRI_FILE: &str = "wcri.tsv";
pub const PLOTDATA_FILE: &str = "plotdata.tsv";
pub const CONVERGENCE_FILE: &str = "convergence.tsv";
pub const REFERENCE_DIR: &str = "reference";
pub const CHALLENGER_DIR: &str = "challengers";

/// What a command produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    /// Files written, relative to the output directory.
    pub files: Vec<PathBuf>,
    /// Runs that stopped early.
    pub failed_runs: usize,
    /// Human-readable summary for stdout.
    pub summary: String,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.failed_runs > 0 {
            1
        } else {
            0
        }
    }
}

fn run_err(e: impl std::fmt::Display) -> CliError {
    CliError::Run(e.to_string())
}

fn write(out: &Path, name: &str, contents: &str, outcome: &mut Outcome) -> Result<(), CliError> {
    fs::write(out.join(name), contents).map_err(|e| run_err(format!("{}: {e}", out.join(name).display())))?;
    outcome.files.push(PathBuf::from(name));
    Ok(())
}

fn settings(spec: &ExperimentSpec, lower_bound: f64) -> EnsembleSettings {
    EnsembleSettings {
        objective_name: spec.objective.label(),
        lower_bound,
        n_init: spec.n_init,
        seeds: spec.seeds.clone(),
        shared_init: spec.shared_init,
    }
}

fn run_set(objective: &dyn Objective, configs: &[NamedConfig], s: &EnsembleSettings) -> Result<Vec<RunEnsemble>, CliError> {
    log::info!("running {} configuration(s) x {} seed(s) on {}", configs.len(), s.seeds.len(), s.objective_name);
    let ensembles = run_ensemble(objective, configs, s).map_err(run_err)?;
    for e in &ensembles {
        for r in &e.runs {
            if let Some(reason) = &r.history.aborted {
                log::warn!("{} seed {} aborted: {reason}", e.label, r.seed);
            }
        }
    }
    Ok(ensembles)
}

fn failed(ensembles: &[RunEnsemble]) -> usize {
    ensembles.iter().map(RunEnsemble::aborted_runs).sum()
}

fn create_dir(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| run_err(format!("{}: {e}", out.display())))
}

/// Runs every optimizer configuration at every seed and persists the
/// histories plus a summary of the recommendations.
pub fn cmd_optimize(spec: &ExperimentSpec, out: &Path) -> Result<Outcome, CliError> {
    spec.check_mode(Mode::Optimize)?;
    if spec.optimizers.is_empty() {
        return Err(config_err("optimize needs at least one [[optimizer]] entry"));
    }
    let objective = spec.objective.build()?;
    let lower_bound = spec.objective.lower_bound().unwrap_or(f64::NAN);
    let ensembles = run_set(objective.as_ref(), &spec.optimizers, &settings(spec, lower_bound))?;
    create_dir(out)?;
    write_ensembles(out, &ensembles).map_err(run_err)?;

    let mut outcome = Outcome { failed_runs: failed(&ensembles), ..Outcome::default() };
    outcome.files.push(PathBuf::from(adabo::bench::INDEX_FILE));
    let mut table = String::from("label\tseed\tevaluations\tbest_y\tbest_x\tstatus\n");
    for e in &ensembles {
        for r in &e.runs {
            let (x, y) = r.history.recommendation();
            let x: Vec<String> = x.iter().map(|v| format!("{v:?}")).collect();
            let status = r.history.aborted.as_deref().unwrap_or("ok").replace(['\t', '\n'], " ");
            writeln!(table, "{}\t{}\t{}\t{y:?}\t{}\t{status}", e.label, r.seed, r.history.evaluations(), x.join(","))
                .unwrap();
        }
    }
    write(out, SUMMARY_FILE, &table, &mut outcome)?;
    outcome.summary = table;
    Ok(outcome)
}

/// Runs the reference and challenger sets and writes the WCRI table and
/// the quartile plot data.
pub fn cmd_benchmark(spec: &ExperimentSpec, out: &Path) -> Result<Outcome, CliError> {
    spec.check_mode(Mode::Benchmark)?;
    if spec.reference.is_empty() {
        return Err(config_err("benchmark needs a reference set (benchmark.standard_reference or [[benchmark.reference]])"));
    }
    if spec.optimizers.is_empty() {
        return Err(config_err("benchmark needs at least one [[optimizer]] challenger"));
    }
    if spec.seeds.len() < 2 {
        return Err(config_err("seeds: benchmark quartiles need at least two seeds"));
    }
    let lower_bound = spec
        .objective
        .lower_bound()
        .ok_or_else(|| config_err("objective.lower_bound is required to benchmark an external objective"))?;
    let objective = spec.objective.build()?;
    let s = settings(spec, lower_bound);
    let reference = run_set(objective.as_ref(), &spec.reference, &s)?;
    let challengers = run_set(objective.as_ref(), &spec.optimizers, &s)?;

    create_dir(out)?;
    let mut outcome = Outcome { failed_runs: failed(&reference) + failed(&challengers), ..Outcome::default() };
    for (dir, set) in [(REFERENCE_DIR, &reference), (CHALLENGER_DIR, &challengers)] {
        write_ensembles(&out.join(dir), set).map_err(run_err)?;
        outcome.files.push(Path::new(dir).join(adabo::bench::INDEX_FILE));
    }
    emit_reports(&reference, &challengers, out, &mut outcome)?;
    Ok(outcome)
}

/// Recomputes the WCRI table and plot data from a benchmark directory.
pub fn cmd_report(from: &Path, out: &Path) -> Result<Outcome, CliError> {
    let load = |dir: &str| {
        load_ensembles(&from.join(dir)).map_err(|e| run_err(format!("{}: {e}", from.join(dir).display())))
    };
    let reference = load(REFERENCE_DIR)?;
    let challengers = load(CHALLENGER_DIR)?;
    create_dir(out)?;
    let mut outcome = Outcome { failed_runs: failed(&reference) + failed(&challengers), ..Outcome::default() };
    emit_reports(&reference, &challengers, out, &mut outcome)?;
    Ok(outcome)
}

fn emit_reports(
    reference: &[RunEnsemble],
    challengers: &[RunEnsemble],
    out: &Path,
    outcome: &mut Outcome,
) -> Result<(), CliError> {
    let table = emit_table(&wcri_table(reference, challengers).map_err(run_err)?, '\t');
    write(out, WCRI_FILE, &table, outcome)?;
    let all: Vec<RunEnsemble> = reference.iter().chain(challengers).cloned().collect();
    let plot = emit_history_plotdata(&all, '\t').map_err(run_err)?;
    write(out, PLOTDATA_FILE, &plot, outcome)?;
    outcome.summary = table;
    Ok(())
}

/// Sobol' indices with bootstrap bounds at every base size, one report file
/// per size plus a long-format convergence file.
pub fn cmd_sensitivity(spec: &ExperimentSpec, out: &Path) -> Result<Outcome, CliError> {
    spec.check_mode(Mode::Sensitivity)?;
    let s = &spec.sensitivity;
    let objective = spec.objective.build()?;
    log::info!("sensitivity of {} at base sizes {:?}", spec.objective.label(), s.n_bases);
    let reports = convergence_curve(objective.as_ref(), &s.n_bases, s.level, s.resamples, s.seed).map_err(run_err)?;

    let names: Vec<String> = if s.names.is_empty() {
        (1..=spec.objective.dim()).map(|i| format!("x{i}")).collect()
    } else {
        s.names.clone()
    };
    create_dir(out)?;
    let mut outcome = Outcome::default();
    for r in &reports {
        write(out, &format!("sensitivity-n{}.tsv", r.n_base), &report_table(r, &names, '\t'), &mut outcome)?;
    }
    let convergence = convergence_table(&reports, &names);
    write(out, CONVERGENCE_FILE, &convergence, &mut outcome)?;
    outcome.summary = convergence;
    Ok(outcome)
}

fn convergence_table(reports: &[SensitivityReport], names: &[String]) -> String {
    let mut out = String::from("n_base\tname\tS1\tS1_low\tS1_high\tST\tST_low\tST_high\n");
    for r in reports {
        for line in report_table(r, names, '\t').lines().skip(1) {
            writeln!(out, "{}\t{line}", r.n_base).unwrap();
        }
    }
    out
}

/// Runs `f` on a dedicated pool of `workers` threads (all cores if `None`).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        if n == 0 {
            return Err(config_err("workers must be at least 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(run_err)?;
    Ok(pool.install(f))
}
