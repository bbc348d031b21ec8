//! Experiment configuration files.
//!
//! A config is a single TOML document:
//!
//! ```toml
//! seeds = [0, 1, 2, 3, 4]
//! n_init = 16
//! iterations = 50
//!
//! [objective]
//! name = "sphere"
//! dim = 2
//!
//! [defaults]
//! kernel = { family = "matern32" }
//!
//! [[optimizer]]
//! label = "bo"
//! variant = "bo"
//! ```
//!
//! Keys in `[defaults]` apply to every optimizer entry (both `[[optimizer]]`
//! and `[[benchmark.reference]]`); keys set on an entry win.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use adabo::bench::{reference_configs, SyntheticKind};
use adabo::{ExternalObjective, NamedConfig, Objective, OptimizerConfig, SyntheticObjective};
use serde::Deserialize;

/// A failure, classified by the exit code it maps to.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Unreadable, malformed or out-of-range configuration (exit code 2).
    Config(String),
    /// A run or an output step failed (exit code 1).
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Run(m) => write!(f, "run failed: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

pub(crate) fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Optimize,
    Benchmark,
    Sensitivity,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Optimize => "optimize",
            Mode::Benchmark => "benchmark",
            Mode::Sensitivity => "sensitivity",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveSpec {
    Builtin(SyntheticObjective),
    /// Child process speaking the line protocol of [`ExternalObjective`].
    External {
        label: String,
        command: String,
        args: Vec<String>,
        dim: usize,
        timeout: Duration,
        lower_bound: Option<f64>,
    },
}

impl ObjectiveSpec {
    pub fn label(&self) -> String {
        match self {
            ObjectiveSpec::Builtin(o) => o.label(),
            ObjectiveSpec::External { label, .. } => label.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ObjectiveSpec::Builtin(o) => o.dim,
            ObjectiveSpec::External { dim, .. } => *dim,
        }
    }

    pub fn lower_bound(&self) -> Option<f64> {
        match self {
            ObjectiveSpec::Builtin(o) => Some(o.lower_bound()),
            ObjectiveSpec::External { lower_bound, .. } => *lower_bound,
        }
    }

    /// Starts the objective; external commands are spawned here.
    pub fn build(&self) -> Result<Box<dyn Objective>, CliError> {
        match self {
            ObjectiveSpec::Builtin(o) => Ok(Box::new(*o)),
            ObjectiveSpec::External { command, args, dim, timeout, .. } => ExternalObjective::spawn(command, args, *dim, *timeout)
                .map(|o| Box::new(o) as Box<dyn Objective>)
                .map_err(|e| CliError::Run(e.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivitySpec {
    pub n_bases: Vec<usize>,
    pub level: f64,
    pub resamples: usize,
    pub seed: u64,
    /// Input names for the report rows; `x1, x2, …` when empty.
    pub names: Vec<String>,
}

impl Default for SensitivitySpec {
    fn default() -> Self {
        Self { n_bases: vec![256, 512, 1024], level: 0.95, resamples: 1000, seed: 0, names: Vec::new() }
    }
}

/// A fully validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    /// Mode named in the file, if any; subcommands must agree with it.
    pub mode: Option<Mode>,
    pub objective: ObjectiveSpec,
    /// Optimizer runs of `optimize`, challengers of `benchmark`.
    pub optimizers: Vec<NamedConfig>,
    /// Reference set of `benchmark`.
    pub reference: Vec<NamedConfig>,
    pub seeds: Vec<u64>,
    pub n_init: usize,
    pub iterations: usize,
    pub shared_init: bool,
    pub out: Option<PathBuf>,
    pub sensitivity: SensitivitySpec,
}

impl ExperimentSpec {
    /// Shifts every seed by `offset`.
    pub fn with_seed_offset(mut self, offset: u64) -> Result<Self, CliError> {
        let shift = |s: u64| s.checked_add(offset).ok_or_else(|| config_err(format!("seed {s} + offset {offset} overflows")));
        self.seeds = self.seeds.iter().map(|&s| shift(s)).collect::<Result<_, _>>()?;
        self.sensitivity.seed = shift(self.sensitivity.seed)?;
        Ok(self)
    }

    /// Fails unless the file's `mode` (if any) is `mode`.
    pub fn check_mode(&self, mode: Mode) -> Result<(), CliError> {
        match self.mode {
            Some(m) if m != mode => {
                Err(config_err(format!("mode: config is for `{}`, not `{}`", m.name(), mode.name())))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mode: Option<Mode>,
    out: Option<PathBuf>,
    #[serde(default = "default_seeds")]
    seeds: Vec<u64>,
    #[serde(default = "default_n_init")]
    n_init: usize,
    #[serde(default = "default_iterations")]
    iterations: usize,
    #[serde(default = "default_true")]
    shared_init: bool,
    objective: RawObjective,
    #[serde(default)]
    defaults: toml::Table,
    #[serde(default)]
    optimizer: Vec<toml::Table>,
    #[serde(default)]
    benchmark: RawBenchmark,
    #[serde(default)]
    sensitivity: RawSensitivity,
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

fn default_n_init() -> usize {
    16
}

fn default_iterations() -> usize {
    50
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObjective {
    name: String,
    dim: usize,
    label: Option<String>,
    command: Option<String>,
    #[serde(default)]
    args: Vec<String>,
    timeout_secs: Option<f64>,
    lower_bound: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBenchmark {
    /// Add the nine standard BO configurations to the reference set.
    #[serde(default)]
    standard_reference: bool,
    #[serde(default)]
    reference: Vec<toml::Table>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSensitivity {
    n_bases: Vec<usize>,
    level: f64,
    resamples: usize,
    seed: u64,
    names: Vec<String>,
}

impl Default for RawSensitivity {
    fn default() -> Self {
        let d = SensitivitySpec::default();
        Self { n_bases: d.n_bases, level: d.level, resamples: d.resamples, seed: d.seed, names: d.names }
    }
}

/// Reads and validates the config at `path`.
pub fn parse_config(path: &Path) -> Result<ExperimentSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    parse_config_str(&text).map_err(|e| match e {
        CliError::Config(m) => config_err(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_config_str(text: &str) -> Result<ExperimentSpec, CliError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| config_err(e.to_string().trim_end().to_string()))?;
    if raw.seeds.is_empty() {
        return Err(config_err("seeds: at least one seed is required"));
    }
    let mut sorted = raw.seeds.clone();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(config_err("seeds: duplicate seed"));
    }
    if raw.n_init < 2 {
        return Err(config_err(format!("n_init = {} must be at least 2", raw.n_init)));
    }
    if raw.iterations == 0 {
        return Err(config_err("iterations must be at least 1"));
    }
    let objective = objective_spec(raw.objective)?;

    let optimizers = raw
        .optimizer
        .iter()
        .enumerate()
        .map(|(i, t)| named_config(&raw.defaults, t, raw.iterations, &format!("optimizer[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;
    let mut reference = Vec::new();
    if raw.benchmark.standard_reference {
        let base = named_config(&raw.defaults, &toml::Table::new(), raw.iterations, "defaults")?;
        reference.extend(reference_configs(&base.config));
    }
    for (i, t) in raw.benchmark.reference.iter().enumerate() {
        reference.push(named_config(&raw.defaults, t, raw.iterations, &format!("benchmark.reference[{i}]"))?);
    }
    for c in optimizers.iter().chain(&reference).filter(|c| c.config.variant.uses_gpi()) {
        let held_out = (c.config.gpi.test_fraction * raw.n_init as f64).floor();
        if held_out < 2.0 {
            return Err(config_err(format!(
                "`{}`: n_init = {} holds out {held_out} test point(s) for GPi; at least 2 are needed",
                c.label, raw.n_init
            )));
        }
    }
    for set in [&optimizers, &reference] {
        let mut labels: Vec<&str> = set.iter().map(|c| c.label.as_str()).collect();
        labels.sort_unstable();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(config_err(format!("duplicate optimizer label `{}`", w[0])));
        }
    }

    let s = raw.sensitivity;
    if s.n_bases.is_empty() || s.n_bases.windows(2).any(|w| w[1] <= w[0]) || s.n_bases[0] < 2 {
        return Err(config_err("sensitivity.n_bases must be strictly increasing and at least 2"));
    }
    if !(s.level > 0.0 && s.level < 1.0) {
        return Err(config_err(format!("sensitivity.level = {} must lie in (0, 1)", s.level)));
    }
    if s.resamples < 100 {
        return Err(config_err(format!("sensitivity.resamples = {} must be at least 100", s.resamples)));
    }
    if !s.names.is_empty() && s.names.len() != objective.dim() {
        return Err(config_err(format!(
            "sensitivity.names has {} entries for a {}-dimensional objective",
            s.names.len(),
            objective.dim()
        )));
    }

    Ok(ExperimentSpec {
        mode: raw.mode,
        objective,
        optimizers,
        reference,
        seeds: raw.seeds,
        n_init: raw.n_init,
        iterations: raw.iterations,
        shared_init: raw.shared_init,
        out: raw.out,
        sensitivity: SensitivitySpec {
            n_bases: s.n_bases,
            level: s.level,
            resamples: s.resamples,
            seed: s.seed,
            names: s.names,
        },
    })
}

fn objective_spec(raw: RawObjective) -> Result<ObjectiveSpec, CliError> {
    if raw.dim == 0 {
        return Err(config_err("objective.dim must be positive"));
    }
    if raw.name == "external" {
        let command = raw.command.ok_or_else(|| config_err("objective.command is required for an external objective"))?;
        let secs = raw.timeout_secs.unwrap_or(60.0);
        if !(secs > 0.0 && secs.is_finite()) {
            return Err(config_err(format!("objective.timeout_secs = {secs} must be positive")));
        }
        if let Some(lb) = raw.lower_bound.filter(|v| !v.is_finite()) {
            return Err(config_err(format!("objective.lower_bound = {lb} must be finite")));
        }
        return Ok(ObjectiveSpec::External {
            label: raw.label.unwrap_or_else(|| format!("external-{}d", raw.dim)),
            command,
            args: raw.args,
            dim: raw.dim,
            timeout: Duration::from_secs_f64(secs),
            lower_bound: raw.lower_bound,
        });
    }
    let extra = [
        ("label", raw.label.is_some()),
        ("command", raw.command.is_some()),
        ("args", !raw.args.is_empty()),
        ("timeout_secs", raw.timeout_secs.is_some()),
        ("lower_bound", raw.lower_bound.is_some()),
    ];
    if let Some((key, _)) = extra.iter().find(|(_, set)| *set) {
        return Err(config_err(format!("objective.{key} only applies to external objectives")));
    }
    let kind = SyntheticKind::from_str(&raw.name).map_err(|_| {
        config_err(format!(
            "objective.name: unknown objective `{}` (expected sphere, alpinen2, ishigami, linear or external)",
            raw.name
        ))
    })?;
    SyntheticObjective::new(kind, raw.dim)
        .map(ObjectiveSpec::Builtin)
        .map_err(|e| config_err(format!("objective: {e}")))
}

fn named_config(defaults: &toml::Table, entry: &toml::Table, iterations: usize, at: &str) -> Result<NamedConfig, CliError> {
    let mut table = defaults.clone();
    for (k, v) in entry {
        table.insert(k.clone(), v.clone());
    }
    for key in ["iterations", "seed"] {
        if table.contains_key(key) {
            return Err(config_err(format!("{at}: `{key}` is set at the top level of the config")));
        }
    }
    let label = match table.remove("label") {
        None => None,
        Some(toml::Value::String(s)) if !s.is_empty() => Some(s),
        Some(_) => return Err(config_err(format!("{at}.label must be a non-empty string"))),
    };
    let mut config: OptimizerConfig =
        toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| config_err(format!("{at}: {}", e.message())))?;
    config.iterations = iterations;
    config.validate().map_err(|e| config_err(format!("{at}: {e}")))?;
    let label = label.unwrap_or_else(|| default_label(&config));
    Ok(NamedConfig { label, config })
}

fn default_label(config: &OptimizerConfig) -> String {
    if config.variant.is_adaptive() {
        format!("{}-{}", config.variant.name(), config.selection.name())
    } else if config.variant.uses_gpi() {
        format!("{}-{}", config.variant.name(), config.acquisition.name())
    } else {
        format!("{}-{}-{}", config.variant.name(), config.kernel.family.name(), config.acquisition.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[objective]\nname = \"sphere\"\ndim = 2\n\n[[optimizer]]\nvariant = \"bo\"\n";

    fn config_message(text: &str) -> String {
        match parse_config_str(text) {
            Err(CliError::Config(m)) => m,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let spec = parse_config_str(MINIMAL).unwrap();
        assert_eq!(spec.n_init, 16);
        assert_eq!(spec.iterations, 50);
        assert_eq!(spec.seeds, vec![0, 1, 2, 3, 4]);
        assert_eq!(spec.optimizers.len(), 1);
        assert_eq!(spec.optimizers[0].label, "bo-matern32-logei");
        assert_eq!(spec.optimizers[0].config, OptimizerConfig::default());
        assert!(spec.reference.is_empty());
        assert_eq!(spec.objective.label(), "sphere-2d");
    }

    #[test]
    fn unknown_keys_are_named() {
        let m = config_message(&format!("colour = 1\n{MINIMAL}"));
        assert!(m.contains("colour"), "{m}");
        let m = config_message(&format!("{MINIMAL}frobnicate = true\n"));
        assert!(m.contains("frobnicate") && m.contains("optimizer[0]"), "{m}");
    }

    #[test]
    fn negative_beta_is_a_range_error() {
        let m = config_message(&format!("{MINIMAL}acquisition = {{ kind = \"ucb\", beta = -1.0 }}\n"));
        assert!(m.contains("beta"), "{m}");
    }

    #[test]
    fn defaults_merge_into_entries() {
        let text = "seeds = [3]\n[objective]\nname = \"sphere\"\ndim = 2\n[defaults]\nkernel = { family = \"rbf\" }\n\
                    [[optimizer]]\nlabel = \"a\"\n[[optimizer]]\nlabel = \"b\"\nkernel = { family = \"rq\" }\n";
        let spec = parse_config_str(text).unwrap();
        assert_eq!(spec.optimizers[0].config.kernel.family.name(), "rbf");
        assert_eq!(spec.optimizers[1].config.kernel.family.name(), "rq");
    }

    #[test]
    fn standard_reference_has_nine_members() {
        let spec = parse_config_str(&format!("{MINIMAL}[benchmark]\nstandard_reference = true\n")).unwrap();
        assert_eq!(spec.reference.len(), 9);
    }

    #[test]
    fn rejections() {
        assert!(config_message(&format!("seeds = []\n{MINIMAL}")).contains("seeds"));
        assert!(config_message(&format!("seeds = [1, 1]\n{MINIMAL}")).contains("duplicate"));
        assert!(config_message(&format!("{MINIMAL}iterations = 4\n")).contains("iterations"));
        assert!(config_message(&format!("{MINIMAL}[[optimizer]]\nvariant = \"bo\"\n")).contains("duplicate"));
        assert!(config_message("[objective]\nname = \"ishigami\"\ndim = 2\n").contains("ishigami"));
        let m = config_message(&format!("n_init = 9\n{MINIMAL}[[optimizer]]\nvariant = \"bo_gpi\"\n"));
        assert!(m.contains("test point"), "{m}");
        assert!(config_message("[objective]\nname = \"external\"\ndim = 2\n").contains("command"));
        assert!(config_message("[objective]\nname = \"nope\"\ndim = 2\n").contains("objective.name"));
        let m = config_message(&format!("{MINIMAL}[sensitivity]\nresamples = 10\n"));
        assert!(m.contains("resamples"), "{m}");
    }

    #[test]
    fn seed_offset_shifts_every_seed() {
        let spec = parse_config_str(MINIMAL).unwrap().with_seed_offset(10).unwrap();
        assert_eq!(spec.seeds, vec![10, 11, 12, 13, 14]);
        assert_eq!(spec.sensitivity.seed, 10);
        assert!(parse_config_str(MINIMAL).unwrap().with_seed_offset(u64::MAX).is_err());
    }

    #[test]
    fn mode_must_agree() {
        let spec = parse_config_str(&format!("mode = \"sensitivity\"\n{MINIMAL}")).unwrap();
        assert!(spec.check_mode(Mode::Sensitivity).is_ok());
        assert_eq!(spec.check_mode(Mode::Optimize).unwrap_err().exit_code(), 2);
    }
}
