//! Adaptive Bayesian optimization with Gaussian-process surrogates.
//!
//! The crate covers the full loop: kernels and GP regression with
//! maximum-likelihood fitting over restricted parameter domains, a
//! breadth-first surrogate model search (GPi), a portfolio of acquisition
//! functions with uniform or categorical candidate selection and an
//! exploitation-score filter, synthetic benchmarks with worst-case relative
//! improvement reporting, and Sobol'/Saltelli variance-based sensitivity
//! analysis.

pub mod acquisition;
pub mod bench;
pub mod error;
pub mod gpi;
pub mod gpr;
pub mod kernels;
pub mod linalg;
pub mod objective;
pub mod optimizer;
pub mod quality;
pub mod report;
pub mod rng;
pub mod sampling;
pub mod selection;
pub mod sensitivity;
pub mod stats;

pub use acquisition::{acq_eval, acq_maximize, acq_value, AcquisitionKind, MaximizerBudget};
pub use error::{Error, Result};
pub use gpr::{fit_mle, nll, predict, Doe, Rpd};
pub use kernels::{kernel_eval, kernel_matrix, kernel_vector, KernelFamily, KernelParams, KernelSpec, ParamKind};
pub use linalg::Matrix;
pub use quality::{prefer, relmse, replicate_mean_relmse, tll, Preference, QualityScore};
pub use sampling::{saltelli_design, sobol_points, DirectionTable, SaltelliDesign, SobolStream};
pub use selection::{cat_update, d_min, exploitation_score, filter_candidates, mmd, sel_cat, sel_uniform, Candidate, CatState, EsSchedule};
pub use gpi::{enumerate_rlds, gpi_search, split_train_test, GpiConfig, GpiResult, Nominal, NominalValues};
pub use objective::{ExternalObjective, FnObjective, Objective};
pub use optimizer::{
    recommend, run_adaptive_bo, run_bo, GpiCondition, IterationRecord, OptimizerConfig, RunHistory, SelectionKind, Variant,
};
pub use sensitivity::{
    analyze, bootstrap_ci, convergence_curve, evaluate_design, report_table, sobol_indices, IndexCi, SensitivityReport,
};
pub use bench::{quartile_curves, run_ensemble, EnsembleSettings, NamedConfig, RunEnsemble, SyntheticKind, SyntheticObjective};
pub use report::{emit_history_plotdata, emit_table, wcri, wcri_table, worst_case_aggregate, WcriReport};
