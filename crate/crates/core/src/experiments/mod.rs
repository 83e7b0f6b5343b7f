//! Compressed-sensing workloads and the experiment driver behind the CLI.

mod checks;
mod config;
mod instance;
mod run;

pub use checks::{invariant_suite, CheckOutcome};
pub use config::{ExperimentConfig, GraphSource, Redraw, SolverKind};
pub use instance::{gen_l1l1, gen_l2l1, CsInstance, CsKind, CsParams};
pub use run::{
    iterations_to_plateau, iterations_to_settle, iterations_to_threshold, plateau, run_experiment,
    ExperimentResult, RunSummary, SolverSeries,
};
