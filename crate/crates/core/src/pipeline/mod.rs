//! Run files, run execution, comparison tables and grid sweeps.

pub mod compare;
pub mod run;
pub mod spec;
pub mod sweep;

pub use compare::{compare, compare_specs, Comparison};
pub use run::{execute, run, verify_run_dir, MetricsFile, PredictionRow, RunReport, SavedModel};
pub use spec::{load_spec, parse_spec, ModelKind, RunSpec};
pub use sweep::sweep;
