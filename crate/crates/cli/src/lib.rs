//! Experiment harness behind the `opgrowth` binary: TOML experiment specs,
//! the pipelines that run them, JSON reports and SVG plots.

// `!(x > 0.0)` style checks reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod experiments;
pub mod report;
pub mod spec;
pub mod svg;

pub use experiments::run_experiment;
pub use report::{check, Report};
pub use spec::{ExperimentName, ExperimentSpec, ResolvedSpec};

/// Environment variable that overrides `--threads`.
pub const THREADS_ENV: &str = "OPGROWTH_THREADS";
