//! Drivers, experiments and file formats built on `blb-core`.
//!
//! The procedures run on a rayon pool and are deterministic for a given seed
//! regardless of the number of workers. `simbench` scores them against
//! Monte Carlo ground truth on synthetic data; `cli` and `formats` hold the
//! command-line surface and its output files.

pub mod adaptive;
pub mod cli;
pub mod error;
pub mod formats;
pub mod ingest;
pub mod procedures;
pub mod simbench;

pub use adaptive::{run_blb_adaptive, SelectionReport, StopReason, SubsampleSelection};
pub use error::{Error, Result};
pub use procedures::{
    run_blb, run_bofn, run_bootstrap, run_method, run_subsampling, Method, ProcedureOutput,
    RunStats, Trajectory, TrajectoryStep, WorkUnit,
};
pub use simbench::{
    compute_ground_truth, generate, relative_error, run_experiment, DataGeneratingSpec,
    ExperimentReport, FeatureDist, GroundTruth, Link, ProcedureCell,
};
