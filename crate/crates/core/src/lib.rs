//! Core primitives for assessing estimator quality with the Bag of Little
//! Bootstraps and its classical baselines.
//!
//! This crate is `no_std` (it needs `alloc`). It holds the pieces that are pure
//! computation: domain types, seeded resampling, weighted M-estimators,
//! quality summaries and the convergence test used for adaptive selection of
//! the number of resamples and subsamples. Drivers, parallel execution and
//! file formats live in the `blb` crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod convergence;
pub mod error;
pub mod estimators;
mod linalg;
pub mod metrics;
pub mod model;
pub mod resample;
pub mod rng;

pub use convergence::{has_converged, tracked_values, SummarySeries};
pub use error::{Error, Result};
pub use estimators::{estimate, estimate_full, Estimator, EstimatorKind, EstimatorSpec};
pub use metrics::{
    average, ci_widths, correct_for_size, mean_width, summarize, MetricKind, MetricSpec,
};
pub use model::{
    validate, AdaptiveParams, DataMatrix, EstimateEnsemble, EstimateVector, IndexSubset,
    ProcedureConfig, QualitySummary, ResampleFlavor, SubsampleMode, SubsetSize, SummaryKind, Task,
    WeightedSample,
};
pub use rng::{RngStream, StreamKey};
