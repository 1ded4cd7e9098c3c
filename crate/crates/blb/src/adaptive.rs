//! BLB with the number of resamples per subsample and the number of
//! subsamples chosen at run time by the windowed relative-change test.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use blb_core::{
    average, has_converged, summarize, DataMatrix, EstimateEnsemble, EstimateVector, Estimator,
    MetricSpec, ProcedureConfig, QualitySummary, SummarySeries,
};

use crate::error::{Error, Result};
use crate::procedures::{
    default_resampler, thread_pool, LocalSubsample, ProcedureOutput, Resampler, RunStats,
    SubsetSource, Trajectory, TrajectoryStep, WorkUnit,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    Cap,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsampleSelection {
    pub r: usize,
    pub stop: StopReason,
}

/// What the adaptive driver decided.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub subsamples: Vec<SubsampleSelection>,
    pub s: usize,
    pub outer_stop: StopReason,
    pub resamples_used: usize,
    /// Includes resamples computed in a parallel batch past the stopping point.
    pub resamples_computed: usize,
}

impl SelectionReport {
    pub fn mean_r(&self) -> f64 {
        self.subsamples.iter().map(|s| s.r as f64).sum::<f64>()
            / self.subsamples.len().max(1) as f64
    }
}

/// Runs BLB, growing `r` for each subsample until its summary stabilizes and
/// `s` until the running average stabilizes. Uses `config.adaptive`, or the
/// default parameters when it is unset; `config.r` and `config.s` are ignored.
pub fn run_blb_adaptive<E: Estimator>(
    data: &DataMatrix,
    estimator: &E,
    metric: &MetricSpec,
    config: &ProcedureConfig,
) -> Result<ProcedureOutput> {
    let resampler = default_resampler(config);
    run_blb_adaptive_with(data, estimator, metric, config, &resampler)
}

struct InnerResult {
    summary: QualitySummary,
    r: usize,
    computed: usize,
    stop: StopReason,
    max_distinct: usize,
}

pub(crate) fn run_blb_adaptive_with<E: Estimator>(
    data: &DataMatrix,
    estimator: &E,
    metric: &MetricSpec,
    config: &ProcedureConfig,
    resampler: &Resampler<'_>,
) -> Result<ProcedureOutput> {
    let start = Instant::now();
    let params = config.adaptive.unwrap_or_default();
    params.check()?;
    let n = data.n();
    let b = config.subset_size(n)?;
    let source = SubsetSource::new(config, n, b)?;
    let s_max = match source.limit() {
        Some(limit) => params.s_max.min(limit),
        None => params.s_max,
    };
    let pool = thread_pool(config.workers)?;

    let mut summaries = Vec::new();
    let mut selections = Vec::new();
    let mut outer = SummarySeries::new();
    let mut trajectory = Trajectory::new();
    let mut outer_stop = StopReason::Cap;
    let mut used = 0;
    let mut computed = 0;
    let mut max_distinct = 0;

    for j in 0..s_max {
        let local = LocalSubsample::new(data, &source.subset(j)?)?;
        let inner = pool.install(|| {
            inner_loop(
                &local,
                estimator,
                metric,
                resampler,
                n as u64,
                config.seed,
                j,
                &params,
            )
        })?;
        used += inner.r;
        computed += inner.computed;
        max_distinct = max_distinct.max(inner.max_distinct);
        selections.push(SubsampleSelection {
            r: inner.r,
            stop: inner.stop,
        });
        summaries.push(inner.summary);

        let running = average(&summaries)?;
        outer.push_summary(&running)?;
        trajectory.push(TrajectoryStep {
            elapsed_seconds: start.elapsed().as_secs_f64(),
            summary: running,
            unit: WorkUnit::Subsample(j),
        })?;
        if has_converged(&outer, params.window_s, params.epsilon_s)? {
            outer_stop = StopReason::Converged;
            break;
        }
    }

    let summary = trajectory
        .steps()
        .last()
        .map(|s| s.summary.clone())
        .ok_or_else(|| Error::Argument("no subsamples available".into()))?;
    let s = selections.len();
    Ok(ProcedureOutput {
        summary,
        trajectory,
        stats: RunStats {
            b,
            resamples: used,
            resamples_computed: computed,
            max_resident_rows: b,
            max_distinct_rows: max_distinct,
        },
        selection: Some(SelectionReport {
            subsamples: selections,
            s,
            outer_stop,
            resamples_used: used,
            resamples_computed: computed,
        }),
    })
}

/// Grows the ensemble of subsample `j` in parallel batches of `window_r`,
/// testing convergence after each resample in index order. Results past the
/// stopping point are discarded, so the outcome matches a sequential run.
#[allow(clippy::too_many_arguments)]
fn inner_loop<E: Estimator>(
    local: &LocalSubsample,
    estimator: &E,
    metric: &MetricSpec,
    resampler: &Resampler<'_>,
    nominal: u64,
    seed: u64,
    j: usize,
    params: &blb_core::AdaptiveParams,
) -> Result<InnerResult> {
    let mut ensemble: Option<EstimateEnsemble> = None;
    let mut series = SummarySeries::new();
    let mut latest: Option<QualitySummary> = None;
    let mut computed = 0;
    let mut max_distinct = 0;
    let mut k = 0;
    while k < params.r_max {
        let batch = params.window_r.min(params.r_max - k);
        let results: Vec<Result<(EstimateVector, usize)>> = (k..k + batch)
            .into_par_iter()
            .map(|kk| local.resample_estimate(estimator, resampler, nominal, seed, j, kk))
            .collect();
        computed += batch;
        for result in results {
            let (estimate, distinct) = result?;
            max_distinct = max_distinct.max(distinct);
            k += 1;
            match ensemble.as_mut() {
                None => ensemble = Some(EstimateEnsemble::new(vec![estimate])?),
                Some(e) => e.push(estimate)?,
            }
            let ens = ensemble.as_ref().unwrap();
            if ens.len() < metric.min_ensemble() {
                continue;
            }
            let summary = summarize(metric, ens)?;
            series.push_summary(&summary)?;
            latest = Some(summary);
            if has_converged(&series, params.window_r, params.epsilon_r)? {
                return Ok(InnerResult {
                    summary: latest.unwrap(),
                    r: k,
                    computed,
                    stop: StopReason::Converged,
                    max_distinct,
                });
            }
        }
    }
    let summary = latest.ok_or(blb_core::Error::TooFewEstimates {
        needed: metric.min_ensemble(),
        got: k,
    })?;
    Ok(InnerResult {
        summary,
        r: k,
        computed,
        stop: StopReason::Cap,
        max_distinct,
    })
}
