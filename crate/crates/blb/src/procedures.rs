//! The quality-assessment drivers: Bag of Little Bootstraps, the bootstrap,
//! the b-out-of-n bootstrap and subsampling.
//!
//! Every driver splits its work into units that draw randomness only from
//! their own [`StreamKey`], runs them on a rayon pool of `config.workers`
//! threads, and reduces the results in index order. Summaries are therefore
//! bit-identical for any worker count; only the recorded times differ.

use std::fmt;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use blb_core::resample::{
    draw_partition, draw_subset, draw_with_replacement, resample_classical, resample_weighted,
};
use blb_core::rng::tags;
use blb_core::{
    average, correct_for_size, summarize, DataMatrix, EstimateEnsemble, EstimateVector, Estimator,
    IndexSubset, MetricSpec, ProcedureConfig, QualitySummary, RngStream, StreamKey, SubsampleMode,
    WeightedSample,
};

use crate::adaptive::{run_blb_adaptive, SelectionReport};
use crate::error::{Error, Result};

/// Identifies the piece of work a trajectory step or an error belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkUnit {
    Subsample(usize),
    Resample(usize),
    SubsampleResample { subsample: usize, resample: usize },
}

impl fmt::Display for WorkUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WorkUnit::Subsample(j) => write!(f, "subsample {j}"),
            WorkUnit::Resample(k) => write!(f, "resample {k}"),
            WorkUnit::SubsampleResample {
                subsample,
                resample,
            } => {
                write!(f, "subsample {subsample}, resample {resample}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    pub elapsed_seconds: f64,
    pub summary: QualitySummary,
    pub unit: WorkUnit,
}

/// Partial outputs of a driver, one per completed work unit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    steps: Vec<TrajectoryStep>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a step; times must not decrease and summaries must share shape.
    pub fn push(&mut self, step: TrajectoryStep) -> Result<()> {
        if let Some(last) = self.steps.last() {
            if step.elapsed_seconds < last.elapsed_seconds {
                return Err(Error::Format {
                    what: "trajectory",
                    message: "elapsed time decreased".into(),
                });
            }
            if !last.summary.same_shape(&step.summary) {
                return Err(Error::Format {
                    what: "trajectory",
                    message: "summary shape changed".into(),
                });
            }
        }
        self.steps.push(step);
        Ok(())
    }

    pub fn steps(&self) -> &[TrajectoryStep] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Summaries only, for comparisons that must ignore timing.
    pub fn summaries(&self) -> Vec<&QualitySummary> {
        self.steps.iter().map(|s| &s.summary).collect()
    }
}

/// Counters collected while a driver runs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    /// Subset size `b` (equal to `n` for the bootstrap).
    pub b: usize,
    /// Estimates that entered the output.
    pub resamples: usize,
    /// Estimates computed, including any discarded by an adaptive stop.
    pub resamples_computed: usize,
    /// Most data rows any single work unit held in memory.
    pub max_resident_rows: usize,
    /// Most rows with positive weight in any single resample.
    pub max_distinct_rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcedureOutput {
    pub summary: QualitySummary,
    pub trajectory: Trajectory,
    pub stats: RunStats,
    /// Present for adaptive runs.
    pub selection: Option<SelectionReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Blb,
    BlbAdaptive,
    Bootstrap,
    Bofn,
    Subsampling,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Blb => "blb",
            Method::BlbAdaptive => "blb-adaptive",
            Method::Bootstrap => "boot",
            Method::Bofn => "bofn",
            Method::Subsampling => "subsampling",
        }
    }
}

/// Dispatches to the driver for `method`.
pub fn run_method<E: Estimator>(
    method: Method,
    data: &DataMatrix,
    estimator: &E,
    metric: &MetricSpec,
    config: &ProcedureConfig,
) -> Result<ProcedureOutput> {
    match method {
        Method::Blb => run_blb(data, estimator, metric, config),
        Method::BlbAdaptive => run_blb_adaptive(data, estimator, metric, config),
        Method::Bootstrap => run_bootstrap(data, estimator, metric, config),
        Method::Bofn => run_bofn(data, estimator, metric, config),
        Method::Subsampling => run_subsampling(data, estimator, metric, config),
    }
}

pub(crate) fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Pool(e.to_string()))
}

fn elapsed(start: Instant) -> f64 {
    start.elapsed().as_secs_f64()
}

fn unit_err(unit: WorkUnit) -> impl FnOnce(blb_core::Error) -> Error {
    move |source| Error::Unit { unit, source }
}

/// Resample generator used by BLB: `(subset, nominal size, stream) -> sample`.
pub(crate) type Resampler<'a> =
    dyn Fn(&IndexSubset, u64, &mut RngStream) -> blb_core::Result<WeightedSample> + Sync + 'a;

/// Where BLB subsample `j` comes from.
pub(crate) enum SubsetSource {
    Independent { seed: u64, n: usize, b: usize },
    Partition(Vec<IndexSubset>),
}

impl SubsetSource {
    pub(crate) fn new(config: &ProcedureConfig, n: usize, b: usize) -> Result<Self> {
        Ok(match config.subsample_mode {
            SubsampleMode::WithoutReplacement => SubsetSource::Independent {
                seed: config.seed,
                n,
                b,
            },
            SubsampleMode::DisjointPartition => {
                let mut rng = StreamKey::root(config.seed)
                    .child(tags::BLB_PARTITION)
                    .rng();
                SubsetSource::Partition(draw_partition(n, b, &mut rng)?)
            }
        })
    }

    /// Number of subsamples available, if limited.
    pub(crate) fn limit(&self) -> Option<usize> {
        match self {
            SubsetSource::Independent { .. } => None,
            SubsetSource::Partition(blocks) => Some(blocks.len()),
        }
    }

    pub(crate) fn subset(&self, j: usize) -> Result<IndexSubset> {
        match self {
            SubsetSource::Independent { seed, n, b } => {
                let mut rng = blb_subset_key(*seed, j).rng();
                Ok(draw_subset(*n, *b, &mut rng)?)
            }
            SubsetSource::Partition(blocks) => blocks.get(j).cloned().ok_or_else(|| {
                Error::Argument(format!(
                    "disjoint partition has only {} blocks; subsample {j} requested",
                    blocks.len()
                ))
            }),
        }
    }
}

pub(crate) fn blb_subset_key(seed: u64, j: usize) -> StreamKey {
    StreamKey::root(seed)
        .child(tags::BLB)
        .child(j as u64)
        .child(tags::SUBSET)
}

pub(crate) fn blb_resample_key(seed: u64, j: usize, k: usize) -> StreamKey {
    StreamKey::root(seed)
        .child(tags::BLB)
        .child(j as u64)
        .child(tags::RESAMPLE)
        .child(k as u64)
}

/// One BLB subsample held in memory: its `b` rows copied out of the dataset.
pub(crate) struct LocalSubsample {
    pub(crate) rows: DataMatrix,
    pub(crate) all: IndexSubset,
}

impl LocalSubsample {
    pub(crate) fn new(data: &DataMatrix, subset: &IndexSubset) -> Result<Self> {
        let rows = data.select(subset.indices())?;
        let all = IndexSubset::full(rows.n())?;
        Ok(Self { rows, all })
    }

    /// Draws resample `k` of subsample `j` and estimates on it. Returns the
    /// estimate and the resample's distinct-row count.
    pub(crate) fn resample_estimate<E: Estimator>(
        &self,
        estimator: &E,
        resampler: &Resampler<'_>,
        nominal: u64,
        seed: u64,
        j: usize,
        k: usize,
    ) -> Result<(EstimateVector, usize)> {
        let unit = WorkUnit::SubsampleResample {
            subsample: j,
            resample: k,
        };
        let mut rng = blb_resample_key(seed, j, k).rng();
        let sample = resampler(&self.all, nominal, &mut rng).map_err(unit_err(unit))?;
        let estimate = estimator
            .estimate(&self.rows, &sample)
            .map_err(unit_err(unit))?;
        Ok((estimate, sample.distinct_rows()))
    }
}

pub(crate) fn default_resampler(
    config: &ProcedureConfig,
) -> impl Fn(&IndexSubset, u64, &mut RngStream) -> blb_core::Result<WeightedSample> + Sync {
    let flavor = config.resample_flavor;
    move |subset, nominal, rng| resample_weighted(subset, nominal, flavor, rng)
}

/// Bag of Little Bootstraps with `s` subsamples of size `b` and `r` weighted
/// resamples of nominal size `n` per subsample.
pub fn run_blb<E: Estimator>(
    data: &DataMatrix,
    estimator: &E,
    metric: &MetricSpec,
    config: &ProcedureConfig,
) -> Result<ProcedureOutput> {
    let resampler = default_resampler(config);
    run_blb_with(data, estimator, metric, config, &resampler)
}

pub(crate) fn run_blb_with<E: Estimator>(
    data: &DataMatrix,
    estimator: &E,
    metric: &MetricSpec,
    config: &ProcedureConfig,
    resampler: &Resampler<'_>,
) -> Result<ProcedureOutput> {
    let start = Instant::now();
    let n = data.n();
    let b = config.subset_size(n)?;
    if config.r < metric.min_ensemble() {
        return Err(blb_core::Error::TooFewEstimates {
            needed: metric.min_ensemble(),
            got: config.r,
        }
        .into());
    }
    let source = SubsetSource::new(config, n, b)?;
    if let Some(limit) = source.limit() {
        if config.s > limit {
            return Err(Error::Argument(format!(
                "s = {} exceeds the {limit} disjoint blocks of size {b}",
                config.s
            )));
        }
    }
    let pool = thread_pool(config.workers)?;

    struct SubsampleResult {
        summary: QualitySummary,
        done_at: f64,
        max_distinct: usize,
    }

    let results: Vec<Result<SubsampleResult>> = pool.install(|| {
        (0..config.s)
            .into_par_iter()
            .map(|j| {
                let subset = source.subset(j)?;
                let local = LocalSubsample::new(data, &subset)?;
                let estimates: Vec<(EstimateVector, usize)> = (0..config.r)
                    .into_par_iter()
                    .map(|k| {
                        local.resample_estimate(estimator, resampler, n as u64, config.seed, j, k)
                    })
                    .collect::<Result<_>>()?;
                let max_distinct = estimates.iter().map(|e| e.1).max().unwrap_or(0);
                let ensemble = EstimateEnsemble::new(estimates.into_iter().map(|e| e.0).collect())
                    .map_err(unit_err(WorkUnit::Subsample(j)))?;
                let summary =
                    summarize(metric, &ensemble).map_err(unit_err(WorkUnit::Subsample(j)))?;
                Ok(SubsampleResult {
                    summary,
                    done_at: elapsed(start),
                    max_distinct,
                })
            })
            .collect()
    });

    let mut summaries = Vec::with_capacity(config.s);
    let mut trajectory = Trajectory::new();
    let mut clock: f64 = 0.0;
    let mut max_distinct = 0;
    for (j, result) in results.into_iter().enumerate() {
        let result = result?;
        clock = clock.max(result.done_at);
        max_distinct = max_distinct.max(result.max_distinct);
        summaries.push(result.summary);
        trajectory.push(TrajectoryStep {
            elapsed_seconds: clock,
            summary: average(&summaries)?,
            unit: WorkUnit::Subsample(j),
        })?;
    }
    let summary = average(&summaries)?;
    Ok(ProcedureOutput {
        summary,
        trajectory,
        stats: RunStats {
            b,
            resamples: config.s * config.r,
            resamples_computed: config.s * config.r,
            max_resident_rows: b,
            max_distinct_rows: max_distinct,
        },
        selection: None,
    })
}

/// Shared tail of the single-ensemble drivers: prefix summaries as the
/// trajectory, the full-ensemble summary as the output.
fn single_ensemble_output(
    estimates: Vec<(EstimateVector, f64, usize)>,
    metric: &MetricSpec,
    correct: impl Fn(QualitySummary) -> blb_core::Result<QualitySummary>,
    b: usize,
    resident_rows: usize,
) -> Result<ProcedureOutput> {
    let r = estimates.len();
    if r < metric.min_ensemble() {
        return Err(blb_core::Error::TooFewEstimates {
            needed: metric.min_ensemble(),
            got: r,
        }
        .into());
    }
    let max_distinct = estimates.iter().map(|e| e.2).max().unwrap_or(0);
    let mut clock: f64 = 0.0;
    let mut trajectory = Trajectory::new();
    let mut ensemble: Option<EstimateEnsemble> = None;
    for (k, (estimate, done_at, _)) in estimates.into_iter().enumerate() {
        clock = clock.max(done_at);
        match ensemble.as_mut() {
            None => ensemble = Some(EstimateEnsemble::new(vec![estimate])?),
            Some(e) => e.push(estimate)?,
        }
        let ens = ensemble.as_ref().unwrap();
        if ens.len() >= metric.min_ensemble() {
            let summary = correct(summarize(metric, ens)?)?;
            trajectory.push(TrajectoryStep {
                elapsed_seconds: clock,
                summary,
                unit: WorkUnit::Resample(k),
            })?;
        }
    }
    let summary = trajectory.steps().last().unwrap().summary.clone();
    Ok(ProcedureOutput {
        summary,
        trajectory,
        stats: RunStats {
            b,
            resamples: r,
            resamples_computed: r,
            max_resident_rows: resident_rows,
            max_distinct_rows: max_distinct,
        },
        selection: None,
    })
}

fn run_resamples<F>(
    config: &ProcedureConfig,
    start: Instant,
    draw_and_estimate: F,
) -> Result<Vec<(EstimateVector, f64, usize)>>
where
    F: Fn(usize) -> Result<(EstimateVector, usize)> + Sync,
{
    let pool = thread_pool(config.workers)?;
    pool.install(|| {
        (0..config.r)
            .into_par_iter()
            .map(|k| {
                let (estimate, distinct) = draw_and_estimate(k)?;
                Ok((estimate, elapsed(start), distinct))
            })
            .collect()
    })
}

/// The classical bootstrap: `r` resamples of size `n` drawn with replacement
/// from the full data.
pub fn run_bootstrap<E: Estimator>(
    data: &DataMatrix,
    estimator: &E,
    metric: &MetricSpec,
    config: &ProcedureConfig,
) -> Result<ProcedureOutput> {
    let start = Instant::now();
    config.subset_size(data.n())?;
    let estimates = run_resamples(config, start, |k| {
        let unit = WorkUnit::Resample(k);
        let mut rng = StreamKey::root(config.seed)
            .child(tags::BOOTSTRAP)
            .child(k as u64)
            .rng();
        let sample = resample_classical(data, &mut rng).map_err(unit_err(unit))?;
        let estimate = estimator.estimate(data, &sample).map_err(unit_err(unit))?;
        Ok((estimate, sample.distinct_rows()))
    })?;
    single_ensemble_output(estimates, metric, Ok, data.n(), data.n())
}

/// The b-out-of-n bootstrap: `r` resamples of `b` points drawn with
/// replacement from all `n` rows, rescaled by `(b / n)^rate_exponent`.
pub fn run_bofn<E: Estimator>(
    data: &DataMatrix,
    estimator: &E,
    metric: &MetricSpec,
    config: &ProcedureConfig,
) -> Result<ProcedureOutput> {
    let start = Instant::now();
    let n = data.n();
    let b = config.subset_size(n)?;
    let estimates = run_resamples(config, start, |k| {
        let unit = WorkUnit::Resample(k);
        let mut rng = StreamKey::root(config.seed)
            .child(tags::BOFN)
            .child(k as u64)
            .rng();
        let sample = draw_with_replacement(n, b, &mut rng).map_err(unit_err(unit))?;
        let estimate = estimator.estimate(data, &sample).map_err(unit_err(unit))?;
        Ok((estimate, sample.distinct_rows()))
    })?;
    let rate = config.rate_exponent;
    single_ensemble_output(
        estimates,
        metric,
        |s| correct_for_size(&s, b, n, rate),
        b,
        b,
    )
}

/// Subsampling: `r` subsets of `b` rows drawn without replacement, each with
/// unit weights, rescaled like [`run_bofn`].
pub fn run_subsampling<E: Estimator>(
    data: &DataMatrix,
    estimator: &E,
    metric: &MetricSpec,
    config: &ProcedureConfig,
) -> Result<ProcedureOutput> {
    let start = Instant::now();
    let n = data.n();
    let b = config.subset_size(n)?;
    let estimates = run_resamples(config, start, |k| {
        let unit = WorkUnit::Resample(k);
        let mut rng = StreamKey::root(config.seed)
            .child(tags::SUBSAMPLING)
            .child(k as u64)
            .rng();
        let subset = draw_subset(n, b, &mut rng).map_err(unit_err(unit))?;
        let sample = WeightedSample::uniform(subset.indices().to_vec()).map_err(unit_err(unit))?;
        let estimate = estimator.estimate(data, &sample).map_err(unit_err(unit))?;
        Ok((estimate, sample.distinct_rows()))
    })?;
    let rate = config.rate_exponent;
    single_ensemble_output(
        estimates,
        metric,
        |s| correct_for_size(&s, b, n, rate),
        b,
        b,
    )
}
