//! Synthetic data generators, ground truth by Monte Carlo over independent
//! datasets, and multi-realization experiments scored by relative error.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use blb_core::rng::tags;
use blb_core::{
    summarize, tracked_values, DataMatrix, EstimateEnsemble, Estimator, MetricSpec,
    ProcedureConfig, QualitySummary, StreamKey, Task, WeightedSample,
};

use crate::error::{Error, Result};
use crate::procedures::{run_method, thread_pool, Method};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureDist {
    Normal,
    StudentT { df: f64 },
    Gamma { shape: f64, scale: f64 },
}

/// How the linear predictor `x'beta` maps to the response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Link {
    Linear,
    /// Predictor divided by `sqrt(d)`.
    LinearScaledBySqrtD,
    /// Predictor plus `curvature * sum(x_i^2)`. A stand-in for an
    /// unspecified misspecified model; not a canonical form.
    NonlinearNoisy {
        curvature: f64,
    },
}

/// A synthetic distribution. Written and parsed as comma-separated
/// `key=value` pairs, e.g.
/// `task=classification,features=student_t:3,d=10,link=linear`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataGeneratingSpec {
    pub task: Task,
    pub features: FeatureDist,
    pub d: usize,
    pub coefficients: Vec<f64>,
    pub link: Link,
    /// Response noise standard deviation; regression only.
    pub noise_sd: f64,
    /// Seed for standalone dataset generation (the CLI's `--synthetic`).
    pub seed: u64,
}

impl DataGeneratingSpec {
    /// All-ones coefficients, linear link, unit noise.
    pub fn new(task: Task, features: FeatureDist, d: usize) -> Result<Self> {
        let spec = Self {
            task,
            features,
            d,
            coefficients: vec![1.0; d],
            link: Link::Linear,
            noise_sd: 1.0,
            seed: 0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Argument(format!("synthetic spec: {m}")));
        if self.d == 0 {
            return bad("d must be at least 1");
        }
        if self.coefficients.len() != self.d {
            return bad("coefficient count must equal d");
        }
        if self.coefficients.iter().any(|c| !c.is_finite()) {
            return bad("coefficients must be finite");
        }
        match self.features {
            FeatureDist::Normal => {}
            FeatureDist::StudentT { df } => {
                if !df.is_finite() || df <= 2.0 {
                    return bad("student_t needs df > 2");
                }
            }
            FeatureDist::Gamma { shape, scale } => {
                if !(shape > 0.0 && scale > 0.0) || !shape.is_finite() || !scale.is_finite() {
                    return bad("gamma needs positive shape and scale");
                }
            }
        }
        if let Link::NonlinearNoisy { curvature } = self.link {
            if !curvature.is_finite() {
                return bad("curvature must be finite");
            }
        }
        if self.task == Task::Regression && !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return bad("noise_sd must be positive for regression");
        }
        Ok(())
    }
}

impl fmt::Display for DataGeneratingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let task = match self.task {
            Task::Regression => "regression",
            Task::Classification => "classification",
        };
        write!(f, "task={task},features=")?;
        match self.features {
            FeatureDist::Normal => write!(f, "normal")?,
            FeatureDist::StudentT { df } => write!(f, "student_t:{df}")?,
            FeatureDist::Gamma { shape, scale } => write!(f, "gamma:{shape}:{scale}")?,
        }
        write!(f, ",d={},beta=", self.d)?;
        for (i, c) in self.coefficients.iter().enumerate() {
            if i > 0 {
                write!(f, ":")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ",link=")?;
        match self.link {
            Link::Linear => write!(f, "linear")?,
            Link::LinearScaledBySqrtD => write!(f, "linear_sqrt_d")?,
            Link::NonlinearNoisy { curvature } => write!(f, "nonlinear_noisy:{curvature}")?,
        }
        write!(f, ",noise_sd={},seed={}", self.noise_sd, self.seed)
    }
}

impl FromStr for DataGeneratingSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |m: String| Error::Argument(format!("synthetic spec: {m}"));
        let num = |k: &str, v: &str| {
            v.parse::<f64>()
                .map_err(|_| bad(format!("{k}: not a number: {v:?}")))
        };
        let mut task = Task::Regression;
        let mut features = FeatureDist::Normal;
        let mut d = 1usize;
        let mut coefficients: Option<Vec<f64>> = None;
        let mut link = Link::Linear;
        let mut noise_sd = 1.0;
        let mut seed = 0u64;
        for pair in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got {pair:?}")))?;
            let parts: Vec<&str> = value.split(':').collect();
            match key {
                "task" => {
                    task = match value {
                        "regression" => Task::Regression,
                        "classification" => Task::Classification,
                        _ => return Err(bad(format!("unknown task {value:?}"))),
                    }
                }
                "features" => {
                    features = match parts.as_slice() {
                        ["normal"] => FeatureDist::Normal,
                        ["student_t", df] => FeatureDist::StudentT { df: num(key, df)? },
                        ["gamma", shape, scale] => FeatureDist::Gamma {
                            shape: num(key, shape)?,
                            scale: num(key, scale)?,
                        },
                        _ => return Err(bad(format!("unknown features {value:?}"))),
                    }
                }
                "d" => {
                    d = value
                        .parse()
                        .map_err(|_| bad(format!("d: not a count: {value:?}")))?
                }
                "beta" => {
                    coefficients = Some(parts.iter().map(|p| num(key, p)).collect::<Result<_>>()?)
                }
                "link" => {
                    link = match parts.as_slice() {
                        ["linear"] => Link::Linear,
                        ["linear_sqrt_d"] => Link::LinearScaledBySqrtD,
                        ["nonlinear_noisy", c] => Link::NonlinearNoisy {
                            curvature: num(key, c)?,
                        },
                        _ => return Err(bad(format!("unknown link {value:?}"))),
                    }
                }
                "noise_sd" => noise_sd = num(key, value)?,
                "seed" => {
                    seed = value
                        .parse()
                        .map_err(|_| bad(format!("seed: not an integer: {value:?}")))?
                }
                _ => return Err(bad(format!("unknown key {key:?}"))),
            }
        }
        let spec = Self {
            task,
            features,
            d,
            coefficients: coefficients.unwrap_or_else(|| vec![1.0; d]),
            link,
            noise_sd,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Draws `n` i.i.d. rows from `spec`.
pub fn generate<R: Rng + ?Sized>(
    spec: &DataGeneratingSpec,
    n: usize,
    rng: &mut R,
) -> Result<DataMatrix> {
    spec.validate()?;
    if n == 0 {
        return Err(blb_core::Error::Empty("dataset").into());
    }
    let d = spec.d;
    let mut features = vec![0.0; n * d];
    match spec.features {
        FeatureDist::Normal => features
            .iter_mut()
            .for_each(|x| *x = StandardNormal.sample(rng)),
        FeatureDist::StudentT { df } => {
            let dist = StudentT::new(df).map_err(|e| Error::Argument(e.to_string()))?;
            features.iter_mut().for_each(|x| *x = dist.sample(rng));
        }
        FeatureDist::Gamma { shape, scale } => {
            let dist = Gamma::new(shape, scale).map_err(|e| Error::Argument(e.to_string()))?;
            features.iter_mut().for_each(|x| *x = dist.sample(rng));
        }
    }
    let scale = match spec.link {
        Link::LinearScaledBySqrtD => 1.0 / (d as f64).sqrt(),
        _ => 1.0,
    };
    let response = features
        .chunks_exact(d)
        .map(|x| {
            let mut eta = scale
                * x.iter()
                    .zip(&spec.coefficients)
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
            if let Link::NonlinearNoisy { curvature } = spec.link {
                eta += curvature * x.iter().map(|v| v * v).sum::<f64>();
            }
            match spec.task {
                Task::Regression => {
                    let e: f64 = StandardNormal.sample(rng);
                    eta + spec.noise_sd * e
                }
                Task::Classification => f64::from(rng.random::<f64>() < sigmoid(eta)),
            }
        })
        .collect();
    Ok(DataMatrix::new(d, features, Some(response))?)
}

/// The quality summary of the estimator's sampling distribution at size `n`,
/// approximated from independent datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub summary: QualitySummary,
    pub num_realizations: usize,
    pub n: usize,
}

/// Generates `num_realizations` datasets of size `n`, estimates on each with
/// unit weights and summarizes the pooled estimates. Realization `i` draws
/// from its own stream, so the result does not depend on `workers`.
pub fn compute_ground_truth<E: Estimator>(
    spec: &DataGeneratingSpec,
    n: usize,
    num_realizations: usize,
    estimator: &E,
    metric: &MetricSpec,
    seed: u64,
    workers: usize,
) -> Result<GroundTruth> {
    if num_realizations < 2 {
        return Err(Error::Argument(
            "ground truth needs at least 2 realizations".into(),
        ));
    }
    let pool = thread_pool(workers)?;
    let estimates = pool.install(|| {
        (0..num_realizations)
            .into_par_iter()
            .map(|i| {
                let mut rng = StreamKey::root(seed)
                    .child(tags::GROUND_TRUTH)
                    .child(i as u64)
                    .rng();
                let data = generate(spec, n, &mut rng)?;
                let all = WeightedSample::uniform((0..n).collect())?;
                Ok(estimator.estimate(&data, &all)?)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let summary = summarize(metric, &EstimateEnsemble::new(estimates)?)?;
    Ok(GroundTruth {
        summary,
        num_realizations,
        n,
    })
}

/// Mean over dimensions of `|c - c_o| / c_o`, comparing interval widths or
/// standard errors.
pub fn relative_error(estimate: &QualitySummary, truth: &QualitySummary) -> Result<f64> {
    if !estimate.same_shape(truth) {
        return Err(blb_core::Error::ShapeMismatch("estimate and truth").into());
    }
    let c = tracked_values(estimate);
    let c0 = tracked_values(truth);
    if c0.contains(&0.0) {
        return Err(Error::Argument("ground truth has a zero component".into()));
    }
    Ok(c.iter()
        .zip(&c0)
        .map(|(a, b)| (a - b).abs() / b.abs())
        .sum::<f64>()
        / c.len() as f64)
}

/// One procedure configuration in an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcedureCell {
    pub label: String,
    pub method: Method,
    pub config: ProcedureConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStep {
    pub elapsed_seconds: f64,
    pub relative_error: f64,
    /// Realizations that reached this step.
    pub realizations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub label: String,
    pub method: Method,
    /// Error and time averaged across realizations by step index.
    pub trajectory: Vec<ErrorStep>,
    pub final_errors: Vec<f64>,
    pub final_error_mean: Option<f64>,
    /// Standard error of `final_error_mean` across realizations.
    pub final_error_se: Option<f64>,
    pub mean_total_seconds: Option<f64>,
    pub mean_resamples: Option<f64>,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub n: usize,
    pub realizations: usize,
    pub cells: Vec<CellReport>,
}

impl ExperimentReport {
    pub fn cell(&self, label: &str) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.label == label)
    }

    pub fn has_failures(&self) -> bool {
        self.cells.iter().any(|c| !c.failures.is_empty())
    }
}

/// Seed for a cell's procedure in dataset realization `i`. Cells with the
/// same configured seed share streams within a realization.
pub fn realization_seed(seed: u64, i: usize) -> u64 {
    StreamKey::root(seed)
        .child(tags::EXPERIMENT)
        .child(i as u64)
        .stream_id()
}

/// Runs every cell on `num_realizations` fresh datasets and scores each
/// trajectory step against `truth`. Cells run one after another so that the
/// recorded times are not inflated by contention; each driver parallelizes
/// internally. A failing cell is recorded and the rest continue.
#[allow(clippy::too_many_arguments)]
pub fn run_experiment<E: Estimator>(
    spec: &DataGeneratingSpec,
    n: usize,
    cells: &[ProcedureCell],
    estimator: &E,
    metric: &MetricSpec,
    truth: &GroundTruth,
    num_realizations: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    if truth.n != n {
        return Err(Error::Argument(format!(
            "ground truth is for n = {}, not {n}",
            truth.n
        )));
    }
    if num_realizations == 0 {
        return Err(Error::Argument(
            "need at least one dataset realization".into(),
        ));
    }
    struct Acc {
        sums: Vec<(f64, f64, usize)>,
        finals: Vec<f64>,
        seconds: Vec<f64>,
        resamples: Vec<f64>,
        failures: Vec<String>,
    }
    let mut accs: Vec<Acc> = cells
        .iter()
        .map(|_| Acc {
            sums: Vec::new(),
            finals: Vec::new(),
            seconds: Vec::new(),
            resamples: Vec::new(),
            failures: Vec::new(),
        })
        .collect();

    for i in 0..num_realizations {
        let mut rng = StreamKey::root(seed)
            .child(tags::EXPERIMENT)
            .child(i as u64)
            .rng();
        let data = generate(spec, n, &mut rng)?;
        for (cell, acc) in cells.iter().zip(accs.iter_mut()) {
            let config = ProcedureConfig {
                seed: realization_seed(cell.config.seed, i),
                ..cell.config.clone()
            };
            let scored =
                run_method(cell.method, &data, estimator, metric, &config).and_then(|out| {
                    let errors = out
                        .trajectory
                        .steps()
                        .iter()
                        .map(|s| {
                            Ok((
                                s.elapsed_seconds,
                                relative_error(&s.summary, &truth.summary)?,
                            ))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Ok((errors, out.stats.resamples))
                });
            match scored {
                Ok((errors, resamples)) => {
                    if acc.sums.len() < errors.len() {
                        acc.sums.resize(errors.len(), (0.0, 0.0, 0));
                    }
                    for (slot, &(t, e)) in acc.sums.iter_mut().zip(&errors) {
                        slot.0 += t;
                        slot.1 += e;
                        slot.2 += 1;
                    }
                    let &(t, e) = errors.last().expect("drivers emit at least one step");
                    acc.finals.push(e);
                    acc.seconds.push(t);
                    acc.resamples.push(resamples as f64);
                }
                Err(e) => acc.failures.push(format!("realization {i}: {e}")),
            }
        }
    }

    let cells = cells
        .iter()
        .zip(accs)
        .map(|(cell, acc)| {
            let k = acc.finals.len();
            let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
            let final_error_mean = mean(&acc.finals);
            let final_error_se = final_error_mean.map(|m| {
                if k < 2 {
                    0.0
                } else {
                    let var =
                        acc.finals.iter().map(|e| (e - m) * (e - m)).sum::<f64>() / (k - 1) as f64;
                    (var / k as f64).sqrt()
                }
            });
            CellReport {
                label: cell.label.clone(),
                method: cell.method,
                trajectory: acc
                    .sums
                    .iter()
                    .map(|&(t, e, c)| ErrorStep {
                        elapsed_seconds: t / c as f64,
                        relative_error: e / c as f64,
                        realizations: c,
                    })
                    .collect(),
                final_error_mean,
                final_error_se,
                mean_total_seconds: mean(&acc.seconds),
                mean_resamples: mean(&acc.resamples),
                final_errors: acc.finals,
                failures: acc.failures,
            }
        })
        .collect();
    Ok(ExperimentReport {
        n,
        realizations: num_realizations,
        cells,
    })
}
