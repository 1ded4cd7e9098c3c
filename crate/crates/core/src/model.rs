//! Domain types shared by the resampling, estimation and summary layers.
//!
//! Every type validates its invariants when it is built; once constructed the
//! values are immutable (or only grow through checked methods), so they can be
//! shared freely between worker threads.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// What the response column means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    Regression,
    Classification,
}

/// The observed sample: `n` rows of `p` real features plus an optional response.
///
/// Features are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    n: usize,
    p: usize,
    features: Vec<f64>,
    response: Option<Vec<f64>>,
}

impl DataMatrix {
    /// Builds a matrix from row-major `features` with `p` columns.
    pub fn new(p: usize, features: Vec<f64>, response: Option<Vec<f64>>) -> Result<Self> {
        if p == 0 {
            return Err(Error::Empty("feature dimension"));
        }
        if features.is_empty() {
            return Err(Error::Empty("data matrix"));
        }
        if features.len() % p != 0 {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: features.len() % p,
                context: "trailing partial row",
            });
        }
        let n = features.len() / p;
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / p,
                column: pos % p,
            });
        }
        if let Some(y) = &response {
            if y.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: y.len(),
                    context: "response length",
                });
            }
            if let Some(row) = y.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row, column: p });
            }
        }
        Ok(Self {
            n,
            p,
            features,
            response,
        })
    }

    /// Builds a matrix from individual rows, rejecting ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], response: Option<Vec<f64>>) -> Result<Self> {
        let first = rows.first().ok_or(Error::Empty("data matrix"))?;
        let p = first.as_ref().len();
        let mut features = Vec::with_capacity(rows.len() * p);
        for row in rows {
            let row = row.as_ref();
            if row.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: row.len(),
                    context: "row length",
                });
            }
            features.extend_from_slice(row);
        }
        Self::new(p, features, response)
    }

    /// Checks the task-specific invariants: a response must exist, and for
    /// classification every response must be exactly 0 or 1.
    pub fn validate(&self, task: Task) -> Result<()> {
        let y = self.response.as_ref().ok_or(Error::MissingResponse)?;
        if task == Task::Classification {
            if let Some(row) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::NonBinaryResponse { row, value: y[row] });
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.p..(i + 1) * self.p]
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn response(&self) -> Option<&[f64]> {
        self.response.as_deref()
    }

    /// Copies the given rows (in order) into a new matrix.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("row selection"));
        }
        let mut features = Vec::with_capacity(rows.len() * self.p);
        for &i in rows {
            if i >= self.n {
                return Err(Error::InvalidSubset(format!(
                    "row {i} out of range for n = {}",
                    self.n
                )));
            }
            features.extend_from_slice(self.row(i));
        }
        let response = self
            .response
            .as_ref()
            .map(|y| rows.iter().map(|&i| y[i]).collect());
        Ok(Self {
            n: rows.len(),
            p: self.p,
            features,
            response,
        })
    }
}

/// Free-function form of [`DataMatrix::validate`].
pub fn validate(data: &DataMatrix, task: Task) -> Result<()> {
    data.validate(task)
}

/// `b` distinct row indices into a dataset of `n` rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSubset {
    indices: Vec<usize>,
    n: usize,
}

impl IndexSubset {
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Empty("index subset"));
        }
        if indices.len() > n {
            return Err(Error::SubsetTooLarge {
                b: indices.len(),
                n,
            });
        }
        let mut sorted = indices.clone();
        sorted.sort_unstable();
        if let Some(&last) = sorted.last() {
            if last >= n {
                return Err(Error::InvalidSubset(format!(
                    "index {last} out of range for n = {n}"
                )));
            }
        }
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidSubset(format!("duplicate index {}", w[0])));
        }
        Ok(Self { indices, n })
    }

    /// All of `0..n`.
    pub fn full(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty("index subset"));
        }
        Ok(Self {
            indices: (0..n).collect(),
            n,
        })
    }

    pub(crate) fn from_distinct_unchecked(indices: Vec<usize>, n: usize) -> Self {
        debug_assert!(!indices.is_empty() && indices.len() <= n);
        Self { indices, n }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// The subset size `b`.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Size of the population the indices were drawn from.
    pub fn population(&self) -> usize {
        self.n
    }
}

/// A resample stored as distinct row references with integer multiplicities.
///
/// The row indices refer to whatever [`DataMatrix`] the sample is evaluated
/// against. A multinomial resample of nominal size `n` over a subset of `b`
/// rows therefore needs only `O(b)` storage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightedSample {
    rows: Vec<usize>,
    weights: Vec<u64>,
    nominal_size: u64,
}

impl WeightedSample {
    /// Generic constructor: rows must be distinct and the weights must sum to
    /// `nominal_size`.
    pub fn new(rows: Vec<usize>, weights: Vec<u64>, nominal_size: u64) -> Result<Self> {
        if rows.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                found: weights.len(),
                context: "weights per row",
            });
        }
        if rows.is_empty() {
            return Err(Error::Empty("weighted sample"));
        }
        let mut sorted = rows.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidSubset(format!("row {} listed twice", w[0])));
        }
        let total: u64 = weights.iter().sum();
        if total == 0 {
            return Err(Error::ZeroTotalWeight);
        }
        if total != nominal_size {
            return Err(Error::InvalidConfig(format!(
                "weights sum to {total} but nominal size is {nominal_size}"
            )));
        }
        Ok(Self {
            rows,
            weights,
            nominal_size,
        })
    }

    /// Every row with weight one; nominal size equals the number of rows.
    pub fn uniform(rows: Vec<usize>) -> Result<Self> {
        let weights = alloc::vec![1; rows.len()];
        let total = rows.len() as u64;
        Self::new(rows, weights, total)
    }

    pub(crate) fn from_parts_unchecked(
        rows: Vec<usize>,
        weights: Vec<u64>,
        nominal_size: u64,
    ) -> Self {
        debug_assert_eq!(rows.len(), weights.len());
        debug_assert_eq!(weights.iter().sum::<u64>(), nominal_size);
        Self {
            rows,
            weights,
            nominal_size,
        }
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn weights(&self) -> &[u64] {
        &self.weights
    }

    pub fn nominal_size(&self) -> u64 {
        self.nominal_size
    }

    /// Rows carrying positive weight.
    pub fn distinct_rows(&self) -> usize {
        self.weights.iter().filter(|&&w| w > 0).count()
    }

    /// `(row, weight)` pairs with positive weight.
    pub fn iter(&self) -> impl Iterator<Item = (usize, u64)> + '_ {
        self.rows
            .iter()
            .copied()
            .zip(self.weights.iter().copied())
            .filter(|&(_, w)| w > 0)
    }
}

/// A finite estimate `θ̂` of dimension `d_est`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateVector(Vec<f64>);

impl EstimateVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("estimate vector"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEstimate);
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// The empirical distribution of `r` estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateEnsemble {
    estimates: Vec<EstimateVector>,
}

impl EstimateEnsemble {
    pub fn new(estimates: Vec<EstimateVector>) -> Result<Self> {
        let first = estimates.first().ok_or(Error::Empty("estimate ensemble"))?;
        let d = first.dim();
        if let Some(bad) = estimates.iter().find(|e| e.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: bad.dim(),
                context: "estimate dimension",
            });
        }
        Ok(Self { estimates })
    }

    /// Appends one estimate, keeping the dimension uniform.
    pub fn push(&mut self, estimate: EstimateVector) -> Result<()> {
        if estimate.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: estimate.dim(),
                context: "estimate dimension",
            });
        }
        self.estimates.push(estimate);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.estimates[0].dim()
    }

    pub fn estimates(&self) -> &[EstimateVector] {
        &self.estimates
    }

    /// Values of coordinate `i` across the ensemble.
    pub fn column(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.estimates.iter().map(move |e| e.0[i])
    }
}

/// Which quality functional produced a summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SummaryKind {
    IntervalSet,
    ScalarPerDim,
}

#[derive(Debug, Clone, PartialEq)]
enum SummaryData {
    Intervals {
        lower: Vec<f64>,
        upper: Vec<f64>,
        coverage: f64,
    },
    Scalars {
        values: Vec<f64>,
    },
}

/// Output of a quality functional: per-dimension interval bounds or
/// per-dimension scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct QualitySummary {
    data: SummaryData,
}

impl QualitySummary {
    pub fn intervals(lower: Vec<f64>, upper: Vec<f64>, coverage: f64) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::Empty("interval summary"));
        }
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
                context: "upper bounds",
            });
        }
        if !(coverage > 0.0 && coverage < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "coverage {coverage} not in (0, 1)"
            )));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::NonFinite { row: 0, column: i });
            }
            if lo > hi {
                return Err(Error::InvalidConfig(format!(
                    "interval {i} has lower {lo} above upper {hi}"
                )));
            }
        }
        Ok(Self {
            data: SummaryData::Intervals {
                lower,
                upper,
                coverage,
            },
        })
    }

    pub fn scalars(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("scalar summary"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: 0, column: i });
        }
        Ok(Self {
            data: SummaryData::Scalars { values },
        })
    }

    pub fn kind(&self) -> SummaryKind {
        match self.data {
            SummaryData::Intervals { .. } => SummaryKind::IntervalSet,
            SummaryData::Scalars { .. } => SummaryKind::ScalarPerDim,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.data {
            SummaryData::Intervals { lower, .. } => lower.len(),
            SummaryData::Scalars { values } => values.len(),
        }
    }

    pub fn lower(&self) -> Option<&[f64]> {
        match &self.data {
            SummaryData::Intervals { lower, .. } => Some(lower),
            SummaryData::Scalars { .. } => None,
        }
    }

    pub fn upper(&self) -> Option<&[f64]> {
        match &self.data {
            SummaryData::Intervals { upper, .. } => Some(upper),
            SummaryData::Scalars { .. } => None,
        }
    }

    pub fn coverage(&self) -> Option<f64> {
        match &self.data {
            SummaryData::Intervals { coverage, .. } => Some(*coverage),
            SummaryData::Scalars { .. } => None,
        }
    }

    pub fn values(&self) -> Option<&[f64]> {
        match &self.data {
            SummaryData::Scalars { values } => Some(values),
            SummaryData::Intervals { .. } => None,
        }
    }

    /// All numbers in the summary: lower bounds then upper bounds for
    /// intervals, the scalars otherwise.
    pub fn flatten(&self) -> Vec<f64> {
        match &self.data {
            SummaryData::Intervals { lower, upper, .. } => {
                lower.iter().chain(upper.iter()).copied().collect()
            }
            SummaryData::Scalars { values } => values.clone(),
        }
    }

    /// True when `other` has the same kind, dimension and coverage.
    pub fn same_shape(&self, other: &Self) -> bool {
        match (&self.data, &other.data) {
            (
                SummaryData::Intervals {
                    lower: a,
                    coverage: ca,
                    ..
                },
                SummaryData::Intervals {
                    lower: b,
                    coverage: cb,
                    ..
                },
            ) => a.len() == b.len() && ca == cb,
            (SummaryData::Scalars { values: a }, SummaryData::Scalars { values: b }) => {
                a.len() == b.len()
            }
            _ => false,
        }
    }
}

/// How the subset size `b` is specified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SubsetSize {
    /// `b = floor(n^γ)`, clamped to at least 1.
    Exponent(f64),
    Explicit(usize),
}

impl SubsetSize {
    pub fn resolve(&self, n: usize) -> Result<usize> {
        if n == 0 {
            return Err(Error::Empty("dataset"));
        }
        match *self {
            SubsetSize::Exponent(gamma) => {
                if !(gamma > 0.0 && gamma <= 1.0) {
                    return Err(Error::InvalidConfig(format!("gamma {gamma} not in (0, 1]")));
                }
                // Nudge up so exact powers (e.g. 10000^0.5) do not floor one short.
                let b = libm::floor(libm::pow(n as f64, gamma) * (1.0 + 1e-12)) as usize;
                Ok(b.clamp(1, n))
            }
            SubsetSize::Explicit(b) => {
                if b == 0 {
                    return Err(Error::InvalidConfig("b must be at least 1".into()));
                }
                if b > n {
                    return Err(Error::SubsetTooLarge { b, n });
                }
                Ok(b)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ResampleFlavor {
    Multinomial,
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SubsampleMode {
    /// Each subsample drawn independently without replacement.
    WithoutReplacement,
    /// Subsamples are the blocks of one random partition of the rows.
    DisjointPartition,
}

/// Stopping rule parameters for adaptive selection of `r` and `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveParams {
    pub epsilon_r: f64,
    pub window_r: usize,
    pub r_max: usize,
    pub epsilon_s: f64,
    pub window_s: usize,
    pub s_max: usize,
}

impl Default for AdaptiveParams {
    fn default() -> Self {
        Self {
            epsilon_r: 0.05,
            window_r: 20,
            r_max: 500,
            epsilon_s: 0.05,
            window_s: 3,
            s_max: 50,
        }
    }
}

impl AdaptiveParams {
    /// Validating constructor.
    pub fn new(
        epsilon_r: f64,
        window_r: usize,
        r_max: usize,
        epsilon_s: f64,
        window_s: usize,
        s_max: usize,
    ) -> Result<Self> {
        let params = Self {
            epsilon_r,
            window_r,
            r_max,
            epsilon_s,
            window_s,
            s_max,
        };
        params.check()?;
        Ok(params)
    }

    /// `epsilon` may be zero here so that a run can be forced to its caps.
    pub fn check(&self) -> Result<()> {
        if !(self.epsilon_r >= 0.0 && self.epsilon_s >= 0.0) {
            return Err(Error::InvalidConfig(
                "adaptive epsilons must be nonnegative".into(),
            ));
        }
        if self.window_r == 0 || self.window_s == 0 {
            return Err(Error::InvalidConfig(
                "adaptive windows must be at least 1".into(),
            ));
        }
        if self.window_r >= self.r_max {
            return Err(Error::InvalidConfig(format!(
                "window_r {} must be below r_max {}",
                self.window_r, self.r_max
            )));
        }
        if self.window_s >= self.s_max {
            return Err(Error::InvalidConfig(format!(
                "window_s {} must be below s_max {}",
                self.window_s, self.s_max
            )));
        }
        Ok(())
    }
}

/// Hyperparameters shared by all drivers.
///
/// Fields are public for convenience; every driver calls
/// [`ProcedureConfig::subset_size`], which validates the whole config against
/// the dataset size before any work starts.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcedureConfig {
    pub subset_size: SubsetSize,
    pub s: usize,
    pub r: usize,
    pub seed: u64,
    pub resample_flavor: ResampleFlavor,
    pub subsample_mode: SubsampleMode,
    pub adaptive: Option<AdaptiveParams>,
    /// Convergence-rate exponent used by the b-out-of-n and subsampling
    /// corrections; 0.5 for root-n consistent estimators.
    pub rate_exponent: f64,
    /// Worker threads; 0 means one per available core.
    pub workers: usize,
}

impl Default for ProcedureConfig {
    fn default() -> Self {
        Self {
            subset_size: SubsetSize::Exponent(0.7),
            s: 5,
            r: 100,
            seed: 0,
            resample_flavor: ResampleFlavor::Multinomial,
            subsample_mode: SubsampleMode::WithoutReplacement,
            adaptive: None,
            rate_exponent: 0.5,
            workers: 0,
        }
    }
}

impl ProcedureConfig {
    /// Validates the config for a dataset of `n` rows and returns `b`.
    pub fn subset_size(&self, n: usize) -> Result<usize> {
        if self.s == 0 {
            return Err(Error::InvalidConfig("s must be at least 1".into()));
        }
        if self.r == 0 {
            return Err(Error::InvalidConfig("r must be at least 1".into()));
        }
        if !(self.rate_exponent > 0.0 && self.rate_exponent.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "rate exponent {} must be positive",
                self.rate_exponent
            )));
        }
        if let Some(adaptive) = &self.adaptive {
            adaptive.check()?;
        }
        self.subset_size.resolve(n)
    }
}
