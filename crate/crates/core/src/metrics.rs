//! Quality functionals over an estimate ensemble, and the arithmetic on their
//! outputs (averaging across subsamples, size correction, widths).

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{EstimateEnsemble, QualitySummary, SummaryKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricKind {
    /// Percentile confidence interval per coordinate.
    MarginalCi,
    /// Sample standard deviation per coordinate.
    Stderr,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSpec {
    kind: MetricKind,
    coverage: f64,
}

impl MetricSpec {
    pub fn marginal_ci(coverage: f64) -> Result<Self> {
        if !(coverage > 0.0 && coverage < 1.0) {
            return Err(Error::InvalidConfig(alloc::format!(
                "coverage {coverage} not in (0, 1)"
            )));
        }
        Ok(Self {
            kind: MetricKind::MarginalCi,
            coverage,
        })
    }

    pub fn stderr() -> Self {
        Self {
            kind: MetricKind::Stderr,
            coverage: 0.95,
        }
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    /// Nominal coverage; meaningful for [`MetricKind::MarginalCi`] only.
    pub fn coverage(&self) -> f64 {
        self.coverage
    }

    /// Smallest ensemble the metric is defined on.
    pub fn min_ensemble(&self) -> usize {
        match self.kind {
            MetricKind::MarginalCi => 1,
            MetricKind::Stderr => 2,
        }
    }
}

impl Default for MetricSpec {
    /// Marginal 95% intervals.
    fn default() -> Self {
        Self {
            kind: MetricKind::MarginalCi,
            coverage: 0.95,
        }
    }
}

/// Empirical quantile of sorted data by linear interpolation between order
/// statistics at (1-based) position `1 + (r - 1) p`.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let r = sorted.len();
    debug_assert!(r > 0);
    let h = (r - 1) as f64 * prob;
    let lo = libm::floor(h) as usize;
    if lo + 1 >= r {
        return sorted[r - 1];
    }
    let frac = h - lo as f64;
    let (a, b) = (sorted[lo], sorted[lo + 1]);
    (a + frac * (b - a)).clamp(a, b)
}

/// Applies the quality functional to an ensemble.
pub fn summarize(spec: &MetricSpec, ensemble: &EstimateEnsemble) -> Result<QualitySummary> {
    let r = ensemble.len();
    if r < spec.min_ensemble() {
        return Err(Error::TooFewEstimates {
            needed: spec.min_ensemble(),
            got: r,
        });
    }
    let d = ensemble.dim();
    match spec.kind {
        MetricKind::MarginalCi => {
            let alpha = 1.0 - spec.coverage;
            let mut lower = Vec::with_capacity(d);
            let mut upper = Vec::with_capacity(d);
            let mut column = Vec::with_capacity(r);
            for i in 0..d {
                column.clear();
                column.extend(ensemble.column(i));
                column.sort_unstable_by(f64::total_cmp);
                lower.push(quantile_sorted(&column, alpha / 2.0));
                upper.push(quantile_sorted(&column, 1.0 - alpha / 2.0));
            }
            QualitySummary::intervals(lower, upper, spec.coverage)
        }
        MetricKind::Stderr => {
            let values = (0..d)
                .map(|i| {
                    let mean = ensemble.column(i).sum::<f64>() / r as f64;
                    let ss: f64 = ensemble.column(i).map(|x| (x - mean) * (x - mean)).sum();
                    libm::sqrt(ss / (r - 1) as f64)
                })
                .collect();
            QualitySummary::scalars(values)
        }
    }
}

/// Element-wise mean of interval bounds or scalars.
///
/// Accumulates a running mean in list order, so averaging copies of one
/// summary reproduces it bit for bit.
pub fn average(summaries: &[QualitySummary]) -> Result<QualitySummary> {
    let first = summaries.first().ok_or(Error::Empty("summary list"))?;
    if summaries.iter().any(|s| !first.same_shape(s)) {
        return Err(Error::ShapeMismatch(
            "summaries to average differ in kind, dimension or coverage",
        ));
    }
    let mut mean = first.flatten();
    for (k, s) in summaries.iter().enumerate().skip(1) {
        let count = (k + 1) as f64;
        for (m, x) in mean.iter_mut().zip(s.flatten()) {
            *m += (x - *m) / count;
        }
    }
    match first.kind() {
        SummaryKind::IntervalSet => {
            let upper = mean.split_off(first.dim());
            // rounding in the running mean cannot reorder bounds by more than an ulp
            let upper = upper.iter().zip(&mean).map(|(u, l)| u.max(*l)).collect();
            QualitySummary::intervals(mean, upper, first.coverage().unwrap_or(0.95))
        }
        SummaryKind::ScalarPerDim => QualitySummary::scalars(mean),
    }
}

/// Rescales dispersion measured on size-`b` data to size `n`: interval
/// half-widths (about their midpoints) and scalars are multiplied by
/// `(b / n)^rate_exponent`.
pub fn correct_for_size(
    summary: &QualitySummary,
    b: usize,
    n: usize,
    rate_exponent: f64,
) -> Result<QualitySummary> {
    if b == 0 || b > n {
        return Err(Error::SubsetTooLarge { b, n });
    }
    if !(rate_exponent > 0.0) {
        return Err(Error::InvalidConfig(
            "rate exponent must be positive".into(),
        ));
    }
    let factor = libm::pow(b as f64 / n as f64, rate_exponent);
    match summary.kind() {
        SummaryKind::IntervalSet => {
            let (lo, hi) = (summary.lower().unwrap(), summary.upper().unwrap());
            let mut lower = Vec::with_capacity(lo.len());
            let mut upper = Vec::with_capacity(lo.len());
            for (l, u) in lo.iter().zip(hi) {
                let mid = 0.5 * (l + u);
                let half = 0.5 * (u - l) * factor;
                lower.push(mid - half);
                upper.push(mid + half);
            }
            QualitySummary::intervals(lower, upper, summary.coverage().unwrap())
        }
        SummaryKind::ScalarPerDim => QualitySummary::scalars(
            summary
                .values()
                .unwrap()
                .iter()
                .map(|v| v * factor)
                .collect(),
        ),
    }
}

/// Per-dimension interval widths.
pub fn ci_widths(summary: &QualitySummary) -> Result<Vec<f64>> {
    match (summary.lower(), summary.upper()) {
        (Some(lo), Some(hi)) => Ok(lo.iter().zip(hi).map(|(l, u)| u - l).collect()),
        _ => Err(Error::WrongKind),
    }
}

/// Mean of [`ci_widths`] across dimensions.
pub fn mean_width(summary: &QualitySummary) -> Result<f64> {
    let w = ci_widths(summary)?;
    Ok(w.iter().sum::<f64>() / w.len() as f64)
}
