//! Windowed relative-change test for deciding when a sequence of quality
//! summaries has stopped fluctuating.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{QualitySummary, SummaryKind};

/// Denominator floor for coordinates whose latest value is (near) zero.
pub const DENOMINATOR_FLOOR: f64 = 1e-12;

/// Ordered vectors of a common dimension.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SummarySeries {
    values: Vec<Vec<f64>>,
}

impl SummarySeries {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_values(values: Vec<Vec<f64>>) -> Result<Self> {
        let mut series = Self::new();
        for v in values {
            series.push(v)?;
        }
        Ok(series)
    }

    pub fn push(&mut self, value: Vec<f64>) -> Result<()> {
        if let Some(first) = self.values.first() {
            if first.len() != value.len() {
                return Err(Error::DimensionMismatch {
                    expected: first.len(),
                    found: value.len(),
                    context: "series element",
                });
            }
        } else if value.is_empty() {
            return Err(Error::Empty("series element"));
        }
        self.values.push(value);
        Ok(())
    }

    /// Appends the coordinates of `summary` that the stopping rule tracks.
    pub fn push_summary(&mut self, summary: &QualitySummary) -> Result<()> {
        self.push(tracked_values(summary))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }
}

/// The coordinates of a summary fed to the stopping rule: interval widths for
/// interval summaries, the scalars otherwise.
///
/// Widths rather than raw bounds: a bound of a centred estimand sits near
/// zero, where relative change is meaningless.
pub fn tracked_values(summary: &QualitySummary) -> Vec<f64> {
    match summary.kind() {
        SummaryKind::IntervalSet => summary
            .lower()
            .unwrap()
            .iter()
            .zip(summary.upper().unwrap())
            .map(|(l, u)| u - l)
            .collect(),
        SummaryKind::ScalarPerDim => summary.values().unwrap().to_vec(),
    }
}

/// True iff the series has more than `window` elements and each of the last
/// `window` predecessors `z(t-j)` of the final element `z(t)` satisfies
/// `mean_i |z_i(t-j) - z_i(t)| / |z_i(t)| <= epsilon`.
pub fn has_converged(series: &SummarySeries, window: usize, epsilon: f64) -> Result<bool> {
    if window == 0 {
        return Err(Error::InvalidConfig("window must be at least 1".into()));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidConfig("epsilon must be nonnegative".into()));
    }
    let t = series.len();
    if t <= window {
        return Ok(false);
    }
    let last = &series.values[t - 1];
    let d = last.len() as f64;
    for j in 1..=window {
        let earlier = &series.values[t - 1 - j];
        let deviation: f64 = earlier
            .iter()
            .zip(last)
            .map(|(a, z)| (a - z).abs() / z.abs().max(DENOMINATOR_FLOOR))
            .sum::<f64>()
            / d;
        if !(deviation <= epsilon) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn series(xs: &[f64]) -> SummarySeries {
        SummarySeries::from_values(xs.iter().map(|&x| vec![x]).collect()).unwrap()
    }

    #[test]
    fn constant_series_converges_at_window_plus_one() {
        assert!(has_converged(&series(&[2.0; 4]), 3, 0.05).unwrap());
        assert!(!has_converged(&series(&[2.0; 3]), 3, 0.05).unwrap());
    }

    #[test]
    fn hand_computed_examples() {
        assert!(has_converged(&series(&[1.0, 1.04, 1.0]), 2, 0.05).unwrap());
        assert!(!has_converged(&series(&[1.0, 1.2, 1.0]), 2, 0.05).unwrap());
    }

    #[test]
    fn zero_dimensions_use_the_floor() {
        assert!(has_converged(&series(&[0.0, 0.0, 0.0]), 2, 0.0).unwrap());
        assert!(!has_converged(&series(&[1e-6, 0.0, 0.0]), 2, 0.05).unwrap());
    }

    #[test]
    fn mismatched_dimensions_rejected() {
        let mut s = series(&[1.0]);
        assert!(s.push(vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn tracks_widths_for_intervals() {
        let ci = QualitySummary::intervals(vec![-1.0, 0.0], vec![1.0, 0.5], 0.95).unwrap();
        assert_eq!(tracked_values(&ci), vec![2.0, 0.5]);
    }

    fn arb_series() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1usize..4, 1usize..30).prop_flat_map(|(d, t)| {
            proptest::collection::vec(proptest::collection::vec(0.1f64..10.0, d), t)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn monotone_in_epsilon(values in arb_series(), w in 1usize..10, e1 in 0.0f64..0.5, de in 0.0f64..0.5) {
            let s = SummarySeries::from_values(values).unwrap();
            if has_converged(&s, w, e1).unwrap() {
                prop_assert!(has_converged(&s, w, e1 + de).unwrap());
            }
        }

        #[test]
        fn scale_equivariant(values in arb_series(), w in 1usize..10, e in 0.0f64..0.5, c in prop_oneof![0.5f64..4.0, -4.0f64..-0.5]) {
            let s = SummarySeries::from_values(values.clone()).unwrap();
            let scaled = SummarySeries::from_values(
                values.iter().map(|v| v.iter().map(|x| x * c).collect()).collect()
            ).unwrap();
            // strict margins avoid flips from rounding at the boundary
            let lo = has_converged(&s, w, e * (1.0 - 1e-9)).unwrap();
            let hi = has_converged(&s, w, e * (1.0 + 1e-9) + 1e-15).unwrap();
            let sc = has_converged(&scaled, w, e).unwrap();
            prop_assert!(!lo || sc);
            prop_assert!(!sc || hi);
        }
    }
}
