//! Weighted M-estimators that work directly on a [`WeightedSample`].
//!
//! Cost is linear in the number of distinct rows of the sample, never in its
//! nominal size, which is what makes each BLB resample `O(b)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::model::{DataMatrix, EstimateVector, WeightedSample};

/// Anything that maps a weighted sample of a dataset to an estimate.
///
/// The drivers are generic over this so tests can plug in degenerate
/// estimators.
pub trait Estimator: Sync {
    fn estimate(&self, data: &DataMatrix, sample: &WeightedSample) -> Result<EstimateVector>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    WeightedMean,
    LeastSquares,
    LogisticNewton,
}

/// One of the built-in estimators plus its solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorSpec {
    kind: EstimatorKind,
    max_iterations: usize,
    gradient_tolerance: f64,
    ridge_lambda: f64,
}

const MAX_HALVINGS: usize = 30;

/// Relative size of a predicted Newton decrease that the objective can no
/// longer resolve.
const STALL_FLOOR: f64 = 1e-10;

impl EstimatorSpec {
    pub fn new(
        kind: EstimatorKind,
        max_iterations: usize,
        gradient_tolerance: f64,
        ridge_lambda: f64,
    ) -> Result<Self> {
        if max_iterations == 0 {
            return Err(Error::InvalidConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        if !(gradient_tolerance > 0.0) {
            return Err(Error::InvalidConfig(
                "gradient_tolerance must be positive".into(),
            ));
        }
        if !(ridge_lambda >= 0.0 && ridge_lambda.is_finite()) {
            return Err(Error::InvalidConfig(
                "ridge_lambda must be nonnegative".into(),
            ));
        }
        Ok(Self {
            kind,
            max_iterations,
            gradient_tolerance,
            ridge_lambda,
        })
    }

    /// Defaults: 100 iterations, gradient tolerance 1e-8, no ridge.
    pub fn of(kind: EstimatorKind) -> Self {
        Self {
            kind,
            max_iterations: 100,
            gradient_tolerance: 1e-8,
            ridge_lambda: 0.0,
        }
    }

    pub fn weighted_mean() -> Self {
        Self::of(EstimatorKind::WeightedMean)
    }

    pub fn least_squares() -> Self {
        Self::of(EstimatorKind::LeastSquares)
    }

    pub fn logistic() -> Self {
        Self::of(EstimatorKind::LogisticNewton)
    }

    pub fn with_ridge(self, ridge_lambda: f64) -> Result<Self> {
        Self::new(
            self.kind,
            self.max_iterations,
            self.gradient_tolerance,
            ridge_lambda,
        )
    }

    pub fn with_solver(self, max_iterations: usize, gradient_tolerance: f64) -> Result<Self> {
        Self::new(
            self.kind,
            max_iterations,
            gradient_tolerance,
            self.ridge_lambda,
        )
    }

    pub fn kind(&self) -> EstimatorKind {
        self.kind
    }

    pub fn max_iterations(&self) -> usize {
        self.max_iterations
    }

    pub fn gradient_tolerance(&self) -> f64 {
        self.gradient_tolerance
    }

    pub fn ridge_lambda(&self) -> f64 {
        self.ridge_lambda
    }
}

impl Estimator for EstimatorSpec {
    fn estimate(&self, data: &DataMatrix, sample: &WeightedSample) -> Result<EstimateVector> {
        estimate(self, data, sample)
    }
}

/// Evaluates the estimator on `sample`, whose row indices refer to `data`.
pub fn estimate(
    spec: &EstimatorSpec,
    data: &DataMatrix,
    sample: &WeightedSample,
) -> Result<EstimateVector> {
    if let Some(&bad) = sample.rows().iter().find(|&&i| i >= data.n()) {
        return Err(Error::InvalidSubset(alloc::format!(
            "sample row {bad} out of range for n = {}",
            data.n()
        )));
    }
    if sample.iter().next().is_none() {
        return Err(Error::ZeroTotalWeight);
    }
    let values = match spec.kind {
        EstimatorKind::WeightedMean => weighted_mean(data, sample),
        EstimatorKind::LeastSquares => least_squares(data, sample, spec.ridge_lambda)?,
        EstimatorKind::LogisticNewton => logistic_newton(spec, data, sample)?.0,
    };
    EstimateVector::new(values)
}

/// Convenience: the estimate on every row with unit weight.
pub fn estimate_full(spec: &EstimatorSpec, data: &DataMatrix) -> Result<EstimateVector> {
    let sample = WeightedSample::uniform((0..data.n()).collect())?;
    estimate(spec, data, &sample)
}

fn weighted_mean(data: &DataMatrix, sample: &WeightedSample) -> Vec<f64> {
    let mut acc = vec![0.0; data.p()];
    let mut total = 0.0;
    for (i, w) in sample.iter() {
        let w = w as f64;
        total += w;
        for (a, x) in acc.iter_mut().zip(data.row(i)) {
            *a += w * x;
        }
    }
    acc.iter_mut().for_each(|a| *a /= total);
    acc
}

fn least_squares(data: &DataMatrix, sample: &WeightedSample, ridge: f64) -> Result<Vec<f64>> {
    let y = data.response().ok_or(Error::MissingResponse)?;
    let d = data.p();
    let mut gram = vec![0.0; d * d];
    let mut rhs = vec![0.0; d];
    for (i, w) in sample.iter() {
        let w = w as f64;
        let x = data.row(i);
        for a in 0..d {
            let wx = w * x[a];
            rhs[a] += wx * y[i];
            for b in 0..=a {
                gram[a * d + b] += wx * x[b];
            }
        }
    }
    for a in 0..d {
        gram[a * d + a] += ridge;
    }
    Ok(Cholesky::factor(&gram, d)?.solve(&rhs))
}

#[inline]
fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + libm::exp(-eta))
    } else {
        let e = libm::exp(eta);
        e / (1.0 + e)
    }
}

/// `log(1 + exp(eta))` without overflow.
#[inline]
fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + libm::log1p(libm::exp(-eta))
    } else {
        libm::log1p(libm::exp(eta))
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Penalized weighted negative log-likelihood.
fn logistic_objective(
    data: &DataMatrix,
    y: &[f64],
    sample: &WeightedSample,
    beta: &[f64],
    ridge: f64,
) -> f64 {
    let mut f = 0.0;
    for (i, w) in sample.iter() {
        let eta = dot(data.row(i), beta);
        f += w as f64 * (softplus(eta) - y[i] * eta);
    }
    f + 0.5 * ridge * dot(beta, beta)
}

/// Gradient of [`logistic_objective`] and the lower triangle of its Hessian.
fn logistic_derivatives(
    data: &DataMatrix,
    y: &[f64],
    sample: &WeightedSample,
    beta: &[f64],
    ridge: f64,
) -> (Vec<f64>, Vec<f64>) {
    let d = beta.len();
    let mut grad = vec![0.0; d];
    let mut hess = vec![0.0; d * d];
    for (i, w) in sample.iter() {
        let w = w as f64;
        let x = data.row(i);
        let p = sigmoid(dot(x, beta));
        let r = w * (p - y[i]);
        let c = w * p * (1.0 - p);
        for a in 0..d {
            grad[a] += r * x[a];
            let cx = c * x[a];
            for b in 0..=a {
                hess[a * d + b] += cx * x[b];
            }
        }
    }
    for a in 0..d {
        grad[a] += ridge * beta[a];
        hess[a * d + a] += ridge;
    }
    (grad, hess)
}

/// Objective increases this small are summation noise; line search treats
/// them as no increase.
#[inline]
fn noise_floor(f: f64) -> f64 {
    1e-12 * f.abs()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| f64::max(m, x.abs()))
}

/// Damped Newton from `β = 0`. Returns the coefficients and the number of
/// Newton steps taken.
///
/// Stops when the gradient max-norm reaches the tolerance, or when the line
/// search can make no progress and the predicted decrease is below the
/// objective's resolution (an absolute gradient tolerance is not always
/// attainable when the weights sum to a large nominal size).
pub(crate) fn logistic_newton(
    spec: &EstimatorSpec,
    data: &DataMatrix,
    sample: &WeightedSample,
) -> Result<(Vec<f64>, usize)> {
    let y = data.response().ok_or(Error::MissingResponse)?;
    let ridge = spec.ridge_lambda;
    let mut beta = vec![0.0; data.p()];
    let mut f = logistic_objective(data, y, sample, &beta, ridge);
    for iteration in 0..=spec.max_iterations {
        let (grad, hess) = logistic_derivatives(data, y, sample, &beta, ridge);
        let gradient_norm = max_abs(&grad);
        if !gradient_norm.is_finite() {
            return Err(Error::NonFiniteEstimate);
        }
        if gradient_norm <= spec.gradient_tolerance {
            // One more full step from inside the quadratic basin puts the
            // result at the rounding floor, so it no longer depends on where
            // the gradient happened to cross the tolerance.
            if let Ok(chol) = Cholesky::factor(&hess, beta.len()) {
                let step = chol.solve(&grad);
                let polished: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b - s).collect();
                let (g, _) = logistic_derivatives(data, y, sample, &polished, ridge);
                if max_abs(&g) <= gradient_norm {
                    return Ok((polished, iteration));
                }
            }
            return Ok((beta, iteration));
        }
        if iteration == spec.max_iterations {
            return Err(Error::NonConvergence {
                iterations: iteration,
                gradient_norm,
            });
        }
        let step = Cholesky::factor(&hess, beta.len())?.solve(&grad);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let candidate: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b - t * s).collect();
            let fc = logistic_objective(data, y, sample, &candidate, ridge);
            if fc <= f + noise_floor(f) {
                beta = candidate;
                f = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // No representable decrease left: the predicted Newton decrease is
            // below what the objective can resolve, so this is the optimum.
            let decrement: f64 = grad.iter().zip(&step).map(|(g, s)| g * s).sum();
            if 0.5 * decrement <= STALL_FLOOR * f.abs().max(1.0) {
                return Ok((beta, iteration));
            }
            return Err(Error::NonConvergence {
                iterations: iteration,
                gradient_norm,
            });
        }
    }
    unreachable!("loop returns on its final iteration")
}

/// Gradient max-norm of the penalized logistic objective at `beta`.
pub fn logistic_gradient_norm(
    spec: &EstimatorSpec,
    data: &DataMatrix,
    sample: &WeightedSample,
    beta: &[f64],
) -> Result<f64> {
    let y = data.response().ok_or(Error::MissingResponse)?;
    let (grad, _) = logistic_derivatives(data, y, sample, beta, spec.ridge_lambda);
    Ok(max_abs(&grad))
}
