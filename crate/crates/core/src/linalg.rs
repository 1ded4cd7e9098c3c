//! Dense symmetric positive-definite solves for the small `d × d` systems the
//! estimators form.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Pivots below this fraction of the largest diagonal entry count as singular.
const RELATIVE_PIVOT_FLOOR: f64 = 1e-12;

/// Lower-triangular Cholesky factor of a row-major `d × d` matrix.
pub(crate) struct Cholesky {
    d: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Factors `a` (only the lower triangle is read).
    pub(crate) fn factor(a: &[f64], d: usize) -> Result<Self> {
        debug_assert_eq!(a.len(), d * d);
        let scale = (0..d).map(|i| a[i * d + i].abs()).fold(0.0, f64::max);
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::Singular);
        }
        let floor = scale * RELATIVE_PIVOT_FLOOR;
        let mut l = alloc::vec![0.0; d * d];
        for j in 0..d {
            let mut diag = a[j * d + j];
            for k in 0..j {
                diag -= l[j * d + k] * l[j * d + k];
            }
            if !(diag > floor) {
                return Err(Error::Singular);
            }
            let ljj = libm::sqrt(diag);
            l[j * d + j] = ljj;
            for i in j + 1..d {
                let mut v = a[i * d + j];
                for k in 0..j {
                    v -= l[i * d + k] * l[j * d + k];
                }
                l[i * d + j] = v / ljj;
            }
        }
        Ok(Self { d, l })
    }

    /// Solves `A x = rhs`.
    pub(crate) fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let d = self.d;
        let l = &self.l;
        let mut y = rhs.to_vec();
        for i in 0..d {
            let mut v = y[i];
            for k in 0..i {
                v -= l[i * d + k] * y[k];
            }
            y[i] = v / l[i * d + i];
        }
        for i in (0..d).rev() {
            let mut v = y[i];
            for k in i + 1..d {
                v -= l[k * d + i] * y[k];
            }
            y[i] = v / l[i * d + i];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_spd_system() {
        // A = [[4, 2], [2, 3]], x = (1, -1) => b = (2, -1)
        let c = Cholesky::factor(&[4.0, 2.0, 2.0, 3.0], 2).unwrap();
        let x = c.solve(&[2.0, -1.0]);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn rank_deficient_is_singular() {
        assert!(matches!(
            Cholesky::factor(&[1.0, 1.0, 1.0, 1.0], 2),
            Err(Error::Singular)
        ));
        assert!(matches!(Cholesky::factor(&[0.0], 1), Err(Error::Singular)));
    }
}
