//! Orthonormal DCT-II matrices and separable transform pairs.

use nalgebra::DMatrix;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Tolerance on `‖MMᵀ − I‖_F` for a matrix to count as orthogonal.
pub const ORTHOGONALITY_TOL: f64 = 1e-10;

/// `k x k` orthonormal DCT-II matrix; row `f` is the frequency-`f` basis
/// vector, so `M x` gives the coefficients of `x`.
pub fn dct_matrix(k: usize) -> DMatrix<f64> {
    let kf = k as f64;
    DMatrix::from_fn(k, k, |f, i| {
        let scale = if f == 0 {
            (1.0 / kf).sqrt()
        } else {
            (2.0 / kf).sqrt()
        };
        scale * (PI * (2 * i + 1) as f64 * f as f64 / (2.0 * kf)).cos()
    })
}

pub(crate) fn orthogonality_error(m: &DMatrix<f64>) -> f64 {
    (m * m.transpose() - DMatrix::identity(m.nrows(), m.nrows())).norm()
}

/// Orthogonal `P` (`n x n`, acts on patch pixels) and `Q` (`m x m`, acts
/// along the group) of a separable 3-D transform `Y -> P Y Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformPair {
    p: DMatrix<f64>,
    q: DMatrix<f64>,
}

impl TransformPair {
    pub fn new(p: DMatrix<f64>, q: DMatrix<f64>) -> Result<Self> {
        for (name, m) in [("P", &p), ("Q", &q)] {
            if !m.is_square() {
                return Err(Error::InvalidParameter(format!("{name} must be square")));
            }
            let err = orthogonality_error(m);
            if !(err <= ORTHOGONALITY_TOL) {
                return Err(Error::InvalidParameter(format!(
                    "{name} is not orthogonal (‖MMᵀ − I‖ = {err:e})"
                )));
            }
        }
        Ok(Self { p, q })
    }

    /// 2-D DCT on row-major `patch_side x patch_side` patches (Kronecker
    /// product of two 1-D DCTs) and a 1-D DCT across `group_size` patches.
    pub fn dct(patch_side: usize, group_size: usize) -> Self {
        let d = dct_matrix(patch_side);
        Self {
            p: d.kronecker(&d),
            q: dct_matrix(group_size).transpose(),
        }
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// `P Y Q`.
    pub fn forward(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        &self.p * y * &self.q
    }

    /// `Pᵀ C Qᵀ`, the inverse of [`forward`](Self::forward).
    pub fn inverse(&self, coefficients: &DMatrix<f64>) -> DMatrix<f64> {
        self.p.tr_mul(coefficients) * self.q.transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_one() {
        assert_eq!(dct_matrix(1), DMatrix::from_element(1, 1, 1.0));
    }

    #[test]
    fn size_two_by_hand() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let expect = DMatrix::from_row_slice(2, 2, &[h, h, h, -h]);
        assert!((dct_matrix(2) - expect).norm() < 1e-15);
    }

    #[test]
    fn orthonormal_up_to_64() {
        for k in 1..=64 {
            assert!(orthogonality_error(&dct_matrix(k)) <= 1e-12, "k = {k}");
        }
    }

    #[test]
    fn kronecker_matches_separable_2d() {
        let side = 3;
        let d = dct_matrix(side);
        let pair = TransformPair::dct(side, 4);
        let block = DMatrix::from_fn(side, side, |r, c| (r * 5 + c * c) as f64);
        let via_2d = &d * &block * d.transpose();
        let vec_r = DMatrix::from_fn(side * side, 1, |k, _| block[(k / side, k % side)]);
        let via_kron = pair.p() * vec_r;
        for k in 0..side * side {
            assert!((via_kron[(k, 0)] - via_2d[(k / side, k % side)]).abs() < 1e-12);
        }
    }

    #[test]
    fn pair_round_trip() {
        let pair = TransformPair::dct(4, 6);
        let y = DMatrix::from_fn(16, 6, |r, c| ((r * 7 + c * 13) % 17) as f64);
        assert!((pair.inverse(&pair.forward(&y)) - &y).norm() < 1e-10);
    }

    #[test]
    fn rejects_non_orthogonal() {
        let p = DMatrix::from_diagonal_element(2, 2, 2.0);
        assert!(TransformPair::new(p, DMatrix::identity(2, 2)).is_err());
        assert!(TransformPair::new(DMatrix::identity(2, 2), dct_matrix(3)).is_ok());
    }
}
