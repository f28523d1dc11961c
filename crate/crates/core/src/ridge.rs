//! NL-Ridge weights for the right-multiplication denoiser `Y -> Y Θ`.
//!
//! `Y` is an `n x m` group of noisy patches (one patch per column) and `Θ`
//! is `m x m`, so every output patch is a linear combination of the noisy
//! patches in its group.
//!
//! * Step 1 minimizes Stein's unbiased risk estimate
//!   `‖YΘ − Y‖² + 2nσ² tr Θ − nmσ²`, which gives `Θ₁ = I − nσ² (YᵀY)⁻¹`.
//! * Step 2 minimizes the exact risk `‖XΘ − X‖² + nσ²‖Θ‖²` with a pilot
//!   estimate standing in for the clean group `X`: a multivariate Ridge
//!   regression with solution `Θ₂ = (XᵀX + nσ²I)⁻¹ XᵀX`.
//!
//! Both closed forms go through a Cholesky factorization of the Gram matrix;
//! no explicit inverse is formed.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{gram, spd_solve};

/// Floor on squared column norms in [`column_weights`].
pub const COLUMN_NORM_FLOOR: f64 = 1e-12;

/// The `m x m` combination matrix Θ.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinationWeights(DMatrix<f64>);

impl CombinationWeights {
    pub fn new(theta: DMatrix<f64>) -> Result<Self> {
        if !theta.is_square() {
            return Err(Error::InvalidParameter(format!(
                "combination weights must be square, got {}x{}",
                theta.nrows(),
                theta.ncols()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "non-finite combination weight".into(),
            ));
        }
        Ok(Self(theta))
    }

    pub fn identity(m: usize) -> Self {
        Self(DMatrix::identity(m, m))
    }

    pub fn theta(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// `Y Θ`.
    pub fn apply(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        y * &self.0
    }

    pub fn estimate(self, y: &DMatrix<f64>) -> GroupEstimate {
        GroupEstimate {
            denoised: self.apply(y),
            theta: self,
        }
    }
}

/// A denoised group together with the weights that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupEstimate {
    pub denoised: DMatrix<f64>,
    pub theta: CombinationWeights,
}

/// `‖YΘ − Y‖²_F + 2nσ² tr(Θ) − nmσ²`.
pub fn sure_value(y: &DMatrix<f64>, theta: &CombinationWeights, sigma: f64) -> f64 {
    let (n, m) = y.shape();
    let s2 = sigma * sigma;
    let residual = (y * theta.theta() - y).norm_squared();
    residual + 2.0 * n as f64 * s2 * theta.theta().trace() - (n * m) as f64 * s2
}

/// `‖XΘ − X‖²_F + nσ²‖Θ‖²_F`, the quadratic risk of `Y -> YΘ` at clean `X`.
pub fn risk_value(x: &DMatrix<f64>, theta: &CombinationWeights, sigma: f64) -> f64 {
    let n = x.nrows() as f64;
    (x * theta.theta() - x).norm_squared() + n * sigma * sigma * theta.theta().norm_squared()
}

/// SURE-optimal weights `I − nσ²(YᵀY)⁻¹`.
///
/// Fails with [`Error::Singular`] when `YᵀY` is not numerically positive
/// definite; see [`step1_weights_or_identity`] for the pass-through fallback.
pub fn step1_weights(y: &DMatrix<f64>, sigma: f64) -> Result<CombinationWeights> {
    let (n, m) = y.shape();
    if sigma == 0.0 {
        return Ok(CombinationWeights::identity(m));
    }
    let scaled_identity = DMatrix::from_diagonal_element(m, m, n as f64 * sigma * sigma);
    let correction =
        spd_solve(gram(y), &scaled_identity).ok_or(Error::Singular("step-1 Gram matrix"))?;
    CombinationWeights::new(DMatrix::identity(m, m) - correction)
}

/// [`step1_weights`], falling back to `Θ = I` on a singular Gram matrix.
/// The flag reports whether the fallback fired.
pub fn step1_weights_or_identity(y: &DMatrix<f64>, sigma: f64) -> (CombinationWeights, bool) {
    match step1_weights(y, sigma) {
        Ok(w) => (w, false),
        Err(_) => (CombinationWeights::identity(y.ncols()), true),
    }
}

/// Ridge-regression weights `(XᵀX + nσ²I)⁻¹ XᵀX` for a pilot group `X`.
pub fn step2_weights(x_pilot: &DMatrix<f64>, sigma: f64) -> Result<CombinationWeights> {
    let (n, m) = x_pilot.shape();
    let g = gram(x_pilot);
    let regularized = &g + DMatrix::from_diagonal_element(m, m, n as f64 * sigma * sigma);
    let theta = spd_solve(regularized, &g).ok_or(Error::Singular("step-2 ridge system"))?;
    CombinationWeights::new(theta)
}

/// Reprojection weights `w_j = 1 / max(‖Θ_{·,j}‖², ε)`: the inverse of the
/// noise-variance gain of output column `j`.
pub fn column_weights(theta: &CombinationWeights) -> Vec<f64> {
    theta
        .theta()
        .column_iter()
        .map(|c| 1.0 / c.norm_squared().max(COLUMN_NORM_FLOOR))
        .collect()
}
