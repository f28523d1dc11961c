//! Affine family `Y -> ΘY + βuᵀ` with `Θ` acting on the pixel dimension.
//!
//! Each patch (column of `Y`) is filtered by the same `n x n` matrix and
//! shifted by the same offset `β`. Minimizing SURE and the pilot risk over
//! this family recovers the two NL-Bayes filters, expressed through the
//! group's empirical mean `μ` and covariance `C` (normalized by `1/m`).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::spd_solve;

/// Relative diagonal jitter added to a singular step-1 covariance.
pub const COVARIANCE_JITTER: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GroupMoments {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

/// Empirical mean and biased (`1/m`) covariance of the columns of `y`.
pub fn group_moments(y: &DMatrix<f64>) -> GroupMoments {
    let m = y.ncols() as f64;
    let mean = y.column_mean();
    let mut centered = y.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let covariance = (&centered * centered.transpose()) / m;
    GroupMoments { mean, covariance }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineWeights {
    pub theta: DMatrix<f64>,
    pub beta: DVector<f64>,
}

impl AffineWeights {
    pub fn new(theta: DMatrix<f64>, beta: DVector<f64>) -> Result<Self> {
        if !theta.is_square() || theta.nrows() != beta.len() {
            return Err(Error::InvalidParameter(format!(
                "affine weights need n x n theta and n-vector beta, got {:?} and {}",
                theta.shape(),
                beta.len()
            )));
        }
        if theta.iter().chain(beta.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite affine weight".into()));
        }
        Ok(Self { theta, beta })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            theta: DMatrix::identity(n, n),
            beta: DVector::zeros(n),
        }
    }

    /// `ΘY + βuᵀ`.
    pub fn apply(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = &self.theta * y;
        for mut col in out.column_iter_mut() {
            col += &self.beta;
        }
        out
    }
}

/// Step-1 result and whether the covariance needed regularizing.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineStep1 {
    pub weights: AffineWeights,
    pub regularized: bool,
}

/// SURE minimizer `Θ = (C − σ²I)C⁻¹`, `β = (I − Θ)μ`.
///
/// A singular `C` gets `COVARIANCE_JITTER · tr(C)/n · I` added. A group with
/// no spread at all (`tr C = 0`) gets the pass-through `Θ = I`, `β = 0`.
pub fn nlbayes_step1(y: &DMatrix<f64>, sigma: f64) -> AffineStep1 {
    let n = y.nrows();
    if sigma == 0.0 {
        return AffineStep1 {
            weights: AffineWeights::identity(n),
            regularized: false,
        };
    }
    let GroupMoments { mean, covariance } = group_moments(y);
    let shifted = &covariance - DMatrix::from_diagonal_element(n, n, sigma * sigma);
    // Θᵀ = C⁻¹(C − σ²I) since C is symmetric
    let solve = |c: DMatrix<f64>| spd_solve(c, &shifted).map(|t| t.transpose());
    let (theta, regularized) = match solve(covariance.clone()) {
        Some(t) => (t, false),
        None => {
            let jitter = COVARIANCE_JITTER * covariance.trace() / n as f64;
            let retry = (jitter > 0.0)
                .then(|| solve(&covariance + DMatrix::from_diagonal_element(n, n, jitter)))
                .flatten();
            match retry {
                Some(t) => (t, true),
                None => {
                    return AffineStep1 {
                        weights: AffineWeights::identity(n),
                        regularized: true,
                    }
                }
            }
        }
    };
    let beta = &mean - &theta * &mean;
    AffineStep1 {
        weights: AffineWeights { theta, beta },
        regularized,
    }
}

/// Pilot-risk minimizer `Θ = C(C + σ²I)⁻¹`, `β = (I − Θ)μ`.
pub fn nlbayes_step2(x_pilot: &DMatrix<f64>, sigma: f64) -> Result<AffineWeights> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "affine step 2 needs sigma > 0, got {sigma}"
        )));
    }
    let n = x_pilot.nrows();
    let GroupMoments { mean, covariance } = group_moments(x_pilot);
    let regularized = &covariance + DMatrix::from_diagonal_element(n, n, sigma * sigma);
    let theta = spd_solve(regularized, &covariance)
        .ok_or(Error::Singular("affine step-2 system"))?
        .transpose();
    let beta = &mean - &theta * &mean;
    AffineWeights::new(theta, beta)
}

/// `‖ΘY + βuᵀ − Y‖² + 2mσ² tr Θ − nmσ²`.
pub fn affine_sure(y: &DMatrix<f64>, w: &AffineWeights, sigma: f64) -> f64 {
    let (n, m) = y.shape();
    let s2 = sigma * sigma;
    (w.apply(y) - y).norm_squared() + 2.0 * m as f64 * s2 * w.theta.trace() - (n * m) as f64 * s2
}

/// `‖ΘX + βuᵀ − X‖² + mσ²‖Θ‖²`.
pub fn affine_risk(x: &DMatrix<f64>, w: &AffineWeights, sigma: f64) -> f64 {
    let m = x.ncols() as f64;
    (w.apply(x) - x).norm_squared() + m * sigma * sigma * w.theta.norm_squared()
}
