//! Transform-domain family `Y -> P⁻¹ (Θ ⊙ (P Y Q)) Q⁻¹`.
//!
//! `Θ` is an `n x m` mask applied entrywise to the 3-D transform
//! coefficients. Because `P` and `Q` are orthogonal the SURE and risk
//! objectives separate per coefficient, which gives the closed forms below.

use nalgebra::DMatrix;

use super::dct::TransformPair;
use crate::error::{Error, Result};

/// Lower bound on continuous step-1 weights; also the weight given to an
/// exactly-zero coefficient.
pub const CONTINUOUS_WEIGHT_FLOOR: f64 = -1e6;

/// Threshold multiplier that minimizes SURE over binary masks.
pub const SURE_THRESHOLD_MULTIPLIER: f64 = std::f64::consts::SQRT_2;

/// Multiplier used by the classic BM3D hard-thresholding step.
pub const CLASSIC_THRESHOLD_MULTIPLIER: f64 = 2.7;

#[derive(Debug, Clone, PartialEq)]
pub struct MaskWeights(DMatrix<f64>);

impl MaskWeights {
    pub fn new(theta: DMatrix<f64>) -> Result<Self> {
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite mask weight".into()));
        }
        Ok(Self(theta))
    }

    pub fn theta(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn is_binary(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0 || v == 1.0)
    }
}

/// SURE minimizer over real masks, `1 − σ²/(PYQ)²`, floored at
/// [`CONTINUOUS_WEIGHT_FLOOR`]. Diagnostic only: with as many parameters as
/// data points its estimates are poor.
pub fn bm3d_step1_continuous(
    y: &DMatrix<f64>,
    transforms: &TransformPair,
    sigma: f64,
) -> MaskWeights {
    let s2 = sigma * sigma;
    let theta = transforms.forward(y).map(|c| {
        if s2 == 0.0 {
            1.0
        } else if c == 0.0 {
            CONTINUOUS_WEIGHT_FLOOR
        } else {
            (1.0 - s2 / (c * c)).max(CONTINUOUS_WEIGHT_FLOOR)
        }
    });
    MaskWeights(theta)
}

/// Hard threshold `𝟙(|PYQ| ≥ multiplier·σ)`. With `multiplier = √2` this is
/// the SURE minimizer over binary masks.
pub fn bm3d_step1_threshold(
    y: &DMatrix<f64>,
    transforms: &TransformPair,
    sigma: f64,
    multiplier: f64,
) -> MaskWeights {
    let tau = multiplier * sigma;
    MaskWeights(
        transforms
            .forward(y)
            .map(|c| if c.abs() >= tau { 1.0 } else { 0.0 }),
    )
}

/// Wiener shrinkage `(PXQ)² / (σ² + (PXQ)²)` from a pilot group.
pub fn bm3d_step2_wiener(
    x_pilot: &DMatrix<f64>,
    transforms: &TransformPair,
    sigma: f64,
) -> Result<MaskWeights> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "Wiener weights need sigma > 0, got {sigma}"
        )));
    }
    let s2 = sigma * sigma;
    Ok(MaskWeights(
        transforms.forward(x_pilot).map(|c| c * c / (s2 + c * c)),
    ))
}

/// `Pᵀ (Θ ⊙ (P Y Q)) Qᵀ`.
pub fn apply_masked_transform(
    y: &DMatrix<f64>,
    theta: &MaskWeights,
    transforms: &TransformPair,
) -> Result<DMatrix<f64>> {
    if theta.0.shape() != y.shape()
        || transforms.p().nrows() != y.nrows()
        || transforms.q().nrows() != y.ncols()
    {
        return Err(Error::InvalidParameter(format!(
            "group {:?}, mask {:?}, transforms {}x{} do not agree",
            y.shape(),
            theta.0.shape(),
            transforms.p().nrows(),
            transforms.q().nrows()
        )));
    }
    let coefficients = transforms.forward(y).component_mul(&theta.0);
    Ok(transforms.inverse(&coefficients))
}

/// `‖f_Θ(Y) − Y‖² + 2σ²⟨Θ, U⟩ − nmσ²`.
pub fn masked_sure(
    y: &DMatrix<f64>,
    theta: &MaskWeights,
    transforms: &TransformPair,
    sigma: f64,
) -> Result<f64> {
    let s2 = sigma * sigma;
    let residual = (apply_masked_transform(y, theta, transforms)? - y).norm_squared();
    Ok(residual + 2.0 * s2 * theta.0.sum() - (y.len() as f64) * s2)
}

/// `‖Θ ⊙ PXQ − PXQ‖² + σ²‖Θ‖²`.
pub fn masked_risk(
    x: &DMatrix<f64>,
    theta: &MaskWeights,
    transforms: &TransformPair,
    sigma: f64,
) -> f64 {
    let c = transforms.forward(x);
    (c.component_mul(&theta.0) - &c).norm_squared() + sigma * sigma * theta.0.norm_squared()
}
