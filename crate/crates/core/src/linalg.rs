//! Symmetric positive-definite solves shared by the closed-form weights.

use nalgebra::{Cholesky, DMatrix, Dyn};

/// Smallest accepted ratio `min(L_ii)^2 / max(L_ii)^2` of a Cholesky factor.
/// Below this the Gram matrix is treated as numerically singular.
pub const MIN_PIVOT_RATIO: f64 = 1e-14;

/// Cholesky factorization of `a`, or `None` when `a` is not numerically
/// positive definite.
pub fn spd_factor(a: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if a.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let chol = Cholesky::new(a)?;
    let l = chol.l_dirty();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..l.nrows() {
        let d = l[(i, i)];
        lo = lo.min(d * d);
        hi = hi.max(d * d);
    }
    (hi > 0.0 && lo / hi >= MIN_PIVOT_RATIO).then_some(chol)
}

/// Solves `a x = b` for SPD `a`.
pub fn spd_solve(a: DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    spd_factor(a).map(|c| c.solve(b))
}

/// `m^T m`.
pub fn gram(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.tr_mul(m)
}
