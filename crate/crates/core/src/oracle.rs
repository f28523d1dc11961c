//! Independent checks for the closed-form weights.
//!
//! Nothing here calls into `ridge`, `families` or `linalg`: Gram matrices,
//! solves and transforms are re-derived with explicit loops so a bug in the
//! production path cannot validate itself.

#![allow(clippy::needless_range_loop)]

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::families::{MaskWeights, TransformPair};
use crate::noise::GaussianSource;
use crate::ridge::CombinationWeights;

/// Largest `n·m` accepted by [`exhaustive_binary_mask`].
pub const MAX_MASK_ENTRIES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloReport {
    pub mean: f64,
    pub standard_error: f64,
    pub trials: usize,
    pub seed: u64,
}

impl MonteCarloReport {
    /// `|mean − value|` in units of the standard error.
    pub fn z_score(&self, value: f64) -> f64 {
        let gap = (self.mean - value).abs();
        if self.standard_error == 0.0 {
            if gap == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            gap / self.standard_error
        }
    }

    pub fn agrees_with(&self, value: f64, standard_errors: f64) -> bool {
        self.z_score(value) <= standard_errors
    }

    fn from_samples(samples: &[f64], seed: u64) -> Self {
        let t = samples.len() as f64;
        // shift by the first sample so constant statistics come out exact
        let shift = samples[0];
        let mean_offset = samples.iter().map(|v| v - shift).sum::<f64>() / t;
        let mean = shift + mean_offset;
        let var = samples
            .iter()
            .map(|v| (v - shift - mean_offset).powi(2))
            .sum::<f64>()
            / (t - 1.0);
        Self {
            mean,
            standard_error: (var / t).sqrt(),
            trials: samples.len(),
            seed,
        }
    }
}

/// Monte-Carlo mean of `statistic(X + W)` over `trials` draws of
/// `W ~ N(0, σ²)`. Trial `t` draws from stream `t` of `seed`, so the result
/// does not depend on scheduling.
pub fn mc_expectation<F>(
    x: &DMatrix<f64>,
    sigma: f64,
    trials: usize,
    seed: u64,
    statistic: F,
) -> Result<MonteCarloReport>
where
    F: Fn(&DMatrix<f64>) -> f64 + Sync,
{
    if trials < 2 {
        return Err(Error::InvalidParameter("need at least 2 trials".into()));
    }
    let samples: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut src = GaussianSource::new(seed, t as u64);
            let y = x.map(|v| v + sigma * src.standard());
            statistic(&y)
        })
        .collect();
    Ok(MonteCarloReport::from_samples(&samples, seed))
}

fn frobenius_distance_sq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let d = a[(i, j)] - b[(i, j)];
            s += d * d;
        }
    }
    s
}

/// Monte-Carlo estimate of `E‖f(X + W) − X‖²_F`.
pub fn mc_risk<F>(
    x: &DMatrix<f64>,
    estimator: F,
    sigma: f64,
    trials: usize,
    seed: u64,
) -> Result<MonteCarloReport>
where
    F: Fn(&DMatrix<f64>) -> DMatrix<f64> + Sync,
{
    if trials < 100 {
        return Err(Error::InvalidParameter(format!(
            "Monte-Carlo risk needs at least 100 trials, got {trials}"
        )));
    }
    mc_expectation(x, sigma, trials, seed, |y| {
        frobenius_distance_sq(&estimator(y), x)
    })
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let k = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs()));
    for col in 0..k {
        let pivot = (col..k).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if !(a[pivot][col].abs() > 1e-13 * scale) {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..k {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for c in col..k {
                    a[row][c] -= f * a[col][c];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; k];
    for row in (0..k).rev() {
        let mut s = b[row];
        for c in row + 1..k {
            s -= a[row][c] * x[c];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

/// Minimizes `‖YΘ − Y‖² + 2nσ² tr Θ` one column at a time: column `j`
/// solves `(YᵀY) θ = YᵀY_{·,j} − nσ² e_j`.
pub fn numeric_minimize_sure(y: &DMatrix<f64>, sigma: f64) -> Result<CombinationWeights> {
    let (n, m) = y.shape();
    let lambda = n as f64 * sigma * sigma;
    let mut g = vec![vec![0.0; m]; m];
    for a in 0..m {
        for b in 0..m {
            let mut s = 0.0;
            for i in 0..n {
                s += y[(i, a)] * y[(i, b)];
            }
            g[a][b] = s;
        }
    }
    let mut theta = DMatrix::zeros(m, m);
    for j in 0..m {
        let mut rhs: Vec<f64> = (0..m).map(|a| g[a][j]).collect();
        rhs[j] -= lambda;
        let col = gauss_solve(g.clone(), rhs).ok_or(Error::Singular("oracle Gram matrix"))?;
        for (a, v) in col.into_iter().enumerate() {
            theta[(a, j)] = v;
        }
    }
    CombinationWeights::new(theta)
}

fn triple_product(p: &DMatrix<f64>, y: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = y.shape();
    let mut py = DMatrix::zeros(n, m);
    for i in 0..n {
        for k in 0..m {
            let mut s = 0.0;
            for l in 0..n {
                s += p[(i, l)] * y[(l, k)];
            }
            py[(i, k)] = s;
        }
    }
    let mut out = DMatrix::zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for k in 0..m {
                s += py[(i, k)] * q[(k, j)];
            }
            out[(i, j)] = s;
        }
    }
    out
}

/// Searches all `2^(nm)` binary masks for the one with the lowest
/// transform-family SURE. Ties keep the mask enumerated first.
pub fn exhaustive_binary_mask(
    y: &DMatrix<f64>,
    transforms: &TransformPair,
    sigma: f64,
) -> Result<MaskWeights> {
    let (n, m) = y.shape();
    let entries = n * m;
    if entries > MAX_MASK_ENTRIES {
        return Err(Error::InstanceTooLarge {
            entries,
            limit: MAX_MASK_ENTRIES,
        });
    }
    let p = transforms.p();
    let q = transforms.q();
    let pt = p.transpose();
    let qt = q.transpose();
    let coefficients = triple_product(p, y, q);
    let s2 = sigma * sigma;

    let mut best: Option<(f64, u32)> = None;
    for bits in 0u32..(1u32 << entries) {
        let mask = DMatrix::from_fn(n, m, |i, j| ((bits >> (i * m + j)) & 1) as f64);
        let kept = DMatrix::from_fn(n, m, |i, j| mask[(i, j)] * coefficients[(i, j)]);
        let estimate = triple_product(&pt, &kept, &qt);
        let ones = bits.count_ones() as f64;
        let sure = frobenius_distance_sq(&estimate, y) + 2.0 * s2 * ones - (entries as f64) * s2;
        if best.is_none_or(|(v, _)| sure < v) {
            best = Some((sure, bits));
        }
    }
    let (_, bits) = best.expect("at least one mask");
    MaskWeights::new(DMatrix::from_fn(n, m, |i, j| {
        ((bits >> (i * m + j)) & 1) as f64
    }))
}

/// Smallest objective value found among `trials` random perturbations of
/// `center`. Perturbation scales cycle through 1, 0.1, 0.01 and 0.001 times
/// the RMS entry of `center` (at least 1).
pub fn perturbation_minimum<F>(center: &DMatrix<f64>, trials: usize, seed: u64, objective: F) -> f64
where
    F: Fn(&DMatrix<f64>) -> f64,
{
    let rms = (center.iter().map(|v| v * v).sum::<f64>() / center.len() as f64)
        .sqrt()
        .max(1.0);
    let mut src = GaussianSource::new(seed, 0);
    let mut best = f64::INFINITY;
    for t in 0..trials {
        let scale = rms * 10f64.powi(-((t % 4) as i32));
        let candidate = center.map(|v| v + scale * src.standard());
        best = best.min(objective(&candidate));
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::dct_matrix;

    #[test]
    fn identity_estimator_risk() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 3.0, 0.5, 7.0, -1.0]);
        let r = mc_risk(&x, |y| y.clone(), 1.0, 20_000, 1).unwrap();
        assert!(r.agrees_with(6.0, 3.0), "{r:?}");
    }

    #[test]
    fn zero_estimator_is_exact() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 3.0, 0.5, 7.0, -1.0]);
        let r = mc_risk(&x, |y| DMatrix::zeros(y.nrows(), y.ncols()), 3.0, 500, 2).unwrap();
        assert_eq!(r.mean, x.norm_squared());
        assert_eq!(r.standard_error, 0.0);
    }

    #[test]
    fn half_identity_at_zero_signal() {
        let x = DMatrix::zeros(2, 3);
        let sigma = 2.0;
        let r = mc_risk(&x, |y| y * 0.5, sigma, 20_000, 3).unwrap();
        // n σ² ‖0.5 I‖² = 2 · 4 · 0.75
        assert!(
            r.agrees_with(2.0 * sigma * sigma * 0.25 * 3.0, 3.0),
            "{r:?}"
        );
    }

    #[test]
    fn deterministic_and_trial_floor() {
        let x = DMatrix::from_element(2, 2, 1.0);
        let a = mc_risk(&x, |y| y.clone(), 1.0, 200, 9).unwrap();
        let b = mc_risk(&x, |y| y.clone(), 1.0, 200, 9).unwrap();
        assert_eq!(a, b);
        assert!(mc_risk(&x, |y| y.clone(), 1.0, 99, 9).is_err());
    }

    #[test]
    fn standard_error_scales_inverse_sqrt() {
        let x = DMatrix::from_element(2, 3, 2.0);
        let small = mc_risk(&x, |y| y.clone(), 1.0, 1_000, 4).unwrap();
        let large = mc_risk(&x, |y| y.clone(), 1.0, 100_000, 4).unwrap();
        let ratio = small.standard_error / large.standard_error;
        assert!((ratio - 10.0).abs() < 1.5, "ratio {ratio}");
    }

    #[test]
    fn numeric_sure_hand_cases() {
        let y = DMatrix::from_diagonal_element(2, 2, 2.0);
        let t = numeric_minimize_sure(&y, 1.0).unwrap();
        assert!((t.theta() - DMatrix::from_diagonal_element(2, 2, 0.5)).norm() < 1e-15);
        let y = DMatrix::from_fn(5, 3, |i, j| ((i * 3 + j * 7) % 11) as f64);
        assert_eq!(
            numeric_minimize_sure(&y, 0.0).unwrap().theta(),
            &DMatrix::identity(3, 3)
        );
        let flat = DMatrix::from_element(5, 3, 1.0);
        assert!(numeric_minimize_sure(&flat, 1.0).is_err());
    }

    #[test]
    fn exhaustive_mask_hand_case() {
        let pair = TransformPair::new(dct_matrix(2), dct_matrix(2).transpose()).unwrap();
        let c = DMatrix::from_row_slice(2, 2, &[0.5, 1.0, 2.0, 3.0]);
        let y = pair.inverse(&c);
        let mask = exhaustive_binary_mask(&y, &pair, 1.0).unwrap();
        assert_eq!(
            mask.theta(),
            &DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1.0])
        );
        let all = exhaustive_binary_mask(&y, &pair, 0.0).unwrap();
        assert!(all.theta().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn exhaustive_mask_size_limit() {
        let pair = TransformPair::dct(3, 2);
        assert!(matches!(
            exhaustive_binary_mask(&DMatrix::zeros(9, 2), &pair, 1.0),
            Err(Error::InstanceTooLarge { entries: 18, .. })
        ));
    }

    #[test]
    fn perturbation_minimum_of_convex_bowl() {
        let center = DMatrix::from_element(2, 2, 3.0);
        let f = |t: &DMatrix<f64>| t.iter().map(|v| (v - 3.0).powi(2)).sum::<f64>();
        let best = perturbation_minimum(&center, 100, 0, f);
        assert!(best > 0.0);
        assert!(best < 1e-4);
    }
}
