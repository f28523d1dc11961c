//! Cross-checks of the closed-form weights against the brute-force oracles.
//!
//! Each check is deterministic for a given seed and returns a named outcome
//! instead of panicking, so it can back both a test suite and the CLI.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::families::bm3d::SURE_THRESHOLD_MULTIPLIER;
use crate::families::{
    affine_sure, apply_masked_transform, bm3d_step1_threshold, dct_matrix, masked_sure,
    AffineWeights, MaskWeights, TransformPair,
};
use crate::noise::GaussianSource;
use crate::oracle::{
    exhaustive_binary_mask, mc_expectation, numeric_minimize_sure, perturbation_minimum,
};
use crate::ridge::{risk_value, step1_weights, step2_weights, sure_value, CombinationWeights};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Random instances for the weight-solver comparison.
    pub solver_instances: usize,
    /// Perturbations tried around each step-2 solution.
    pub perturbations: usize,
    /// Configurations per family in the unbiasedness check.
    pub sure_configs: usize,
    /// Noise draws per Monte-Carlo estimate.
    pub mc_trials: usize,
    /// Configurations in the expected-loss identity check.
    pub identity_configs: usize,
    /// Random 2x2 instances for the binary-mask enumeration.
    pub mask_instances: usize,
    /// Allowed Monte-Carlo deviation, in standard errors.
    pub z_limit: f64,
    /// Allowed relative gap between the two solver paths.
    pub solver_rel_tol: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            solver_instances: 100,
            perturbations: 1000,
            sure_configs: 10,
            mc_trials: 100_000,
            identity_configs: 5,
            mask_instances: 50,
            z_limit: 3.0,
            solver_rel_tol: 1e-8,
        }
    }
}

fn gaussian(rows: usize, cols: usize, scale: f64, src: &mut GaussianSource) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * src.standard())
}

fn timed(name: &'static str, f: impl FnOnce() -> (bool, String)) -> CheckOutcome {
    let start = Instant::now();
    let (passed, detail) = f();
    CheckOutcome {
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Step-1 weights against the per-column oracle, and step-2 weights against
/// random perturbations of the risk.
pub fn check_closed_forms(cfg: &VerifyConfig) -> CheckOutcome {
    timed("closed-form weights", || {
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
        let mut worst_rel = 0.0f64;
        let mut perturbation_failures = 0;
        let mut errors = Vec::new();
        for k in 0..cfg.solver_instances {
            let side = rng.random_range(3..=7usize);
            let n = side * side;
            let m = rng.random_range(4..=18usize).min(n);
            let sigma = rng.random_range(1.0..=50.0);
            let mut src = GaussianSource::new(cfg.seed.wrapping_add(1), k as u64);
            let x = gaussian(n, m, 40.0, &mut src).add_scalar(128.0);
            let y = &x + gaussian(n, m, sigma, &mut src);

            match (step1_weights(&y, sigma), numeric_minimize_sure(&y, sigma)) {
                (Ok(a), Ok(b)) => {
                    let rel = (a.theta() - b.theta()).norm() / b.theta().norm().max(1.0);
                    worst_rel = worst_rel.max(rel);
                }
                (a, b) => errors.push(format!("instance {k}: {:?} / {:?}", a.err(), b.err())),
            }

            let theta2 = match step2_weights(&x, sigma) {
                Ok(t) => t,
                Err(e) => {
                    errors.push(format!("instance {k}: step 2 {e}"));
                    continue;
                }
            };
            let r0 = risk_value(&x, &theta2, sigma);
            let best = perturbation_minimum(
                theta2.theta(),
                cfg.perturbations,
                cfg.seed ^ k as u64,
                |t| {
                    risk_value(
                        &x,
                        &CombinationWeights::new(t.clone()).expect("finite"),
                        sigma,
                    )
                },
            );
            if r0 > best * (1.0 + 1e-12) {
                perturbation_failures += 1;
            }
        }
        let passed =
            errors.is_empty() && worst_rel <= cfg.solver_rel_tol && perturbation_failures == 0;
        let mut detail = format!(
            "{} instances, worst step-1 relative gap {worst_rel:.2e} (limit {:.0e}), {perturbation_failures} step-2 instances beaten by a perturbation",
            cfg.solver_instances, cfg.solver_rel_tol
        );
        if !errors.is_empty() {
            detail.push_str(&format!("; errors: {}", errors.join(", ")));
        }
        (passed, detail)
    })
}

/// Family-specific SURE minus the squared loss of the same draw; the mean
/// must be zero within `z_limit` standard errors for every configuration.
fn sure_unbiased_for<F>(cfg: &VerifyConfig, family_seed: u64, make: F) -> (bool, String)
where
    F: Fn(
        &mut GaussianSource,
    ) -> (
        DMatrix<f64>,
        f64,
        Box<dyn Fn(&DMatrix<f64>) -> (f64, DMatrix<f64>) + Sync>,
    ),
{
    let mut worst = 0.0f64;
    let mut failures = 0;
    for k in 0..cfg.sure_configs {
        let mut src = GaussianSource::new(cfg.seed.wrapping_add(family_seed), k as u64);
        let (x, sigma, estimator) = make(&mut src);
        let report = mc_expectation(&x, sigma, cfg.mc_trials, cfg.seed ^ (k as u64 + 1), |y| {
            let (sure, estimate) = estimator(y);
            sure - (estimate - &x).norm_squared()
        })
        .expect("trials >= 2");
        let z = report.z_score(0.0);
        worst = worst.max(z);
        if z > cfg.z_limit {
            failures += 1;
        }
    }
    (
        failures == 0,
        format!("worst |z| {worst:.2} over {} configs", cfg.sure_configs),
    )
}

/// SURE is unbiased for the risk in all three weight families (n = 4, m = 3).
pub fn check_sure_unbiased(cfg: &VerifyConfig) -> CheckOutcome {
    timed("SURE unbiasedness", || {
        let (n, m) = (4, 3);
        let ridge = sure_unbiased_for(cfg, 10, |src| {
            let x = gaussian(n, m, 10.0, src);
            let sigma = 1.0 + 4.0 * src.standard().abs();
            let theta = CombinationWeights::new(gaussian(m, m, 0.5, src)).expect("finite");
            let f = move |y: &DMatrix<f64>| (sure_value(y, &theta, sigma), theta.apply(y));
            (x, sigma, Box::new(f))
        });
        let affine = sure_unbiased_for(cfg, 20, |src| {
            let x = gaussian(n, m, 10.0, src);
            let sigma = 1.0 + 4.0 * src.standard().abs();
            let w = AffineWeights::new(
                gaussian(n, n, 0.5, src),
                DVector::from_fn(n, |_, _| 3.0 * src.standard()),
            )
            .expect("finite");
            let f = move |y: &DMatrix<f64>| (affine_sure(y, &w, sigma), w.apply(y));
            (x, sigma, Box::new(f))
        });
        let masked = sure_unbiased_for(cfg, 30, |src| {
            let x = gaussian(n, m, 10.0, src);
            let sigma = 1.0 + 4.0 * src.standard().abs();
            let tp = TransformPair::dct(2, m);
            let mask = MaskWeights::new(gaussian(n, m, 0.7, src)).expect("finite");
            let f = move |y: &DMatrix<f64>| {
                let sure = masked_sure(y, &mask, &tp, sigma).expect("shapes agree");
                (
                    sure,
                    apply_masked_transform(y, &mask, &tp).expect("shapes agree"),
                )
            };
            (x, sigma, Box::new(f))
        });
        let passed = ridge.0 && affine.0 && masked.0;
        (
            passed,
            format!(
                "linear: {}; affine: {}; transform mask: {}",
                ridge.1, affine.1, masked.1
            ),
        )
    })
}

/// `E‖(A + W)Θ − B‖² = ‖AΘ − B‖² + nσ²‖Θ‖²` for `A ≠ B`.
pub fn check_expected_loss_identity(cfg: &VerifyConfig) -> CheckOutcome {
    timed("expected-loss identity", || {
        let mut worst = 0.0f64;
        let mut failures = 0;
        for k in 0..cfg.identity_configs {
            let mut src = GaussianSource::new(cfg.seed.wrapping_add(40), k as u64);
            let (n, m) = (3 + k % 3, 2 + k % 4);
            let a = gaussian(n, m, 10.0, &mut src);
            let b = gaussian(n, m, 10.0, &mut src);
            let theta = gaussian(m, m, 0.6, &mut src);
            let sigma = 0.5 + 3.0 * src.standard().abs();
            let closed =
                (&a * &theta - &b).norm_squared() + n as f64 * sigma * sigma * theta.norm_squared();
            let report =
                mc_expectation(&a, sigma, cfg.mc_trials, cfg.seed ^ (100 + k as u64), |y| {
                    (y * &theta - &b).norm_squared()
                })
                .expect("trials >= 2");
            let z = report.z_score(closed);
            worst = worst.max(z);
            if z > cfg.z_limit {
                failures += 1;
            }
        }
        (
            failures == 0,
            format!("worst |z| {worst:.2} over {} configs", cfg.identity_configs),
        )
    })
}

/// Exhaustive search over all 16 binary masks of a 2x2 group against the
/// `|coefficient| ≥ √2σ` rule. Coefficients within a relative `1e-9` of the
/// threshold are ties and skipped.
pub fn check_binary_mask_threshold(cfg: &VerifyConfig) -> CheckOutcome {
    timed("binary-mask threshold", || {
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed.wrapping_add(50));
        let tp = TransformPair::new(dct_matrix(2), dct_matrix(2).transpose()).expect("orthonormal");
        let mut disagreements = 0;
        let mut ties = 0;
        for _ in 0..cfg.mask_instances {
            let sigma: f64 = rng.random_range(0.5..=5.0);
            let coefficients =
                DMatrix::from_fn(2, 2, |_, _| rng.random_range(-4.0 * sigma..=4.0 * sigma));
            let y = tp.inverse(&coefficients);
            let brute = exhaustive_binary_mask(&y, &tp, sigma).expect("2x2 fits");
            let rule = bm3d_step1_threshold(&y, &tp, sigma, SURE_THRESHOLD_MULTIPLIER);
            let observed = tp.forward(&y);
            for i in 0..2 {
                for j in 0..2 {
                    let tau = SURE_THRESHOLD_MULTIPLIER * sigma;
                    if (observed[(i, j)].abs() - tau).abs() <= 1e-9 * tau {
                        ties += 1;
                    } else if brute.theta()[(i, j)] != rule.theta()[(i, j)] {
                        disagreements += 1;
                    }
                }
            }
        }
        (
            disagreements == 0,
            format!(
                "{} instances, {disagreements} disagreeing entries, {ties} ties skipped",
                cfg.mask_instances
            ),
        )
    })
}

/// Runs every check in order.
pub fn run_all(cfg: &VerifyConfig) -> Vec<CheckOutcome> {
    vec![
        check_closed_forms(cfg),
        check_sure_unbiased(cfg),
        check_expected_loss_identity(cfg),
        check_binary_mask_threshold(cfg),
    ]
}
