//! Two-step denoising driver.
//!
//! Step 1 groups patches of the noisy image and denoises each group with
//! weights computed from the noisy group itself. Step 2 groups patches of the
//! step-1 result (the pilot), computes weights from the pilot group, and
//! applies them to the noisy patches at the same positions. Each step ends by
//! reprojecting every denoised patch with inverse-variance weights.
//!
//! Groups are computed in parallel but reprojected in reference-grid order,
//! so the output is bit-identical for any thread count.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::families::bm3d::{self, SURE_THRESHOLD_MULTIPLIER};
use crate::families::{nlbayes, TransformPair};
use crate::image::GrayImage;
use crate::metrics::psnr;
use crate::patch::{
    extract_group, match_positions, reference_grid, AggregationAccumulator, PatchGeometry, Position,
};
use crate::ridge::{self, column_weights, CombinationWeights, COLUMN_NORM_FLOOR};

/// Default search window side.
pub const DEFAULT_WINDOW: usize = 45;
/// Default reference-grid stride.
pub const DEFAULT_STRIDE: usize = 4;

/// Reference positions handled per parallel batch.
const BATCH: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// `Y -> YΘ` with SURE then Ridge weights.
    #[serde(rename = "nlridge")]
    NlRidge,
    /// Affine `Y -> ΘY + βuᵀ` filters.
    NlBayesFamily,
    /// Transform-domain hard threshold then Wiener mask.
    Bm3dFamily,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::NlRidge => "nlridge",
            Method::NlBayesFamily => "nlbayes-family",
            Method::Bm3dFamily => "bm3d-family",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nlridge" => Ok(Method::NlRidge),
            "nlbayes-family" | "nlbayes" => Ok(Method::NlBayesFamily),
            "bm3d-family" | "bm3d" => Ok(Method::Bm3dFamily),
            other => Err(Error::InvalidParameter(format!("unknown method '{other}'"))),
        }
    }
}

/// Parameters for both denoising steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageParams {
    pub sigma: f64,
    pub method: Method,
    pub patch_side1: usize,
    pub patch_side2: usize,
    pub group_size1: usize,
    pub group_size2: usize,
    pub window_side: usize,
    pub stride: usize,
    /// Hard-threshold multiplier for the transform family.
    pub threshold_multiplier: f64,
}

impl StageParams {
    /// Recommended settings for noise level `sigma`.
    ///
    /// For NL-Ridge the patch sides and group sizes follow the noise-level
    /// table (7/7/18/55 up to σ = 15, 9/9/18/90 up to 35, 11/9/20/120 above,
    /// including σ > 50). The other families use fixed defaults: 5x5 patches
    /// in groups of 60 for the affine family, 8x8 patches in groups of 16 and
    /// 32 for the transform family.
    pub fn for_sigma(sigma: f64, method: Method) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "sigma must be a positive finite number, got {sigma}"
            )));
        }
        let (p1, p2, m1, m2) = match method {
            Method::NlRidge if sigma <= 15.0 => (7, 7, 18, 55),
            Method::NlRidge if sigma <= 35.0 => (9, 9, 18, 90),
            Method::NlRidge => (11, 9, 20, 120),
            Method::NlBayesFamily => (5, 5, 60, 60),
            Method::Bm3dFamily => (8, 8, 16, 32),
        };
        Ok(Self {
            sigma,
            method,
            patch_side1: p1,
            patch_side2: p2,
            group_size1: m1,
            group_size2: m2,
            window_side: DEFAULT_WINDOW,
            stride: DEFAULT_STRIDE,
            threshold_multiplier: SURE_THRESHOLD_MULTIPLIER,
        })
    }

    pub fn step1_geometry(&self) -> Result<PatchGeometry> {
        PatchGeometry::new(
            self.patch_side1,
            self.group_size1,
            self.window_side,
            self.stride,
        )
    }

    pub fn step2_geometry(&self) -> Result<PatchGeometry> {
        PatchGeometry::new(
            self.patch_side2,
            self.group_size2,
            self.window_side,
            self.stride,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "sigma must be a positive finite number, got {}",
                self.sigma
            )));
        }
        if !(self.threshold_multiplier >= 0.0) || !self.threshold_multiplier.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "threshold multiplier must be finite and >= 0, got {}",
                self.threshold_multiplier
            )));
        }
        self.step1_geometry()?;
        self.step2_geometry()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsnrSummary {
    pub noisy: f64,
    pub step1: f64,
    pub step2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub params: StageParams,
    pub groups_step1: usize,
    pub groups_step2: usize,
    /// Groups whose weights fell back to pass-through or needed regularizing.
    pub fallbacks_step1: usize,
    pub fallbacks_step2: usize,
    pub seconds: f64,
    /// Filled in when a clean reference is available.
    pub psnr: Option<PsnrSummary>,
}

impl RunReport {
    /// Records PSNR against `clean`, clipping the noisy input and both
    /// outputs to the 8-bit range first.
    pub fn measure(
        &mut self,
        clean: &GrayImage,
        noisy: &GrayImage,
        out: &Denoised,
    ) -> Result<PsnrSummary> {
        let summary = PsnrSummary {
            noisy: psnr(clean, &noisy.clipped())?,
            step1: psnr(clean, &out.step1.clipped())?,
            step2: psnr(clean, &out.step2.clipped())?,
        };
        self.psnr = Some(summary);
        Ok(summary)
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = &self.params;
        writeln!(f, "method           {}", p.method)?;
        writeln!(f, "sigma            {}", p.sigma)?;
        writeln!(
            f,
            "step 1           patch {0}x{0}, group {1}, {2} groups, {3} fallbacks",
            p.patch_side1, p.group_size1, self.groups_step1, self.fallbacks_step1
        )?;
        writeln!(
            f,
            "step 2           patch {0}x{0}, group {1}, {2} groups, {3} fallbacks",
            p.patch_side2, p.group_size2, self.groups_step2, self.fallbacks_step2
        )?;
        writeln!(f, "window / stride  {} / {}", p.window_side, p.stride)?;
        if p.method == Method::Bm3dFamily {
            writeln!(f, "threshold        {:.4} sigma", p.threshold_multiplier)?;
        }
        if let Some(s) = &self.psnr {
            writeln!(f, "psnr noisy       {:.2} dB", s.noisy)?;
            writeln!(f, "psnr step 1      {:.2} dB", s.step1)?;
            writeln!(f, "psnr step 2      {:.2} dB", s.step2)?;
        }
        write!(f, "time             {:.2} s", self.seconds)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Denoised {
    pub step1: GrayImage,
    pub step2: GrayImage,
    pub report: RunReport,
}

struct GroupOutput {
    positions: Vec<Position>,
    estimate: DMatrix<f64>,
    weights: Vec<f64>,
    fallback: bool,
}

/// Same weight for every column: the inverse of the average per-pixel noise
/// gain `gain`.
fn uniform_weights(gain: f64, m: usize) -> Vec<f64> {
    vec![1.0 / gain.max(COLUMN_NORM_FLOOR); m]
}

fn step1_group(
    params: &StageParams,
    transforms: Option<&TransformPair>,
    y: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, Vec<f64>, bool)> {
    let (n, m) = y.shape();
    let sigma = params.sigma;
    Ok(match params.method {
        Method::NlRidge => {
            let (theta, fell_back) = ridge::step1_weights_or_identity(y, sigma);
            (theta.apply(y), column_weights(&theta), fell_back)
        }
        Method::NlBayesFamily => {
            let s = nlbayes::nlbayes_step1(y, sigma);
            let gain = s.weights.theta.norm_squared() / n as f64;
            (s.weights.apply(y), uniform_weights(gain, m), s.regularized)
        }
        Method::Bm3dFamily => {
            let tp = transforms.expect("transform pair for bm3d family");
            let mask = bm3d::bm3d_step1_threshold(y, tp, sigma, params.threshold_multiplier);
            let gain = mask.theta().norm_squared() / (n * m) as f64;
            (
                bm3d::apply_masked_transform(y, &mask, tp)?,
                uniform_weights(gain, m),
                false,
            )
        }
    })
}

fn step2_group(
    params: &StageParams,
    transforms: Option<&TransformPair>,
    y: &DMatrix<f64>,
    pilot: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, Vec<f64>, bool)> {
    let (n, m) = y.shape();
    let sigma = params.sigma;
    Ok(match params.method {
        Method::NlRidge => {
            let (theta, fell_back) = match ridge::step2_weights(pilot, sigma) {
                Ok(t) => (t, false),
                Err(_) => (CombinationWeights::identity(m), true),
            };
            (theta.apply(y), column_weights(&theta), fell_back)
        }
        Method::NlBayesFamily => {
            let (w, fell_back) = match nlbayes::nlbayes_step2(pilot, sigma) {
                Ok(w) => (w, false),
                Err(_) => (nlbayes::AffineWeights::identity(n), true),
            };
            let gain = w.theta.norm_squared() / n as f64;
            (w.apply(y), uniform_weights(gain, m), fell_back)
        }
        Method::Bm3dFamily => {
            let tp = transforms.expect("transform pair for bm3d family");
            let mask = bm3d::bm3d_step2_wiener(pilot, tp, sigma)?;
            let gain = mask.theta().norm_squared() / (n * m) as f64;
            (
                bm3d::apply_masked_transform(y, &mask, tp)?,
                uniform_weights(gain, m),
                false,
            )
        }
    })
}

/// Runs one step: match on `guide`, denoise groups of `noisy`, reproject.
/// `group_fn` receives the noisy group and, when `guide` differs from
/// `noisy`, the guide group at the same positions.
fn run_step<F>(
    noisy: &GrayImage,
    guide: Option<&GrayImage>,
    geometry: &PatchGeometry,
    group_fn: F,
) -> Result<(GrayImage, usize, usize)>
where
    F: Fn(&DMatrix<f64>, Option<&DMatrix<f64>>) -> Result<(DMatrix<f64>, Vec<f64>, bool)> + Sync,
{
    let (h, w) = (noisy.height(), noisy.width());
    let grid = reference_grid(h, w, geometry)?;
    let match_on = guide.unwrap_or(noisy);
    let mut acc = AggregationAccumulator::new(h, w);
    let mut fallbacks = 0;

    for batch in grid.chunks(BATCH) {
        let outputs: Vec<Result<GroupOutput>> = batch
            .par_iter()
            .map(|&reference| {
                let positions = match_positions(match_on, reference, geometry)?;
                let y = extract_group(noisy, &positions, geometry.patch_side);
                let guide_group = guide.map(|g| extract_group(g, &positions, geometry.patch_side));
                let (estimate, weights, fallback) = group_fn(&y, guide_group.as_ref())?;
                Ok(GroupOutput {
                    positions,
                    estimate,
                    weights,
                    fallback,
                })
            })
            .collect();
        for out in outputs {
            let out = out?;
            fallbacks += usize::from(out.fallback);
            acc.scatter_group(&out.estimate, &out.positions, &out.weights)?;
        }
    }
    Ok((acc.normalize()?, grid.len(), fallbacks))
}

/// Denoises `noisy` with the two-step procedure on the current rayon pool.
pub fn denoise(noisy: &GrayImage, params: &StageParams) -> Result<Denoised> {
    params.validate()?;
    let start = Instant::now();
    let g1 = params.step1_geometry()?;
    let g2 = params.step2_geometry()?;
    let (tp1, tp2) = match params.method {
        Method::Bm3dFamily => (
            Some(TransformPair::dct(g1.patch_side, g1.group_size)),
            Some(TransformPair::dct(g2.patch_side, g2.group_size)),
        ),
        _ => (None, None),
    };

    let (step1, groups1, fallbacks1) = run_step(noisy, None, &g1, |y, _| {
        step1_group(params, tp1.as_ref(), y)
    })?;
    let (step2, groups2, fallbacks2) = run_step(noisy, Some(&step1), &g2, |y, pilot| {
        step2_group(params, tp2.as_ref(), y, pilot.expect("pilot group"))
    })?;

    Ok(Denoised {
        step1,
        step2,
        report: RunReport {
            params: *params,
            groups_step1: groups1,
            groups_step2: groups2,
            fallbacks_step1: fallbacks1,
            fallbacks_step2: fallbacks2,
            seconds: start.elapsed().as_secs_f64(),
            psnr: None,
        },
    })
}

/// [`denoise`] on a dedicated pool of `threads` workers (0 = rayon default).
pub fn denoise_with_threads(
    noisy: &GrayImage,
    params: &StageParams,
    threads: usize,
) -> Result<Denoised> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(|| denoise(noisy, params))
}
