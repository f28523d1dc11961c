//! Patch-group denoising with linear combinations of similar patches.
//!
//! An image is cut into overlapping patches. Each reference patch is grouped
//! with its nearest neighbours in a search window, the group `Y` (one patch
//! per column) is denoised as `YΘ`, and the denoised patches are averaged
//! back into the image. Step 1 picks `Θ` by minimizing an unbiased risk
//! estimate on the noisy group; step 2 picks the Ridge weights that minimize
//! the risk against a pilot estimate from step 1.
//!
//! [`families`] holds two other weight families run through the same
//! pipeline, and [`oracle`] holds brute-force checks of the closed forms.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod error;
pub mod families;
pub mod image;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod noise;
pub mod oracle;
pub mod patch;
pub mod pipeline;
pub mod ridge;
pub mod verify;

pub use error::{Error, Result};
pub use image::GrayImage;
pub use io::{load_image, save_image};
pub use metrics::{mse, psnr};
pub use noise::{add_gaussian_noise, NoiseSpec};
pub use pipeline::{denoise, denoise_with_threads, Denoised, Method, RunReport, StageParams};
