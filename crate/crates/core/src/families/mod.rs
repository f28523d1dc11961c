//! Other members of the linear patch-group denoiser family: the affine
//! (NL-Bayes-style) filters and the transform-domain (BM3D-style) masks.

pub mod bm3d;
pub mod dct;
pub mod nlbayes;

pub use bm3d::{
    apply_masked_transform, bm3d_step1_continuous, bm3d_step1_threshold, bm3d_step2_wiener,
    masked_risk, masked_sure, MaskWeights,
};
pub use dct::{dct_matrix, TransformPair};
pub use nlbayes::{
    affine_risk, affine_sure, group_moments, nlbayes_step1, nlbayes_step2, AffineStep1,
    AffineWeights, GroupMoments,
};
