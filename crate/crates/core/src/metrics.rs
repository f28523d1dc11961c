//! Image quality metrics.

use crate::error::Result;
use crate::image::GrayImage;

const PEAK: f64 = 255.0;

pub fn mse(reference: &GrayImage, test: &GrayImage) -> Result<f64> {
    reference.same_shape(test)?;
    let sum: f64 = reference
        .pixels()
        .iter()
        .zip(test.pixels())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / reference.pixels().len() as f64)
}

/// Peak signal-to-noise ratio in dB for an 8-bit peak of 255.
///
/// Returns `f64::INFINITY` when the images are identical. Neither input is
/// clipped here; callers that want the usual clipped-output convention pass
/// [`GrayImage::clipped`] images.
pub fn psnr(reference: &GrayImage, test: &GrayImage) -> Result<f64> {
    Ok(psnr_from_mse(mse(reference, test)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (PEAK * PEAK / mse).log10()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_images_are_infinite() {
        let a = GrayImage::filled(4, 4, 12.0).unwrap();
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
    }

    #[test]
    fn full_scale_error_is_zero_db() {
        let a = GrayImage::filled(3, 5, 0.0).unwrap();
        let b = GrayImage::filled(3, 5, 255.0).unwrap();
        assert!(psnr(&a, &b).unwrap().abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let a = GrayImage::filled(3, 5, 0.0).unwrap();
        let b = GrayImage::filled(5, 3, 0.0).unwrap();
        assert!(psnr(&a, &b).is_err());
    }

    proptest! {
        #[test]
        fn symmetric(vals in proptest::collection::vec(0.0f64..255.0, 12),
                     other in proptest::collection::vec(0.0f64..255.0, 12)) {
            let a = GrayImage::new(3, 4, vals).unwrap();
            let b = GrayImage::new(3, 4, other).unwrap();
            let ab = psnr(&a, &b).unwrap();
            let ba = psnr(&b, &a).unwrap();
            prop_assert!(ab == ba || (ab - ba).abs() < 1e-12);
        }

        #[test]
        fn decreasing_in_mse(lo in 1e-6f64..1e3, step in 1e-6f64..1e3) {
            prop_assert!(psnr_from_mse(lo) > psnr_from_mse(lo + step));
        }
    }
}
