//! 8-bit grayscale PGM/PNG reading and writing.
//!
//! Colour, alpha and 16-bit inputs are rejected rather than converted.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ColorType, ExtendedColorType, ImageEncoder, ImageFormat, ImageReader};

use crate::error::{Error, Result};
use crate::image::GrayImage;

pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let read_err = |source| Error::Read {
        path: path.to_path_buf(),
        source,
    };
    let reader = ImageReader::open(path)?
        .with_guessed_format()
        .map_err(|e| read_err(e.into()))?;
    match reader.format() {
        Some(ImageFormat::Pnm) | Some(ImageFormat::Png) => {}
        other => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                reason: match other {
                    Some(f) => format!("{f:?} is not PGM or PNG"),
                    None => "unrecognised file signature".into(),
                },
            })
        }
    }
    let decoded = reader.decode().map_err(read_err)?;
    if decoded.color() != ColorType::L8 {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: format!("expected 8-bit grayscale, found {:?}", decoded.color()),
        });
    }
    let luma = decoded.into_luma8();
    let (w, h) = luma.dimensions();
    let pixels = luma.into_raw().into_iter().map(f64::from).collect();
    GrayImage::new(h as usize, w as usize, pixels)
}

/// Rounds to the nearest integer after clipping to `[0, 255]`.
pub fn to_u8_pixels(img: &GrayImage) -> Vec<u8> {
    img.pixels()
        .iter()
        .map(|v| v.clamp(0.0, 255.0).round() as u8)
        .collect()
}

/// Writes `img` as binary PGM (`.pgm`) or PNG (`.png`), chosen by extension.
pub fn save_image(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    let bytes = to_u8_pixels(img);
    let (w, h) = (img.width() as u32, img.height() as u32);
    let write_err = |source| Error::Write {
        path: path.to_path_buf(),
        source,
    };
    match ext.as_deref() {
        Some("pgm") => {
            let out = BufWriter::new(File::create(path)?);
            PnmEncoder::new(out)
                .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
                .write_image(&bytes, w, h, ExtendedColorType::L8)
                .map_err(write_err)
        }
        Some("png") => image::save_buffer_with_format(
            path,
            &bytes,
            w,
            h,
            ExtendedColorType::L8,
            ImageFormat::Png,
        )
        .map_err(write_err),
        _ => Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: "output extension must be .pgm or .png".into(),
        }),
    }
}
