//! Batch benchmark: add seeded noise to clean images, denoise, and tabulate
//! PSNR per image plus an average row.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::io::load_image;
use crate::noise::{add_gaussian_noise, NoiseSpec};
use crate::pipeline::{denoise, Denoised, StageParams};

/// Name used for the summary row.
pub const AVERAGE_LABEL: &str = "average";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub image: String,
    pub sigma: f64,
    pub seed: u64,
    pub psnr_noisy: f64,
    pub psnr_step1: f64,
    pub psnr_step2: f64,
    pub seconds: f64,
}

/// `.pgm` and `.png` files directly inside `dir`, sorted by file name.
pub fn list_images(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir.as_ref())? {
        let path = entry?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("pgm") || e.eq_ignore_ascii_case("png"));
        if is_image && path.is_file() {
            paths.push(path);
        }
    }
    paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(paths)
}

/// Noises `clean` with `seed`, denoises it and measures PSNR.
pub fn evaluate(
    clean: &GrayImage,
    seed: u64,
    params: &StageParams,
) -> Result<(GrayImage, Denoised)> {
    let noisy = add_gaussian_noise(clean, NoiseSpec::new(params.sigma, seed)?)?;
    let mut out = denoise(&noisy, params)?;
    let mut report = out.report.clone();
    report.measure(clean, &noisy, &out)?;
    out.report = report;
    Ok((noisy, out))
}

/// One row per image, in the order given. Every image uses the same seed.
pub fn run_bench(paths: &[PathBuf], seed: u64, params: &StageParams) -> Result<Vec<BenchRow>> {
    paths
        .iter()
        .map(|path| {
            let clean = load_image(path)?;
            let (_, out) = evaluate(&clean, seed, params)?;
            let psnr = out.report.psnr.expect("measured");
            Ok(BenchRow {
                image: path
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                sigma: params.sigma,
                seed,
                psnr_noisy: psnr.noisy,
                psnr_step1: psnr.step1,
                psnr_step2: psnr.step2,
                seconds: out.report.seconds,
            })
        })
        .collect()
}

/// Mean PSNR columns and total time.
pub fn average_row(rows: &[BenchRow]) -> Result<BenchRow> {
    let first = rows
        .first()
        .ok_or_else(|| Error::InvalidParameter("no benchmark rows to average".into()))?;
    let k = rows.len() as f64;
    let mean = |f: fn(&BenchRow) -> f64| rows.iter().map(f).sum::<f64>() / k;
    Ok(BenchRow {
        image: AVERAGE_LABEL.into(),
        sigma: first.sigma,
        seed: first.seed,
        psnr_noisy: mean(|r| r.psnr_noisy),
        psnr_step1: mean(|r| r.psnr_step1),
        psnr_step2: mean(|r| r.psnr_step2),
        seconds: rows.iter().map(|r| r.seconds).sum(),
    })
}

/// Writes `rows` followed by their average row.
pub fn write_csv(rows: &[BenchRow], path: impl AsRef<Path>) -> Result<()> {
    let avg = average_row(rows)?;
    let mut w = csv::Writer::from_path(path.as_ref())?;
    for row in rows.iter().chain(std::iter::once(&avg)) {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
