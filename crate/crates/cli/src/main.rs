use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nlridge::bench::{average_row, list_images, run_bench, write_csv};
use nlridge::pipeline::denoise_with_threads;
use nlridge::verify::{run_all, VerifyConfig};
use nlridge::{load_image, save_image, Error, Method, StageParams};

const EXIT_ARGS: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "nlridge",
    version,
    about = "Patch-group image denoiser for additive Gaussian noise"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Denoise one grayscale image with known noise level.
    Denoise(DenoiseArgs),
    /// Add seeded noise to every image in a directory, denoise, and report PSNR.
    Bench(BenchArgs),
    /// Check the closed-form weights against brute-force oracles.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
struct Tuning {
    /// Weight family: nlridge, nlbayes-family or bm3d-family.
    #[arg(long, default_value = "nlridge")]
    method: Method,
    #[arg(long)]
    patch_size1: Option<usize>,
    #[arg(long)]
    patch_size2: Option<usize>,
    #[arg(long)]
    group_size1: Option<usize>,
    #[arg(long)]
    group_size2: Option<usize>,
    /// Search window side in pixels.
    #[arg(long)]
    window: Option<usize>,
    /// Step between reference patches in pixels.
    #[arg(long)]
    stride: Option<usize>,
    /// Hard-threshold multiplier (bm3d-family only).
    #[arg(long)]
    threshold_multiplier: Option<f64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

impl Tuning {
    fn params(&self, sigma: f64) -> Result<StageParams, Error> {
        let mut p = StageParams::for_sigma(sigma, self.method)?;
        p.patch_side1 = self.patch_size1.unwrap_or(p.patch_side1);
        p.patch_side2 = self.patch_size2.unwrap_or(p.patch_side2);
        p.group_size1 = self.group_size1.unwrap_or(p.group_size1);
        p.group_size2 = self.group_size2.unwrap_or(p.group_size2);
        p.window_side = self.window.unwrap_or(p.window_side);
        p.stride = self.stride.unwrap_or(p.stride);
        p.threshold_multiplier = self.threshold_multiplier.unwrap_or(p.threshold_multiplier);
        p.validate()?;
        Ok(p)
    }
}

#[derive(Args, Debug)]
struct DenoiseArgs {
    /// Noisy input image (8-bit grayscale PGM or PNG).
    #[arg(long)]
    input: PathBuf,
    /// Noise standard deviation on the 0-255 scale.
    #[arg(long)]
    sigma: f64,
    #[arg(long)]
    output: PathBuf,
    /// Also write the step-1 image here.
    #[arg(long)]
    step1_output: Option<PathBuf>,
    /// Clean image for PSNR reporting.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Treat the input as clean and add noise with this seed first.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Directory of clean PGM/PNG images.
    #[arg(long)]
    dir: PathBuf,
    #[arg(long)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    csv: PathBuf,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Monte-Carlo draws per estimate.
    #[arg(long, default_value_t = 100_000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

enum Failure {
    Args(String),
    Io(String),
    Verify,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_io() {
            Failure::Io(e.to_string())
        } else {
            Failure::Args(e.to_string())
        }
    }
}

fn with_pool<T>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, Failure>
where
    T: Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Failure::Args(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn cmd_denoise(a: DenoiseArgs) -> Result<(), Failure> {
    let params = a.tuning.params(a.sigma)?;
    let input = load_image(&a.input)?;
    let (clean, noisy) = match a.seed {
        Some(seed) => {
            let noisy =
                nlridge::add_gaussian_noise(&input, nlridge::NoiseSpec::new(a.sigma, seed)?)?;
            (Some(input), noisy)
        }
        None => (a.reference.as_ref().map(load_image).transpose()?, input),
    };
    let mut out = denoise_with_threads(&noisy, &params, a.tuning.threads)?;
    if let Some(clean) = &clean {
        let mut report = out.report.clone();
        report.measure(clean, &noisy, &out)?;
        out.report = report;
    }
    save_image(&out.step2, &a.output)?;
    if let Some(path) = &a.step1_output {
        save_image(&out.step1, path)?;
    }
    println!("{}", out.report);
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<(), Failure> {
    let params = a.tuning.params(a.sigma)?;
    let paths = list_images(&a.dir)?;
    if paths.is_empty() {
        return Err(Failure::Io(format!(
            "no .pgm or .png images in {}",
            a.dir.display()
        )));
    }
    let rows = with_pool(a.tuning.threads, || run_bench(&paths, a.seed, &params))??;
    write_csv(&rows, &a.csv)?;
    for r in rows.iter().chain(std::iter::once(&average_row(&rows)?)) {
        println!(
            "{:<20} noisy {:6.2}  step1 {:6.2}  step2 {:6.2}  {:7.2} s",
            r.image, r.psnr_noisy, r.psnr_step1, r.psnr_step2, r.seconds
        );
    }
    Ok(())
}

fn cmd_verify(a: VerifyArgs) -> Result<(), Failure> {
    if a.trials < 100 {
        return Err(Failure::Args("--trials must be at least 100".into()));
    }
    let cfg = VerifyConfig {
        seed: a.seed,
        mc_trials: a.trials,
        ..VerifyConfig::default()
    };
    let outcomes = with_pool(a.threads, || run_all(&cfg))?;
    for o in &outcomes {
        println!(
            "{} {:<24} {} ({:.2} s)",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.detail,
            o.seconds
        );
    }
    if outcomes.iter().all(|o| o.passed) {
        Ok(())
    } else {
        Err(Failure::Verify)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_ARGS)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Denoise(a) => cmd_denoise(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Args(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_ARGS)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_IO)
        }
        Err(Failure::Verify) => {
            eprintln!("error: verification failed");
            ExitCode::from(EXIT_VERIFY)
        }
    }
}
