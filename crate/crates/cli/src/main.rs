//! `rawlume`: calibrate sensor noise, synthesize training pairs, enhance
//! low-light raw frames, fit color transforms and score results.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rawlume::color::{fit_color_lsq, ColorMatrix, PolySpec};
use rawlume::io::{
    list_raw_files, read_calibration_frame, read_ppm, read_profile, read_raw, sidecar_path,
    write_ppm, write_ppm16, write_raw, write_sidecar, RawSidecar,
};
use rawlume::joint::DenoiseConfig;
use rawlume::metrics::{entropy, exposure_loss, psnr, ssim};
use rawlume::optimize::FitConfig;
use rawlume::pipeline::{calibrate_noise, enhance_raw, synthesize_pair, EnhanceOptions};
use rawlume::RawImage;
use rayon::prelude::*;
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "rawlume", version, about = "Raw-domain low-light enhancement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate noise parameters from dark frames and flat-field pairs.
    Calibrate(CalibrateArgs),
    /// Darken a clean raw frame and add synthetic sensor noise.
    Synth(SynthArgs),
    /// Enhance a low-light raw frame into an sRGB image.
    Enhance(EnhanceArgs),
    /// Fit a polynomial color transform between two images.
    FitColor(FitColorArgs),
    /// Score images against references as JSON lines.
    Metrics(MetricsArgs),
}

#[derive(Args)]
struct CalibrateArgs {
    /// Directory of dark frames (.rlraw).
    #[arg(long)]
    dark_dir: PathBuf,
    /// Directory of flat-field frames; sorted files are paired consecutively.
    #[arg(long)]
    flat_dir: PathBuf,
    /// Camera profile JSON supplying layout, levels and color matrix.
    #[arg(long)]
    profile: PathBuf,
    /// Output profile JSON with the estimated noise parameters.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Clean raw frame (.rlraw).
    #[arg(long)]
    clean: PathBuf,
    /// Profile JSON with noise parameters; defaults to the frame's sidecar.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Darkening factor range `lo:hi`.
    #[arg(long, default_value = "1:16", value_parser = parse_range)]
    factor_range: (f64, f64),
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output paths for the noisy and the darkened clean frame.
    #[arg(long, required = true, num_args = 2, value_names = ["NOISY", "CLEAN"])]
    out_pair: Vec<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Depth {
    #[value(name = "8")]
    Eight,
    #[value(name = "16")]
    Sixteen,
}

#[derive(Args)]
struct EnhanceArgs {
    /// Noisy raw frame (.rlraw).
    #[arg(long)]
    input: PathBuf,
    /// Camera profile JSON; defaults to the frame's sidecar.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Number of progressive iterations.
    #[arg(long, default_value_t = 9)]
    iterations: usize,
    /// Exposure well width.
    #[arg(long, default_value_t = 0.2)]
    delta: f64,
    /// Grid smoothness weight.
    #[arg(long, default_value_t = 0.1)]
    w_tv: f64,
    /// Grid magnitude weight.
    #[arg(long, default_value_t = 0.01)]
    w_mag: f64,
    /// Optimizer steps.
    #[arg(long, default_value_t = 200)]
    steps: usize,
    #[arg(long, default_value_t = 0.05)]
    step_size: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    /// Run the enhancement without the denoiser.
    #[arg(long)]
    no_denoise: bool,
    /// Skip the polynomial color transform.
    #[arg(long)]
    no_color: bool,
    /// Color transform JSON; the identity transform when absent.
    #[arg(long, conflicts_with = "no_color")]
    color_matrix: Option<PathBuf>,
    /// Output image (binary PPM).
    #[arg(long)]
    out: PathBuf,
    /// Output bit depth.
    #[arg(long, value_enum, default_value = "8")]
    depth: Depth,
    /// Also write the fitted grids as JSON.
    #[arg(long)]
    grids_out: Option<PathBuf>,
}

#[derive(Args)]
struct FitColorArgs {
    /// Source image (PPM, encoded sRGB).
    #[arg(long)]
    source: PathBuf,
    /// Target image (PPM, same size).
    #[arg(long)]
    target: PathBuf,
    /// Polynomial degree, 1 to 4.
    #[arg(long, default_value_t = 3)]
    degree: u8,
    /// Include the constant term.
    #[arg(long)]
    constant: bool,
    /// Output transform JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    /// Image or directory of images to score.
    #[arg(long)]
    a: PathBuf,
    /// Reference image, or directory holding references with matching names.
    #[arg(long)]
    b: PathBuf,
    /// Exposure well width for the exposure loss of `a`.
    #[arg(long, default_value_t = 0.2)]
    delta: f64,
}

fn parse_range(text: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = text
        .split_once(':')
        .ok_or_else(|| format!("expected lo:hi, got {text:?}"))?;
    let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("{s:?}: {e}"));
    Ok((parse(lo)?, parse(hi)?))
}

fn load_frames(files: &[PathBuf], profile: &rawlume::CameraProfile) -> Result<Vec<RawImage>> {
    files
        .par_iter()
        .map(|f| {
            read_calibration_frame(f, profile).with_context(|| format!("reading {}", f.display()))
        })
        .collect()
}

fn cmd_calibrate(args: &CalibrateArgs) -> Result<()> {
    let profile = read_profile(&args.profile).context("reading profile")?;
    let darks = load_frames(
        &list_raw_files(&args.dark_dir).context("listing dark frames")?,
        &profile,
    )?;
    let flats = load_frames(
        &list_raw_files(&args.flat_dir).context("listing flat frames")?,
        &profile,
    )?;
    if flats.len() % 2 != 0 {
        bail!(
            "estimate_gain_photon_transfer: need flat frames in pairs, got {}",
            flats.len()
        );
    }
    let pairs: Vec<(RawImage, RawImage)> = flats
        .chunks_exact(2)
        .map(|c| (c[0].clone(), c[1].clone()))
        .collect();
    let cal = calibrate_noise(&darks, &pairs, &profile)?;
    let out = profile.with_noise(cal.noise);
    write_sidecar(&args.out, &RawSidecar::new(out))?;
    println!(
        "banding: sigma_b = {:.6e} (row-mean variance {:.4e}, within-row variance {:.4e})",
        cal.banding.sigma_b, cal.banding.row_mean_variance, cal.banding.within_row_variance
    );
    println!(
        "read noise: lambda_r = {:.2}, sigma_r = {:.6e}, PPCC peak {:.6} over {} samples",
        cal.read_noise.lambda_r,
        cal.read_noise.sigma_r,
        cal.read_noise.ppcc,
        cal.read_noise.samples
    );
    println!(
        "gain: kappa = {:.6e}, intercept {:.4e}, R^2 {:.6} over {} patches",
        cal.gain.kappa,
        cal.gain.intercept,
        cal.gain.r_squared,
        cal.gain.points.len()
    );
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let profile = match &args.profile {
        Some(p) => read_profile(p).context("reading profile")?,
        None => {
            read_profile(sidecar_path(&args.clean)).context("reading sidecar of clean frame")?
        }
    };
    let noise = profile
        .noise
        .ok_or_else(|| anyhow!("profile has no noise parameters; run calibrate first"))?;
    let (clean, _) = read_raw(&args.clean, Some(&profile)).context("reading clean frame")?;
    let pair = synthesize_pair(&clean, &noise, args.factor_range, args.seed)?;
    let [noisy_path, clean_path] = args.out_pair.as_slice() else {
        bail!("--out-pair takes two paths");
    };
    let mut sidecar = RawSidecar::new(profile);
    sidecar.seed = Some(args.seed);
    sidecar.darken_factor = Some(pair.factor);
    write_raw(noisy_path, &pair.noisy, &sidecar)?;
    write_raw(clean_path, &pair.clean, &sidecar)?;
    println!("darken factor {:.6}, seed {}", pair.factor, args.seed);
    Ok(())
}

fn cmd_enhance(args: &EnhanceArgs) -> Result<()> {
    let profile = match &args.profile {
        Some(p) => Some(read_profile(p).context("reading profile")?),
        None => None,
    };
    let (raw, profile) = read_raw(&args.input, profile.as_ref()).context("reading input")?;
    let color = if args.no_color {
        None
    } else {
        Some(match &args.color_matrix {
            Some(p) => ColorMatrix::load(p).context("reading color matrix")?,
            None => ColorMatrix::identity(PolySpec::default()),
        })
    };
    let opts = EnhanceOptions {
        fit: FitConfig {
            delta: args.delta,
            iterations: args.iterations,
            w_tv: args.w_tv,
            w_mag: args.w_mag,
            steps: args.steps,
            step_size: args.step_size,
            momentum: args.momentum,
        },
        denoise: DenoiseConfig::default(),
        no_denoise: args.no_denoise,
        color,
    };
    let out = enhance_raw(&raw, &profile, &opts)?;
    match args.depth {
        Depth::Eight => write_ppm(&args.out, &out.image)?,
        Depth::Sixteen => write_ppm16(&args.out, &out.image)?,
    }
    if let Some(path) = &args.grids_out {
        out.grids.save(path)?;
    }
    for (stage, elapsed) in &out.timings {
        println!("{stage:<18} {:>10.3} ms", elapsed.as_secs_f64() * 1e3);
    }
    println!(
        "exposure loss: input {:.6}, output {:.6}",
        out.input_exposure_loss, out.output_exposure_loss
    );
    Ok(())
}

fn cmd_fit_color(args: &FitColorArgs) -> Result<()> {
    let spec = PolySpec::new(args.degree, args.constant)?;
    let source = read_ppm(&args.source).context("reading source")?;
    let target = read_ppm(&args.target).context("reading target")?;
    let fit = fit_color_lsq(&source, &target, &spec)?;
    fit.matrix.save(&args.out)?;
    println!("terms {}, residual {:.6e}", spec.term_count(), fit.residual);
    Ok(())
}

fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "ppm"))
        .collect();
    files.sort();
    Ok(files)
}

fn score(a: &Path, b: &Path, delta: f64) -> Result<serde_json::Value> {
    let ia = read_ppm(a).with_context(|| format!("reading {}", a.display()))?;
    let ib = read_ppm(b).with_context(|| format!("reading {}", b.display()))?;
    Ok(json!({
        "file": a.display().to_string(),
        "psnr": psnr(&ia, &ib)?,
        "ssim": ssim(&ia, &ib)?,
        "entropy": entropy(&ia),
        "exposure_loss": exposure_loss(&ia, delta)?,
    }))
}

fn cmd_metrics(args: &MetricsArgs) -> Result<()> {
    let pairs: Vec<(PathBuf, PathBuf)> = if args.a.is_dir() {
        image_files(&args.a)?
            .into_iter()
            .map(|a| {
                let b = args.b.join(a.file_name().expect("listed file has a name"));
                (a, b)
            })
            .collect()
    } else {
        vec![(args.a.clone(), args.b.clone())]
    };
    let lines: Vec<serde_json::Value> = pairs
        .par_iter()
        .map(|(a, b)| score(a, b, args.delta))
        .collect::<Result<_>>()?;
    for line in lines {
        println!("{line}");
    }
    Ok(())
}

fn configure_threads() -> Result<()> {
    if let Ok(value) = std::env::var("RAWLUME_THREADS") {
        let threads: usize = value
            .parse()
            .with_context(|| format!("RAWLUME_THREADS={value:?} is not a thread count"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring worker threads")?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, result) = match configure_threads() {
        Err(e) => ("setup", Err(e)),
        Ok(()) => match &cli.command {
            Command::Calibrate(a) => ("calibrate", cmd_calibrate(a)),
            Command::Synth(a) => ("synth", cmd_synth(a)),
            Command::Enhance(a) => ("enhance", cmd_enhance(a)),
            Command::FitColor(a) => ("fit-color", cmd_fit_color(a)),
            Command::Metrics(a) => ("metrics", cmd_metrics(a)),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rawlume {name}: error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
