//! End-to-end enhancement of one raw frame: low-resolution grid fitting,
//! full-resolution joint operation, color conversion and color transform;
//! plus noise calibration and training-pair synthesis.

use crate::color::{apply_color, ColorMatrix, PolySpec};
use crate::color_space::camera_to_srgb;
use crate::enhance::{clamp_output, enhance_progressive};
use crate::error::{Error, Result, StageContext};
use crate::grid::{make_guidance, BilateralGridSet};
use crate::image::RgbImage;
use crate::joint::{joint_run, DenoiseConfig};
use crate::noise::{
    darken, estimate_banding, estimate_gain_photon_transfer, estimate_tukey_ppcc,
    sample_darken_factor, sample_noise, BandingEstimate, GainEstimate, NoiseParams, TukeyFit,
};
use crate::optimize::{exposure_loss, fit_grids, FitConfig};
use crate::raw::{demosaic_bilinear, pack_cfa, unpack_cfa, CameraProfile, PackedRaw, RawImage};
use crate::resample::{downsample_area, LOWRES_SIZE};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::time::{Duration, Instant};

#[derive(Debug, Clone, Default)]
pub struct EnhanceOptions {
    pub fit: FitConfig,
    pub denoise: DenoiseConfig,
    /// Skip the denoiser and run the plain progressive enhancement.
    pub no_denoise: bool,
    /// Color transform to apply; `None` skips the color stage.
    pub color: Option<ColorMatrix>,
}

impl EnhanceOptions {
    /// Options with the identity color transform of the default expansion.
    pub fn with_identity_color() -> Self {
        Self {
            color: Some(ColorMatrix::identity(PolySpec::default())),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnhanceOutput {
    /// Encoded sRGB result.
    pub image: RgbImage,
    /// Enhanced packed planes before color conversion, clamped.
    pub packed: PackedRaw,
    pub grids: BilateralGridSet,
    /// Exposure loss of the demosaiced input and output (camera-linear).
    pub input_exposure_loss: f64,
    pub output_exposure_loss: f64,
    /// Objective reached by the grid fit.
    pub fit_objective: f64,
    pub timings: Vec<(&'static str, Duration)>,
}

/// Low-resolution camera-linear working image: demosaic, then area
/// resample to at most 256x256.
pub fn lowres_input(raw: &RawImage) -> Result<RgbImage> {
    let rgb = demosaic_bilinear(&raw.clipped());
    let (w, h) = rgb.dims();
    downsample_area(&rgb, (LOWRES_SIZE.min(w), LOWRES_SIZE.min(h)))
}

fn timed<T>(
    timings: &mut Vec<(&'static str, Duration)>,
    stage: &'static str,
    f: impl FnOnce() -> Result<T>,
) -> Result<T> {
    let start = Instant::now();
    let out = f().stage(stage)?;
    timings.push((stage, start.elapsed()));
    Ok(out)
}

/// Enhance a noisy raw frame.
pub fn enhance_raw(
    raw: &RawImage,
    profile: &CameraProfile,
    opts: &EnhanceOptions,
) -> Result<EnhanceOutput> {
    let mut timings = Vec::new();
    let lowres = timed(&mut timings, "downsample", || lowres_input(raw))?;
    let fit = timed(&mut timings, "fit_grids", || {
        fit_grids(&lowres, profile, &opts.fit)
    })?;
    let packed = timed(&mut timings, "joint", || {
        if opts.no_denoise {
            let input = pack_cfa(raw)?;
            let guidance = make_guidance(&input, profile);
            let trace = enhance_progressive(&input, &fit.grids, &guidance, profile)?;
            Ok(clamp_output(trace.output()))
        } else {
            joint_run(raw, &fit.grids, profile, &opts.denoise)
        }
    })?;
    let (linear, image) = timed(&mut timings, "color_conversion", || {
        let linear = demosaic_bilinear(&unpack_cfa(&packed));
        let srgb = camera_to_srgb(&linear, profile, true)?;
        Ok((linear, srgb))
    })?;
    let image = match &opts.color {
        Some(matrix) => timed(&mut timings, "color_transform", || {
            apply_color(&image, matrix, &matrix.spec())
        })?,
        None => image,
    };
    let (input_exposure_loss, output_exposure_loss) = timed(&mut timings, "metrics", || {
        Ok((
            exposure_loss(&demosaic_bilinear(&raw.clipped()), opts.fit.delta)?,
            exposure_loss(&linear, opts.fit.delta)?,
        ))
    })?;
    Ok(EnhanceOutput {
        image,
        packed,
        grids: fit.grids,
        input_exposure_loss,
        output_exposure_loss,
        fit_objective: fit.objective,
        timings,
    })
}

/// Noise calibration result: the merged parameters and the diagnostics of
/// each estimator.
#[derive(Debug, Clone, Serialize)]
pub struct Calibration {
    pub noise: NoiseParams,
    pub banding: BandingEstimate,
    pub read_noise: TukeyFit,
    pub gain: GainEstimate,
}

/// Flat-field patch size for the photon-transfer fit.
pub const FLAT_PATCH: usize = 32;

/// Run the three estimators and merge their results with the quantization
/// step of `profile`. Errors name the estimator that failed.
pub fn calibrate_noise(
    dark_frames: &[RawImage],
    flat_pairs: &[(RawImage, RawImage)],
    profile: &CameraProfile,
) -> Result<Calibration> {
    let banding = estimate_banding(dark_frames)?;
    let read_noise = estimate_tukey_ppcc(dark_frames)?;
    let gain = estimate_gain_photon_transfer(flat_pairs, FLAT_PATCH)?;
    if !(gain.kappa >= 0.0) {
        return Err(Error::Calibration {
            estimator: "estimate_gain_photon_transfer",
            reason: format!("photon transfer slope {} is negative", gain.kappa),
        });
    }
    let noise = NoiseParams {
        kappa: gain.kappa,
        lambda_r: read_noise.lambda_r,
        sigma_r: read_noise.sigma_r,
        sigma_b: banding.sigma_b,
        s: profile.s,
    };
    noise.validate()?;
    Ok(Calibration {
        noise,
        banding,
        read_noise,
        gain,
    })
}

/// A synthesized training pair.
#[derive(Debug, Clone)]
pub struct SynthPair {
    pub noisy: RawImage,
    /// The darkened clean frame the noise was added to.
    pub clean: RawImage,
    pub factor: f64,
}

/// Darken a clean frame by a factor drawn from `factor_range` and add noise
/// from `params`, all driven by `seed`.
pub fn synthesize_pair(
    clean: &RawImage,
    params: &NoiseParams,
    factor_range: (f64, f64),
    seed: u64,
) -> Result<SynthPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factor = sample_darken_factor(factor_range, &mut rng)?;
    let dark = darken(clean, factor)?;
    let noisy = sample_noise(&dark, params, &mut rng)?;
    Ok(SynthPair {
        noisy,
        clean: dark,
        factor,
    })
}
