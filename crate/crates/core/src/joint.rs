//! Joint enhancement and denoising at full resolution.
//!
//! Every illumination step is followed by a variance-guided bilateral filter
//! whose range kernel scales with the predicted noise standard deviation and
//! the gain accumulated so far. The cumulative gain is tracked explicitly
//! as an amplification map `A_n = A_{n-1} * (1 + theta_n * (1 - L_{n-1}))`.

use crate::color_space::luminance_packed;
use crate::enhance::{clamp_output, residual_plane};
use crate::error::{check_geometry, Error, Result};
use crate::grid::{make_guidance, slice_checked, BilateralGridSet, GuidanceMap};
use crate::image::Plane;
use crate::noise::{variance_map, NoiseParams, VarianceMap};
use crate::raw::{pack_cfa, CameraProfile, PackedRaw, RawImage};
use rayon::prelude::*;

/// Below this effective noise level the filter is the identity.
const BYPASS_SIGMA: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenoiseConfig {
    /// Half width of the square window.
    pub radius: usize,
    /// Range sigma in units of the amplified noise standard deviation.
    pub range_scale: f64,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self {
            radius: 2,
            range_scale: 2.0,
        }
    }
}

fn denoise_plane(img: &Plane, variance: &Plane, gain: &Plane, cfg: &DenoiseConfig) -> Plane {
    let (w, h) = img.dims();
    let r = cfg.radius as isize;
    let spatial_sigma = (cfg.radius as f64 / 2.0).max(f64::MIN_POSITIVE);
    let spatial: Vec<f64> = (-r..=r)
        .flat_map(|dy| {
            (-r..=r).map(move |dx| {
                (-((dx * dx + dy * dy) as f64) / (2.0 * spatial_sigma * spatial_sigma)).exp()
            })
        })
        .collect();
    let side = (2 * r + 1) as usize;
    let src = img.as_slice();
    let mut out = Plane::zeros(w, h);
    out.as_mut_slice()
        .par_chunks_mut(w.max(1))
        .enumerate()
        .for_each(|(y, row)| {
            for (x, dst) in row.iter_mut().enumerate() {
                let idx = y * w + x;
                let center = src[idx];
                let sigma = gain.as_slice()[idx] * variance.as_slice()[idx].sqrt();
                if sigma < BYPASS_SIGMA {
                    *dst = center;
                    continue;
                }
                let range_sigma = cfg.range_scale * sigma;
                let inv = 1.0 / (2.0 * range_sigma * range_sigma);
                let mut num = 0.0;
                let mut den = 0.0;
                for dy in -r..=r {
                    let yy = y as isize + dy;
                    if yy < 0 || yy >= h as isize {
                        continue;
                    }
                    for dx in -r..=r {
                        let xx = x as isize + dx;
                        if xx < 0 || xx >= w as isize {
                            continue;
                        }
                        let v = src[yy as usize * w + xx as usize];
                        let d = v - center;
                        let wgt = spatial[(dy + r) as usize * side + (dx + r) as usize]
                            * (-d * d * inv).exp();
                        num += wgt * v;
                        den += wgt;
                    }
                }
                *dst = num / den;
            }
        });
    out
}

/// Variance-guided bilateral filter on each packed plane.
///
/// `variance` holds per-plane noise variances, `gain` the amplification
/// shared by all planes at each site.
pub fn denoise_variance_guided(
    img: &PackedRaw,
    variance: &PackedRaw,
    gain: &Plane,
    cfg: &DenoiseConfig,
) -> Result<PackedRaw> {
    check_geometry(img.dims(), variance.dims())?;
    check_geometry(img.dims(), gain.dims())?;
    if variance
        .planes()
        .iter()
        .any(|p| p.as_slice().iter().any(|&v| !(v >= 0.0)))
    {
        return Err(Error::InvalidArgument(
            "noise variance must be non-negative".into(),
        ));
    }
    if gain
        .as_slice()
        .iter()
        .any(|&g| !(g >= 0.0) || !g.is_finite())
    {
        return Err(Error::InvalidArgument(
            "amplification must be finite and non-negative".into(),
        ));
    }
    let planes = [0, 1, 2, 3].map(|c| denoise_plane(img.plane(c), variance.plane(c), gain, cfg));
    PackedRaw::new(planes, img.cfa())
}

/// State carried between joint iterations.
#[derive(Debug, Clone)]
pub struct JointState {
    /// Denoised input `I_0^U`.
    pub base: PackedRaw,
    /// Current iterate `I_n^U`.
    pub current: PackedRaw,
    /// Cumulative per-site gain `A_n`.
    pub amplification: Plane,
    pub iteration: usize,
}

fn packed_variance(noisy: &RawImage, variance: &VarianceMap) -> Result<PackedRaw> {
    check_geometry(noisy.dims(), variance.dims())?;
    Ok(variance.pack())
}

/// Pack the noisy input and denoise it at unit gain.
pub fn joint_init(
    noisy: &RawImage,
    variance: &VarianceMap,
    cfg: &DenoiseConfig,
) -> Result<JointState> {
    let v = packed_variance(noisy, variance)?;
    let packed = pack_cfa(noisy)?;
    let (w, h) = packed.dims();
    let ones = Plane::filled(w, h, 1.0);
    let base = denoise_variance_guided(&packed, &v, &ones, cfg)?;
    Ok(JointState {
        current: base.clone(),
        base,
        amplification: ones,
        iteration: 0,
    })
}

/// One enhancement residual followed by denoising at the updated gain.
pub fn joint_step(
    state: &JointState,
    theta: &Plane,
    variance: &PackedRaw,
    profile: &CameraProfile,
    cfg: &DenoiseConfig,
) -> Result<JointState> {
    let prev = &state.current;
    check_geometry(prev.dims(), theta.dims())?;
    check_geometry(prev.dims(), variance.dims())?;
    let luminance = luminance_packed(prev, profile);
    let candidate = [0, 1, 2, 3].map(|c| {
        let r = residual_plane(prev.plane(c), theta, &luminance);
        prev.plane(c)
            .zip_map(&r, |a, b| a + b)
            .expect("same geometry")
    });
    let candidate = PackedRaw::new(candidate, prev.cfa())?;
    let amplification = Plane::from_vec(
        prev.width(),
        prev.height(),
        state
            .amplification
            .as_slice()
            .iter()
            .zip(theta.as_slice())
            .zip(luminance.as_slice())
            .map(|((&a, &t), &l)| a * (1.0 + t * (1.0 - l)))
            .collect(),
    )?;
    let current = denoise_variance_guided(&candidate, variance, &amplification, cfg)?;
    Ok(JointState {
        base: state.base.clone(),
        current,
        amplification,
        iteration: state.iteration + 1,
    })
}

/// Noise parameters of a profile, or none when it carries no calibration.
fn profile_noise(profile: &CameraProfile) -> NoiseParams {
    profile.noise.unwrap_or_else(NoiseParams::zero)
}

/// Run initialization and every grid, returning the final state and the
/// guidance the grids were sliced against. The iterate is not clamped.
pub fn joint_run_state(
    noisy: &RawImage,
    grids: &BilateralGridSet,
    profile: &CameraProfile,
    cfg: &DenoiseConfig,
) -> Result<(JointState, GuidanceMap)> {
    if grids.is_empty() {
        return Err(Error::InvalidArgument("iteration count must be ≥ 1".into()));
    }
    let variance = variance_map(&noisy.clipped(), &profile_noise(profile))?;
    let mut state = joint_init(noisy, &variance, cfg)?;
    let guidance = make_guidance(&state.base, profile);
    let packed_var = variance.pack();
    for grid in grids.iter() {
        let theta = slice_checked(grid, &guidance, state.current.dims())?;
        state = joint_step(&state, &theta, &packed_var, profile, cfg)?;
    }
    Ok((state, guidance))
}

/// Joint enhancement and denoising of a noisy mosaic; output clamped to
/// `[0, 1]`.
pub fn joint_run(
    noisy: &RawImage,
    grids: &BilateralGridSet,
    profile: &CameraProfile,
    cfg: &DenoiseConfig,
) -> Result<PackedRaw> {
    let (state, _) = joint_run_state(noisy, grids, profile, cfg)?;
    Ok(clamp_output(&state.current))
}
