//! Zero-reference fitting of the per-iteration bilateral grids on the
//! low-resolution image.
//!
//! The objective is the exposure loss of the enhanced image plus grid
//! smoothness and magnitude penalties:
//!
//! ```text
//! J = mean_x(1 - exp(-(p(x) - 0.5)^2 / (2 delta^2)))
//!   + w_tv * sum_n tv(B_n) + w_mag * sum_n |B_n|^2 / 4096
//! ```
//!
//! with `p` the channel mean of `I_N`. Gradients are accumulated in reverse
//! through every illumination step (including its luminance term) and the
//! slicing adjoint.

use crate::color_space::luminance_xyz;
use crate::error::{Error, Result};
use crate::grid::{
    slice, slice_adjoint, BilateralGrid, BilateralGridSet, GuidanceMap, GRID_CELLS, GRID_SIZE,
};
use crate::image::{ColorState, Plane, RgbImage};
use crate::raw::CameraProfile;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    /// Width of the exposure well around 0.5.
    pub delta: f64,
    pub iterations: usize,
    pub w_tv: f64,
    pub w_mag: f64,
    pub steps: usize,
    pub step_size: f64,
    pub momentum: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            delta: 0.2,
            iterations: crate::enhance::DEFAULT_ITERATIONS,
            w_tv: 0.1,
            w_mag: 0.01,
            steps: 200,
            step_size: 0.05,
            momentum: 0.9,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if !(self.delta > 0.0) {
            return bad("delta must be positive");
        }
        if self.iterations == 0 {
            return bad("iterations must be ≥ 1");
        }
        if !(self.w_tv >= 0.0) || !(self.w_mag >= 0.0) {
            return bad("regularization weights must be non-negative");
        }
        if !(self.step_size > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return bad("step size must be positive and momentum in [0, 1)");
        }
        Ok(())
    }
}

const PIXEL_BLOCK: usize = 4096;

/// Sum of `f(i)` over `0..n`, reduced over fixed blocks in index order so
/// the result does not depend on thread scheduling.
fn ordered_sum(n: usize, f: impl Fn(usize) -> f64 + Sync) -> f64 {
    let partials: Vec<f64> = (0..n.div_ceil(PIXEL_BLOCK))
        .into_par_iter()
        .map(|b| {
            (b * PIXEL_BLOCK..((b + 1) * PIXEL_BLOCK).min(n))
                .map(&f)
                .sum()
        })
        .collect();
    partials.iter().sum()
}

#[inline]
fn exposure_term(p: f64, delta: f64) -> f64 {
    let d = p - 0.5;
    1.0 - (-(d * d) / (2.0 * delta * delta)).exp()
}

/// Mean Gaussian-well exposure penalty of the per-pixel channel mean.
pub fn exposure_loss(img: &RgbImage, delta: f64) -> Result<f64> {
    let m = img.pixel_count();
    if m == 0 {
        return Err(Error::InvalidArgument(
            "exposure loss of an empty image".into(),
        ));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument("delta must be positive".into()));
    }
    let [r, g, b] = img.channels();
    let (r, g, b) = (r.as_slice(), g.as_slice(), b.as_slice());
    Ok(ordered_sum(m, |i| exposure_term((r[i] + g[i] + b[i]) / 3.0, delta)) / m as f64)
}

/// Number of axis-adjacent cell pairs in one grid.
const TV_PAIRS: f64 = (3 * (GRID_SIZE - 1) * GRID_SIZE * GRID_SIZE) as f64;

/// Mean squared difference over all axis-adjacent cell pairs.
pub fn grid_tv3(grid: &BilateralGrid) -> f64 {
    let mut total = 0.0;
    for_each_pair(|a, b| {
        let d = grid.as_slice()[a] - grid.as_slice()[b];
        total += d * d;
    });
    total / TV_PAIRS
}

fn grid_tv3_gradient(grid: &BilateralGrid, scale: f64, out: &mut [f64]) {
    let c = grid.as_slice();
    for_each_pair(|a, b| {
        let g = scale * 2.0 * (c[a] - c[b]) / TV_PAIRS;
        out[a] += g;
        out[b] -= g;
    });
}

/// Calls `f(a, b)` for every pair of neighboring cell indices along x, y, z.
fn for_each_pair(mut f: impl FnMut(usize, usize)) {
    let n = GRID_SIZE;
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let here = BilateralGrid::index(i, j, k);
                if i + 1 < n {
                    f(here, BilateralGrid::index(i + 1, j, k));
                }
                if j + 1 < n {
                    f(here, BilateralGrid::index(i, j + 1, k));
                }
                if k + 1 < n {
                    f(here, BilateralGrid::index(i, j, k + 1));
                }
            }
        }
    }
}

/// Objective value, its parts, and the gradient with respect to each grid.
#[derive(Debug, Clone)]
pub struct Objective {
    pub loss: f64,
    pub exposure: f64,
    pub regularization: f64,
    pub gradient: Vec<BilateralGrid>,
}

/// Regularization value, added into `gradient` when given.
fn regularization(
    grids: &BilateralGridSet,
    cfg: &FitConfig,
    mut gradient: Option<&mut [BilateralGrid]>,
) -> f64 {
    let mut total = 0.0;
    for (n, grid) in grids.iter().enumerate() {
        total += cfg.w_tv * grid_tv3(grid) + cfg.w_mag * grid.norm_squared() / GRID_CELLS as f64;
        if let Some(grads) = gradient.as_deref_mut() {
            let out = grads[n].as_mut_slice();
            if cfg.w_tv > 0.0 {
                grid_tv3_gradient(grid, cfg.w_tv, out);
            }
            for (o, &c) in out.iter_mut().zip(grid.as_slice()) {
                *o += cfg.w_mag * 2.0 * c / GRID_CELLS as f64;
            }
        }
    }
    total
}

/// Planar forward iterate for the three-channel low-resolution image.
struct Forward {
    /// `I_0 ..= I_N`, three channels each.
    images: Vec<[Vec<f64>; 3]>,
    thetas: Vec<Vec<f64>>,
    /// Unclamped luminance of `I_{n-1}` for each step.
    luminance: Vec<Vec<f64>>,
}

fn forward(
    input: &RgbImage,
    grids: &BilateralGridSet,
    guidance: &GuidanceMap,
    weights: [f64; 3],
) -> Forward {
    let m = input.pixel_count();
    let first = [0, 1, 2].map(|c| input.channel(c).as_slice().to_vec());
    let mut images = vec![first];
    let mut thetas = Vec::with_capacity(grids.len());
    let mut luminance = Vec::with_capacity(grids.len());
    for grid in grids.iter() {
        let theta = slice(grid, guidance).into_vec();
        let prev = images.last().expect("non-empty");
        let lum: Vec<f64> = (0..m)
            .map(|i| weights[0] * prev[0][i] + weights[1] * prev[1][i] + weights[2] * prev[2][i])
            .collect();
        let next = [0, 1, 2].map(|c| {
            (0..m)
                .map(|i| prev[c][i] * (1.0 + theta[i] * (1.0 - lum[i].clamp(0.0, 1.0))))
                .collect::<Vec<f64>>()
        });
        images.push(next);
        thetas.push(theta);
        luminance.push(lum);
    }
    Forward {
        images,
        thetas,
        luminance,
    }
}

fn check_lowres(input: &RgbImage, guidance: &GuidanceMap) -> Result<()> {
    crate::error::check_geometry(input.dims(), guidance.dims())?;
    if input.pixel_count() == 0 {
        return Err(Error::InvalidArgument("empty low-resolution image".into()));
    }
    Ok(())
}

/// Objective only, without the reverse pass.
pub fn objective(
    input: &RgbImage,
    grids: &BilateralGridSet,
    guidance: &GuidanceMap,
    profile: &CameraProfile,
    cfg: &FitConfig,
) -> Result<f64> {
    check_lowres(input, guidance)?;
    let fwd = forward(input, grids, guidance, profile.luminance_weights());
    let last = fwd.images.last().expect("non-empty");
    let m = input.pixel_count();
    let exposure = ordered_sum(m, |i| {
        exposure_term((last[0][i] + last[1][i] + last[2][i]) / 3.0, cfg.delta)
    }) / m as f64;
    Ok(exposure + regularization(grids, cfg, None))
}

/// Objective and its exact gradient with respect to every grid cell.
pub fn objective_and_gradient(
    input: &RgbImage,
    grids: &BilateralGridSet,
    guidance: &GuidanceMap,
    profile: &CameraProfile,
    cfg: &FitConfig,
) -> Result<Objective> {
    check_lowres(input, guidance)?;
    let weights = profile.luminance_weights();
    let fwd = forward(input, grids, guidance, weights);
    let m = input.pixel_count();
    let (w, h) = input.dims();
    let delta2 = cfg.delta * cfg.delta;

    let last = fwd.images.last().expect("non-empty");
    let exposure = ordered_sum(m, |i| {
        exposure_term((last[0][i] + last[1][i] + last[2][i]) / 3.0, cfg.delta)
    }) / m as f64;

    // d(exposure)/dI_N, identical for the three channels.
    let mut adj: [Vec<f64>; 3] = {
        let g: Vec<f64> = (0..m)
            .map(|i| {
                let d = (last[0][i] + last[1][i] + last[2][i]) / 3.0 - 0.5;
                (-(d * d) / (2.0 * delta2)).exp() * d / delta2 / (3.0 * m as f64)
            })
            .collect();
        [g.clone(), g.clone(), g]
    };

    let mut gradient = vec![BilateralGrid::zeros(); grids.len()];
    for n in (0..grids.len()).rev() {
        let prev = &fwd.images[n];
        let theta = &fwd.thetas[n];
        let lum = &fwd.luminance[n];
        let mut theta_adj = vec![0.0; m];
        let mut prev_adj: [Vec<f64>; 3] = [vec![0.0; m], vec![0.0; m], vec![0.0; m]];
        for i in 0..m {
            let l_raw = lum[i];
            let l = l_raw.clamp(0.0, 1.0);
            let gain = 1.0 + theta[i] * (1.0 - l);
            let weighted = adj[0][i] * prev[0][i] + adj[1][i] * prev[1][i] + adj[2][i] * prev[2][i];
            theta_adj[i] = weighted * (1.0 - l);
            // Clamped luminance has no derivative outside (0, 1).
            let through_l = if l_raw > 0.0 && l_raw < 1.0 {
                theta[i] * weighted
            } else {
                0.0
            };
            for c in 0..3 {
                prev_adj[c][i] = adj[c][i] * gain - through_l * weights[c];
            }
        }
        let cot = Plane::from_vec(w, h, theta_adj)?;
        gradient[n] = slice_adjoint(guidance, &cot)?;
        adj = prev_adj;
    }
    let regularization = regularization(grids, cfg, Some(&mut gradient));
    Ok(Objective {
        loss: exposure + regularization,
        exposure,
        regularization,
        gradient,
    })
}

/// Result of [`fit_grids`].
#[derive(Debug, Clone)]
pub struct FitResult {
    pub grids: BilateralGridSet,
    /// Objective of the returned grids.
    pub objective: f64,
    /// Exposure loss of the returned grids' enhanced image.
    pub exposure: f64,
    /// Best objective seen after each step (non-increasing).
    pub history: Vec<f64>,
}

/// Guidance for the low-resolution branch: clamped luminance of the input.
pub fn lowres_guidance(input: &RgbImage, profile: &CameraProfile) -> Result<GuidanceMap> {
    Ok(GuidanceMap::new(luminance_xyz(input, profile)?))
}

/// Per-cell step scale: the inverse of the fraction of slicing weight a
/// cell receives, capped at the grid size for cells with little support.
fn support_preconditioner(guidance: &GuidanceMap) -> Result<Vec<f64>> {
    let (w, h) = guidance.dims();
    let share = 1.0 / (w * h) as f64;
    let mass = slice_adjoint(guidance, &Plane::filled(w, h, share))?;
    Ok(mass
        .as_slice()
        .iter()
        .map(|&m| 1.0 / m.max(1.0 / GRID_CELLS as f64))
        .collect())
}

/// Momentum descent on the grids from zero initialization. Returns the
/// iterate with the lowest objective seen.
pub fn fit_grids(input: &RgbImage, profile: &CameraProfile, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    input.require(ColorState::CameraLinear)?;
    let guidance = lowres_guidance(input, profile)?;
    let precond = support_preconditioner(&guidance)?;

    let mut grids = BilateralGridSet::zeros(cfg.iterations)?;
    let mut velocity = vec![vec![0.0; GRID_CELLS]; cfg.iterations];
    let mut best = objective_and_gradient(input, &grids, &guidance, profile, cfg)?;
    if !best.loss.is_finite() {
        return Err(Error::NonFiniteObjective {
            step: 0,
            value: best.loss,
        });
    }
    let mut best_grids = grids.clone();
    let mut current = best.clone();
    let mut history = Vec::with_capacity(cfg.steps);
    for step in 1..=cfg.steps {
        for (n, grid) in grids.grids_mut().iter_mut().enumerate() {
            let g = current.gradient[n].as_slice();
            for (((cell, v), &gi), &p) in grid
                .as_mut_slice()
                .iter_mut()
                .zip(velocity[n].iter_mut())
                .zip(g)
                .zip(&precond)
            {
                *v = cfg.momentum * *v - cfg.step_size * p * gi;
                *cell += *v;
            }
        }
        current = objective_and_gradient(input, &grids, &guidance, profile, cfg)?;
        if !current.loss.is_finite() {
            return Err(Error::NonFiniteObjective {
                step,
                value: current.loss,
            });
        }
        if current.loss < best.loss {
            best = current.clone();
            best_grids = grids.clone();
        }
        history.push(best.loss);
    }
    Ok(FitResult {
        grids: best_grids,
        objective: best.loss,
        exposure: best.exposure,
        history,
    })
}

/// Enhance the low-resolution image with the given grids (no clamping).
pub fn enhance_lowres(
    input: &RgbImage,
    grids: &BilateralGridSet,
    profile: &CameraProfile,
) -> Result<RgbImage> {
    let guidance = lowres_guidance(input, profile)?;
    let fwd = forward(input, grids, &guidance, profile.luminance_weights());
    let (w, h) = input.dims();
    let [r, g, b] = fwd.images.into_iter().last().expect("non-empty");
    RgbImage::new(
        [
            Plane::from_vec(w, h, r)?,
            Plane::from_vec(w, h, g)?,
            Plane::from_vec(w, h, b)?,
        ],
        input.state(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exposure_plug_ins() {
        let mid = RgbImage::filled(3, 3, [0.5; 3], ColorState::CameraLinear);
        assert_eq!(exposure_loss(&mid, 0.2).unwrap(), 0.0);
        let one = RgbImage::filled(1, 1, [0.7; 3], ColorState::CameraLinear);
        assert!((exposure_loss(&one, 0.2).unwrap() - (1.0 - (-0.5f64).exp())).abs() < 1e-12);
        let black = RgbImage::filled(4, 2, [0.0; 3], ColorState::CameraLinear);
        assert!((exposure_loss(&black, 0.2).unwrap() - (1.0 - (-3.125f64).exp())).abs() < 1e-12);
        let empty = RgbImage::filled(0, 0, [0.0; 3], ColorState::CameraLinear);
        assert!(exposure_loss(&empty, 0.2).is_err());
    }

    #[test]
    fn tv_of_constant_and_z_step() {
        assert_eq!(grid_tv3(&BilateralGrid::constant(4.0)), 0.0);
        // A unit step between z = 7 and z = 8 touches 256 z-pairs only.
        let step = BilateralGrid::from_fn(|_, _, k| if k >= 8 { 1.0 } else { 0.0 });
        assert!((grid_tv3(&step) - 256.0 / TV_PAIRS).abs() < 1e-15);
    }

    #[test]
    fn mid_gray_is_stationary() {
        let profile = CameraProfile::reference(crate::raw::Cfa::Rggb);
        let img = RgbImage::filled(16, 16, [0.5; 3], ColorState::CameraLinear);
        let guidance = lowres_guidance(&img, &profile).unwrap();
        let cfg = FitConfig::default();
        let grids = BilateralGridSet::zeros(3).unwrap();
        let obj = objective_and_gradient(&img, &grids, &guidance, &profile, &cfg).unwrap();
        assert_eq!(obj.exposure, 0.0);
        assert_eq!(obj.regularization, 0.0);
        assert!(obj.gradient.iter().all(BilateralGrid::is_zero));
    }

    #[test]
    fn config_validation() {
        assert!(FitConfig::default().validate().is_ok());
        let bad = FitConfig {
            delta: 0.0,
            ..FitConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = FitConfig {
            iterations: 0,
            ..FitConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
