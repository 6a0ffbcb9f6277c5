//! Physics-based sensor noise: synthesis, per-pixel variance prediction and
//! calibration from dark and flat-field frames.
//!
//! The noisy value of a pixel with clean level `x` is
//!
//! ```text
//! y = kappa * Poisson(x / kappa) + N_r + N_b + N_q
//! ```
//!
//! where `N_r` is Tukey-lambda read noise with standard deviation `sigma_r`,
//! `N_b ~ N(0, sigma_b)` is drawn once per row, and `N_q ~ U(-s/2, s/2)`.

use crate::error::{Error, Result};
use crate::image::Plane;
use crate::raw::{pack_cfa, Cfa, PackedRaw, RawImage};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

/// Poisson means at or above this use the rounded normal approximation.
const POISSON_INVERSION_LIMIT: f64 = 30.0;

/// Noise parameters in normalized digital numbers. A zero `kappa` or `s`
/// disables the photon or quantization term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub kappa: f64,
    pub lambda_r: f64,
    pub sigma_r: f64,
    pub sigma_b: f64,
    pub s: f64,
}

impl NoiseParams {
    /// No noise from any source.
    pub fn zero() -> Self {
        Self {
            kappa: 0.0,
            lambda_r: 0.0,
            sigma_r: 0.0,
            sigma_b: 0.0,
            s: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.kappa,
            self.lambda_r,
            self.sigma_r,
            self.sigma_b,
            self.s,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidNoiseParams(format!(
                "non-finite value in {self:?}"
            )));
        }
        if self.kappa < 0.0 || self.sigma_r < 0.0 || self.sigma_b < 0.0 || self.s < 0.0 {
            return Err(Error::InvalidNoiseParams(format!(
                "kappa, sigma_r, sigma_b and s must be non-negative: {self:?}"
            )));
        }
        if self.lambda_r <= -0.5 {
            return Err(Error::InvalidNoiseParams(format!(
                "lambda_r = {} has infinite variance (need > -0.5)",
                self.lambda_r
            )));
        }
        Ok(())
    }

    /// Signal-independent part of the variance.
    pub fn floor_variance(&self) -> f64 {
        self.sigma_r * self.sigma_r + self.sigma_b * self.sigma_b + self.s * self.s / 12.0
    }

    pub fn is_noiseless(&self) -> bool {
        self.kappa == 0.0 && self.floor_variance() == 0.0
    }
}

/// Quantile function of the Tukey lambda distribution.
pub fn tukey_lambda_quantile(p: f64, lambda: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "probability {p} outside (0, 1)"
        )));
    }
    Ok(tl_quantile_unchecked(p.ln(), (1.0 - p).ln(), lambda))
}

/// Quantile from precomputed `ln p` and `ln(1 - p)`. `expm1` keeps the
/// small-lambda regime accurate and continuous into the logistic limit.
#[inline]
fn tl_quantile_unchecked(ln_p: f64, ln_q: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        ln_p - ln_q
    } else {
        ((lambda * ln_p).exp_m1() - (lambda * ln_q).exp_m1()) / lambda
    }
}

fn tl_variance_closed_form(lambda: f64) -> f64 {
    let ratio = (2.0 * ln_gamma(lambda + 1.0) - ln_gamma(2.0 * lambda + 2.0)).exp();
    2.0 / (lambda * lambda) * (1.0 / (1.0 + 2.0 * lambda) - ratio)
}

/// Variance of the unscaled Tukey lambda distribution, finite for
/// `lambda > -0.5`.
pub fn tukey_lambda_variance(lambda: f64) -> Result<f64> {
    if lambda <= -0.5 || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "Tukey lambda variance is infinite for lambda = {lambda}"
        )));
    }
    // The closed form cancels catastrophically near zero; interpolate
    // between the logistic limit and the closed form there.
    const EDGE: f64 = 1e-3;
    let logistic = PI * PI / 3.0;
    if lambda.abs() < EDGE {
        let edge = tl_variance_closed_form(EDGE.copysign(lambda));
        let t = lambda.abs() / EDGE;
        return Ok(logistic + t * (edge - logistic));
    }
    Ok(tl_variance_closed_form(lambda))
}

/// Tukey lambda distribution rescaled to unit variance.
#[derive(Debug, Clone, Copy)]
pub struct StandardTukeyLambda {
    lambda: f64,
    inv_std: f64,
}

impl StandardTukeyLambda {
    pub fn new(lambda: f64) -> Result<Self> {
        let var = tukey_lambda_variance(lambda)?;
        Ok(Self {
            lambda,
            inv_std: 1.0 / var.sqrt(),
        })
    }
}

impl Distribution<f64> for StandardTukeyLambda {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                break u;
            }
        };
        tl_quantile_unchecked(u.ln(), (-u).ln_1p(), self.lambda) * self.inv_std
    }
}

/// Poisson draw: inversion below [`POISSON_INVERSION_LIMIT`], rounded and
/// non-negative normal approximation above.
pub fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    if mean < POISSON_INVERSION_LIMIT {
        let u: f64 = rng.random();
        let mut k = 0.0;
        let mut p = (-mean).exp();
        let mut cdf = p;
        while u > cdf && p > 0.0 {
            k += 1.0;
            p *= mean / k;
            cdf += p;
        }
        k
    } else {
        let z: f64 = StandardNormal.sample(rng);
        (mean + mean.sqrt() * z).round().max(0.0)
    }
}

/// Add synthetic sensor noise to a clean image. The output is not clipped.
pub fn sample_noise<R: Rng + ?Sized>(
    clean: &RawImage,
    params: &NoiseParams,
    rng: &mut R,
) -> Result<RawImage> {
    params.validate()?;
    let read = StandardTukeyLambda::new(params.lambda_r)?;
    let (w, h) = clean.dims();
    let mut out = Plane::zeros(w, h);
    for y in 0..h {
        let band: f64 = if params.sigma_b > 0.0 {
            params.sigma_b * Distribution::<f64>::sample(&StandardNormal, rng)
        } else {
            0.0
        };
        let src = clean.plane().row(y);
        for (x, &v) in src.iter().enumerate() {
            let signal = if params.kappa > 0.0 {
                params.kappa * sample_poisson(v.max(0.0) / params.kappa, rng)
            } else {
                v
            };
            let read_noise = if params.sigma_r > 0.0 {
                params.sigma_r * read.sample(rng)
            } else {
                0.0
            };
            let quant = if params.s > 0.0 {
                params.s * (rng.random::<f64>() - 0.5)
            } else {
                0.0
            };
            out.set(x, y, signal + read_noise + band + quant);
        }
    }
    RawImage::new(out, clean.cfa())
}

/// Per-pixel noise variance in normalized DN², same geometry as the raw plane.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceMap {
    data: Plane,
    cfa: Cfa,
}

impl VarianceMap {
    pub fn plane(&self) -> &Plane {
        &self.data
    }

    pub fn dims(&self) -> (usize, usize) {
        self.data.dims()
    }

    /// The map split into the four CFA planes.
    pub fn pack(&self) -> PackedRaw {
        let raw =
            RawImage::new(self.data.clone(), self.cfa).expect("variance map has even geometry");
        pack_cfa(&raw).expect("variance map has even geometry")
    }

    pub fn is_zero(&self) -> bool {
        self.data.as_slice().iter().all(|&v| v == 0.0)
    }
}

/// Predicted variance `kappa * x + sigma_r² + sigma_b² + s² / 12`. Negative
/// levels contribute no photon variance.
pub fn variance_map(clean: &RawImage, params: &NoiseParams) -> Result<VarianceMap> {
    params.validate()?;
    let floor = params.floor_variance();
    let data = clean.plane().map(|v| params.kappa * v.max(0.0) + floor);
    Ok(VarianceMap {
        data,
        cfa: clean.cfa(),
    })
}

/// Exposure reduction by a constant factor `>= 1`.
pub fn darken(clean: &RawImage, factor: f64) -> Result<RawImage> {
    if !(factor >= 1.0) || !factor.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "darkening factor must be >= 1, got {factor}"
        )));
    }
    RawImage::new(clean.plane().map(|v| v / factor), clean.cfa())
}

/// Uniform draw from an inclusive darkening-factor range.
pub fn sample_darken_factor<R: Rng + ?Sized>(range: (f64, f64), rng: &mut R) -> Result<f64> {
    let (lo, hi) = range;
    if !(lo >= 1.0) || !(hi >= lo) || !hi.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "darkening range {lo}:{hi} must satisfy 1 <= lo <= hi"
        )));
    }
    if lo == hi {
        return Ok(lo);
    }
    Ok(rng.random_range(lo..=hi))
}

/// Row-banding estimate with the quantities it was derived from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandingEstimate {
    pub sigma_b: f64,
    /// Pooled variance of mean-removed row means.
    pub row_mean_variance: f64,
    /// Pooled within-row variance.
    pub within_row_variance: f64,
}

/// Estimate banding from the spread of row means in dark frames, corrected
/// for the sampling noise each row mean carries.
pub fn estimate_banding(dark_frames: &[RawImage]) -> Result<BandingEstimate> {
    const NAME: &str = "estimate_banding";
    if dark_frames.len() < 2 {
        return Err(Error::Calibration {
            estimator: NAME,
            reason: format!("need ≥ 2 dark frames, got {}", dark_frames.len()),
        });
    }
    let (w, h) = dark_frames[0].dims();
    if h < 64 || w < 2 {
        return Err(Error::Calibration {
            estimator: NAME,
            reason: format!("need ≥ 64 rows per dark frame, got {h}"),
        });
    }
    let mut row_ss = 0.0;
    let mut row_dof = 0.0;
    let mut within_ss = 0.0;
    let mut within_dof = 0.0;
    for frame in dark_frames {
        if frame.dims() != (w, h) {
            return Err(Error::GeometryMismatch {
                expected: (w, h),
                actual: frame.dims(),
            });
        }
        let plane = frame.plane();
        let row_means: Vec<f64> = (0..h)
            .map(|y| plane.row(y).iter().sum::<f64>() / w as f64)
            .collect();
        let frame_mean = row_means.iter().sum::<f64>() / h as f64;
        row_ss += row_means
            .iter()
            .map(|m| (m - frame_mean).powi(2))
            .sum::<f64>();
        row_dof += (h - 1) as f64;
        for (y, m) in row_means.iter().enumerate() {
            within_ss += plane.row(y).iter().map(|v| (v - m).powi(2)).sum::<f64>();
        }
        within_dof += (h * (w - 1)) as f64;
    }
    let row_mean_variance = row_ss / row_dof;
    let within_row_variance = within_ss / within_dof;
    let banding_var = (row_mean_variance - within_row_variance / w as f64).max(0.0);
    Ok(BandingEstimate {
        sigma_b: banding_var.sqrt(),
        row_mean_variance,
        within_row_variance,
    })
}

/// Result of the probability-plot fit of the read-noise distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TukeyFit {
    pub lambda_r: f64,
    pub sigma_r: f64,
    /// Probability plot correlation coefficient at `lambda_r`.
    pub ppcc: f64,
    pub samples: usize,
}

/// Lower end, step and count of the shape search grid.
const PPCC_LAMBDA_MIN: f64 = -0.45;
const PPCC_LAMBDA_STEP: f64 = 0.01;
const PPCC_LAMBDA_COUNT: usize = 146;
const PPCC_MIN_SAMPLES: usize = 10_000;

/// Filliben's order-statistic medians for a sample of size `n`.
pub fn filliben_positions(n: usize) -> Vec<f64> {
    let mut m: Vec<f64> = (1..=n)
        .map(|i| (i as f64 - 0.3175) / (n as f64 + 0.365))
        .collect();
    if n >= 1 {
        let last = 0.5f64.powf(1.0 / n as f64);
        m[n - 1] = last;
        m[0] = 1.0 - last;
    }
    m
}

/// Pearson correlation and least-squares slope of `y` against `x`.
fn correlation_and_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    (sxy / (sxx * syy).sqrt(), sxy / sxx)
}

/// Fit read-noise shape and scale on row-mean-removed dark frames by
/// maximizing the probability plot correlation over the shape grid.
pub fn estimate_tukey_ppcc(dark_frames: &[RawImage]) -> Result<TukeyFit> {
    const NAME: &str = "estimate_tukey_ppcc";
    let mut samples = Vec::new();
    for frame in dark_frames {
        let plane = frame.plane();
        for y in 0..plane.height() {
            let row = plane.row(y);
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            samples.extend(row.iter().map(|v| v - mean));
        }
    }
    if samples.len() < PPCC_MIN_SAMPLES {
        return Err(Error::Calibration {
            estimator: NAME,
            reason: format!(
                "need ≥ {PPCC_MIN_SAMPLES} dark pixels, got {}",
                samples.len()
            ),
        });
    }
    samples.par_sort_unstable_by(f64::total_cmp);
    if samples[0] == samples[samples.len() - 1] {
        return Err(Error::Calibration {
            estimator: NAME,
            reason: "dark samples are constant".into(),
        });
    }
    let positions = filliben_positions(samples.len());
    let logs: Vec<(f64, f64)> = positions.iter().map(|&m| (m.ln(), (-m).ln_1p())).collect();

    let fits: Vec<(f64, f64, f64)> = (0..PPCC_LAMBDA_COUNT)
        .into_par_iter()
        .map(|k| {
            // Snap to the 0.01 lattice so grid values are exact decimals.
            let lambda = ((PPCC_LAMBDA_MIN + k as f64 * PPCC_LAMBDA_STEP) * 100.0).round() / 100.0;
            let q: Vec<f64> = logs
                .iter()
                .map(|&(lp, lq)| tl_quantile_unchecked(lp, lq, lambda))
                .collect();
            let (r, slope) = correlation_and_slope(&q, &samples);
            (lambda, r, slope)
        })
        .collect();

    // Highest correlation wins; ties go to the smaller |lambda|.
    let mut best = fits[0];
    for &fit in &fits[1..] {
        let better = fit.1 > best.1 || (fit.1 == best.1 && fit.0.abs() < best.0.abs());
        if better {
            best = fit;
        }
    }
    let (lambda_r, ppcc, slope) = best;
    let sigma_r = slope * tukey_lambda_variance(lambda_r)?.sqrt();
    Ok(TukeyFit {
        lambda_r,
        sigma_r,
        ppcc,
        samples: samples.len(),
    })
}

/// Photon-transfer fit `variance = kappa * mean + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainEstimate {
    pub kappa: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `(mean, variance)` points entering the regression.
    pub points: Vec<(f64, f64)>,
}

/// Estimate conversion gain from pairs of equally exposed flat fields.
pub fn estimate_gain_photon_transfer(
    flat_pairs: &[(RawImage, RawImage)],
    patch: usize,
) -> Result<GainEstimate> {
    const NAME: &str = "estimate_gain_photon_transfer";
    if patch < 2 {
        return Err(Error::InvalidArgument(format!(
            "patch size {patch} too small"
        )));
    }
    let mut points = Vec::new();
    for (a, b) in flat_pairs {
        if a.dims() != b.dims() {
            return Err(Error::GeometryMismatch {
                expected: a.dims(),
                actual: b.dims(),
            });
        }
        let (w, h) = a.dims();
        for py in 0..h / patch {
            for px in 0..w / patch {
                let mut sum = 0.0;
                let mut diffs = Vec::with_capacity(patch * patch);
                let mut saturated = false;
                for y in py * patch..(py + 1) * patch {
                    for x in px * patch..(px + 1) * patch {
                        let va = a.plane().get(x, y);
                        let vb = b.plane().get(x, y);
                        saturated |= va >= 1.0 || vb >= 1.0;
                        sum += va + vb;
                        diffs.push(va - vb);
                    }
                }
                if saturated {
                    continue;
                }
                let n = diffs.len() as f64;
                let mean = sum / (2.0 * n);
                let dm = diffs.iter().sum::<f64>() / n;
                let var = diffs.iter().map(|d| (d - dm).powi(2)).sum::<f64>() / (n - 1.0) / 2.0;
                if mean.is_finite() && var.is_finite() {
                    points.push((mean, var));
                }
            }
        }
    }
    if points.len() < 3 {
        return Err(Error::Calibration {
            estimator: NAME,
            reason: format!(
                "need ≥ 3 usable (mean, variance) points, got {}",
                points.len()
            ),
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Calibration {
            estimator: NAME,
            reason: "all flat-field patches have the same mean level".into(),
        });
    }
    let kappa = sxy / sxx;
    let intercept = my - kappa * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Ok(GainEstimate {
        kappa,
        intercept,
        r_squared,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quantile_plug_ins() {
        assert!((tukey_lambda_quantile(0.75, 1.0).unwrap() - 0.5).abs() < 1e-15);
        for lambda in [-0.3, 0.0, 0.14, 0.7, 2.0] {
            assert!(tukey_lambda_quantile(0.5, lambda).unwrap().abs() < 1e-15);
        }
        assert!((tukey_lambda_quantile(0.75, 0.0).unwrap() - 3f64.ln()).abs() < 1e-15);
        assert!(tukey_lambda_quantile(0.0, 0.2).is_err());
        assert!(tukey_lambda_quantile(1.0, 0.2).is_err());
    }

    #[test]
    fn quantile_continuous_at_zero() {
        let at0 = tukey_lambda_quantile(0.9, 0.0).unwrap();
        for eps in [1e-9, -1e-9, 1e-6] {
            assert!((tukey_lambda_quantile(0.9, eps).unwrap() - at0).abs() < 1e-5);
        }
    }

    #[test]
    fn variance_closed_form_checks() {
        // lambda = 1 is uniform on [-1, 1].
        assert!((tukey_lambda_variance(1.0).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((tukey_lambda_variance(0.0).unwrap() - PI * PI / 3.0).abs() < 1e-12);
        // Reference values evaluated at 40 significant digits.
        let near = tukey_lambda_variance(5e-4).unwrap();
        assert!((near - 3.284_181_055_881_417).abs() < 1e-4);
        let edge = tukey_lambda_variance(2e-3).unwrap();
        assert!((edge - 3.267_202_314_826_882).abs() < 1e-9);
        let heavy = tukey_lambda_variance(-0.2).unwrap();
        assert!((heavy - 7.485_121_693_687_174).abs() < 1e-9);
        assert!(tukey_lambda_variance(-0.5).is_err());
    }

    #[test]
    fn variance_map_plug_ins() {
        let clean = RawImage::filled(4, 4, 0.5, Cfa::Rggb).unwrap();
        let v = variance_map(&clean, &NoiseParams::zero()).unwrap();
        assert!(v.is_zero());
        let p = NoiseParams {
            kappa: 0.01,
            ..NoiseParams::zero()
        };
        let v = variance_map(&clean, &p).unwrap();
        assert!(v
            .plane()
            .as_slice()
            .iter()
            .all(|&x| (x - 0.005).abs() < 1e-15));
        let bad = NoiseParams {
            lambda_r: -0.5,
            ..NoiseParams::zero()
        };
        assert!(variance_map(&clean, &bad).is_err());
    }

    #[test]
    fn vanishing_gain_returns_clean() {
        let clean = RawImage::new(
            Plane::from_fn(16, 16, |x, y| (x + 16 * y) as f64 / 256.0),
            Cfa::Rggb,
        )
        .unwrap();
        let p = NoiseParams {
            kappa: 1e-8,
            ..NoiseParams::zero()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let noisy = sample_noise(&clean, &p, &mut rng).unwrap();
        assert!(noisy.plane().max_abs_diff(clean.plane()) < 1e-3);
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let clean = RawImage::filled(8, 8, 0.3, Cfa::Rggb).unwrap();
        let p = NoiseParams {
            kappa: 0.01,
            lambda_r: 0.1,
            sigma_r: 0.01,
            sigma_b: 0.005,
            s: 1e-3,
        };
        let a = sample_noise(&clean, &p, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_noise(&clean, &p, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn banding_only_rows_are_constant() {
        let clean = RawImage::filled(32, 64, 0.2, Cfa::Rggb).unwrap();
        let p = NoiseParams {
            sigma_b: 0.01,
            ..NoiseParams::zero()
        };
        let noisy = sample_noise(&clean, &p, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        for y in 0..64 {
            let row = noisy.plane().row(y);
            assert!(row.iter().all(|&v| v == row[0]));
        }
        assert!(noisy.plane().variance() > 0.0);
    }

    #[test]
    fn darken_plug_ins() {
        let clean = RawImage::filled(2, 2, 0.8, Cfa::Rggb).unwrap();
        assert_eq!(darken(&clean, 1.0).unwrap(), clean);
        assert!((darken(&clean, 16.0).unwrap().plane().get(0, 0) - 0.05).abs() < 1e-15);
        let ramp =
            RawImage::new(Plane::from_fn(4, 4, |x, y| (x * y) as f64 / 9.0), Cfa::Rggb).unwrap();
        assert_eq!(
            darken(&ramp, 2.0).unwrap().plane().mean(),
            ramp.plane().mean() / 2.0
        );
        assert!(darken(&clean, 0.5).is_err());
    }

    #[test]
    fn zero_noise_darks_give_zero_banding() {
        let darks: Vec<RawImage> = (0..3)
            .map(|_| RawImage::filled(16, 64, 0.0, Cfa::Rggb).unwrap())
            .collect();
        assert_eq!(estimate_banding(&darks).unwrap().sigma_b, 0.0);
        assert!(estimate_banding(&darks[..1]).is_err());
        let short: Vec<RawImage> = (0..2)
            .map(|_| RawImage::filled(16, 32, 0.0, Cfa::Rggb).unwrap())
            .collect();
        assert!(estimate_banding(&short).is_err());
    }

    #[test]
    fn ppcc_rejects_degenerate_input() {
        let darks: Vec<RawImage> = (0..2)
            .map(|_| RawImage::filled(128, 64, 0.0, Cfa::Rggb).unwrap())
            .collect();
        assert!(estimate_tukey_ppcc(&darks).is_err());
        let small = vec![RawImage::filled(16, 16, 0.0, Cfa::Rggb).unwrap()];
        assert!(estimate_tukey_ppcc(&small).is_err());
    }

    #[test]
    fn noiseless_flats_have_zero_slope() {
        let pairs: Vec<(RawImage, RawImage)> = [0.1, 0.2, 0.3, 0.4, 0.5]
            .iter()
            .map(|&v| {
                let f = RawImage::filled(64, 64, v, Cfa::Rggb).unwrap();
                (f.clone(), f)
            })
            .collect();
        let est = estimate_gain_photon_transfer(&pairs, 32).unwrap();
        assert_eq!(est.kappa, 0.0);
        let tiny = vec![pairs[0].clone()];
        assert!(estimate_gain_photon_transfer(&tiny[..0], 32).is_err());
    }

    #[test]
    fn filliben_endpoints() {
        let m = filliben_positions(4);
        assert!((m[3] - 0.5f64.powf(0.25)).abs() < 1e-15);
        assert!((m[0] - (1.0 - m[3])).abs() < 1e-15);
        assert!((m[1] - (2.0 - 0.3175) / 4.365).abs() < 1e-15);
    }
}
