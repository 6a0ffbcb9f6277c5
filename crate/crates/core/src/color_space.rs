//! Camera-to-sRGB conversion, the sRGB transfer curve and XYZ luminance.

use crate::error::Result;
use crate::image::{ColorState, Plane, RgbImage};
use crate::raw::{CameraProfile, PackedRaw, PLANE_B, PLANE_G1, PLANE_G2, PLANE_R};

/// Linear sRGB (D65) to CIE XYZ.
pub const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];

/// CIE XYZ to linear sRGB (D65).
pub const XYZ_TO_SRGB: [[f64; 3]; 3] = [
    [3.240_454_2, -1.537_138_5, -0.498_531_4],
    [-0.969_266_0, 1.876_010_8, 0.041_556_0],
    [0.055_643_4, -0.204_025_9, 1.057_225_2],
];

/// Camera-to-XYZ matrix of a camera whose primaries are exactly the sRGB
/// primaries: the inverse of [`XYZ_TO_SRGB`]. The published forward matrix
/// [`SRGB_TO_XYZ`] is rounded and only inverts it to about 1e-4.
pub fn srgb_primaries_to_xyz() -> [[f64; 3]; 3] {
    let m = nalgebra::Matrix3::from_fn(|r, c| XYZ_TO_SRGB[r][c])
        .try_inverse()
        .expect("XYZ_TO_SRGB is invertible");
    [0, 1, 2].map(|r| [m[(r, 0)], m[(r, 1)], m[(r, 2)]])
}

#[inline]
pub fn srgb_encode(v: f64) -> f64 {
    if v <= 0.003_130_8 {
        12.92 * v
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

#[inline]
pub fn srgb_decode(v: f64) -> f64 {
    if v <= 0.040_45 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

fn matmul3(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] = (0..3).map(|k| a[r][k] * b[k][c]).sum();
        }
    }
    out
}

fn apply_matrix(img: &RgbImage, m: &[[f64; 3]; 3], f: impl Fn(f64) -> f64) -> [Plane; 3] {
    let (w, h) = img.dims();
    let mut out = [Plane::zeros(w, h), Plane::zeros(w, h), Plane::zeros(w, h)];
    for i in 0..img.pixel_count() {
        let p = img.pixel(i);
        for (r, plane) in out.iter_mut().enumerate() {
            let v = m[r][0] * p[0] + m[r][1] * p[1] + m[r][2] * p[2];
            plane.as_mut_slice()[i] = f(v);
        }
    }
    out
}

/// White balance, camera matrix and the fixed XYZ to linear sRGB matrix,
/// clamped to `[0, 1]`, optionally followed by the sRGB transfer curve.
pub fn camera_to_srgb(img: &RgbImage, profile: &CameraProfile, encode: bool) -> Result<RgbImage> {
    img.require(ColorState::CameraLinear)?;
    let m = matmul3(&XYZ_TO_SRGB, &profile.balanced_cam_to_xyz());
    let planes = if encode {
        apply_matrix(img, &m, |v| srgb_encode(v.clamp(0.0, 1.0)))
    } else {
        apply_matrix(img, &m, |v| v.clamp(0.0, 1.0))
    };
    let state = if encode {
        ColorState::EncodedSrgb
    } else {
        ColorState::LinearSrgb
    };
    RgbImage::new(planes, state)
}

pub fn encode_srgb(img: &RgbImage) -> Result<RgbImage> {
    img.require(ColorState::LinearSrgb)?;
    Ok(img.map(srgb_encode).with_state(ColorState::EncodedSrgb))
}

pub fn decode_srgb(img: &RgbImage) -> Result<RgbImage> {
    img.require(ColorState::EncodedSrgb)?;
    Ok(img.map(srgb_decode).with_state(ColorState::LinearSrgb))
}

/// Y row of `cam_to_xyz * diag(wb_gains)` per pixel, clamped to `[0, 1]`.
pub fn luminance_xyz(img: &RgbImage, profile: &CameraProfile) -> Result<Plane> {
    img.require(ColorState::CameraLinear)?;
    let w = profile.luminance_weights();
    let (width, height) = img.dims();
    let data = (0..img.pixel_count())
        .map(|i| {
            let p = img.pixel(i);
            (w[0] * p[0] + w[1] * p[1] + w[2] * p[2]).clamp(0.0, 1.0)
        })
        .collect();
    Plane::from_vec(width, height, data)
}

/// Luminance of packed planes using `G = (G1 + G2) / 2`, clamped to `[0, 1]`.
pub fn luminance_packed(packed: &PackedRaw, profile: &CameraProfile) -> Plane {
    let w = profile.luminance_weights();
    let p = packed.planes();
    let (width, height) = packed.dims();
    let data = (0..width * height)
        .map(|i| {
            let r = p[PLANE_R].as_slice()[i];
            let g = 0.5 * (p[PLANE_G1].as_slice()[i] + p[PLANE_G2].as_slice()[i]);
            let b = p[PLANE_B].as_slice()[i];
            (w[0] * r + w[1] * g + w[2] * b).clamp(0.0, 1.0)
        })
        .collect();
    Plane::from_vec(width, height, data).expect("packed planes share geometry")
}
