//! Mosaiced raw container, camera profile, packing and demosaicing.

use crate::color_space::srgb_primaries_to_xyz;
use crate::error::{check_geometry, Error, Result};
use crate::image::{ColorState, Plane, RgbImage};
use crate::noise::NoiseParams;
use serde::{Deserialize, Serialize};

/// 2x2 color filter array layout, named by the tile in raster order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Cfa {
    Rggb,
    Bggr,
    Grbg,
    Gbrg,
}

/// Index of a plane inside a [`PackedRaw`].
pub const PLANE_R: usize = 0;
pub const PLANE_G1: usize = 1;
pub const PLANE_G2: usize = 2;
pub const PLANE_B: usize = 3;

impl Cfa {
    pub const ALL: [Cfa; 4] = [Cfa::Rggb, Cfa::Bggr, Cfa::Grbg, Cfa::Gbrg];

    /// Packed plane index for each tile position, in raster order
    /// `(0,0), (1,0), (0,1), (1,1)`.
    fn tile(self) -> [usize; 4] {
        match self {
            Cfa::Rggb => [PLANE_R, PLANE_G1, PLANE_G2, PLANE_B],
            Cfa::Bggr => [PLANE_B, PLANE_G1, PLANE_G2, PLANE_R],
            Cfa::Grbg => [PLANE_G1, PLANE_R, PLANE_B, PLANE_G2],
            Cfa::Gbrg => [PLANE_G1, PLANE_B, PLANE_R, PLANE_G2],
        }
    }

    /// Packed plane index of the site at full-resolution `(x, y)`.
    #[inline]
    pub fn plane_at(self, x: usize, y: usize) -> usize {
        self.tile()[(y & 1) * 2 + (x & 1)]
    }

    /// RGB channel (0 = R, 1 = G, 2 = B) sampled at `(x, y)`.
    #[inline]
    pub fn channel_at(self, x: usize, y: usize) -> usize {
        match self.plane_at(x, y) {
            PLANE_R => 0,
            PLANE_B => 2,
            _ => 1,
        }
    }

    /// Offset of `plane` inside each 2x2 tile.
    pub fn offset_of(self, plane: usize) -> (usize, usize) {
        let pos = self
            .tile()
            .iter()
            .position(|&p| p == plane)
            .expect("plane index out of range");
        (pos & 1, pos >> 1)
    }
}

/// Per-camera calibration record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraProfile {
    pub cfa: Cfa,
    pub black_level: f64,
    pub white_level: f64,
    pub wb_gains: [f64; 3],
    pub cam_to_xyz: [[f64; 3]; 3],
    /// Quantization step in normalized units.
    pub s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseParams>,
}

impl CameraProfile {
    pub fn new(
        cfa: Cfa,
        black_level: f64,
        white_level: f64,
        wb_gains: [f64; 3],
        cam_to_xyz: [[f64; 3]; 3],
    ) -> Result<Self> {
        let profile = Self {
            cfa,
            black_level,
            white_level,
            wb_gains,
            cam_to_xyz,
            s: 1.0 / (white_level - black_level),
            noise: None,
        };
        profile.validate()?;
        Ok(profile)
    }

    /// A 12-bit profile whose camera space is linear sRGB with unit
    /// white-balance gains.
    pub fn reference(cfa: Cfa) -> Self {
        Self::new(cfa, 256.0, 4095.0, [1.0; 3], srgb_primaries_to_xyz())
            .expect("reference profile is valid")
    }

    pub fn with_noise(mut self, noise: NoiseParams) -> Self {
        self.noise = Some(noise);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.black_level < self.white_level) {
            return Err(Error::InvalidProfile(format!(
                "black level {} must be below white level {}",
                self.black_level, self.white_level
            )));
        }
        if self.wb_gains.iter().any(|&g| !(g > 0.0) || !g.is_finite()) {
            return Err(Error::InvalidProfile(format!(
                "white-balance gains must be positive, got {:?}",
                self.wb_gains
            )));
        }
        let m = nalgebra::Matrix3::from_fn(|r, c| self.cam_to_xyz[r][c]);
        if !m.iter().all(|v| v.is_finite()) || m.determinant().abs() < 1e-12 {
            return Err(Error::InvalidProfile(
                "camera-to-XYZ matrix is not invertible".into(),
            ));
        }
        if !(self.s > 0.0) {
            return Err(Error::InvalidProfile(format!(
                "quantization step must be positive, got {}",
                self.s
            )));
        }
        if let Some(noise) = &self.noise {
            noise.validate()?;
        }
        Ok(())
    }

    /// `cam_to_xyz * diag(wb_gains)`.
    pub fn balanced_cam_to_xyz(&self) -> [[f64; 3]; 3] {
        let mut out = self.cam_to_xyz;
        for row in out.iter_mut() {
            for (c, v) in row.iter_mut().enumerate() {
                *v *= self.wb_gains[c];
            }
        }
        out
    }

    /// Weights of the XYZ luminance row applied to white-balanced camera RGB.
    pub fn luminance_weights(&self) -> [f64; 3] {
        self.balanced_cam_to_xyz()[1]
    }
}

/// Single-plane mosaiced sensor data in normalized units.
#[derive(Debug, Clone, PartialEq)]
pub struct RawImage {
    data: Plane,
    cfa: Cfa,
}

impl RawImage {
    pub fn new(data: Plane, cfa: Cfa) -> Result<Self> {
        let (width, height) = data.dims();
        if width % 2 != 0 || height % 2 != 0 {
            return Err(Error::OddDimensions { width, height });
        }
        if data.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("raw samples must be finite".into()));
        }
        Ok(Self { data, cfa })
    }

    pub fn filled(width: usize, height: usize, value: f64, cfa: Cfa) -> Result<Self> {
        Self::new(Plane::filled(width, height, value), cfa)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.data.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.data.height()
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.data.dims()
    }

    #[inline]
    pub fn cfa(&self) -> Cfa {
        self.cfa
    }

    #[inline]
    pub fn plane(&self) -> &Plane {
        &self.data
    }

    pub fn into_plane(self) -> Plane {
        self.data
    }

    /// Elementwise clip into `[0, 1]`.
    pub fn clipped(&self) -> RawImage {
        RawImage {
            data: self.data.map(|v| v.clamp(0.0, 1.0)),
            cfa: self.cfa,
        }
    }
}

/// Map digital numbers to normalized `[0, 1]` values.
pub fn normalize_raw(
    raw_dn: &[u16],
    width: usize,
    height: usize,
    profile: &CameraProfile,
) -> Result<RawImage> {
    profile.validate()?;
    if raw_dn.len() != width * height {
        return Err(Error::BufferLength {
            expected: width * height,
            actual: raw_dn.len(),
        });
    }
    let range = profile.white_level - profile.black_level;
    let data = raw_dn
        .iter()
        .map(|&dn| {
            let dn = f64::from(dn);
            if dn >= profile.white_level {
                1.0
            } else {
                ((dn - profile.black_level) / range).max(0.0)
            }
        })
        .collect();
    RawImage::new(Plane::from_vec(width, height, data)?, profile.cfa)
}

/// Linearize digital numbers like [`normalize_raw`] but keep values below
/// the black level. Dark and flat calibration frames carry their noise
/// statistics on both sides of black, so clipping would bias every estimate.
pub fn linearize_raw(
    raw_dn: &[u16],
    width: usize,
    height: usize,
    profile: &CameraProfile,
) -> Result<RawImage> {
    profile.validate()?;
    if raw_dn.len() != width * height {
        return Err(Error::BufferLength {
            expected: width * height,
            actual: raw_dn.len(),
        });
    }
    let range = profile.white_level - profile.black_level;
    let data = raw_dn
        .iter()
        .map(|&dn| {
            let dn = f64::from(dn);
            if dn >= profile.white_level {
                1.0
            } else {
                (dn - profile.black_level) / range
            }
        })
        .collect();
    RawImage::new(Plane::from_vec(width, height, data)?, profile.cfa)
}

/// Inverse of [`normalize_raw`] at the I/O boundary: rounds to the nearest
/// digital number and saturates to the `u16` range.
pub fn denormalize_raw(raw: &RawImage, profile: &CameraProfile) -> Vec<u16> {
    let range = profile.white_level - profile.black_level;
    raw.plane()
        .as_slice()
        .iter()
        .map(|&v| {
            (v * range + profile.black_level)
                .round()
                .clamp(0.0, 65535.0) as u16
        })
        .collect()
}

/// Half-resolution four-plane representation of a mosaic, ordered
/// `R, G1, G2, B` regardless of the source layout.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedRaw {
    planes: [Plane; 4],
    cfa: Cfa,
}

impl PackedRaw {
    pub fn new(planes: [Plane; 4], cfa: Cfa) -> Result<Self> {
        for p in &planes[1..] {
            check_geometry(planes[0].dims(), p.dims())?;
        }
        Ok(Self { planes, cfa })
    }

    pub fn filled(width: usize, height: usize, values: [f64; 4], cfa: Cfa) -> Self {
        Self {
            planes: values.map(|v| Plane::filled(width, height, v)),
            cfa,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.planes[0].width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.planes[0].height()
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.planes[0].dims()
    }

    #[inline]
    pub fn cfa(&self) -> Cfa {
        self.cfa
    }

    pub fn planes(&self) -> &[Plane; 4] {
        &self.planes
    }

    pub fn plane(&self, index: usize) -> &Plane {
        &self.planes[index]
    }

    pub fn into_planes(self) -> [Plane; 4] {
        self.planes
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            planes: [
                self.planes[0].map(&f),
                self.planes[1].map(&f),
                self.planes[2].map(&f),
                self.planes[3].map(&f),
            ],
            cfa: self.cfa,
        }
    }

    /// Camera RGB with `G = (G1 + G2) / 2` at packed resolution.
    pub fn to_rgb(&self) -> RgbImage {
        let g = self.planes[PLANE_G1]
            .zip_map(&self.planes[PLANE_G2], |a, b| 0.5 * (a + b))
            .expect("planes share geometry");
        RgbImage::new(
            [
                self.planes[PLANE_R].clone(),
                g,
                self.planes[PLANE_B].clone(),
            ],
            ColorState::CameraLinear,
        )
        .expect("planes share geometry")
    }

    pub fn max_abs_diff(&self, other: &PackedRaw) -> f64 {
        (0..4)
            .map(|c| self.planes[c].max_abs_diff(&other.planes[c]))
            .fold(0.0, f64::max)
    }
}

/// Split a mosaic into its four half-resolution CFA planes.
pub fn pack_cfa(raw: &RawImage) -> Result<PackedRaw> {
    let (w, h) = raw.dims();
    if w % 2 != 0 || h % 2 != 0 {
        return Err(Error::OddDimensions {
            width: w,
            height: h,
        });
    }
    let cfa = raw.cfa();
    let planes = [0, 1, 2, 3].map(|p| {
        let (dx, dy) = cfa.offset_of(p);
        Plane::from_fn(w / 2, h / 2, |x, y| raw.plane().get(2 * x + dx, 2 * y + dy))
    });
    Ok(PackedRaw { planes, cfa })
}

/// Re-interleave packed planes into a mosaic.
pub fn unpack_cfa(packed: &PackedRaw) -> RawImage {
    let (w, h) = packed.dims();
    let cfa = packed.cfa();
    let data = Plane::from_fn(2 * w, 2 * h, |x, y| {
        packed.planes[cfa.plane_at(x, y)].get(x / 2, y / 2)
    });
    RawImage { data, cfa }
}

/// Reflect an index about the border without repeating the edge sample,
/// so CFA parity is preserved.
#[inline]
fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r.clamp(0, n - 1) as usize
}

/// Bilinear demosaic: each missing color is the average of the nearest
/// same-color samples in the 3x3 neighborhood.
pub fn demosaic_bilinear(raw: &RawImage) -> RgbImage {
    let (w, h) = raw.dims();
    let cfa = raw.cfa();
    let src = raw.plane();
    RgbImage::from_fn(w, h, ColorState::CameraLinear, |x, y| {
        let own = cfa.channel_at(x, y);
        let mut sum = [0.0; 3];
        let mut count = [0u32; 3];
        for dy in -1isize..=1 {
            for dx in -1isize..=1 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let sx = mirror(x as isize + dx, w);
                let sy = mirror(y as isize + dy, h);
                let c = cfa.channel_at(sx, sy);
                if c != own {
                    sum[c] += src.get(sx, sy);
                    count[c] += 1;
                }
            }
        }
        let mut px = [0.0; 3];
        for c in 0..3 {
            px[c] = if c == own {
                src.get(x, y)
            } else {
                sum[c] / f64::from(count[c])
            };
        }
        px
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color_space::SRGB_TO_XYZ;

    fn tile(cfa: Cfa) -> RawImage {
        let p = Plane::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        RawImage::new(p, cfa).unwrap()
    }

    #[test]
    fn rggb_tile_packs_in_order() {
        let packed = pack_cfa(&tile(Cfa::Rggb)).unwrap();
        let v: Vec<f64> = packed.planes().iter().map(|p| p.get(0, 0)).collect();
        assert_eq!(v, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn bggr_tile_permutes_red_and_blue() {
        let packed = pack_cfa(&tile(Cfa::Bggr)).unwrap();
        assert_eq!(packed.plane(PLANE_B).get(0, 0), 1.0);
        assert_eq!(packed.plane(PLANE_G1).get(0, 0), 2.0);
        assert_eq!(packed.plane(PLANE_G2).get(0, 0), 3.0);
        assert_eq!(packed.plane(PLANE_R).get(0, 0), 4.0);
    }

    #[test]
    fn odd_dimensions_rejected() {
        let p = Plane::zeros(3, 4);
        assert!(matches!(
            RawImage::new(p, Cfa::Rggb),
            Err(Error::OddDimensions { .. })
        ));
        let profile = CameraProfile::reference(Cfa::Rggb);
        assert!(normalize_raw(&[0; 12], 3, 4, &profile).is_err());
    }

    #[test]
    fn normalize_anchors() {
        let profile = CameraProfile::reference(Cfa::Rggb);
        let black = profile.black_level as u16;
        let white = profile.white_level as u16;
        let raw = normalize_raw(&[black, white, 0, 65535], 2, 2, &profile).unwrap();
        assert_eq!(raw.plane().as_slice(), &[0.0, 1.0, 0.0, 1.0]);

        let even = CameraProfile::new(Cfa::Rggb, 100.0, 1100.0, [1.0; 3], SRGB_TO_XYZ).unwrap();
        let raw = normalize_raw(&[600; 4], 2, 2, &even).unwrap();
        assert!((raw.plane().get(0, 0) - 0.5).abs() < 1e-15);

        let lin = linearize_raw(&[0, 100, 1100, 1600], 2, 2, &even).unwrap();
        assert_eq!(lin.plane().as_slice(), &[-0.1, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn profile_validation() {
        assert!(CameraProfile::new(Cfa::Rggb, 10.0, 10.0, [1.0; 3], SRGB_TO_XYZ).is_err());
        assert!(CameraProfile::new(Cfa::Rggb, 0.0, 10.0, [1.0, 0.0, 1.0], SRGB_TO_XYZ).is_err());
        let singular = [[1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(CameraProfile::new(Cfa::Rggb, 0.0, 10.0, [1.0; 3], singular).is_err());
    }

    #[test]
    fn demosaic_interior_kernels_at_red_site() {
        // Distinct values everywhere so the averages are identifiable.
        let p = Plane::from_fn(6, 6, |x, y| (x * 7 + y * 13) as f64 + ((x * y) % 5) as f64);
        let raw = RawImage::new(p.clone(), Cfa::Rggb).unwrap();
        let rgb = demosaic_bilinear(&raw);
        let (x, y) = (2, 2);
        assert_eq!(Cfa::Rggb.channel_at(x, y), 0);
        let g = (p.get(1, 2) + p.get(3, 2) + p.get(2, 1) + p.get(2, 3)) / 4.0;
        let b = (p.get(1, 1) + p.get(3, 1) + p.get(1, 3) + p.get(3, 3)) / 4.0;
        assert_eq!(rgb.channel(0).get(x, y), p.get(x, y));
        assert!((rgb.channel(1).get(x, y) - g).abs() < 1e-12);
        assert!((rgb.channel(2).get(x, y) - b).abs() < 1e-12);
    }

    #[test]
    fn demosaic_constant_is_constant() {
        for cfa in Cfa::ALL {
            let raw = RawImage::filled(8, 6, 0.37, cfa).unwrap();
            let rgb = demosaic_bilinear(&raw);
            for c in 0..3 {
                assert!(rgb
                    .channel(c)
                    .as_slice()
                    .iter()
                    .all(|&v| (v - 0.37).abs() < 1e-15));
            }
        }
    }
}
