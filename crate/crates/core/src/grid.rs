//! 16x16x16 bilateral grids of scalar coefficients and trilinear slicing.
//!
//! Grid cell `(i, j, k)` sits at normalized position `(i / 15, j / 15,
//! k / 15)`; the corner cells coincide with the image corners and with
//! guidance values 0 and 1.

use crate::color_space::luminance_packed;
use crate::error::{check_geometry, Error, Result};
use crate::image::Plane;
use crate::raw::{CameraProfile, PackedRaw};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Cells per grid axis.
pub const GRID_SIZE: usize = 16;
/// Cells per grid.
pub const GRID_CELLS: usize = GRID_SIZE * GRID_SIZE * GRID_SIZE;

const ROW_BLOCK: usize = 16;

/// One grid of scalar coefficients, x fastest then y then z.
#[derive(Debug, Clone, PartialEq)]
pub struct BilateralGrid {
    cells: Vec<f64>,
}

impl Default for BilateralGrid {
    fn default() -> Self {
        Self::zeros()
    }
}

impl BilateralGrid {
    pub fn zeros() -> Self {
        Self::constant(0.0)
    }

    pub fn constant(value: f64) -> Self {
        Self {
            cells: vec![value; GRID_CELLS],
        }
    }

    pub fn from_vec(cells: Vec<f64>) -> Result<Self> {
        if cells.len() != GRID_CELLS {
            return Err(Error::BufferLength {
                expected: GRID_CELLS,
                actual: cells.len(),
            });
        }
        if cells.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("grid entries must be finite".into()));
        }
        Ok(Self { cells })
    }

    pub fn from_fn(mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut cells = Vec::with_capacity(GRID_CELLS);
        for k in 0..GRID_SIZE {
            for j in 0..GRID_SIZE {
                for i in 0..GRID_SIZE {
                    cells.push(f(i, j, k));
                }
            }
        }
        Self { cells }
    }

    #[inline]
    pub fn index(i: usize, j: usize, k: usize) -> usize {
        i + GRID_SIZE * (j + GRID_SIZE * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.cells[Self::index(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        self.cells[Self::index(i, j, k)] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.cells
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.cells
    }

    pub fn norm_squared(&self) -> f64 {
        self.cells.iter().map(|v| v * v).sum()
    }

    pub fn dot(&self, other: &BilateralGrid) -> f64 {
        self.cells
            .iter()
            .zip(&other.cells)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn is_zero(&self) -> bool {
        self.cells.iter().all(|&v| v == 0.0)
    }
}

/// The per-iteration grids `B_1 .. B_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct BilateralGridSet {
    grids: Vec<BilateralGrid>,
}

impl BilateralGridSet {
    pub fn new(grids: Vec<BilateralGrid>) -> Result<Self> {
        if grids.is_empty() {
            return Err(Error::InvalidArgument(
                "a grid set needs at least one iteration".into(),
            ));
        }
        Ok(Self { grids })
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::new(vec![BilateralGrid::zeros(); n])
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.grids.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.grids.is_empty()
    }

    pub fn grids(&self) -> &[BilateralGrid] {
        &self.grids
    }

    pub fn grids_mut(&mut self) -> &mut [BilateralGrid] {
        &mut self.grids
    }

    pub fn iter(&self) -> std::slice::Iter<'_, BilateralGrid> {
        self.grids.iter()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = GridSetFile {
            n: self.grids.len(),
            grids: self.grids.iter().map(|g| g.cells.clone()).collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GridSetFile = serde_json::from_str(text)?;
        if file.n != file.grids.len() {
            return Err(Error::Format(format!(
                "grid set declares n = {} but holds {} grids",
                file.n,
                file.grids.len()
            )));
        }
        let grids = file
            .grids
            .into_iter()
            .map(BilateralGrid::from_vec)
            .collect::<Result<Vec<_>>>()?;
        Self::new(grids)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct GridSetFile {
    n: usize,
    grids: Vec<Vec<f64>>,
}

/// Per-pixel guidance `z` in `[0, 1]`, selecting the grid's intensity axis.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceMap {
    z: Plane,
}

impl GuidanceMap {
    /// Clamps into `[0, 1]`.
    pub fn new(z: Plane) -> Self {
        Self {
            z: z.map(|v| v.clamp(0.0, 1.0)),
        }
    }

    pub fn plane(&self) -> &Plane {
        &self.z
    }

    pub fn dims(&self) -> (usize, usize) {
        self.z.dims()
    }
}

/// Guidance from the clamped luminance of the denoised base image.
pub fn make_guidance(base: &PackedRaw, profile: &CameraProfile) -> GuidanceMap {
    GuidanceMap::new(luminance_packed(base, profile))
}

/// Lower cell and fractional weight of the upper cell for a continuous grid
/// coordinate, clamped to the grid.
#[inline]
fn cell_and_frac(g: f64) -> (usize, f64) {
    let g = g.clamp(0.0, (GRID_SIZE - 1) as f64);
    let i0 = (g.floor() as usize).min(GRID_SIZE - 2);
    (i0, g - i0 as f64)
}

/// Spatial interpolation coordinates for one image axis.
fn axis_coords(n: usize) -> Vec<(usize, f64)> {
    let scale = if n > 1 {
        (GRID_SIZE - 1) as f64 / (n - 1) as f64
    } else {
        0.0
    };
    (0..n).map(|x| cell_and_frac(x as f64 * scale)).collect()
}

/// The (at most) eight cells and trilinear weights touching one pixel.
#[inline]
fn pixel_taps(xc: (usize, f64), yc: (usize, f64), z: f64) -> [(usize, f64); 8] {
    let (i0, tx) = xc;
    let (j0, ty) = yc;
    let (k0, tz) = cell_and_frac(z * (GRID_SIZE - 1) as f64);
    let wx = [1.0 - tx, tx];
    let wy = [1.0 - ty, ty];
    let wz = [1.0 - tz, tz];
    let mut taps = [(0usize, 0.0); 8];
    let mut n = 0;
    for (dk, &az) in wz.iter().enumerate() {
        for (dj, &ay) in wy.iter().enumerate() {
            for (di, &ax) in wx.iter().enumerate() {
                taps[n] = (
                    BilateralGrid::index(i0 + di, j0 + dj, k0 + dk),
                    ax * ay * az,
                );
                n += 1;
            }
        }
    }
    taps
}

/// Cells and trilinear weights used for pixel `(x, y)`.
pub fn slice_weights(guidance: &GuidanceMap, x: usize, y: usize) -> [(usize, f64); 8] {
    let (w, h) = guidance.dims();
    let xs = axis_coords(w);
    let ys = axis_coords(h);
    pixel_taps(xs[x], ys[y], guidance.z.get(x, y))
}

/// Full-resolution coefficient map `theta(x, y)` read from `grid` against
/// `guidance`.
pub fn slice(grid: &BilateralGrid, guidance: &GuidanceMap) -> Plane {
    let (w, h) = guidance.dims();
    let xs = axis_coords(w);
    let ys = axis_coords(h);
    let z = guidance.z.as_slice();
    let mut out = Plane::zeros(w, h);
    out.as_mut_slice()
        .par_chunks_mut(w.max(1))
        .enumerate()
        .for_each(|(y, row)| {
            for (x, v) in row.iter_mut().enumerate() {
                *v = pixel_taps(xs[x], ys[y], z[y * w + x])
                    .iter()
                    .map(|&(idx, wgt)| wgt * grid.cells[idx])
                    .sum();
            }
        });
    out
}

/// Adjoint of [`slice`]: scatters `cotangent` onto the grid cells with the
/// same trilinear weights, giving the gradient of `sum(cotangent * theta)`.
pub fn slice_adjoint(guidance: &GuidanceMap, cotangent: &Plane) -> Result<BilateralGrid> {
    check_geometry(guidance.dims(), cotangent.dims())?;
    let (w, h) = guidance.dims();
    let xs = axis_coords(w);
    let ys = axis_coords(h);
    let z = guidance.z.as_slice();
    let c = cotangent.as_slice();
    // Fixed row blocks reduced in order keep the result bit-reproducible.
    let partials: Vec<Vec<f64>> = (0..h.div_ceil(ROW_BLOCK))
        .into_par_iter()
        .map(|block| {
            let mut acc = vec![0.0; GRID_CELLS];
            for y in block * ROW_BLOCK..((block + 1) * ROW_BLOCK).min(h) {
                for x in 0..w {
                    let ct = c[y * w + x];
                    if ct == 0.0 {
                        continue;
                    }
                    for (idx, wgt) in pixel_taps(xs[x], ys[y], z[y * w + x]) {
                        acc[idx] += wgt * ct;
                    }
                }
            }
            acc
        })
        .collect();
    let mut cells = vec![0.0; GRID_CELLS];
    for part in partials {
        for (dst, src) in cells.iter_mut().zip(part) {
            *dst += src;
        }
    }
    Ok(BilateralGrid { cells })
}

/// Slice a grid after checking that guidance matches the expected geometry.
pub fn slice_checked(
    grid: &BilateralGrid,
    guidance: &GuidanceMap,
    dims: (usize, usize),
) -> Result<Plane> {
    check_geometry(dims, guidance.dims())?;
    Ok(slice(grid, guidance))
}
