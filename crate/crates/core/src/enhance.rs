//! Progressive illumination adjustment without denoising.
//!
//! Each iteration adds the residual `R_n = theta_n * (1 - L_{n-1}) * I_{n-1}`,
//! so the result telescopes to `I_N = I_0 + R_1 + ... + R_N`.

use crate::color_space::luminance_packed;
use crate::error::{check_geometry, Error, Result};
use crate::grid::{slice_checked, BilateralGridSet, GuidanceMap};
use crate::image::Plane;
use crate::raw::{CameraProfile, PackedRaw};

/// Iteration count used when none is given.
pub const DEFAULT_ITERATIONS: usize = 9;

/// Images `I_0 ..= I_N` and residuals `R_1 ..= R_N` of a progressive run.
#[derive(Debug, Clone)]
pub struct IterationTrace {
    pub images: Vec<PackedRaw>,
    pub residuals: Vec<PackedRaw>,
}

impl IterationTrace {
    pub fn input(&self) -> &PackedRaw {
        &self.images[0]
    }

    pub fn output(&self) -> &PackedRaw {
        self.images.last().expect("trace holds the input image")
    }

    /// `I_0 + sum(R_n)` accumulated independently of the iterates.
    pub fn residual_sum(&self) -> PackedRaw {
        let mut planes = self.images[0].planes().clone();
        for r in &self.residuals {
            for (acc, add) in planes.iter_mut().zip(r.planes()) {
                for (a, b) in acc.as_mut_slice().iter_mut().zip(add.as_slice()) {
                    *a += b;
                }
            }
        }
        PackedRaw::new(planes, self.images[0].cfa()).expect("planes share geometry")
    }
}

/// Residual of one plane: `theta * (1 - L) * I`.
pub(crate) fn residual_plane(plane: &Plane, theta: &Plane, luminance: &Plane) -> Plane {
    let data = plane
        .as_slice()
        .iter()
        .zip(theta.as_slice())
        .zip(luminance.as_slice())
        .map(|((&i, &t), &l)| t * (1.0 - l) * i)
        .collect();
    Plane::from_vec(plane.width(), plane.height(), data).expect("geometry checked by caller")
}

/// One illumination step. Returns `(I_next, R)`.
pub fn enhance_step(
    prev: &PackedRaw,
    theta: &Plane,
    luminance: &Plane,
) -> Result<(PackedRaw, PackedRaw)> {
    check_geometry(prev.dims(), theta.dims())?;
    check_geometry(prev.dims(), luminance.dims())?;
    if luminance
        .as_slice()
        .iter()
        .any(|&l| !(0.0..=1.0).contains(&l))
    {
        return Err(Error::InvalidArgument(
            "luminance must lie in [0, 1]".into(),
        ));
    }
    let residual = prev
        .planes()
        .clone()
        .map(|p| residual_plane(&p, theta, luminance));
    let next = [0, 1, 2, 3].map(|c| {
        prev.plane(c)
            .zip_map(&residual[c], |a, b| a + b)
            .expect("same geometry")
    });
    Ok((
        PackedRaw::new(next, prev.cfa())?,
        PackedRaw::new(residual, prev.cfa())?,
    ))
}

/// Apply every grid in order, recomputing luminance from the current iterate.
pub fn enhance_progressive(
    input: &PackedRaw,
    grids: &BilateralGridSet,
    guidance: &GuidanceMap,
    profile: &CameraProfile,
) -> Result<IterationTrace> {
    if grids.is_empty() {
        return Err(Error::InvalidArgument("iteration count must be ≥ 1".into()));
    }
    let mut images = vec![input.clone()];
    let mut residuals = Vec::with_capacity(grids.len());
    for grid in grids.iter() {
        let prev = images.last().expect("non-empty");
        let theta = slice_checked(grid, guidance, prev.dims())?;
        let luminance = luminance_packed(prev, profile);
        let (next, residual) = enhance_step(prev, &theta, &luminance)?;
        images.push(next);
        residuals.push(residual);
    }
    Ok(IterationTrace { images, residuals })
}

/// Clamp every value into `[0, 1]`; only applied after the last iteration.
pub fn clamp_output(img: &PackedRaw) -> PackedRaw {
    img.map(|v| v.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BilateralGrid;
    use crate::raw::Cfa;

    fn flat(v: f64) -> PackedRaw {
        PackedRaw::filled(4, 3, [v; 4], Cfa::Rggb)
    }

    #[test]
    fn zero_theta_and_saturated_luminance_are_identity() {
        let img = PackedRaw::new(
            [0, 1, 2, 3].map(|c| Plane::from_fn(4, 3, |x, y| 0.05 * (x + y + c) as f64)),
            Cfa::Rggb,
        )
        .unwrap();
        let (next, _) = enhance_step(&img, &Plane::zeros(4, 3), &Plane::filled(4, 3, 0.3)).unwrap();
        assert_eq!(next, img);
        let (next, _) =
            enhance_step(&img, &Plane::filled(4, 3, 2.0), &Plane::filled(4, 3, 1.0)).unwrap();
        assert_eq!(next, img);
    }

    #[test]
    fn plug_in_doubles() {
        let (next, r) =
            enhance_step(&flat(0.2), &Plane::filled(4, 3, 1.0), &Plane::zeros(4, 3)).unwrap();
        assert!((next.plane(0).get(1, 1) - 0.4).abs() < 1e-15);
        assert!((r.plane(3).get(0, 2) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn mismatched_geometry_rejected() {
        assert!(enhance_step(&flat(0.2), &Plane::zeros(3, 3), &Plane::zeros(4, 3)).is_err());
        assert!(enhance_step(&flat(0.2), &Plane::zeros(4, 3), &Plane::filled(4, 3, 1.5)).is_err());
    }

    #[test]
    fn zero_grids_leave_input() {
        let profile = CameraProfile::reference(Cfa::Rggb);
        let img = flat(0.1);
        let guidance = GuidanceMap::new(Plane::filled(4, 3, 0.1));
        let trace = enhance_progressive(
            &img,
            &BilateralGridSet::zeros(9).unwrap(),
            &guidance,
            &profile,
        )
        .unwrap();
        assert_eq!(trace.images.len(), 10);
        assert_eq!(trace.output(), &img);
    }

    #[test]
    fn zero_image_is_a_fixed_point() {
        let profile = CameraProfile::reference(Cfa::Rggb);
        let guidance = GuidanceMap::new(Plane::filled(4, 3, 0.0));
        let grids = BilateralGridSet::new(vec![BilateralGrid::constant(3.0); 4]).unwrap();
        let trace = enhance_progressive(&flat(0.0), &grids, &guidance, &profile).unwrap();
        assert_eq!(trace.output(), &flat(0.0));
    }

    #[test]
    fn clamp_plug_ins() {
        let img = PackedRaw::new(
            [
                Plane::filled(1, 1, 1.3),
                Plane::filled(1, 1, -0.1),
                Plane::filled(1, 1, 0.42),
                Plane::filled(1, 1, 1.0),
            ],
            Cfa::Rggb,
        )
        .unwrap();
        let out = clamp_output(&img);
        let vals: Vec<f64> = out.planes().iter().map(|p| p.get(0, 0)).collect();
        assert_eq!(vals, vec![1.0, 0.0, 0.42, 1.0]);
    }
}
