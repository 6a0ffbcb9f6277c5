//! Global polynomial color transform `J_O = A * rho_K(J_N)` on encoded sRGB.

use crate::error::{Error, Result};
use crate::image::{ColorState, Plane, RgbImage};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Tikhonov damping added to the Gram diagonal.
pub const LSQ_DAMPING: f64 = 1e-8;

/// Exponents `(i, j, k)` of `r^i g^j b^k`, grouped by total degree in the
/// canonical listing order.
const DEGREE_1: [(u8, u8, u8); 3] = [(1, 0, 0), (0, 1, 0), (0, 0, 1)];
const DEGREE_2: [(u8, u8, u8); 6] = [
    (2, 0, 0),
    (0, 2, 0),
    (0, 0, 2),
    (1, 1, 0),
    (0, 1, 1),
    (1, 0, 1),
];
const DEGREE_3: [(u8, u8, u8); 10] = [
    (3, 0, 0),
    (0, 3, 0),
    (0, 0, 3),
    (1, 2, 0),
    (0, 1, 2),
    (1, 0, 2),
    (2, 1, 0),
    (0, 2, 1),
    (2, 0, 1),
    (1, 1, 1),
];
const DEGREE_4: [(u8, u8, u8); 15] = [
    (4, 0, 0),
    (0, 4, 0),
    (0, 0, 4),
    (3, 1, 0),
    (3, 0, 1),
    (1, 3, 0),
    (0, 3, 1),
    (1, 0, 3),
    (0, 1, 3),
    (2, 2, 0),
    (0, 2, 2),
    (2, 0, 2),
    (2, 1, 1),
    (1, 2, 1),
    (1, 1, 2),
];

/// Polynomial expansion of degree 1 to 4, with or without the constant term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolySpec {
    degree: u8,
    with_constant: bool,
}

impl Default for PolySpec {
    fn default() -> Self {
        Self {
            degree: 3,
            with_constant: true,
        }
    }
}

impl PolySpec {
    pub fn new(degree: u8, with_constant: bool) -> Result<Self> {
        if !(1..=4).contains(&degree) {
            return Err(Error::InvalidArgument(format!(
                "degree ∈ 1..4, got {degree}"
            )));
        }
        Ok(Self {
            degree,
            with_constant,
        })
    }

    pub fn degree(&self) -> u8 {
        self.degree
    }

    pub fn with_constant(&self) -> bool {
        self.with_constant
    }

    /// Non-constant monomials, highest degree first.
    pub fn exponents(&self) -> Vec<(u8, u8, u8)> {
        let blocks: [&[(u8, u8, u8)]; 4] = [&DEGREE_1, &DEGREE_2, &DEGREE_3, &DEGREE_4];
        blocks[..self.degree as usize]
            .iter()
            .rev()
            .flat_map(|b| b.iter().copied())
            .collect()
    }

    pub fn term_count(&self) -> usize {
        let d = self.degree as usize;
        let with = (d + 1) * (d + 2) * (d + 3) / 6;
        if self.with_constant {
            with
        } else {
            with - 1
        }
    }
}

/// Expand one RGB triple into `spec.term_count()` monomials.
pub fn poly_expand(rgb: [f64; 3], spec: &PolySpec) -> Vec<f64> {
    let mut out = Vec::with_capacity(spec.term_count());
    expand_into(rgb, spec, &mut out);
    out
}

fn expand_into(rgb: [f64; 3], spec: &PolySpec, out: &mut Vec<f64>) {
    out.clear();
    let pow = |v: f64| [1.0, v, v * v, v * v * v, v * v * v * v];
    let (pr, pg, pb) = (pow(rgb[0]), pow(rgb[1]), pow(rgb[2]));
    for (i, j, k) in spec.exponents() {
        out.push(pr[i as usize] * pg[j as usize] * pb[k as usize]);
    }
    if spec.with_constant {
        out.push(1.0);
    }
}

/// The `3 x term_count` coefficient matrix of a polynomial transform.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorMatrix {
    spec: PolySpec,
    rows: [Vec<f64>; 3],
}

#[derive(Serialize, Deserialize)]
struct ColorMatrixFile {
    degree: u8,
    with_constant: bool,
    rows: Vec<Vec<f64>>,
}

impl ColorMatrix {
    pub fn new(spec: PolySpec, rows: [Vec<f64>; 3]) -> Result<Self> {
        if rows.iter().any(|r| r.len() != spec.term_count()) {
            return Err(Error::InvalidArgument(format!(
                "color matrix rows must have {} entries",
                spec.term_count()
            )));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "color matrix entries must be finite".into(),
            ));
        }
        Ok(Self { spec, rows })
    }

    /// Rows selecting the linear `r`, `g`, `b` terms.
    pub fn identity(spec: PolySpec) -> Self {
        let exps = spec.exponents();
        let rows = [(1, 0, 0), (0, 1, 0), (0, 0, 1)].map(|e| {
            let mut row = vec![0.0; spec.term_count()];
            let pos = exps
                .iter()
                .position(|&x| x == e)
                .expect("linear terms always present");
            row[pos] = 1.0;
            row
        });
        Self { spec, rows }
    }

    pub fn zeros(spec: PolySpec) -> Self {
        Self {
            spec,
            rows: [0, 1, 2].map(|_| vec![0.0; spec.term_count()]),
        }
    }

    pub fn spec(&self) -> PolySpec {
        self.spec
    }

    pub fn rows(&self) -> &[Vec<f64>; 3] {
        &self.rows
    }

    /// `A * terms` without clamping.
    pub fn transform(&self, terms: &[f64]) -> [f64; 3] {
        self.rows
            .each_ref()
            .map(|row| row.iter().zip(terms).map(|(a, t)| a * t).sum())
    }

    pub fn max_abs_diff(&self, other: &ColorMatrix) -> f64 {
        self.rows
            .iter()
            .flatten()
            .zip(other.rows.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ColorMatrixFile {
            degree: self.spec.degree,
            with_constant: self.spec.with_constant,
            rows: self.rows.to_vec(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ColorMatrixFile = serde_json::from_str(text)?;
        let spec = PolySpec::new(file.degree, file.with_constant)?;
        let rows: [Vec<f64>; 3] = file
            .rows
            .try_into()
            .map_err(|_| Error::Format("color matrix needs exactly 3 rows".into()))?;
        Self::new(spec, rows)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Apply the polynomial transform per pixel and clamp to `[0, 1]`.
pub fn apply_color(img: &RgbImage, matrix: &ColorMatrix, spec: &PolySpec) -> Result<RgbImage> {
    img.require(ColorState::EncodedSrgb)?;
    if matrix.spec() != *spec {
        return Err(Error::InvalidArgument(format!(
            "color matrix was built for {:?}, not {:?}",
            matrix.spec(),
            spec
        )));
    }
    let (w, h) = img.dims();
    let mut out = [Plane::zeros(w, h), Plane::zeros(w, h), Plane::zeros(w, h)];
    let mut terms = Vec::with_capacity(spec.term_count());
    for i in 0..img.pixel_count() {
        expand_into(img.pixel(i), spec, &mut terms);
        let v = matrix.transform(&terms);
        for c in 0..3 {
            out[c].as_mut_slice()[i] = v[c].clamp(0.0, 1.0);
        }
    }
    RgbImage::new(out, ColorState::EncodedSrgb)
}

/// Least-squares color matrix with the damped objective it attains.
#[derive(Debug, Clone)]
pub struct ColorFit {
    pub matrix: ColorMatrix,
    /// `sum ||A rho(src) - dst||² + damping * ||A||²`.
    pub residual: f64,
}

const FIT_BLOCK: usize = 8192;

/// Fit `A` minimizing the damped squared error between `A * rho(source)`
/// and `target` over all pixels.
pub fn fit_color_lsq(source: &RgbImage, target: &RgbImage, spec: &PolySpec) -> Result<ColorFit> {
    crate::error::check_geometry(source.dims(), target.dims())?;
    let t = spec.term_count();
    let m = source.pixel_count();
    if m < t {
        return Err(Error::InvalidArgument(format!(
            "need at least {t} pixels to fit {t} terms, got {m}"
        )));
    }
    // Gram and right-hand side accumulated over fixed blocks, reduced in order.
    let partials: Vec<(Vec<f64>, Vec<f64>)> = (0..m.div_ceil(FIT_BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut gram = vec![0.0; t * t];
            let mut rhs = vec![0.0; t * 3];
            let mut terms = Vec::with_capacity(t);
            for i in b * FIT_BLOCK..((b + 1) * FIT_BLOCK).min(m) {
                expand_into(source.pixel(i), spec, &mut terms);
                let dst = target.pixel(i);
                for r in 0..t {
                    let tr = terms[r];
                    for c in r..t {
                        gram[r * t + c] += tr * terms[c];
                    }
                    for ch in 0..3 {
                        rhs[r * 3 + ch] += tr * dst[ch];
                    }
                }
            }
            (gram, rhs)
        })
        .collect();
    let mut gram = DMatrix::<f64>::zeros(t, t);
    let mut rhs = DMatrix::<f64>::zeros(t, 3);
    for (g, r) in &partials {
        for a in 0..t {
            for b in a..t {
                gram[(a, b)] += g[a * t + b];
            }
            for ch in 0..3 {
                rhs[(a, ch)] += r[a * 3 + ch];
            }
        }
    }
    for a in 0..t {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
        gram[(a, a)] += LSQ_DAMPING;
    }
    let chol = gram.cholesky().ok_or_else(|| {
        Error::RankDeficient(format!(
            "Gram matrix of {t} polynomial terms is not positive definite even with damping {LSQ_DAMPING:e}"
        ))
    })?;
    let solution = chol.solve(&rhs);
    let rows = [0, 1, 2].map(|ch| {
        let col: DVector<f64> = solution.column(ch).into_owned();
        col.iter().copied().collect::<Vec<f64>>()
    });
    let matrix = ColorMatrix::new(*spec, rows)?;

    let fit_error: Vec<f64> = (0..m.div_ceil(FIT_BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut terms = Vec::with_capacity(t);
            let mut acc = 0.0;
            for i in b * FIT_BLOCK..((b + 1) * FIT_BLOCK).min(m) {
                expand_into(source.pixel(i), spec, &mut terms);
                let v = matrix.transform(&terms);
                let dst = target.pixel(i);
                acc += (0..3).map(|c| (v[c] - dst[c]).powi(2)).sum::<f64>();
            }
            acc
        })
        .collect();
    let penalty: f64 = matrix.rows.iter().flatten().map(|a| a * a).sum();
    Ok(ColorFit {
        matrix,
        residual: fit_error.iter().sum::<f64>() + LSQ_DAMPING * penalty,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rho1_listing() {
        let spec = PolySpec::new(1, true).unwrap();
        assert_eq!(
            poly_expand([0.2, 0.3, 0.4], &spec),
            vec![0.2, 0.3, 0.4, 1.0]
        );
    }

    #[test]
    fn term_counts() {
        for (k, n) in [(1u8, 4usize), (2, 10), (3, 20), (4, 35)] {
            assert_eq!(PolySpec::new(k, true).unwrap().term_count(), n);
            assert_eq!(PolySpec::new(k, false).unwrap().term_count(), n - 1);
            assert_eq!(
                poly_expand([0.1, 0.2, 0.3], &PolySpec::new(k, true).unwrap()).len(),
                n
            );
        }
        assert!(PolySpec::new(5, true).is_err());
        assert!(PolySpec::new(0, true).is_err());
    }

    #[test]
    fn rho2_at_ones() {
        let spec = PolySpec::new(2, true).unwrap();
        assert_eq!(poly_expand([1.0, 1.0, 1.0], &spec), vec![1.0; 10]);
    }

    #[test]
    fn rho3_order_matches_listing() {
        let (r, g, b) = (2.0, 3.0, 5.0);
        let expected = vec![
            r * r * r,
            g * g * g,
            b * b * b,
            r * g * g,
            g * b * b,
            r * b * b,
            g * r * r,
            b * g * g,
            b * r * r,
            r * g * b,
            r * r,
            g * g,
            b * b,
            r * g,
            g * b,
            r * b,
            r,
            g,
            b,
        ];
        assert_eq!(
            poly_expand([r, g, b], &PolySpec::new(3, false).unwrap()),
            expected
        );
    }

    #[test]
    fn rho4_leading_terms() {
        let (r, g, b) = (2.0, 3.0, 5.0);
        let v = poly_expand([r, g, b], &PolySpec::new(4, true).unwrap());
        let lead = [
            r.powi(4),
            g.powi(4),
            b.powi(4),
            r.powi(3) * g,
            r.powi(3) * b,
            g.powi(3) * r,
            g.powi(3) * b,
            b.powi(3) * r,
            b.powi(3) * g,
            r * r * g * g,
            g * g * b * b,
            r * r * b * b,
            r * r * g * b,
            g * g * r * b,
            b * b * r * g,
        ];
        assert_eq!(&v[..15], &lead);
        assert_eq!(*v.last().unwrap(), 1.0);
    }

    #[test]
    fn identity_and_zero_transforms() {
        let spec = PolySpec::default();
        let img = RgbImage::from_fn(5, 4, ColorState::EncodedSrgb, |x, y| {
            [x as f64 / 5.0, y as f64 / 4.0, 0.5]
        });
        let same = apply_color(&img, &ColorMatrix::identity(spec), &spec).unwrap();
        assert!(same.max_abs_diff(&img) < 1e-15);
        let black = apply_color(&img, &ColorMatrix::zeros(spec), &spec).unwrap();
        assert_eq!(black.channel(1).max(), 0.0);
        let other = PolySpec::new(2, true).unwrap();
        assert!(apply_color(&img, &ColorMatrix::identity(other), &spec).is_err());
    }

    #[test]
    fn matrix_json_round_trip() {
        let spec = PolySpec::new(2, false).unwrap();
        let mut m = ColorMatrix::identity(spec);
        m.rows[1][3] = 0.25;
        let back = ColorMatrix::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(
            ColorMatrix::from_json(r#"{"degree":1,"with_constant":true,"rows":[[1,0,0]]}"#)
                .is_err()
        );
    }

    #[test]
    fn too_few_pixels_rejected() {
        let img = RgbImage::filled(2, 2, [0.5; 3], ColorState::EncodedSrgb);
        assert!(fit_color_lsq(&img, &img, &PolySpec::default()).is_err());
    }
}
