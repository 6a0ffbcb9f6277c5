//! Raw-domain low-light imaging.
//!
//! The crate covers the full path from sensor data to an enhanced sRGB
//! image:
//!
//! - [`raw`] and [`color_space`]: the mosaic container, camera profile,
//!   packing, bilinear demosaicing and color conversion.
//! - [`noise`]: Poisson + Tukey-lambda + banding + quantization noise
//!   synthesis, variance prediction and calibration from dark and flat frames.
//! - [`grid`]: 16x16x16 bilateral grids and trilinear slicing.
//! - [`enhance`] and [`joint`]: progressive illumination adjustment, alone or
//!   interleaved with variance-guided denoising.
//! - [`optimize`]: zero-reference fitting of the grids on a 256x256 proxy.
//! - [`color`]: polynomial color transforms and their least-squares fit.
//! - [`metrics`]: PSNR, SSIM, entropy and exposure loss.

pub mod color;
pub mod color_space;
pub mod enhance;
pub mod error;
pub mod grid;
pub mod image;
pub mod io;
pub mod joint;
pub mod metrics;
pub mod noise;
pub mod optimize;
pub mod pipeline;
pub mod raw;
pub mod resample;

pub use error::{Error, Result};
pub use image::{ColorState, Plane, RgbImage};
pub use raw::{CameraProfile, Cfa, PackedRaw, RawImage};
