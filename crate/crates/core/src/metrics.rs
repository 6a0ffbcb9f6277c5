//! Full-reference and no-reference image quality measures.

use crate::error::{check_geometry, Result};
use crate::image::{Plane, RgbImage};

pub use crate::optimize::exposure_loss;

/// Reported PSNR for identical images.
pub const PSNR_CAP_DB: f64 = 100.0;

const SSIM_WINDOW: usize = 8;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// Peak signal-to-noise ratio for unit peak, over all channels.
pub fn psnr(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    check_geometry(a.dims(), b.dims())?;
    let n = 3 * a.pixel_count();
    let mut sse = 0.0;
    for c in 0..3 {
        sse += a
            .channel(c)
            .as_slice()
            .iter()
            .zip(b.channel(c).as_slice())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>();
    }
    let mse = sse / n as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

/// Summed-area table with a zero first row and column.
fn integral(values: impl Fn(usize) -> f64, w: usize, h: usize) -> Vec<f64> {
    let stride = w + 1;
    let mut table = vec![0.0; stride * (h + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += values(y * w + x);
            table[(y + 1) * stride + x + 1] = table[y * stride + x + 1] + row;
        }
    }
    table
}

/// Mean SSIM over all 8x8 windows of the channel-mean gray images.
pub fn ssim(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    check_geometry(a.dims(), b.dims())?;
    let (w, h) = a.dims();
    let ga = a.channel_mean();
    let gb = b.channel_mean();
    Ok(ssim_gray(&ga, &gb, w, h))
}

fn ssim_gray(ga: &Plane, gb: &Plane, w: usize, h: usize) -> f64 {
    let (pa, pb) = (ga.as_slice(), gb.as_slice());
    let sa = integral(|i| pa[i], w, h);
    let sb = integral(|i| pb[i], w, h);
    let saa = integral(|i| pa[i] * pa[i], w, h);
    let sbb = integral(|i| pb[i] * pb[i], w, h);
    let sab = integral(|i| pa[i] * pb[i], w, h);
    let wx = SSIM_WINDOW.min(w);
    let wy = SSIM_WINDOW.min(h);
    let n = (wx * wy) as f64;
    let stride = w + 1;
    let rect = |t: &[f64], x: usize, y: usize| {
        t[(y + wy) * stride + x + wx] - t[y * stride + x + wx] - t[(y + wy) * stride + x]
            + t[y * stride + x]
    };
    let mut total = 0.0;
    let mut count = 0usize;
    for y in 0..=h - wy {
        for x in 0..=w - wx {
            let ma = rect(&sa, x, y) / n;
            let mb = rect(&sb, x, y) / n;
            let va = (rect(&saa, x, y) / n - ma * ma).max(0.0);
            let vb = (rect(&sbb, x, y) / n - mb * mb).max(0.0);
            let cov = rect(&sab, x, y) / n - ma * mb;
            total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
            count += 1;
        }
    }
    total / count as f64
}

/// Shannon entropy in bits of the 256-level histogram of the channel-mean
/// gray image.
pub fn entropy(img: &RgbImage) -> f64 {
    let gray = img.channel_mean();
    let mut hist = [0u64; 256];
    for &v in gray.as_slice() {
        hist[(v.clamp(0.0, 1.0) * 255.0).round() as usize] += 1;
    }
    let n = gray.len() as f64;
    if n == 0.0 {
        return 0.0;
    }
    hist.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum::<f64>()
        .max(0.0)
}
