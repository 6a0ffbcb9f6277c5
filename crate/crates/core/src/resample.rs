//! Area-average (box) downsampling.

use crate::error::{Error, Result};
use crate::image::{Plane, RgbImage};

/// Side length of the low-resolution working image.
pub const LOWRES_SIZE: usize = 256;

/// Overlap weights mapping `src` samples onto `dst` bins of equal width.
fn area_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let lo = i as f64 * scale;
            let hi = (i + 1) as f64 * scale;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(src);
            (first..last)
                .filter_map(|j| {
                    let overlap = (hi.min(j as f64 + 1.0) - lo.max(j as f64)).max(0.0);
                    (overlap > 0.0).then_some((j, overlap / scale))
                })
                .collect()
        })
        .collect()
}

fn downsample_plane(plane: &Plane, wx: &[Vec<(usize, f64)>], wy: &[Vec<(usize, f64)>]) -> Plane {
    let (_, h) = plane.dims();
    let tw = wx.len();
    let mut horizontal = Plane::zeros(tw, h);
    for y in 0..h {
        let row = plane.row(y);
        for (x, taps) in wx.iter().enumerate() {
            horizontal.set(x, y, taps.iter().map(|&(j, w)| w * row[j]).sum());
        }
    }
    Plane::from_fn(tw, wy.len(), |x, y| {
        wy[y].iter().map(|&(j, w)| w * horizontal.get(x, j)).sum()
    })
}

/// Box-filter resample to `target` (width, height). Upscaling is rejected.
pub fn downsample_area(img: &RgbImage, target: (usize, usize)) -> Result<RgbImage> {
    let (w, h) = img.dims();
    let (tw, th) = target;
    if tw == 0 || th == 0 || tw > w || th > h {
        return Err(Error::InvalidArgument(format!(
            "cannot area-resample {w}x{h} to {tw}x{th}: only downsampling is supported"
        )));
    }
    let wx = area_weights(w, tw);
    let wy = area_weights(h, th);
    let [r, g, b] = img.channels();
    RgbImage::new(
        [
            downsample_plane(r, &wx, &wy),
            downsample_plane(g, &wx, &wy),
            downsample_plane(b, &wx, &wy),
        ],
        img.state(),
    )
}
