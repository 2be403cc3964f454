use crate::image::{bilinear_taps, BinaryMask};
use crate::{Error, Result};

/// Bilinear interpolation of the `{0, 1}` field, re-thresholded at 0.5
/// (exactly 0.5 counts as face).
pub fn upsample_mask(mask: &BinaryMask, width: usize, height: usize) -> Result<BinaryMask> {
    let (sw, sh) = mask.dims();
    if width < sw || height < sh {
        return Err(Error::invalid(alloc::format!(
            "upsample target {width}×{height} is smaller than source {sw}×{sh}"
        )));
    }
    let sx = sw as f64 / width as f64;
    let sy = sh as f64 / height as f64;
    let val = |x: usize, y: usize| if mask.get(x, y) { 1.0 } else { 0.0 };
    Ok(BinaryMask::from_fn(width, height, |x, y| {
        let (x0, x1, fx) = bilinear_taps((x as f64 + 0.5) * sx, sw);
        let (y0, y1, fy) = bilinear_taps((y as f64 + 0.5) * sy, sh);
        let top = val(x0, y0) * (1.0 - fx) + val(x1, y0) * fx;
        let bottom = val(x0, y1) * (1.0 - fx) + val(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy >= 0.5
    }))
}

/// Nearest-neighbor resample to any size, for shrinking.
pub fn resample_nearest(mask: &BinaryMask, width: usize, height: usize) -> BinaryMask {
    let (sw, sh) = mask.dims();
    BinaryMask::from_fn(width, height, |x, y| {
        let sxp = (((x as f64 + 0.5) * sw as f64 / width as f64) as usize).min(sw - 1);
        let syp = (((y as f64 + 0.5) * sh as f64 / height as f64) as usize).min(sh - 1);
        mask.get(sxp, syp)
    })
}
