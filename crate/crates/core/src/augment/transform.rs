use crate::error::{Error, Result};
use crate::imaging::{AffineTransform, ImageBuffer};

use super::ForegroundAsset;

/// Canvas size that holds a `w x h` rectangle rotated by `degrees`.
pub fn rotated_extent(w: f64, h: f64, degrees: f64) -> (u32, u32) {
    let (s, c) = degrees.to_radians().sin_cos();
    let (s, c) = (s.abs(), c.abs());
    // The epsilon absorbs sin/cos noise at multiples of 90 degrees.
    let cw = (w * c + h * s - 1e-9).ceil().max(1.0);
    let ch = (w * s + h * c - 1e-9).ceil().max(1.0);
    (cw as u32, ch as u32)
}

/// Scales then rotates the sprite about its center.
///
/// The output canvas grows so that no opaque pixel is clipped. Resampling is
/// bilinear on premultiplied color with transparent borders, and alpha is
/// re-binarized at 128 afterwards. Translation is not applied here; callers
/// place the result when compositing.
pub fn transform_foreground(asset: &ForegroundAsset, t: &AffineTransform) -> Result<ForegroundAsset> {
    if t.is_identity_shape() {
        return Ok(asset.clone());
    }
    let src = asset.sprite();
    let (w, h) = (src.width() as f64, src.height() as f64);
    let (sx, sy) = t.scale();
    let sw = (w * sx).round();
    let sh = (h * sy).round();
    if sw < 1.0 || sh < 1.0 {
        return Err(Error::EmptySprite);
    }
    let (cw, ch) = rotated_extent(sw, sh, t.rotation());
    let (sin, cos) = t.rotation().to_radians().sin_cos();
    let kx = w / sw;
    let ky = h / sh;

    let mut data = Vec::with_capacity(cw as usize * ch as usize * 4);
    for v in 0..ch {
        for u in 0..cw {
            let px = u as f64 + 0.5 - cw as f64 / 2.0;
            let py = v as f64 + 0.5 - ch as f64 / 2.0;
            // Inverse of a counter-clockwise on-screen rotation (y down).
            let qx = px * cos - py * sin;
            let qy = px * sin + py * cos;
            let fx = (qx + sw / 2.0) * kx - 0.5;
            let fy = (qy + sh / 2.0) * ky - 0.5;
            data.extend_from_slice(&sample_premultiplied(src, fx, fy));
        }
    }
    let sprite = ImageBuffer::from_raw(cw, ch, 4, data)?;
    let out = ForegroundAsset::from_parts(sprite, asset.source_id().to_owned());
    if out.opaque_bounds().is_none() {
        return Err(Error::EmptySprite);
    }
    Ok(out)
}

/// Bilinear RGBA sample at pixel-index coordinates; outside pixels are transparent.
fn sample_premultiplied(img: &ImageBuffer, fx: f64, fy: f64) -> [u8; 4] {
    let x0 = fx.floor();
    let y0 = fy.floor();
    let tx = fx - x0;
    let ty = fy - y0;
    let (x0, y0) = (x0 as i64, y0 as i64);
    let mut acc = [0.0f64; 3];
    let mut alpha = 0.0;
    for (dx, dy, wt) in [
        (0, 0, (1.0 - tx) * (1.0 - ty)),
        (1, 0, tx * (1.0 - ty)),
        (0, 1, (1.0 - tx) * ty),
        (1, 1, tx * ty),
    ] {
        let x = x0 + dx;
        let y = y0 + dy;
        if wt == 0.0 || x < 0 || y < 0 || x >= img.width() as i64 || y >= img.height() as i64 {
            continue;
        }
        let p = img.pixel(x as u32, y as u32);
        let a = p[3] as f64 / 255.0 * wt;
        alpha += a;
        for c in 0..3 {
            acc[c] += p[c] as f64 * a;
        }
    }
    if alpha * 255.0 < 128.0 {
        return [0, 0, 0, 0];
    }
    let mut out = [0u8, 0, 0, 255];
    for c in 0..3 {
        out[c] = (acc[c] / alpha).round().clamp(0.0, 255.0) as u8;
    }
    out
}
