//! Photometric perturbations of a foreground sprite. None of them touch alpha,
//! so the annotation box of a sprite is invariant under all of them.

use crate::error::{Error, Result};
use crate::imaging::{luma, ImageBuffer};

use super::noise::ShadowMap;
use super::ForegroundAsset;

/// Multiplies each RGB sample by the map value and rounds.
pub fn apply_shadow(sprite: &ForegroundAsset, map: &ShadowMap) -> Result<ForegroundAsset> {
    let img = sprite.sprite();
    if (map.width(), map.height()) != img.dimensions() {
        return Err(Error::DimensionMismatch {
            expected: img.dimensions(),
            actual: (map.width(), map.height()),
        });
    }
    let mut out = img.clone();
    for (px, &m) in out.data_mut().chunks_exact_mut(4).zip(map.values()) {
        for v in &mut px[..3] {
            *v = (*v as f64 * m as f64).round().clamp(0.0, 255.0) as u8;
        }
    }
    Ok(sprite.with_sprite(out))
}

pub fn to_monochrome(sprite: &ForegroundAsset) -> ForegroundAsset {
    let mut out = sprite.sprite().clone();
    for px in out.data_mut().chunks_exact_mut(4) {
        let y = luma(px[0], px[1], px[2]);
        px[..3].fill(y);
    }
    sprite.with_sprite(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BlurKind {
    /// Isotropic Gaussian, truncated at 3 sigma.
    Gaussian { sigma: f64 },
    /// Line of `length` pixels at `angle` degrees (counter-clockwise from +x).
    Motion { length: f64, angle: f64 },
}

impl std::fmt::Display for BlurKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BlurKind::Gaussian { sigma } => write!(f, "gaussian({sigma:.3})"),
            BlurKind::Motion { length, angle } => write!(f, "motion({length:.3},{angle:.3})"),
        }
    }
}

/// Square convolution kernel of odd side, row-major, summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub radius: usize,
    pub weights: Vec<f64>,
}

impl Kernel {
    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn at(&self, dx: isize, dy: isize) -> f64 {
        let r = self.radius as isize;
        if dx.abs() > r || dy.abs() > r {
            return 0.0;
        }
        self.weights[((dy + r) * self.side() as isize + dx + r) as usize]
    }
}

pub fn gaussian_kernel_1d(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("gaussian sigma must be positive, got {sigma}")));
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= sum);
    Ok(k)
}

pub fn gaussian_kernel(sigma: f64) -> Result<Kernel> {
    let k1 = gaussian_kernel_1d(sigma)?;
    let weights = k1
        .iter()
        .flat_map(|wy| k1.iter().map(move |wx| wx * wy))
        .collect();
    Ok(Kernel {
        radius: k1.len() / 2,
        weights,
    })
}

/// Rasterizes a centered segment by bilinear splatting of evenly spaced points.
pub fn motion_kernel(length: f64, angle: f64) -> Result<Kernel> {
    if !(length.is_finite() && length >= 1.0 && angle.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "motion blur needs length >= 1, got {length}"
        )));
    }
    let half = (length - 1.0) / 2.0;
    let radius = half.ceil() as usize + 1;
    let side = 2 * radius + 1;
    let mut weights = vec![0.0; side * side];
    let (s, c) = angle.to_radians().sin_cos();
    let n = if half > 0.0 { (2.0 * length).ceil() as usize } else { 1 };
    for i in 0..n {
        let t = if n == 1 {
            0.0
        } else {
            -half + 2.0 * half * i as f64 / (n - 1) as f64
        };
        // y grows downward, so a positive angle moves up the screen.
        let fx = t * c + radius as f64;
        let fy = -t * s + radius as f64;
        let x0 = fx.floor();
        let y0 = fy.floor();
        let tx = fx - x0;
        let ty = fy - y0;
        for (dx, dy, w) in [
            (0, 0, (1.0 - tx) * (1.0 - ty)),
            (1, 0, tx * (1.0 - ty)),
            (0, 1, (1.0 - tx) * ty),
            (1, 1, tx * ty),
        ] {
            if w == 0.0 {
                continue;
            }
            let x = x0 as usize + dx;
            let y = y0 as usize + dy;
            weights[y * side + x] += w;
        }
    }
    let sum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= sum);
    Ok(Kernel { radius, weights })
}

/// Convolves RGB with clamp-to-edge borders; alpha is copied through.
pub fn convolve_rgb(img: &ImageBuffer, kernel: &Kernel) -> ImageBuffer {
    let (w, h) = img.dimensions();
    let r = kernel.radius as i64;
    let taps: Vec<(i64, i64, f64)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .map(|(dx, dy)| (dx, dy, kernel.at(dx as isize, dy as isize)))
        .filter(|t| t.2 != 0.0)
        .collect();
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0f64; 3];
            for &(dx, dy, wt) in &taps {
                let sx = (x as i64 + dx).clamp(0, w as i64 - 1) as u32;
                let sy = (y as i64 + dy).clamp(0, h as i64 - 1) as u32;
                let p = img.pixel(sx, sy);
                for c in 0..3 {
                    acc[c] += p[c] as f64 * wt;
                }
            }
            let dst = out.pixel_mut(x, y);
            for c in 0..3 {
                dst[c] = acc[c].round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    out
}

pub fn blur(sprite: &ForegroundAsset, kind: BlurKind) -> Result<ForegroundAsset> {
    let kernel = match kind {
        BlurKind::Gaussian { sigma } => gaussian_kernel(sigma)?,
        BlurKind::Motion { length, angle } => motion_kernel(length, angle)?,
    };
    Ok(sprite.with_sprite(convolve_rgb(sprite.sprite(), &kernel)))
}
