//! Procedural stand-ins for real drone sprites and scene backgrounds, used by
//! tests, benches and the simulated sequences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::imaging::ImageBuffer;

use super::noise::PerlinNoise;
use super::ForegroundAsset;

/// Top-down quadcopter silhouette: body, two diagonal arms and four rotor
/// rings with alternating blade segments, plus per-pixel speckle.
/// The canvas is `size x size`; `size` is clamped to at least 8.
pub fn drone_sprite(size: u32, seed: u64) -> ForegroundAsset {
    let size = size.max(8);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let body: [u8; 3] = [rng.random_range(20..70), rng.random_range(20..70), rng.random_range(20..70)];
    let rotor: [u8; 3] = [rng.random_range(150..230), rng.random_range(150..230), rng.random_range(150..230)];
    let s = size as f64;
    let c = s / 2.0;
    let rotor_r = s * 0.2;
    let ring = (s * 0.06).max(1.0);
    let arm = (s * 0.06).max(1.0);
    let hub = s * 0.14;
    let centers = [
        (rotor_r, rotor_r),
        (s - rotor_r, rotor_r),
        (rotor_r, s - rotor_r),
        (s - rotor_r, s - rotor_r),
    ];

    let img = ImageBuffer::from_fn(size, size, |x, y| {
        let px = x as f64 + 0.5;
        let py = y as f64 + 0.5;
        let on_hub = (px - c).abs() <= hub && (py - c).abs() <= hub;
        let on_arm = ((px - py).abs() / std::f64::consts::SQRT_2 <= arm
            || (px + py - s).abs() / std::f64::consts::SQRT_2 <= arm)
            && centers.iter().all(|&(rx, ry)| ((px - rx).powi(2) + (py - ry).powi(2)).sqrt() >= rotor_r - ring);
        let rotor_hit = centers.iter().find_map(|&(rx, ry)| {
            let d = ((px - rx).powi(2) + (py - ry).powi(2)).sqrt();
            ((d - (rotor_r - ring)).abs() <= ring || d <= ring).then(|| (py - ry).atan2(px - rx))
        });
        let base = if let Some(angle) = rotor_hit {
            // Alternating light and dark blade segments.
            let segment = ((angle + std::f64::consts::PI) / (std::f64::consts::PI / 4.0)) as i32;
            if segment % 2 == 0 {
                rotor
            } else {
                body
            }
        } else if on_hub || on_arm {
            body
        } else {
            return [0, 0, 0, 0];
        };
        let jitter = rng.random_range(-18i32..=18);
        let speckle = |v: u8| (v as i32 + jitter).clamp(0, 255) as u8;
        [speckle(base[0]), speckle(base[1]), speckle(base[2]), 255]
    })
    .expect("positive sprite size");
    ForegroundAsset::new(img, format!("synthetic-drone-{size}-{seed}")).expect("hub pixels are opaque")
}

/// Sky-like background: vertical blue gradient with soft Perlin clouds and a
/// darker ground strip along the bottom sixth.
pub fn sky_background(width: u32, height: u32, seed: u64) -> ImageBuffer {
    let noise = PerlinNoise::new(seed);
    let ground = height - height / 6;
    ImageBuffer::from_fn(width, height, |x, y| {
        let t = y as f64 / height as f64;
        let cloud = noise.fractal(x as f64 + 0.5, y as f64 + 0.5, 48.0, 3, 0.5).max(0.0) * 1.6;
        let mix = |a: f64, b: f64, k: f64| a + (b - a) * k.clamp(0.0, 1.0);
        if y >= ground {
            let g = noise.fractal(x as f64, y as f64, 6.0, 2, 0.5);
            let v = |base: f64| (base + 25.0 * g).clamp(0.0, 255.0) as u8;
            return [v(70.0), v(95.0), v(55.0)];
        }
        let sky = [mix(120.0, 190.0, t), mix(160.0, 215.0, t), mix(225.0, 240.0, t)];
        let px = |c: f64| mix(c, 248.0, cloud).round() as u8;
        [px(sky[0]), px(sky[1]), px(sky[2])]
    })
    .expect("positive background size")
}
