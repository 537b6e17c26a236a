//! Shadow maps: two-level band shadows and thresholded Perlin fields.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Lattice spacing of the first octave, in pixels.
pub const PERLIN_CELL: f64 = 16.0;
pub const PERLIN_OCTAVES: u32 = 4;
pub const PERLIN_PERSISTENCE: f64 = 0.5;

/// Classic 2-D gradient noise over a seeded 256-entry permutation.
#[derive(Clone)]
pub struct PerlinNoise {
    perm: [u8; 512],
}

const GRADIENTS: [(f64, f64); 8] = [
    (1.0, 1.0),
    (-1.0, 1.0),
    (1.0, -1.0),
    (-1.0, -1.0),
    (1.0, 0.0),
    (-1.0, 0.0),
    (0.0, 1.0),
    (0.0, -1.0),
];

#[inline]
fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

impl PerlinNoise {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut base: Vec<u8> = (0..=255).collect();
        base.shuffle(&mut rng);
        let mut perm = [0u8; 512];
        for (i, p) in perm.iter_mut().enumerate() {
            *p = base[i & 255];
        }
        Self { perm }
    }

    #[inline]
    fn gradient_dot(&self, xi: usize, yi: usize, dx: f64, dy: f64) -> f64 {
        let h = self.perm[self.perm[xi] as usize + yi] as usize & 7;
        let (gx, gy) = GRADIENTS[h];
        gx * dx + gy * dy
    }

    /// Single-octave noise, zero on lattice points, roughly in `[-1, 1]`.
    pub fn noise(&self, x: f64, y: f64) -> f64 {
        let xf = x.floor();
        let yf = y.floor();
        let xi = (xf as i64).rem_euclid(256) as usize;
        let yi = (yf as i64).rem_euclid(256) as usize;
        let dx = x - xf;
        let dy = y - yf;
        let u = fade(dx);
        let v = fade(dy);

        let n00 = self.gradient_dot(xi, yi, dx, dy);
        let n10 = self.gradient_dot(xi + 1, yi, dx - 1.0, dy);
        let n01 = self.gradient_dot(xi, yi + 1, dx, dy - 1.0);
        let n11 = self.gradient_dot(xi + 1, yi + 1, dx - 1.0, dy - 1.0);
        lerp(lerp(n00, n10, u), lerp(n01, n11, u), v)
    }

    /// Fractal sum: octave `k` has frequency `2^k / cell` and amplitude `persistence^k`.
    pub fn fractal(&self, x: f64, y: f64, cell: f64, octaves: u32, persistence: f64) -> f64 {
        let mut sum = 0.0;
        let mut freq = 1.0 / cell;
        let mut amp = 1.0;
        for _ in 0..octaves {
            sum += amp * self.noise(x * freq, y * freq);
            freq *= 2.0;
            amp *= persistence;
        }
        sum
    }

    /// Fractal field sampled at pixel centers and affinely mapped onto `[0, 1]`.
    pub fn field(&self, width: u32, height: u32) -> Vec<f64> {
        let mut values = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                values.push(self.fractal(
                    x as f64 + 0.5,
                    y as f64 + 0.5,
                    PERLIN_CELL,
                    PERLIN_OCTAVES,
                    PERLIN_PERSISTENCE,
                ));
            }
        }
        let (lo, hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let span = hi - lo;
        for v in &mut values {
            *v = if span > 0.0 { (*v - lo) / span } else { 0.5 };
        }
        values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShadowMode {
    Lines,
    Perlin,
}

impl std::fmt::Display for ShadowMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ShadowMode::Lines => "lines",
            ShadowMode::Perlin => "perlin",
        })
    }
}

/// Per-pixel light attenuation; 1.0 is unshadowed.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowMap {
    width: u32,
    height: u32,
    values: Vec<f32>,
}

impl ShadowMap {
    pub fn uniform(width: u32, height: u32, value: f32) -> Self {
        Self {
            width,
            height,
            values: vec![value.clamp(0.0, 1.0); width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    /// Fraction of pixels with attenuation below 1.
    pub fn attenuated_fraction(&self) -> f64 {
        let n = self.values.iter().filter(|&&v| v < 1.0).count();
        n as f64 / self.values.len() as f64
    }
}

/// Deterministic in `(mode, seed, width, height)`.
///
/// `Lines` draws one to three straight bands at a single dark level sampled
/// from `[0.3, 0.7]`. `Perlin` shades the lowest-valued pixels of a fractal
/// field, with the shaded share drawn from `[0.2, 0.8]`; shading inside the
/// region follows the field smoothly between the dark level and the midpoint
/// toward full light.
pub fn make_shadow_map(width: u32, height: u32, mode: ShadowMode, seed: u64) -> ShadowMap {
    assert!(width > 0 && height > 0, "shadow map needs positive dimensions");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dark: f64 = rng.random_range(0.3..=0.7);
    match mode {
        ShadowMode::Lines => line_shadow(width, height, dark, &mut rng),
        ShadowMode::Perlin => perlin_shadow(width, height, dark, &mut rng),
    }
}

fn line_shadow(width: u32, height: u32, dark: f64, rng: &mut ChaCha8Rng) -> ShadowMap {
    let mut map = ShadowMap::uniform(width, height, 1.0);
    let short = width.min(height) as f64;
    let bands = rng.random_range(1..=3);
    for _ in 0..bands {
        let px = rng.random_range(0.0..width as f64);
        let py = rng.random_range(0.0..height as f64);
        let theta = rng.random_range(0.0..std::f64::consts::PI);
        let thickness = rng.random_range((short / 8.0).max(2.0)..=(short / 3.0).max(2.0));
        // Unit normal of the band's center line.
        let (nx, ny) = (-theta.sin(), theta.cos());
        for y in 0..height {
            for x in 0..width {
                let d = ((x as f64 + 0.5 - px) * nx + (y as f64 + 0.5 - py) * ny).abs();
                if d <= thickness / 2.0 {
                    map.values[y as usize * width as usize + x as usize] = dark as f32;
                }
            }
        }
    }
    map
}

fn perlin_shadow(width: u32, height: u32, dark: f64, rng: &mut ChaCha8Rng) -> ShadowMap {
    let noise = PerlinNoise::new(rng.random());
    let field = noise.field(width, height);
    let fraction: f64 = rng.random_range(0.2..=0.8);
    let n = field.len();
    let shaded = ((fraction * n as f64).round() as usize).clamp(1, n);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| field[a].total_cmp(&field[b]).then(a.cmp(&b)));
    let threshold = if shaded < n { field[order[shaded]] } else { 1.0 };

    let mut values = vec![1.0f32; n];
    for &i in &order[..shaded] {
        let t = if threshold > 0.0 {
            (field[i] / threshold).clamp(0.0, 1.0)
        } else {
            0.0
        };
        values[i] = (dark + (1.0 - dark) * 0.5 * t) as f32;
    }
    ShadowMap {
        width,
        height,
        values,
    }
}
