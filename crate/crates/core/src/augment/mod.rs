//! Model-based synthetic data: foreground drone sprites are transformed,
//! photometrically perturbed and pasted onto backgrounds, and the tight box
//! of every pasted sprite becomes its annotation.

pub mod annotation;
pub mod dataset;
pub mod filters;
pub mod noise;
pub mod sequence;
pub mod synth;
pub mod transform;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imaging::{AffineTransform, BBox, ImageBuffer};

pub use annotation::{parse_annotation_line, read_annotation_file, voc_xml};
pub use dataset::{generate_dataset, read_manifest, DatasetManifest, DatasetOptions, SampleRecord};
pub use filters::{apply_shadow, blur, to_monochrome, BlurKind};
pub use noise::{make_shadow_map, ShadowMap, ShadowMode};
pub use sequence::{render_sequence, simulate_sequence, Scenario};
pub use transform::transform_foreground;

/// Smallest background side accepted by [`composite_sample`].
pub const MIN_BACKGROUND_SIDE: u32 = 64;
/// Scale/placement draws before a sample is given up.
pub const MAX_PLACEMENT_ATTEMPTS: u32 = 10;

/// RGBA sprite whose alpha marks drone pixels (0 or 255 only).
#[derive(Debug, Clone, PartialEq)]
pub struct ForegroundAsset {
    sprite: ImageBuffer,
    source_id: String,
}

impl ForegroundAsset {
    /// Requires 4 channels, binary alpha and at least one opaque pixel.
    pub fn new(sprite: ImageBuffer, source_id: impl Into<String>) -> Result<Self> {
        if !sprite.has_alpha() {
            return Err(Error::InvalidArgument("foreground sprite needs an alpha channel".into()));
        }
        if sprite.data().chunks_exact(4).any(|p| p[3] != 0 && p[3] != 255) {
            return Err(Error::InvalidArgument("foreground alpha must be 0 or 255".into()));
        }
        let asset = Self::from_parts(sprite, source_id.into());
        if asset.opaque_bounds().is_none() {
            return Err(Error::EmptySprite);
        }
        Ok(asset)
    }

    /// Accepts any image: alpha is binarized at 128, RGB images are fully opaque.
    pub fn from_image(img: &ImageBuffer, source_id: impl Into<String>) -> Result<Self> {
        let mut rgba = img.to_rgba();
        for p in rgba.data_mut().chunks_exact_mut(4) {
            p[3] = if p[3] >= 128 { 255 } else { 0 };
        }
        Self::new(rgba, source_id)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = ImageBuffer::load(path)?;
        Self::from_image(&img, path.display().to_string()).map_err(|e| match e {
            Error::EmptySprite => Error::InvalidArgument(format!(
                "{}: sprite has no opaque pixels",
                path.display()
            )),
            e => e,
        })
    }

    pub(crate) fn from_parts(sprite: ImageBuffer, source_id: String) -> Self {
        Self { sprite, source_id }
    }

    pub(crate) fn with_sprite(&self, sprite: ImageBuffer) -> Self {
        Self::from_parts(sprite, self.source_id.clone())
    }

    pub fn sprite(&self) -> &ImageBuffer {
        &self.sprite
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    /// `(x0, y0, x1, y1)` of opaque pixels, exclusive upper corner.
    pub fn opaque_bounds(&self) -> Option<(u32, u32, u32, u32)> {
        let (w, h) = self.sprite.dimensions();
        let mut b: Option<(u32, u32, u32, u32)> = None;
        for y in 0..h {
            for x in 0..w {
                if self.sprite.alpha(x, y) == 255 {
                    b = Some(match b {
                        None => (x, y, x + 1, y + 1),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x + 1), y1.max(y + 1)),
                    });
                }
            }
        }
        b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationPolicy {
    /// Rotation is drawn uniformly from this open interval, in degrees.
    pub rotation_range: (f64, f64),
    /// Drone width as a fraction of background width.
    pub scale_range: (f64, f64),
    pub shadow_probability: f64,
    pub monochrome_probability: f64,
    pub blur_probability: f64,
    pub drones_per_image: usize,
    pub seed: u64,
}

impl Default for AugmentationPolicy {
    fn default() -> Self {
        Self {
            rotation_range: (-30.0, 30.0),
            scale_range: (0.02, 0.20),
            shadow_probability: 0.3,
            monochrome_probability: 0.2,
            blur_probability: 0.3,
            drones_per_image: 1,
            seed: 0,
        }
    }
}

impl AugmentationPolicy {
    pub fn validate(&self) -> Result<()> {
        let (r0, r1) = self.rotation_range;
        if !(r0.is_finite() && r1.is_finite() && r0 < r1) {
            return Err(Error::InvalidArgument(format!("empty rotation range ({r0}, {r1})")));
        }
        let (s0, s1) = self.scale_range;
        if !(s0.is_finite() && s1.is_finite() && s0 > 0.0 && s0 <= s1) {
            return Err(Error::InvalidArgument(format!("invalid scale range ({s0}, {s1})")));
        }
        for (name, p) in [
            ("shadow_probability", self.shadow_probability),
            ("monochrome_probability", self.monochrome_probability),
            ("blur_probability", self.blur_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if self.drones_per_image == 0 {
            return Err(Error::InvalidArgument("drones_per_image must be at least 1".into()));
        }
        Ok(())
    }
}

/// Everything that was sampled for one pasted drone.
#[derive(Debug, Clone, PartialEq)]
pub struct DroneProvenance {
    pub source_id: String,
    pub rotation: f64,
    pub width_fraction: f64,
    pub scale: f64,
    /// Top-left of the tight opaque box in the background.
    pub x: i64,
    pub y: i64,
    pub shadow: Option<ShadowMode>,
    pub monochrome: bool,
    pub blur: Option<BlurKind>,
    /// Visible box, `None` if later drones hid it entirely.
    pub bbox: Option<BBox>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedSample {
    pub image: ImageBuffer,
    pub boxes: Vec<BBox>,
    pub provenance: Vec<DroneProvenance>,
    /// Per-pixel owner: 0 for background, `k + 1` for the k-th pasted sprite.
    pub owner: Vec<u8>,
}

/// A sprite placed with its canvas top-left at `(x, y)`.
#[derive(Debug, Clone, Copy)]
pub struct Layer<'a> {
    pub sprite: &'a ForegroundAsset,
    pub x: i64,
    pub y: i64,
}

/// Output of [`paste_layers`].
#[derive(Debug, Clone)]
pub struct Composite {
    pub image: ImageBuffer,
    /// Tight box of each layer's visible opaque pixels, in layer order.
    pub boxes: Vec<Option<BBox>>,
    pub owner: Vec<u8>,
}

/// Pastes opaque sprite pixels in order; later layers cover earlier ones.
/// Boxes are computed from the final ownership so they stay tight under
/// occlusion and frame clipping.
pub fn paste_layers(background: &ImageBuffer, layers: &[Layer<'_>]) -> Result<Composite> {
    if layers.len() > u8::MAX as usize {
        return Err(Error::InvalidArgument("at most 255 layers per image".into()));
    }
    let mut image = background.to_rgb();
    let (w, h) = image.dimensions();
    let mut owner = vec![0u8; w as usize * h as usize];
    for (k, layer) in layers.iter().enumerate() {
        let sprite = layer.sprite.sprite();
        for sy in 0..sprite.height() {
            let y = layer.y + sy as i64;
            if y < 0 || y >= h as i64 {
                continue;
            }
            for sx in 0..sprite.width() {
                let x = layer.x + sx as i64;
                if x < 0 || x >= w as i64 || sprite.alpha(sx, sy) != 255 {
                    continue;
                }
                image.pixel_mut(x as u32, y as u32).copy_from_slice(&sprite.pixel(sx, sy)[..3]);
                owner[y as usize * w as usize + x as usize] = k as u8 + 1;
            }
        }
    }
    let mut bounds: Vec<Option<(u32, u32, u32, u32)>> = vec![None; layers.len()];
    for y in 0..h {
        for x in 0..w {
            let o = owner[y as usize * w as usize + x as usize];
            if o == 0 {
                continue;
            }
            let b = &mut bounds[o as usize - 1];
            *b = Some(match *b {
                None => (x, y, x + 1, y + 1),
                Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x + 1), y1.max(y + 1)),
            });
        }
    }
    let boxes = bounds
        .into_iter()
        .map(|b| {
            b.map(|(x0, y0, x1, y1)| {
                BBox::new(x0 as f64, y0 as f64, (x1 - x0) as f64, (y1 - y0) as f64)
            })
        })
        .collect();
    Ok(Composite { image, boxes, owner })
}

/// Per-sample generator: the stream is selected by `sample_index`, so a sample
/// never depends on generation order.
pub fn sample_rng(seed: u64, sample_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sample_index);
    rng
}

struct PreparedDrone {
    sprite: ForegroundAsset,
    provenance: DroneProvenance,
    /// Offset of the tight box inside the sprite canvas.
    tight: (u32, u32, u32, u32),
}

fn sample_open(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    loop {
        let v = rng.random_range(lo..hi);
        if v > lo {
            return v;
        }
    }
}

fn prepare_drone(
    background: &ImageBuffer,
    assets: &[ForegroundAsset],
    policy: &AugmentationPolicy,
    sample_index: u64,
    rng: &mut ChaCha8Rng,
) -> Result<PreparedDrone> {
    let (bw, bh) = background.dimensions();
    let asset = &assets[rng.random_range(0..assets.len())];
    let aw = {
        let (x0, _, x1, _) = asset.opaque_bounds().expect("assets carry opaque pixels");
        x1 - x0
    };

    let mut placed = None;
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let rotation = sample_open(rng, policy.rotation_range);
        let width_fraction = if policy.scale_range.0 < policy.scale_range.1 {
            rng.random_range(policy.scale_range.0..=policy.scale_range.1)
        } else {
            policy.scale_range.0
        };
        // Uniform scaling sized so the unrotated drone spans the drawn fraction.
        let scale = width_fraction * bw as f64 / aw as f64;
        let t = AffineTransform::new(rotation, scale, scale, 0.0, 0.0)?;
        let Ok(sprite) = transform_foreground(asset, &t) else {
            continue;
        };
        let tight = sprite.opaque_bounds().expect("transform keeps an opaque pixel");
        if tight.2 - tight.0 <= bw && tight.3 - tight.1 <= bh {
            placed = Some((sprite, tight, rotation, width_fraction, scale));
            break;
        }
    }
    let Some((mut sprite, tight, rotation, width_fraction, scale)) = placed else {
        return Err(Error::PlacementFailed {
            sample_index,
            attempts: MAX_PLACEMENT_ATTEMPTS,
        });
    };

    let shadow = if rng.random_bool(policy.shadow_probability) {
        let mode = if rng.random_bool(0.5) {
            ShadowMode::Lines
        } else {
            ShadowMode::Perlin
        };
        let (w, h) = sprite.sprite().dimensions();
        let map = make_shadow_map(w, h, mode, rng.random());
        sprite = apply_shadow(&sprite, &map)?;
        Some(mode)
    } else {
        None
    };
    let monochrome = rng.random_bool(policy.monochrome_probability);
    if monochrome {
        sprite = to_monochrome(&sprite);
    }
    let blur_kind = if rng.random_bool(policy.blur_probability) {
        let kind = if rng.random_bool(0.5) {
            BlurKind::Gaussian {
                sigma: rng.random_range(0.5..=2.0),
            }
        } else {
            BlurKind::Motion {
                length: rng.random_range(3.0..=9.0),
                angle: rng.random_range(0.0..180.0),
            }
        };
        sprite = blur(&sprite, kind)?;
        Some(kind)
    } else {
        None
    };

    let (tw, th) = (tight.2 - tight.0, tight.3 - tight.1);
    let x = rng.random_range(0..=(bw - tw)) as i64;
    let y = rng.random_range(0..=(bh - th)) as i64;
    Ok(PreparedDrone {
        provenance: DroneProvenance {
            source_id: sprite.source_id().to_owned(),
            rotation,
            width_fraction,
            scale,
            x,
            y,
            shadow,
            monochrome,
            blur: blur_kind,
            bbox: None,
        },
        sprite,
        tight,
    })
}

/// Synthesizes one annotated image. All randomness comes from
/// `(policy.seed, sample_index)`.
pub fn composite_sample(
    background: &ImageBuffer,
    assets: &[ForegroundAsset],
    policy: &AugmentationPolicy,
    sample_index: u64,
) -> Result<AnnotatedSample> {
    let mut rng = sample_rng(policy.seed, sample_index);
    composite_with_rng(background, assets, policy, sample_index, &mut rng)
}

pub(crate) fn composite_with_rng(
    background: &ImageBuffer,
    assets: &[ForegroundAsset],
    policy: &AugmentationPolicy,
    sample_index: u64,
    rng: &mut ChaCha8Rng,
) -> Result<AnnotatedSample> {
    policy.validate()?;
    let (bw, bh) = background.dimensions();
    if bw < MIN_BACKGROUND_SIDE || bh < MIN_BACKGROUND_SIDE {
        return Err(Error::InvalidArgument(format!(
            "background {bw}x{bh} is smaller than {MIN_BACKGROUND_SIDE}x{MIN_BACKGROUND_SIDE}"
        )));
    }
    if assets.is_empty() {
        return Err(Error::InvalidArgument("no foreground assets".into()));
    }

    let drones = (0..policy.drones_per_image)
        .map(|_| prepare_drone(background, assets, policy, sample_index, rng))
        .collect::<Result<Vec<_>>>()?;
    let layers: Vec<Layer<'_>> = drones
        .iter()
        .map(|d| Layer {
            sprite: &d.sprite,
            x: d.provenance.x - d.tight.0 as i64,
            y: d.provenance.y - d.tight.1 as i64,
        })
        .collect();
    let composite = paste_layers(background, &layers)?;

    let mut provenance = Vec::with_capacity(drones.len());
    for (d, b) in drones.into_iter().zip(&composite.boxes) {
        let mut p = d.provenance;
        p.bbox = *b;
        provenance.push(p);
    }
    Ok(AnnotatedSample {
        image: composite.image,
        boxes: composite.boxes.into_iter().flatten().collect(),
        provenance,
        owner: composite.owner,
    })
}
