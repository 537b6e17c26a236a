//! Synthetic video: a sprite moved along a path over a static background,
//! written as numbered PNG frames with a per-frame ground-truth file.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::eval::{write_track_file, TrackRow};
use crate::imaging::{BBox, ImageBuffer};

use super::synth::{drone_sprite, sky_background};
use super::{paste_layers, ForegroundAsset, Layer};

pub const GROUND_TRUTH_FILE: &str = "groundtruth.csv";

/// `000001.png` for the first frame (1-based).
pub fn frame_file_name(frame_index: usize) -> String {
    format!("{frame_index:06}.png")
}

/// Numbered frames (`\d{6}.png`) of a directory, in frame order.
pub fn list_frames(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut frames: Vec<(u64, PathBuf)> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| {
            let path = entry.ok()?.path();
            let stem = path.file_stem()?.to_str()?;
            let is_png = path.extension()?.eq_ignore_ascii_case("png");
            if !is_png || stem.len() != 6 || !stem.bytes().all(|b| b.is_ascii_digit()) {
                return None;
            }
            Some((stem.parse().ok()?, path))
        })
        .collect();
    frames.sort();
    Ok(frames.into_iter().map(|(_, p)| p).collect())
}

/// Renders frames in memory. `None` path entries leave the target out of that
/// frame. Boxes are the tight opaque bound of the pasted sprite.
pub fn render_sequence(
    background: &ImageBuffer,
    asset: &ForegroundAsset,
    path: &[Option<(f64, f64)>],
) -> Result<(Vec<ImageBuffer>, Vec<Option<BBox>>)> {
    if path.len() < 2 {
        return Err(Error::InvalidArgument("a sequence needs at least two path points".into()));
    }
    let background = background.to_rgb();
    let (w, h) = background.dimensions();
    let (x0, y0, x1, y1) = asset.opaque_bounds().expect("assets carry opaque pixels");
    let (tw, th) = ((x1 - x0) as f64, (y1 - y0) as f64);

    let mut frames = Vec::with_capacity(path.len());
    let mut truth = Vec::with_capacity(path.len());
    for (i, point) in path.iter().enumerate() {
        let Some((cx, cy)) = *point else {
            frames.push(background.clone());
            truth.push(None);
            continue;
        };
        let left = (cx - tw / 2.0).round();
        let top = (cy - th / 2.0).round();
        if !(left >= 0.0 && top >= 0.0 && left + tw <= w as f64 && top + th <= h as f64) {
            return Err(Error::OutOfFrame {
                frame: i + 1,
                width: w,
                height: h,
            });
        }
        let layer = Layer {
            sprite: asset,
            x: left as i64 - x0 as i64,
            y: top as i64 - y0 as i64,
        };
        let c = paste_layers(&background, &[layer])?;
        frames.push(c.image);
        truth.push(c.boxes[0]);
    }
    Ok((frames, truth))
}

pub fn ground_truth_rows(truth: &[Option<BBox>]) -> Vec<TrackRow> {
    truth
        .iter()
        .enumerate()
        .map(|(i, b)| TrackRow::new(i + 1, *b, b.map(|_| 1.0)))
        .collect()
}

/// Writes `000001.png ...` and `groundtruth.csv` into `out_dir`.
pub fn simulate_sequence(
    background: &ImageBuffer,
    asset: &ForegroundAsset,
    path: &[Option<(f64, f64)>],
    out_dir: impl AsRef<Path>,
) -> Result<Vec<Option<BBox>>> {
    let out_dir = out_dir.as_ref();
    let (frames, truth) = render_sequence(background, asset, path)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for (i, frame) in frames.iter().enumerate() {
        frame.save_png(out_dir.join(frame_file_name(i + 1)))?;
    }
    write_track_file(out_dir.join(GROUND_TRUTH_FILE), &ground_truth_rows(&truth))?;
    Ok(truth)
}

/// A background, a sprite and the sprite's per-frame center.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub background: ImageBuffer,
    pub asset: ForegroundAsset,
    pub path: Vec<Option<(f64, f64)>>,
}

/// Linear path of `n` centers from `a` to `b`, both included.
pub fn linear_path(a: (f64, f64), b: (f64, f64), n: usize) -> Vec<Option<(f64, f64)>> {
    (0..n)
        .map(|i| {
            let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
            Some((a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t))
        })
        .collect()
}

impl Scenario {
    pub const CANONICAL_WIDTH: u32 = 160;
    pub const CANONICAL_HEIGHT: u32 = 120;
    pub const CANONICAL_SPRITE: u32 = 20;

    /// 120 frames at 160x120: the drone crosses left to right for 50 frames,
    /// is gone for 15, then re-enters low on the left and climbs across for 55.
    pub fn canonical(seed: u64) -> Self {
        let mut path = linear_path((20.0, 40.0), (140.0, 70.0), 50);
        path.extend(std::iter::repeat_n(None, 15));
        path.extend(linear_path((22.0, 95.0), (138.0, 28.0), 55));
        Self {
            background: sky_background(Self::CANONICAL_WIDTH, Self::CANONICAL_HEIGHT, seed),
            asset: drone_sprite(Self::CANONICAL_SPRITE, seed.wrapping_add(1)),
            path,
        }
    }

    pub fn render(&self) -> Result<(Vec<ImageBuffer>, Vec<Option<BBox>>)> {
        render_sequence(&self.background, &self.asset, &self.path)
    }

    pub fn write(&self, out_dir: impl AsRef<Path>) -> Result<Vec<Option<BBox>>> {
        simulate_sequence(&self.background, &self.asset, &self.path, out_dir)
    }
}
