//! Residual frames: per-channel absolute difference of consecutive frames,
//! optionally after cancelling a global integer translation (camera pan).

use std::cmp::Ordering;
use std::path::Path;

use rayon::prelude::*;

use crate::augment::sequence::{frame_file_name, list_frames};
use crate::error::{Error, Result};
use crate::imaging::ImageBuffer;

pub const DEFAULT_WINDOW: u32 = 8;

/// `cur(x, y) ~ prev(x - dx, y - dy)` over the overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TranslationEstimate {
    pub dx: i32,
    pub dy: i32,
    /// Luma SAD over the overlapping region at the optimum.
    pub sad: u64,
    /// Pixels in the overlapping region.
    pub overlap: u64,
}

impl TranslationEstimate {
    pub fn is_zero(&self) -> bool {
        self.dx == 0 && self.dy == 0
    }
}

fn check_same_size(a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    if a.dimensions() != b.dimensions() {
        return Err(Error::DimensionMismatch {
            expected: a.dimensions(),
            actual: b.dimensions(),
        });
    }
    Ok(())
}

/// SAD and overlap size for one candidate shift, on luma planes of width `w`.
fn shifted_sad(prev: &[u8], cur: &[u8], w: usize, h: usize, dx: i32, dy: i32) -> (u64, u64) {
    let x0 = dx.max(0) as usize;
    let x1 = (w as i64 + dx.min(0) as i64).max(0) as usize;
    let y0 = dy.max(0) as usize;
    let y1 = (h as i64 + dy.min(0) as i64).max(0) as usize;
    if x0 >= x1 || y0 >= y1 {
        return (0, 0);
    }
    let mut sad = 0u64;
    for y in y0..y1 {
        let py = (y as i64 - dy as i64) as usize;
        let c = &cur[y * w + x0..y * w + x1];
        let p0 = (x0 as i64 - dx as i64) as usize;
        let p = &prev[py * w + p0..py * w + p0 + (x1 - x0)];
        sad += c.iter().zip(p).map(|(&a, &b)| a.abs_diff(b) as u64).sum::<u64>();
    }
    (sad, ((x1 - x0) * (y1 - y0)) as u64)
}

/// Orders candidates by mean SAD (compared exactly as fractions), then
/// `|dx| + |dy|`, then `dy`, then `dx`.
fn better(a: &TranslationEstimate, b: &TranslationEstimate) -> bool {
    let lhs = a.sad as u128 * b.overlap as u128;
    let rhs = b.sad as u128 * a.overlap as u128;
    let key = |t: &TranslationEstimate| (t.dx.abs() + t.dy.abs(), t.dy, t.dx);
    match lhs.cmp(&rhs) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => key(a) < key(b),
    }
}

/// Exhaustive search over `[-window, window]^2` minimizing mean luma SAD on
/// the overlapping region. Shifts with no overlap are skipped.
pub fn estimate_translation(prev: &ImageBuffer, cur: &ImageBuffer, window: u32) -> Result<TranslationEstimate> {
    check_same_size(prev, cur)?;
    let (w, h) = (prev.width() as usize, prev.height() as usize);
    let lp = prev.luma_plane();
    let lc = cur.luma_plane();
    let win = window as i32;
    let candidates: Vec<(i32, i32)> = (-win..=win).flat_map(|dy| (-win..=win).map(move |dx| (dx, dy))).collect();
    let best = candidates
        .par_iter()
        .filter_map(|&(dx, dy)| {
            let (sad, overlap) = shifted_sad(&lp, &lc, w, h, dx, dy);
            (overlap > 0).then_some(TranslationEstimate { dx, dy, sad, overlap })
        })
        .reduce_with(|a, b| if better(&b, &a) { b } else { a })
        .expect("the zero shift always overlaps");
    Ok(best)
}

/// `out(x, y) = img(clamp(x - dx), clamp(y - dy))`; dimensions are unchanged.
pub fn shift_clamped(img: &ImageBuffer, dx: i32, dy: i32) -> ImageBuffer {
    if dx == 0 && dy == 0 {
        return img.clone();
    }
    let (w, h) = img.dimensions();
    let c = img.channels() as usize;
    let mut data = Vec::with_capacity(img.data().len());
    for y in 0..h as i64 {
        let sy = (y - dy as i64).clamp(0, h as i64 - 1) as u32;
        for x in 0..w as i64 {
            let sx = (x - dx as i64).clamp(0, w as i64 - 1) as u32;
            data.extend_from_slice(&img.pixel(sx, sy)[..c]);
        }
    }
    ImageBuffer::from_raw(w, h, img.channels(), data).expect("same geometry")
}

/// `|cur - prev|` per RGB channel. With `compensate`, `prev` is first aligned
/// by the estimated translation (clamp-to-edge fill).
pub fn residual_frame(prev: &ImageBuffer, cur: &ImageBuffer, compensate: bool, window: u32) -> Result<ImageBuffer> {
    check_same_size(prev, cur)?;
    let prev = prev.to_rgb();
    let cur = cur.to_rgb();
    let aligned = if compensate {
        let t = estimate_translation(&prev, &cur, window)?;
        shift_clamped(&prev, t.dx, t.dy)
    } else {
        prev
    };
    let data = cur
        .data()
        .iter()
        .zip(aligned.data())
        .map(|(&a, &b)| a.abs_diff(b))
        .collect();
    ImageBuffer::from_raw(cur.width(), cur.height(), 3, data)
}

/// Residuals for a whole sequence; the first frame pairs with itself.
pub fn residuals(frames: &[ImageBuffer], compensate: bool, window: u32) -> Result<Vec<ImageBuffer>> {
    if let Some(first) = frames.first() {
        for f in frames {
            check_same_size(first, f)?;
        }
    }
    (0..frames.len())
        .into_par_iter()
        .map(|i| residual_frame(&frames[i.saturating_sub(1)], &frames[i], compensate, window))
        .collect()
}

/// Streaming form used by the monitor: feed frames in order, get residuals back.
#[derive(Debug, Clone)]
pub struct ResidualStream {
    compensate: bool,
    window: u32,
    previous: Option<ImageBuffer>,
}

impl ResidualStream {
    pub fn new(compensate: bool, window: u32) -> Self {
        Self {
            compensate,
            window,
            previous: None,
        }
    }

    pub fn push(&mut self, frame: &ImageBuffer) -> Result<ImageBuffer> {
        let prev = self.previous.as_ref().unwrap_or(frame);
        let r = residual_frame(prev, frame, self.compensate, self.window)?;
        self.previous = Some(frame.clone());
        Ok(r)
    }
}

/// Reads numbered frames from `frames_dir`, writes same-numbered residual
/// frames to `out_dir` and returns how many were written.
pub fn residual_sequence(
    frames_dir: impl AsRef<Path>,
    compensate: bool,
    window: u32,
    out_dir: impl AsRef<Path>,
) -> Result<usize> {
    let frames_dir = frames_dir.as_ref();
    let out_dir = out_dir.as_ref();
    let paths = list_frames(frames_dir)?;
    if paths.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{}: no numbered frames found",
            frames_dir.display()
        )));
    }
    // Sequential decode, parallel differencing.
    let frames = paths.iter().map(ImageBuffer::load).collect::<Result<Vec<_>>>()?;
    let out = residuals(&frames, compensate, window)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for (path, img) in paths.iter().zip(&out) {
        let name = path
            .file_name()
            .map(|n| n.to_owned())
            .unwrap_or_else(|| frame_file_name(0).into());
        img.save_png(out_dir.join(name))?;
    }
    Ok(out.len())
}
