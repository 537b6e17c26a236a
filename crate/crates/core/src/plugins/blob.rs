//! Follows the largest bright blob of a residual frame near the last position.

use image::{GrayImage, Luma};
use imageproc::region_labelling::{connected_components, Connectivity};

use crate::imaging::{BBox, ImageBuffer};

use super::{PluginError, PluginResult, ScoredBox, Tracker};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobTrackerParams {
    /// Residual luma strictly above this counts as motion.
    pub threshold: u8,
    /// Search window side relative to the current box.
    pub search_factor: f64,
    /// Weight of the blob's size in the new box; the rest is the old size.
    pub size_blend: f64,
}

impl Default for BlobTrackerParams {
    fn default() -> Self {
        Self {
            threshold: 20,
            search_factor: 2.0,
            size_blend: 0.5,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ResidualBlobTracker {
    params: BlobTrackerParams,
    current: Option<BBox>,
    updates: usize,
}

struct Blob {
    pixels: u32,
    x0: u32,
    y0: u32,
    x1: u32,
    y1: u32,
}

impl ResidualBlobTracker {
    pub fn new(params: BlobTrackerParams) -> Self {
        Self {
            params,
            current: None,
            updates: 0,
        }
    }

    pub fn current(&self) -> Option<BBox> {
        self.current
    }

    /// Number of successful `update` calls since construction.
    pub fn updates(&self) -> usize {
        self.updates
    }

    fn largest_blob(&self, residual: &ImageBuffer, x0: u32, y0: u32, w: u32, h: u32) -> Option<Blob> {
        let thr = self.params.threshold;
        let mask = GrayImage::from_fn(w, h, |x, y| {
            Luma([if residual.luma_at(x0 + x, y0 + y) > thr { 255 } else { 0 }])
        });
        let labels = connected_components(&mask, Connectivity::Eight, Luma([0u8]));
        let mut blobs: Vec<Option<Blob>> = Vec::new();
        for (x, y, l) in labels.enumerate_pixels() {
            let l = l[0] as usize;
            if l == 0 {
                continue;
            }
            if blobs.len() < l {
                blobs.resize_with(l, || None);
            }
            let b = blobs[l - 1].get_or_insert(Blob {
                pixels: 0,
                x0: x,
                y0: y,
                x1: x + 1,
                y1: y + 1,
            });
            b.pixels += 1;
            b.x0 = b.x0.min(x);
            b.y0 = b.y0.min(y);
            b.x1 = b.x1.max(x + 1);
            b.y1 = b.y1.max(y + 1);
        }
        // Ties go to the lowest label, i.e. the first in scan order.
        blobs
            .into_iter()
            .flatten()
            .reduce(|best, b| if b.pixels > best.pixels { b } else { best })
    }
}

impl Tracker for ResidualBlobTracker {
    fn init(&mut self, _image: &ImageBuffer, bbox: BBox) -> PluginResult<BBox> {
        self.current = Some(bbox);
        Ok(bbox)
    }

    fn update(&mut self, residual: &ImageBuffer) -> PluginResult<ScoredBox> {
        let prev = self.current.ok_or(PluginError::Uninitialized)?;
        self.updates += 1;
        let (iw, ih) = residual.dimensions();
        let Some(search) = prev.scaled(self.params.search_factor).clip(iw, ih) else {
            return Ok(ScoredBox::tracker(prev, 0.0));
        };
        let sx0 = search.x.floor() as u32;
        let sy0 = search.y.floor() as u32;
        let sx1 = (search.right().ceil() as u32).min(iw);
        let sy1 = (search.bottom().ceil() as u32).min(ih);
        let Some(blob) = self.largest_blob(residual, sx0, sy0, sx1 - sx0, sy1 - sy0) else {
            return Ok(ScoredBox::tracker(prev, 0.0));
        };

        let bw = (blob.x1 - blob.x0) as f64;
        let bh = (blob.y1 - blob.y0) as f64;
        let cx = (sx0 + blob.x0) as f64 + bw / 2.0;
        let cy = (sy0 + blob.y0) as f64 + bh / 2.0;
        let k = self.params.size_blend;
        let w = k * bw + (1.0 - k) * prev.w;
        let h = k * bh + (1.0 - k) * prev.h;
        let next = BBox::from_center(cx, cy, w, h).clip(iw, ih).unwrap_or(prev);

        let fill = blob.pixels as f64 / (bw * bh);
        let search_area = ((sx1 - sx0) * (sy1 - sy0)) as f64;
        let coverage = (bw * bh / (search_area / (self.params.search_factor * self.params.search_factor))).min(1.0);
        self.current = Some(next);
        Ok(ScoredBox::tracker(next, (fill * coverage).clamp(0.0, 1.0)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual_with_square(w: u32, h: u32, sq: (u32, u32, u32, u32)) -> ImageBuffer {
        ImageBuffer::from_fn(w, h, |x, y| {
            let inside = x >= sq.0 && x < sq.0 + sq.2 && y >= sq.1 && y < sq.1 + sq.3;
            if inside {
                [200, 200, 200]
            } else {
                [0, 0, 0]
            }
        })
        .unwrap()
    }

    #[test]
    fn update_before_init_fails() {
        let mut t = ResidualBlobTracker::default();
        let r = ImageBuffer::filled(10, 10, &[0, 0, 0]).unwrap();
        assert!(matches!(t.update(&r), Err(PluginError::Uninitialized)));
    }

    #[test]
    fn init_returns_box_and_zero_residual_keeps_it() {
        let mut t = ResidualBlobTracker::new(BlobTrackerParams::default());
        let r = ImageBuffer::filled(50, 40, &[0, 0, 0]).unwrap();
        let b = BBox::new(10.0, 10.0, 8.0, 6.0);
        assert_eq!(t.init(&r, b).unwrap(), b);
        let out = t.update(&r).unwrap();
        assert_eq!(out.bbox, b);
        assert_eq!(out.score, 0.0);
        assert_eq!(t.updates(), 1);
    }

    #[test]
    fn follows_blob() {
        let mut t = ResidualBlobTracker::default();
        let r0 = ImageBuffer::filled(60, 60, &[0, 0, 0]).unwrap();
        t.init(&r0, BBox::new(20.0, 20.0, 10.0, 10.0)).unwrap();
        let r = residual_with_square(60, 60, (24, 22, 10, 10));
        let out = t.update(&r).unwrap();
        assert_eq!(out.bbox, BBox::new(24.0, 22.0, 10.0, 10.0));
        // Solid blob as large as the box: fill 1, coverage 1.
        assert!((out.score - 1.0).abs() < 1e-12);
        assert_eq!(out.source, super::super::Source::Tracker);
    }

    #[test]
    fn ignores_motion_outside_search_region() {
        let mut t = ResidualBlobTracker::default();
        let r0 = ImageBuffer::filled(80, 80, &[0, 0, 0]).unwrap();
        t.init(&r0, BBox::new(5.0, 5.0, 10.0, 10.0)).unwrap();
        let r = residual_with_square(80, 80, (60, 60, 10, 10));
        let out = t.update(&r).unwrap();
        assert_eq!(out.bbox, BBox::new(5.0, 5.0, 10.0, 10.0));
        assert_eq!(out.score, 0.0);
    }

    #[test]
    fn size_blends_with_previous() {
        let mut t = ResidualBlobTracker::default();
        let r0 = ImageBuffer::filled(60, 60, &[0, 0, 0]).unwrap();
        t.init(&r0, BBox::new(20.0, 20.0, 20.0, 20.0)).unwrap();
        let r = residual_with_square(60, 60, (25, 25, 10, 10));
        let out = t.update(&r).unwrap();
        assert_eq!(out.bbox, BBox::from_center(30.0, 30.0, 15.0, 15.0));
        assert!((out.score - 0.25).abs() < 1e-12);
    }
}
