//! Sliding-window masked normalized cross-correlation on luma.

use rayon::prelude::*;

use crate::augment::{transform_foreground, ForegroundAsset};
use crate::error::{Error, Result};
use crate::eval::iou;
use crate::imaging::{AffineTransform, BBox, ImageBuffer};

use super::{sort_descending, Detector, PluginError, PluginResult, ScoredBox};

/// Pearson correlation of two equal-length samples; 0 if either has zero variance.
pub fn masked_ncc(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "samples must have equal length");
    let n = a.len() as f64;
    if a.is_empty() {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

/// One template at one scale: opaque-pixel offsets and their zero-mean luma.
#[derive(Debug, Clone)]
pub struct Template {
    width: u32,
    height: u32,
    offsets: Vec<(u32, u32)>,
    centered: Vec<f64>,
    norm: f64,
}

impl Template {
    /// Crops the asset to its opaque bounds.
    pub fn from_asset(asset: &ForegroundAsset) -> Self {
        let (x0, y0, x1, y1) = asset.opaque_bounds().expect("assets carry opaque pixels");
        let sprite = asset.sprite();
        let mut offsets = Vec::new();
        let mut values = Vec::new();
        for y in y0..y1 {
            for x in x0..x1 {
                if sprite.alpha(x, y) == 255 {
                    offsets.push((x - x0, y - y0));
                    values.push(sprite.luma_at(x, y) as f64);
                }
            }
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let centered: Vec<f64> = values.iter().map(|v| v - mean).collect();
        let norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
        Self {
            width: x1 - x0,
            height: y1 - y0,
            offsets,
            centered,
            norm,
        }
    }

    pub fn size(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    /// NCC between the template and the window whose top-left is `(x, y)`
    /// in a luma plane `stride` pixels wide.
    fn score(&self, luma: &[u8], stride: usize, x: u32, y: u32, lin: &[usize]) -> f64 {
        if self.norm <= 0.0 {
            return 0.0;
        }
        let base = y as usize * stride + x as usize;
        let (mut s, mut ss, mut st) = (0.0f64, 0.0f64, 0.0f64);
        for (&o, &t) in lin.iter().zip(&self.centered) {
            let v = luma[base + o] as f64;
            s += v;
            ss += v * v;
            st += v * t;
        }
        let n = lin.len() as f64;
        let var = ss - s * s / n;
        if var <= 1e-9 {
            return 0.0;
        }
        (st / (var.sqrt() * self.norm)).clamp(-1.0, 1.0)
    }

    /// NCC at `(x, y)` in `image`; the window must fit.
    pub fn score_at(&self, image: &ImageBuffer, x: u32, y: u32) -> f64 {
        assert!(x + self.width <= image.width() && y + self.height <= image.height());
        let stride = image.width() as usize;
        let lin = self.linear_offsets(stride);
        self.score(&image.luma_plane(), stride, x, y, &lin)
    }

    fn linear_offsets(&self, stride: usize) -> Vec<usize> {
        self.offsets
            .iter()
            .map(|&(dx, dy)| dy as usize * stride + dx as usize)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateDetectorParams {
    /// Window step in pixels; windows sit on a global grid so a region of
    /// interest sees the same positions as a full-frame scan.
    pub stride: u32,
    pub scales: Vec<f64>,
    pub top_k: usize,
    /// Boxes overlapping a kept box at this IoU or more are suppressed.
    pub nms_iou: f64,
}

impl Default for TemplateDetectorParams {
    fn default() -> Self {
        Self {
            stride: 1,
            scales: vec![1.0],
            top_k: 5,
            nms_iou: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TemplateDetector {
    templates: Vec<Template>,
    params: TemplateDetectorParams,
}

impl TemplateDetector {
    pub fn new(assets: &[ForegroundAsset], params: TemplateDetectorParams) -> Result<Self> {
        if assets.is_empty() {
            return Err(Error::InvalidArgument("template detector needs at least one template".into()));
        }
        if params.stride == 0 || params.top_k == 0 {
            return Err(Error::InvalidArgument("stride and top_k must be at least 1".into()));
        }
        if params.scales.is_empty() || params.scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidArgument("scales must be a non-empty list of positive numbers".into()));
        }
        let mut templates = Vec::new();
        for asset in assets {
            for &s in &params.scales {
                let t = AffineTransform::new(0.0, s, s, 0.0, 0.0)?;
                match transform_foreground(asset, &t) {
                    Ok(scaled) => templates.push(Template::from_asset(&scaled)),
                    Err(Error::EmptySprite) => {}
                    Err(e) => return Err(e),
                }
            }
        }
        if templates.is_empty() {
            return Err(Error::InvalidArgument("every template vanishes at the requested scales".into()));
        }
        Ok(Self { templates, params })
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn params(&self) -> &TemplateDetectorParams {
        &self.params
    }

    /// Stateless detection; see [`Detector::detect`].
    pub fn detect_boxes(&self, image: &ImageBuffer, roi: Option<BBox>) -> PluginResult<Vec<ScoredBox>> {
        let (iw, ih) = image.dimensions();
        if self.templates.iter().all(|t| t.width > iw || t.height > ih) {
            return Err(PluginError::TemplateTooLarge);
        }
        let region = match roi {
            Some(r) => match r.clip(iw, ih) {
                Some(c) => c,
                None => return Ok(Vec::new()),
            },
            None => BBox::new(0.0, 0.0, iw as f64, ih as f64),
        };
        let rx0 = region.x.ceil() as u32;
        let ry0 = region.y.ceil() as u32;
        let rx1 = region.right().floor() as u32;
        let ry1 = region.bottom().floor() as u32;
        let step = self.params.stride;
        let first = |lo: u32| lo.div_ceil(step) * step;

        let luma = image.luma_plane();
        let stride = iw as usize;
        let mut candidates = Vec::new();
        for t in &self.templates {
            if rx0 + t.width > rx1 || ry0 + t.height > ry1 {
                continue;
            }
            let lin = t.linear_offsets(stride);
            let ys: Vec<u32> = (first(ry0)..=ry1 - t.height).step_by(step as usize).collect();
            let found: Vec<ScoredBox> = ys
                .par_iter()
                .flat_map_iter(|&y| {
                    let luma = &luma;
                    let lin = &lin;
                    (first(rx0)..=rx1 - t.width)
                        .step_by(step as usize)
                        .filter_map(move |x| {
                            let s = t.score(luma, stride, x, y, lin);
                            (s > 0.0).then(|| {
                                ScoredBox::detector(
                                    BBox::new(x as f64, y as f64, t.width as f64, t.height as f64),
                                    s,
                                )
                            })
                        })
                        .collect::<Vec<_>>()
                })
                .collect();
            candidates.extend(found);
        }
        sort_descending(&mut candidates);
        let mut kept: Vec<ScoredBox> = Vec::with_capacity(self.params.top_k);
        for c in candidates {
            if kept.len() == self.params.top_k {
                break;
            }
            if kept.iter().all(|k| iou(&k.bbox, &c.bbox) < self.params.nms_iou) {
                kept.push(c);
            }
        }
        Ok(kept)
    }
}

impl Detector for TemplateDetector {
    fn detect(&mut self, image: &ImageBuffer, roi: Option<BBox>) -> PluginResult<Vec<ScoredBox>> {
        self.detect_boxes(image, roi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::synth::{drone_sprite, sky_background};
    use crate::augment::{paste_layers, Layer};

    fn plant(bg: &ImageBuffer, asset: &ForegroundAsset, at: &[(i64, i64)]) -> ImageBuffer {
        let layers: Vec<Layer> = at.iter().map(|&(x, y)| Layer { sprite: asset, x, y }).collect();
        paste_layers(bg, &layers).unwrap().image
    }

    #[test]
    fn ncc_basics() {
        let a = [1.0, 2.0, 3.0, 7.0];
        assert!((masked_ncc(&a, &a) - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = a.iter().map(|v| -2.0 * v + 5.0).collect();
        assert!((masked_ncc(&a, &neg) + 1.0).abs() < 1e-12);
        assert_eq!(masked_ncc(&a, &[4.0; 4]), 0.0);
    }

    #[test]
    fn finds_planted_copy() {
        let asset = drone_sprite(16, 3);
        let bg = sky_background(80, 60, 1);
        let (x0, y0, x1, y1) = asset.opaque_bounds().unwrap();
        let img = plant(&bg, &asset, &[(30, 20)]);
        let det = TemplateDetector::new(&[asset.clone()], Default::default()).unwrap();
        let found = det.detect_boxes(&img, None).unwrap();
        let truth = BBox::new((30 + x0) as f64, (20 + y0) as f64, (x1 - x0) as f64, (y1 - y0) as f64);
        assert_eq!(found[0].bbox, truth);
        assert!(found[0].score >= 0.99);
        assert!(found.windows(2).all(|w| w[0].score >= w[1].score));
        assert!(found.len() <= 5);
    }

    #[test]
    fn two_plants_are_top_two() {
        let asset = drone_sprite(14, 8);
        let bg = sky_background(100, 70, 2);
        let img = plant(&bg, &asset, &[(5, 6), (60, 40)]);
        let det = TemplateDetector::new(&[asset.clone()], Default::default()).unwrap();
        let found = det.detect_boxes(&img, None).unwrap();
        let (x0, y0, x1, y1) = asset.opaque_bounds().unwrap();
        let (w, h) = ((x1 - x0) as f64, (y1 - y0) as f64);
        for (px, py) in [(5.0, 6.0), (60.0, 40.0)] {
            let truth = BBox::new(px + x0 as f64, py + y0 as f64, w, h);
            assert!(found[..2].iter().any(|b| iou(&b.bbox, &truth) >= 0.5));
        }
    }

    #[test]
    fn flat_image_scores_nothing() {
        let flat = ImageBuffer::filled(40, 30, &[120, 130, 140]).unwrap();
        let det = TemplateDetector::new(&[drone_sprite(10, 1)], Default::default()).unwrap();
        assert!(det.detect_boxes(&flat, None).unwrap().iter().all(|b| b.score <= 0.1));
    }

    #[test]
    fn roi_restricts_windows() {
        let asset = drone_sprite(12, 5);
        let bg = sky_background(90, 60, 4);
        let img = plant(&bg, &asset, &[(10, 10), (60, 30)]);
        let det = TemplateDetector::new(&[asset], Default::default()).unwrap();
        let roi = BBox::new(50.0, 20.0, 35.0, 35.0);
        let found = det.detect_boxes(&img, Some(roi)).unwrap();
        assert!(!found.is_empty());
        assert!(found.iter().all(|b| roi.contains(&b.bbox)));
        let full = det.detect_boxes(&img, None).unwrap();
        assert!(full.iter().any(|b| b.bbox == found[0].bbox));
        let tiny = BBox::new(0.0, 0.0, 5.0, 5.0);
        assert!(det.detect_boxes(&img, Some(tiny)).unwrap().is_empty());
    }

    #[test]
    fn too_large_template() {
        let det = TemplateDetector::new(&[drone_sprite(24, 1)], Default::default()).unwrap();
        let small = ImageBuffer::filled(10, 10, &[0, 0, 0]).unwrap();
        assert!(matches!(det.detect_boxes(&small, None), Err(PluginError::TemplateTooLarge)));
    }

    #[test]
    fn scales_and_stride() {
        let asset = drone_sprite(20, 2);
        let params = TemplateDetectorParams {
            stride: 2,
            scales: vec![0.5, 1.0],
            ..Default::default()
        };
        let det = TemplateDetector::new(&[asset.clone()], params).unwrap();
        assert_eq!(det.templates().len(), 2);
        let img = plant(&sky_background(80, 60, 9), &asset, &[(20, 12)]);
        let found = det.detect_boxes(&img, None).unwrap();
        assert!(found.iter().all(|b| b.bbox.x as u32 % 2 == 0 && b.bbox.y as u32 % 2 == 0));
        assert!(TemplateDetector::new(&[], Default::default()).is_err());
        assert!(TemplateDetector::new(&[asset], TemplateDetectorParams { scales: vec![], ..Default::default() }).is_err());
    }

    #[test]
    fn score_at_matches_masked_ncc() {
        let asset = drone_sprite(12, 6);
        let t = Template::from_asset(&asset);
        let bg = sky_background(40, 40, 3);
        let (x0, y0, _, _) = asset.opaque_bounds().unwrap();
        let img = plant(&bg, &asset, &[(10 - x0 as i64, 12 - y0 as i64)]);
        assert!((t.score_at(&img, 10, 12) - 1.0).abs() < 1e-9);
        let window: Vec<f64> = t.offsets.iter().map(|&(dx, dy)| bg.luma_at(3 + dx, 4 + dy) as f64).collect();
        let reference = masked_ncc(&t.centered, &window);
        assert!((t.score_at(&bg, 3, 4) - reference).abs() < 1e-9);
    }
}
