//! Raster and box primitives shared by every stage of the pipeline.
//!
//! Coordinates are continuous with a top-left origin and y growing downward.
//! Integer pixel `(i, j)` covers the unit square `[i, i+1) x [j, j+1)`, so a box
//! with integer corners covers exactly `w * h` pixels.

use std::io::Cursor;
use std::path::Path;

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{DynamicImage, ExtendedColorType, ImageEncoder};

use crate::error::{Error, Result};

/// Dense 8-bit raster, row-major, 3 (RGB) or 4 (RGBA) interleaved channels.
#[derive(Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<u8>,
}

impl std::fmt::Debug for ImageBuffer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ImageBuffer")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("channels", &self.channels)
            .finish_non_exhaustive()
    }
}

impl ImageBuffer {
    /// Creates an image with every pixel set to `fill` (one value per channel).
    pub fn filled(width: u32, height: u32, fill: &[u8]) -> Result<Self> {
        let channels = check_channels(fill.len())?;
        if width == 0 || height == 0 {
            return Err(Error::DegenerateImage(width, height));
        }
        let data = fill
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * channels as usize)
            .collect();
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn from_raw(width: u32, height: u32, channels: u8, data: Vec<u8>) -> Result<Self> {
        check_channels(channels as usize)?;
        if width == 0 || height == 0 {
            return Err(Error::DegenerateImage(width, height));
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "raw buffer holds {} samples, {}x{}x{} needs {}",
                data.len(),
                width,
                height,
                channels,
                expected
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds an image by evaluating `f(x, y)` for every pixel.
    pub fn from_fn<const C: usize>(
        width: u32,
        height: u32,
        mut f: impl FnMut(u32, u32) -> [u8; C],
    ) -> Result<Self> {
        let channels = check_channels(C)?;
        if width == 0 || height == 0 {
            return Err(Error::DegenerateImage(width, height));
        }
        let mut data = Vec::with_capacity(width as usize * height as usize * C);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn has_alpha(&self) -> bool {
        self.channels == 4
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        debug_assert!(x < self.width && y < self.height);
        (y as usize * self.width as usize + x as usize) * self.channels as usize
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let o = self.offset(x, y);
        &self.data[o..o + self.channels as usize]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: u32, y: u32) -> &mut [u8] {
        let o = self.offset(x, y);
        let c = self.channels as usize;
        &mut self.data[o..o + c]
    }

    /// Alpha at `(x, y)`; 255 for images without an alpha channel.
    #[inline]
    pub fn alpha(&self, x: u32, y: u32) -> u8 {
        if self.has_alpha() {
            self.data[self.offset(x, y) + 3]
        } else {
            255
        }
    }

    #[inline]
    pub fn luma_at(&self, x: u32, y: u32) -> u8 {
        let p = self.pixel(x, y);
        luma(p[0], p[1], p[2])
    }

    /// Luma plane, one byte per pixel.
    pub fn luma_plane(&self) -> Vec<u8> {
        self.data
            .chunks_exact(self.channels as usize)
            .map(|p| luma(p[0], p[1], p[2]))
            .collect()
    }

    /// Drops the alpha channel if present.
    pub fn to_rgb(&self) -> ImageBuffer {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(4)
            .flat_map(|p| [p[0], p[1], p[2]])
            .collect();
        ImageBuffer {
            width: self.width,
            height: self.height,
            channels: 3,
            data,
        }
    }

    /// Adds a fully opaque alpha channel if none is present.
    pub fn to_rgba(&self) -> ImageBuffer {
        if self.channels == 4 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .flat_map(|p| [p[0], p[1], p[2], 255])
            .collect();
        ImageBuffer {
            width: self.width,
            height: self.height,
            channels: 4,
            data,
        }
    }

    /// Reads a PNG or JPEG file. Gray and 16-bit inputs are converted to 8-bit RGB(A).
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let format = image::guess_format(&bytes).map_err(|e| Error::Image {
            path: path.into(),
            source: e,
        })?;
        if !matches!(format, image::ImageFormat::Png | image::ImageFormat::Jpeg) {
            return Err(Error::InvalidArgument(format!(
                "{}: unsupported image format {:?}",
                path.display(),
                format
            )));
        }
        let decoded = image::load_from_memory_with_format(&bytes, format).map_err(|e| {
            Error::Image {
                path: path.into(),
                source: e,
            }
        })?;
        Ok(Self::from_dynamic(decoded))
    }

    fn from_dynamic(img: DynamicImage) -> Self {
        if img.color().has_alpha() {
            let rgba = img.into_rgba8();
            let (w, h) = rgba.dimensions();
            ImageBuffer {
                width: w,
                height: h,
                channels: 4,
                data: rgba.into_raw(),
            }
        } else {
            let rgb = img.into_rgb8();
            let (w, h) = rgb.dimensions();
            ImageBuffer {
                width: w,
                height: h,
                channels: 3,
                data: rgb.into_raw(),
            }
        }
    }

    /// Encodes as PNG (8-bit RGB or RGBA). Output is deterministic for equal images.
    pub fn encode_png(&self) -> Vec<u8> {
        let mut out = Cursor::new(Vec::new());
        let color = if self.has_alpha() {
            ExtendedColorType::Rgba8
        } else {
            ExtendedColorType::Rgb8
        };
        PngEncoder::new_with_quality(&mut out, CompressionType::Fast, FilterType::Sub)
            .write_image(&self.data, self.width, self.height, color)
            .expect("in-memory PNG encoding of a well-formed buffer cannot fail");
        out.into_inner()
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode_png()).map_err(|e| Error::io(path, e))
    }
}

fn check_channels(channels: usize) -> Result<u8> {
    match channels {
        3 | 4 => Ok(channels as u8),
        n => Err(Error::InvalidArgument(format!(
            "images carry 3 or 4 channels, got {n}"
        ))),
    }
}

/// Rec. 601 luma in exact integer arithmetic: `round(0.299 R + 0.587 G + 0.114 B)`.
#[inline]
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
}

/// Bilinear resample to `width x height` using pixel-center alignment and
/// clamp-to-edge borders. Samples are rounded and clamped to `[0, 255]`.
pub fn resize_bilinear(img: &ImageBuffer, width: u32, height: u32) -> Result<ImageBuffer> {
    if width == 0 || height == 0 {
        return Err(Error::DegenerateImage(width, height));
    }
    if (width, height) == img.dimensions() {
        return Ok(img.clone());
    }
    let c = img.channels as usize;
    let sx = img.width as f64 / width as f64;
    let sy = img.height as f64 / height as f64;
    let max_x = (img.width - 1) as f64;
    let max_y = (img.height - 1) as f64;

    // Horizontal taps are the same for every row.
    let xs: Vec<(u32, u32, f64)> = (0..width)
        .map(|x| {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, max_x);
            let x0 = fx.floor() as u32;
            let x1 = (x0 + 1).min(img.width - 1);
            (x0, x1, fx - x0 as f64)
        })
        .collect();

    let mut data = Vec::with_capacity(width as usize * height as usize * c);
    for y in 0..height {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, max_y);
        let y0 = fy.floor() as u32;
        let y1 = (y0 + 1).min(img.height - 1);
        let ty = fy - y0 as f64;
        for &(x0, x1, tx) in &xs {
            let p00 = img.pixel(x0, y0);
            let p10 = img.pixel(x1, y0);
            let p01 = img.pixel(x0, y1);
            let p11 = img.pixel(x1, y1);
            for ch in 0..c {
                let top = p00[ch] as f64 * (1.0 - tx) + p10[ch] as f64 * tx;
                let bottom = p01[ch] as f64 * (1.0 - tx) + p11[ch] as f64 * tx;
                let v = top * (1.0 - ty) + bottom * ty;
                data.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    ImageBuffer::from_raw(width, height, img.channels, data)
}

/// Output dimensions for [`rescale_shorter_side`]; the long side is rounded
/// to nearest with ties away from zero.
pub fn shorter_side_dimensions(width: u32, height: u32, target: u32) -> Result<(u32, u32)> {
    if width == 0 || height == 0 {
        return Err(Error::DegenerateImage(width, height));
    }
    if target == 0 {
        return Err(Error::InvalidArgument("target side must be positive".into()));
    }
    let long = |l: u32, s: u32| ((l as f64 * target as f64 / s as f64).round() as u32).max(1);
    Ok(if width <= height {
        (target, long(height, width))
    } else {
        (long(width, height), target)
    })
}

/// Rescales so the shorter side equals `target` exactly, preserving aspect ratio.
pub fn rescale_shorter_side(img: &ImageBuffer, target: u32) -> Result<ImageBuffer> {
    let (w, h) = shorter_side_dimensions(img.width, img.height, target)?;
    resize_bilinear(img, w, h)
}

/// Axis-aligned box in continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    /// Panics unless `w` and `h` are finite and positive; see [`BBox::try_new`].
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self::try_new(x, y, w, h).expect("invalid box")
    }

    pub fn try_new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite box ({x}, {y}, {w}, {h})"
            )));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "box size must be positive, got {w}x{h}"
            )));
        }
        Ok(Self { x, y, w, h })
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = (self.right().min(other.right()) - self.x.max(other.x)).max(0.0);
        let h = (self.bottom().min(other.bottom()) - self.y.max(other.y)).max(0.0);
        w * h
    }

    pub fn union_area(&self, other: &BBox) -> f64 {
        self.area() + other.area() - self.intersection_area(other)
    }

    /// Same center, sides multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> BBox {
        let (cx, cy) = self.center();
        BBox::from_center(cx, cy, self.w * factor, self.h * factor)
    }

    /// Intersection with the frame `[0, width) x [0, height)`; `None` if empty.
    pub fn clip(&self, width: u32, height: u32) -> Option<BBox> {
        let x0 = self.x.max(0.0);
        let y0 = self.y.max(0.0);
        let x1 = self.right().min(width as f64);
        let y1 = self.bottom().min(height as f64);
        (x1 > x0 && y1 > y0).then(|| BBox {
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
        })
    }

    pub fn contains(&self, other: &BBox) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }
}

pub fn bbox_intersection_area(a: &BBox, b: &BBox) -> f64 {
    a.intersection_area(b)
}

pub fn bbox_union_area(a: &BBox, b: &BBox) -> f64 {
    a.union_area(b)
}

/// Rotation (degrees, counter-clockwise on screen), per-axis scale and translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTransform {
    rotation: f64,
    scale_x: f64,
    scale_y: f64,
    pub translate_x: f64,
    pub translate_y: f64,
}

impl Default for AffineTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl AffineTransform {
    pub fn identity() -> Self {
        Self {
            rotation: 0.0,
            scale_x: 1.0,
            scale_y: 1.0,
            translate_x: 0.0,
            translate_y: 0.0,
        }
    }

    /// Rotation is normalized into `(-180, 180]`; scales must be finite and positive.
    pub fn new(rotation: f64, scale_x: f64, scale_y: f64, translate_x: f64, translate_y: f64) -> Result<Self> {
        if !(scale_x.is_finite() && scale_y.is_finite() && scale_x > 0.0 && scale_y > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "scale factors must be positive, got ({scale_x}, {scale_y})"
            )));
        }
        if !(rotation.is_finite() && translate_x.is_finite() && translate_y.is_finite()) {
            return Err(Error::InvalidArgument("non-finite transform".into()));
        }
        Ok(Self {
            rotation: normalize_degrees(rotation),
            scale_x,
            scale_y,
            translate_x,
            translate_y,
        })
    }

    pub fn rotation(&self) -> f64 {
        self.rotation
    }

    pub fn scale(&self) -> (f64, f64) {
        (self.scale_x, self.scale_y)
    }

    pub fn is_identity_shape(&self) -> bool {
        self.rotation == 0.0 && self.scale_x == 1.0 && self.scale_y == 1.0
    }
}

fn normalize_degrees(deg: f64) -> f64 {
    let r = deg.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}
