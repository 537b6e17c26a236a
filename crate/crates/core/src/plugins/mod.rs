//! Detector and tracker contracts, the two built-in baselines and the
//! child-process bridge for external models.

mod blob;
mod external;
mod template;

use std::fmt;

use thiserror::Error;

use crate::imaging::{BBox, ImageBuffer};

pub use blob::{BlobTrackerParams, ResidualBlobTracker};
pub use external::{ExternalDetector, ExternalTracker, DEFAULT_TIMEOUT};
pub use template::{masked_ncc, Template, TemplateDetector, TemplateDetectorParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    Detector,
    Tracker,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Detector => "detector",
            Source::Tracker => "tracker",
        })
    }
}

/// A box with a raw, uncalibrated confidence from one source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredBox {
    pub bbox: BBox,
    pub score: f64,
    pub source: Source,
}

impl ScoredBox {
    pub fn new(bbox: BBox, score: f64, source: Source) -> Self {
        debug_assert!(score.is_finite());
        Self { bbox, score, source }
    }

    pub fn detector(bbox: BBox, score: f64) -> Self {
        Self::new(bbox, score, Source::Detector)
    }

    pub fn tracker(bbox: BBox, score: f64) -> Self {
        Self::new(bbox, score, Source::Tracker)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PluginErrorKind {
    ProtocolViolation,
    Timeout,
    ChildExited,
    Remote,
    Uninitialized,
    TemplateTooLarge,
    Io,
}

#[derive(Debug, Error)]
pub enum PluginError {
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("no response within {0:?}")]
    Timeout(std::time::Duration),
    #[error("child process exited{}", .0.as_deref().map(|s| format!(": {s}")).unwrap_or_default())]
    ChildExited(Option<String>),
    #[error("plugin reported an error: {0}")]
    Remote(String),
    #[error("tracker used before init")]
    Uninitialized,
    #[error("template larger than the image at every scale")]
    TemplateTooLarge,
    #[error("plugin i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl PluginError {
    pub fn kind(&self) -> PluginErrorKind {
        match self {
            PluginError::ProtocolViolation(_) => PluginErrorKind::ProtocolViolation,
            PluginError::Timeout(_) => PluginErrorKind::Timeout,
            PluginError::ChildExited(_) => PluginErrorKind::ChildExited,
            PluginError::Remote(_) => PluginErrorKind::Remote,
            PluginError::Uninitialized => PluginErrorKind::Uninitialized,
            PluginError::TemplateTooLarge => PluginErrorKind::TemplateTooLarge,
            PluginError::Io(_) => PluginErrorKind::Io,
        }
    }
}

pub type PluginResult<T> = std::result::Result<T, PluginError>;

/// Returns boxes clipped to the image, sorted by descending score. A region
/// of interest narrows the search; implementations may treat it as a hint.
pub trait Detector {
    fn detect(&mut self, image: &ImageBuffer, roi: Option<BBox>) -> PluginResult<Vec<ScoredBox>>;
}

/// `update` before `init` fails with [`PluginError::Uninitialized`].
pub trait Tracker {
    fn init(&mut self, image: &ImageBuffer, bbox: BBox) -> PluginResult<BBox>;
    fn update(&mut self, image: &ImageBuffer) -> PluginResult<ScoredBox>;
}

impl<D: Detector + ?Sized> Detector for Box<D> {
    fn detect(&mut self, image: &ImageBuffer, roi: Option<BBox>) -> PluginResult<Vec<ScoredBox>> {
        (**self).detect(image, roi)
    }
}

impl<T: Tracker + ?Sized> Tracker for Box<T> {
    fn init(&mut self, image: &ImageBuffer, bbox: BBox) -> PluginResult<BBox> {
        (**self).init(image, bbox)
    }

    fn update(&mut self, image: &ImageBuffer) -> PluginResult<ScoredBox> {
        (**self).update(image)
    }
}

/// Stable sort by descending score.
pub(crate) fn sort_descending(boxes: &mut [ScoredBox]) {
    boxes.sort_by(|a, b| b.score.total_cmp(&a.score));
}
