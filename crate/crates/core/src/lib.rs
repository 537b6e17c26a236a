//! Drone monitoring toolkit: synthetic training data with automatic boxes,
//! residual-frame preprocessing, detector/tracker score fusion and the
//! evaluation metrics used to compare runs.

pub mod augment;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod imaging;
pub mod plugins;
pub mod residual;

pub use augment::{AugmentationPolicy, ForegroundAsset};
pub use error::{Error, Result};
pub use fusion::{FusionDecision, FusionParams, Mode, Monitor, MonitorState};
pub use imaging::{BBox, ImageBuffer};
pub use plugins::{Detector, PluginError, ScoredBox, Source, Tracker};
