//! Score calibration, max-fusion, candidate selection and the
//! searching/tracking state machine that couples a detector and a tracker.

use std::fmt;

use crate::error::{Error, Result};
use crate::eval::{iou, TrackRow};
use crate::imaging::{BBox, ImageBuffer};
use crate::plugins::{Detector, PluginError, ScoredBox, Source, Tracker};
use crate::residual::ResidualStream;

/// Overlap at which a detector box and the tracker box count as the same target.
pub const CO_LOCATION_IOU: f64 = 0.5;

/// Side of the tracking-mode detection window relative to a tracked box.
pub const ROI_FACTOR: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionParams {
    pub detector_midpoint: f64,
    pub detector_steepness: f64,
    pub tracker_midpoint: f64,
    pub tracker_steepness: f64,
    pub accept_floor: f64,
    pub lost_patience: u32,
    /// Re-initialise the tracker when a detector box wins while tracking.
    pub reseed: bool,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            detector_midpoint: 0.5,
            detector_steepness: 10.0,
            tracker_midpoint: 0.5,
            tracker_steepness: 10.0,
            accept_floor: 0.5,
            lost_patience: 5,
            reseed: true,
        }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_owned()));
        if !(self.detector_midpoint.is_finite() && self.tracker_midpoint.is_finite()) {
            return bad("calibration midpoints must be finite");
        }
        if !(self.detector_steepness > 0.0 && self.detector_steepness.is_finite())
            || !(self.tracker_steepness > 0.0 && self.tracker_steepness.is_finite())
        {
            return bad("calibration steepness must be positive");
        }
        if !(0.0..=1.0).contains(&self.accept_floor) {
            return bad("accept_floor must lie in [0, 1]");
        }
        if self.lost_patience == 0 {
            return bad("lost_patience must be at least 1");
        }
        Ok(())
    }
}

/// Logistic map `1 / (1 + exp(-steepness * (score - midpoint)))`.
pub fn calibrate(score: f64, midpoint: f64, steepness: f64) -> f64 {
    let z = steepness * (score - midpoint);
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn fuse(detector: f64, tracker: f64) -> f64 {
    detector.max(tracker)
}

/// A location with whichever raw scores are available for it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub bbox: BBox,
    pub detector_score: Option<f64>,
    pub tracker_score: Option<f64>,
    /// Which plugin proposed the box.
    pub origin: Source,
}

impl Candidate {
    pub fn new(bbox: BBox, detector_score: Option<f64>, tracker_score: Option<f64>) -> Self {
        let origin = if detector_score.is_some() || tracker_score.is_none() {
            Source::Detector
        } else {
            Source::Tracker
        };
        Self {
            bbox,
            detector_score,
            tracker_score,
            origin,
        }
    }

    /// Calibrated and fused; an absent source contributes 0.
    pub fn fused_score(&self, params: &FusionParams) -> f64 {
        let d = self
            .detector_score
            .map_or(0.0, |s| calibrate(s, params.detector_midpoint, params.detector_steepness));
        let t = self
            .tracker_score
            .map_or(0.0, |s| calibrate(s, params.tracker_midpoint, params.tracker_steepness));
        fuse(d, t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionDecision {
    /// Winning box with its fused score; `None` means rejection.
    pub chosen: Option<ScoredBox>,
    pub index: Option<usize>,
}

impl FusionDecision {
    pub fn rejected() -> Self {
        Self {
            chosen: None,
            index: None,
        }
    }

    pub fn is_rejected(&self) -> bool {
        self.chosen.is_none()
    }
}

/// Highest fused score wins, ties to the lowest index; rejected when there
/// are no candidates or the winner is below the acceptance floor.
pub fn select_candidate(candidates: &[Candidate], params: &FusionParams) -> FusionDecision {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let s = c.fused_score(params);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    match best {
        Some((i, s)) if s >= params.accept_floor => FusionDecision {
            chosen: Some(ScoredBox::new(candidates[i].bbox, s, candidates[i].origin)),
            index: Some(i),
        },
        _ => FusionDecision::rejected(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Searching,
    Tracking,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Searching => "SEARCHING",
            Mode::Tracking => "TRACKING",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorState {
    pub mode: Mode,
    pub last_box: Option<BBox>,
    pub low_streak: u32,
    /// Frames processed so far.
    pub frame_index: usize,
}

impl Default for MonitorState {
    fn default() -> Self {
        Self {
            mode: Mode::Searching,
            last_box: None,
            low_streak: 0,
            frame_index: 0,
        }
    }
}

impl MonitorState {
    /// Tracking from `bbox` without a detection.
    pub fn seeded(bbox: BBox) -> Self {
        Self {
            mode: Mode::Tracking,
            last_box: Some(bbox),
            ..Self::default()
        }
    }
}

/// A plugin call that failed; the step carried on without that source.
#[derive(Debug)]
pub struct PluginFailure {
    pub frame_index: usize,
    pub source: Source,
    pub error: PluginError,
}

#[derive(Debug)]
pub struct Step {
    pub state: MonitorState,
    pub decision: FusionDecision,
    pub failures: Vec<PluginFailure>,
}

/// Builds the tracking-mode candidate list: detector boxes first, then the
/// tracker box. Co-located boxes (IoU at least [`CO_LOCATION_IOU`]) share scores.
pub fn tracking_candidates(detections: &[ScoredBox], tracked: Option<ScoredBox>) -> Vec<Candidate> {
    let mut out: Vec<Candidate> = detections
        .iter()
        .map(|d| {
            let st = tracked
                .filter(|t| iou(&t.bbox, &d.bbox) >= CO_LOCATION_IOU)
                .map(|t| t.score);
            Candidate {
                bbox: d.bbox,
                detector_score: Some(d.score),
                tracker_score: st,
                origin: Source::Detector,
            }
        })
        .collect();
    if let Some(t) = tracked {
        let sd = detections
            .iter()
            .filter(|d| iou(&d.bbox, &t.bbox) >= CO_LOCATION_IOU)
            .map(|d| d.score)
            .reduce(f64::max);
        out.push(Candidate {
            bbox: t.bbox,
            detector_score: sd,
            tracker_score: Some(t.score),
            origin: Source::Tracker,
        });
    }
    out
}

/// Detection window while tracking: [`ROI_FACTOR`] times the last confirmed
/// box, widened to also cover the same multiple of the tracker's new box.
pub fn tracking_roi(last: BBox, tracked: Option<BBox>) -> BBox {
    let a = last.scaled(ROI_FACTOR);
    let Some(t) = tracked else {
        return a;
    };
    let b = t.scaled(ROI_FACTOR);
    let x0 = a.x.min(b.x);
    let y0 = a.y.min(b.y);
    BBox::new(x0, y0, a.right().max(b.right()) - x0, a.bottom().max(b.bottom()) - y0)
}

/// Advances the state machine by one frame. Plugin errors are collected in
/// the returned step and treated as that source being absent.
pub fn monitor_step<'d, 't>(
    state: &MonitorState,
    frame: &ImageBuffer,
    residual: &ImageBuffer,
    mut detector: Option<&mut (dyn Detector + 'd)>,
    mut tracker: Option<&mut (dyn Tracker + 't)>,
    params: &FusionParams,
) -> Result<Step> {
    if frame.dimensions() != residual.dimensions() {
        return Err(Error::DimensionMismatch {
            expected: frame.dimensions(),
            actual: residual.dimensions(),
        });
    }
    let frame_index = state.frame_index + 1;
    let mut failures = Vec::new();
    let mut fail = |source, error| {
        failures.push(PluginFailure {
            frame_index,
            source,
            error,
        })
    };
    let mut next = MonitorState {
        frame_index,
        ..*state
    };

    let decision = match (state.mode, state.last_box) {
        (Mode::Tracking, Some(last)) => {
            let tracked = match tracker.as_deref_mut().map(|t| t.update(residual)) {
                Some(Ok(t)) => Some(t),
                Some(Err(e)) => {
                    fail(Source::Tracker, e);
                    None
                }
                None => None,
            };
            let roi = tracking_roi(last, tracked.map(|t| t.bbox));
            let detections = match detector.as_deref_mut().map(|d| d.detect(frame, Some(roi))) {
                Some(Ok(d)) => d,
                Some(Err(e)) => {
                    fail(Source::Detector, e);
                    Vec::new()
                }
                None => Vec::new(),
            };
            let decision = select_candidate(&tracking_candidates(&detections, tracked), params);
            match decision.chosen {
                Some(chosen) => {
                    next.last_box = Some(chosen.bbox);
                    next.low_streak = 0;
                    if chosen.source == Source::Detector && params.reseed {
                        if let Some(Err(e)) = tracker.as_deref_mut().map(|t| t.init(residual, chosen.bbox)) {
                            fail(Source::Tracker, e);
                        }
                    }
                }
                None => {
                    next.low_streak += 1;
                    if next.low_streak >= params.lost_patience {
                        next = MonitorState {
                            frame_index,
                            ..MonitorState::default()
                        };
                    }
                }
            }
            decision
        }
        _ => {
            let detections = match detector.as_deref_mut().map(|d| d.detect(frame, None)) {
                Some(Ok(d)) => d,
                Some(Err(e)) => {
                    fail(Source::Detector, e);
                    Vec::new()
                }
                None => Vec::new(),
            };
            let candidates: Vec<Candidate> = detections
                .iter()
                .map(|d| Candidate::new(d.bbox, Some(d.score), None))
                .collect();
            let decision = select_candidate(&candidates, params);
            next = MonitorState {
                frame_index,
                ..MonitorState::default()
            };
            if let Some(chosen) = decision.chosen {
                next.mode = Mode::Tracking;
                next.last_box = Some(chosen.bbox);
                if let Some(Err(e)) = tracker.as_deref_mut().map(|t| t.init(residual, chosen.bbox)) {
                    fail(Source::Tracker, e);
                }
            }
            decision
        }
    };
    Ok(Step {
        state: next,
        decision,
        failures,
    })
}

/// Per-frame output of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame_index: usize,
    pub mode: Mode,
    pub decision: FusionDecision,
}

impl FrameRecord {
    pub fn to_row(&self) -> TrackRow {
        TrackRow {
            frame_index: self.frame_index,
            mode: Some(self.mode.to_string()),
            bbox: self.decision.chosen.map(|c| c.bbox),
            score: self.decision.chosen.map(|c| c.score),
        }
    }
}

/// Runs the state machine over a stream, computing residuals on the fly.
pub struct Monitor {
    params: FusionParams,
    detector: Option<Box<dyn Detector>>,
    tracker: Option<Box<dyn Tracker>>,
    residuals: ResidualStream,
    state: MonitorState,
    seed: Option<BBox>,
    failures: Vec<PluginFailure>,
    accepted: usize,
}

impl Monitor {
    pub fn new(
        params: FusionParams,
        detector: Option<Box<dyn Detector>>,
        tracker: Option<Box<dyn Tracker>>,
        residuals: ResidualStream,
    ) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            detector,
            tracker,
            residuals,
            state: MonitorState::default(),
            seed: None,
            failures: Vec::new(),
            accepted: 0,
        })
    }

    /// Start tracking from `bbox` on the first frame instead of searching.
    pub fn with_seed(mut self, bbox: BBox) -> Self {
        self.seed = Some(bbox);
        self
    }

    pub fn state(&self) -> &MonitorState {
        &self.state
    }

    pub fn failures(&self) -> &[PluginFailure] {
        &self.failures
    }

    pub fn accepted(&self) -> usize {
        self.accepted
    }

    pub fn push(&mut self, frame: &ImageBuffer) -> Result<FrameRecord> {
        let residual = self.residuals.push(frame)?;
        if let Some(seed) = self.seed.take() {
            let seed = seed.clip(frame.width(), frame.height()).ok_or_else(|| {
                Error::InvalidArgument("seed box lies outside the frame".into())
            })?;
            self.state = MonitorState {
                frame_index: self.state.frame_index + 1,
                ..MonitorState::seeded(seed)
            };
            if let Some(Err(e)) = self.tracker.as_deref_mut().map(|t| t.init(&residual, seed)) {
                self.failures.push(PluginFailure {
                    frame_index: self.state.frame_index,
                    source: Source::Tracker,
                    error: e,
                });
            }
            self.accepted += 1;
            return Ok(FrameRecord {
                frame_index: self.state.frame_index,
                mode: self.state.mode,
                decision: FusionDecision {
                    chosen: Some(ScoredBox::tracker(seed, 1.0)),
                    index: Some(0),
                },
            });
        }
        let step = monitor_step(
            &self.state,
            frame,
            &residual,
            self.detector.as_deref_mut(),
            self.tracker.as_deref_mut(),
            &self.params,
        )?;
        self.state = step.state;
        self.failures.extend(step.failures);
        if !step.decision.is_rejected() {
            self.accepted += 1;
        }
        Ok(FrameRecord {
            frame_index: self.state.frame_index,
            mode: self.state.mode,
            decision: step.decision,
        })
    }

    pub fn run<'a>(&mut self, frames: impl IntoIterator<Item = &'a ImageBuffer>) -> Result<Vec<FrameRecord>> {
        frames.into_iter().map(|f| self.push(f)).collect()
    }
}

/// Full-frame detection on every frame with the same acceptance rule and no
/// tracker. Rows are labelled `DETECT`.
pub fn run_detector_only(
    frames: &[ImageBuffer],
    detector: &mut dyn Detector,
    params: &FusionParams,
) -> Result<(Vec<TrackRow>, Vec<PluginFailure>)> {
    params.validate()?;
    let mut rows = Vec::with_capacity(frames.len());
    let mut failures = Vec::new();
    for (i, frame) in frames.iter().enumerate() {
        let candidates: Vec<Candidate> = match detector.detect(frame, None) {
            Ok(d) => d.iter().map(|d| Candidate::new(d.bbox, Some(d.score), None)).collect(),
            Err(error) => {
                failures.push(PluginFailure {
                    frame_index: i + 1,
                    source: Source::Detector,
                    error,
                });
                Vec::new()
            }
        };
        let chosen = select_candidate(&candidates, params).chosen;
        rows.push(TrackRow {
            frame_index: i + 1,
            mode: Some("DETECT".into()),
            bbox: chosen.map(|c| c.bbox),
            score: chosen.map(|c| c.score),
        });
    }
    Ok((rows, failures))
}
