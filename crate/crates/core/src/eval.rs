//! Detection and tracking metrics: IoU, precision-recall with trapezoidal
//! area, success-rate curves, and the per-frame CSV files they read.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::imaging::BBox;
use crate::plugins::ScoredBox;

/// Default IoU needed for a detection to count as a true positive.
pub const DEFAULT_MATCH_IOU: f64 = 0.5;
/// Thresholds of the success curve: 0.00, 0.01, ..., 1.00.
pub const SUCCESS_STEPS: usize = 100;

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    (inter / a.union_area(b)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    PrecisionRecall,
    SuccessRate,
}

/// `(x, y)` pairs. Success curves have strictly increasing thresholds;
/// precision-recall curves list one point per distinct score in sweep order,
/// so recall is non-decreasing and may repeat.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub kind: CurveKind,
    pub points: Vec<(f64, f64)>,
}

impl Curve {
    pub fn header(&self) -> &'static str {
        match self.kind {
            CurveKind::PrecisionRecall => "recall,precision",
            CurveKind::SuccessRate => "threshold,success_rate",
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(self.header());
        out.push('\n');
        for (x, y) in &self.points {
            out.push_str(&format!("{x:.6},{y:.6}\n"));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Area under a piecewise-linear curve.
pub fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

/// Counts after admitting every detection scoring at least `threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchResult {
    pub threshold: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrResult {
    pub curve: Curve,
    /// Trapezoidal area over recall, starting from recall 0 at the first precision.
    pub average_precision: f64,
    pub sweep: Vec<MatchResult>,
}

/// Pools detections across images, sweeps them in descending score order and
/// greedily matches each to the highest-IoU unmatched ground-truth box of its
/// image. One curve point is emitted per distinct score.
pub fn pr_curve(detections: &[Vec<ScoredBox>], ground_truth: &[Vec<BBox>], iou_thresh: f64) -> Result<PrResult> {
    if !(iou_thresh > 0.0 && iou_thresh <= 1.0) {
        return Err(Error::InvalidArgument(format!("IoU threshold must lie in (0, 1], got {iou_thresh}")));
    }
    if detections.len() > ground_truth.len() {
        return Err(Error::InvalidArgument(format!(
            "detections cover {} images but ground truth only {}",
            detections.len(),
            ground_truth.len()
        )));
    }
    let total_gt: usize = ground_truth.iter().map(Vec::len).sum();
    let mut pooled: Vec<(usize, &ScoredBox)> = detections
        .iter()
        .enumerate()
        .flat_map(|(img, ds)| ds.iter().map(move |d| (img, d)))
        .collect();
    // Stable: equal scores keep input order.
    pooled.sort_by(|a, b| b.1.score.total_cmp(&a.1.score));

    let mut matched: Vec<Vec<bool>> = ground_truth.iter().map(|g| vec![false; g.len()]).collect();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut points = Vec::new();
    let mut sweep = Vec::new();
    for (k, &(img, det)) in pooled.iter().enumerate() {
        let best = ground_truth[img]
            .iter()
            .enumerate()
            .filter(|(j, _)| !matched[img][*j])
            .map(|(j, g)| (j, iou(&det.bbox, g)))
            .fold(None, |acc: Option<(usize, f64)>, (j, v)| match acc {
                Some((_, bv)) if bv >= v => acc,
                _ => Some((j, v)),
            });
        match best {
            Some((j, v)) if v >= iou_thresh => {
                matched[img][j] = true;
                tp += 1;
            }
            _ => fp += 1,
        }
        let group_ends = pooled.get(k + 1).is_none_or(|next| next.1.score != det.score);
        if group_ends {
            let recall = if total_gt > 0 { tp as f64 / total_gt as f64 } else { 0.0 };
            let precision = tp as f64 / (tp + fp) as f64;
            points.push((recall, precision));
            sweep.push(MatchResult {
                threshold: det.score,
                true_positives: tp,
                false_positives: fp,
                false_negatives: total_gt - tp,
            });
        }
    }

    let average_precision = match points.first() {
        Some(&(_, p0)) if total_gt > 0 => {
            let mut anchored = Vec::with_capacity(points.len() + 1);
            anchored.push((0.0, p0));
            anchored.extend_from_slice(&points);
            trapezoid(&anchored)
        }
        _ => 0.0,
    };
    Ok(PrResult {
        curve: Curve {
            kind: CurveKind::PrecisionRecall,
            points,
        },
        average_precision,
        sweep,
    })
}

/// Fraction of IoUs strictly above `tau`.
pub fn success_rate(ious: &[f64], tau: f64) -> f64 {
    if ious.is_empty() {
        return 0.0;
    }
    ious.iter().filter(|&&v| v > tau).count() as f64 / ious.len() as f64
}

/// Per-frame IoUs over frames that have ground truth; a missing prediction scores 0.
pub fn frame_ious(pred: &[Option<BBox>], gt: &[Option<BBox>]) -> Result<Vec<f64>> {
    if pred.len() != gt.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} ground-truth frames",
            pred.len(),
            gt.len()
        )));
    }
    Ok(pred
        .iter()
        .zip(gt)
        .filter_map(|(p, g)| {
            let g = g.as_ref()?;
            Some(p.as_ref().map_or(0.0, |p| iou(p, g)))
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuccessResult {
    pub curve: Curve,
    pub auc: f64,
    pub ious: Vec<f64>,
}

/// Success rate at thresholds 0.00..=1.00 in steps of 0.01 and its trapezoidal area.
/// Frames whose ground truth is absent are not scored.
pub fn success_curve(pred: &[Option<BBox>], gt: &[Option<BBox>]) -> Result<SuccessResult> {
    let ious = frame_ious(pred, gt)?;
    let points: Vec<(f64, f64)> = (0..=SUCCESS_STEPS)
        .map(|i| {
            let tau = i as f64 / SUCCESS_STEPS as f64;
            (tau, success_rate(&ious, tau))
        })
        .collect();
    let auc = trapezoid(&points);
    Ok(SuccessResult {
        curve: Curve {
            kind: CurveKind::SuccessRate,
            points,
        },
        auc,
        ious,
    })
}

/// One row of a ground-truth or results file. A row without a box is a
/// rejection (results) or an absent target (ground truth).
#[derive(Debug, Clone, PartialEq)]
pub struct TrackRow {
    pub frame_index: usize,
    pub mode: Option<String>,
    pub bbox: Option<BBox>,
    pub score: Option<f64>,
}

impl TrackRow {
    pub fn new(frame_index: usize, bbox: Option<BBox>, score: Option<f64>) -> Self {
        Self {
            frame_index,
            mode: None,
            bbox,
            score,
        }
    }
}

pub const REJECT: &str = "REJECT";

/// Writes `frame_index,[mode,]x,y,w,h,score`. The mode column appears when any
/// row carries one; rejected rows leave the box empty and print `REJECT`.
pub fn write_track_file(path: impl AsRef<Path>, rows: &[TrackRow]) -> Result<()> {
    let path = path.as_ref();
    let with_mode = rows.iter().any(|r| r.mode.is_some());
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["frame_index"];
    if with_mode {
        header.push("mode");
    }
    header.extend(["x", "y", "w", "h", "score"]);
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.frame_index.to_string()];
        if with_mode {
            rec.push(r.mode.clone().unwrap_or_default());
        }
        match r.bbox {
            Some(b) => {
                rec.extend([b.x, b.y, b.w, b.h].map(|v| format!("{v:.2}")));
                rec.push(r.score.map(|s| format!("{s:.6}")).unwrap_or_default());
            }
            None => {
                rec.extend(std::iter::repeat_n(String::new(), 4));
                rec.push(if with_mode { REJECT.to_owned() } else { String::new() });
            }
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_track_file(path: impl AsRef<Path>) -> Result<Vec<TrackRow>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let required = |name: &str| col(name).ok_or_else(|| Error::parse(path, 1, format!("missing column {name:?}")));
    let (fi, xi, yi, wi, hi) = (required("frame_index")?, required("x")?, required("y")?, required("w")?, required("h")?);
    let si = col("score");
    let mi = col("mode");

    let mut rows = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let line = n + 2;
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let frame_index = field(fi)
            .parse::<usize>()
            .map_err(|e| Error::parse(path, line, format!("frame_index: {e}")))?;
        let coords = [xi, yi, wi, hi].map(field);
        let bbox = if coords.iter().all(|c| c.is_empty()) {
            None
        } else {
            let v = coords
                .iter()
                .map(|c| c.parse::<f64>().map_err(|e| Error::parse(path, line, format!("box field {c:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            Some(BBox::try_new(v[0], v[1], v[2], v[3]).map_err(|e| Error::parse(path, line, e.to_string()))?)
        };
        let score = match si.map(field) {
            None | Some("") => None,
            Some(s) if s.eq_ignore_ascii_case(REJECT) => None,
            Some(s) => Some(s.parse::<f64>().map_err(|e| Error::parse(path, line, format!("score: {e}")))?),
        };
        rows.push(TrackRow {
            frame_index,
            mode: mi.map(field).filter(|m| !m.is_empty()).map(str::to_owned),
            bbox,
            score,
        });
    }
    Ok(rows)
}

/// One box (or none) per frame, ordered by frame index. Frame indices must be unique.
pub fn rows_to_track(rows: &[TrackRow]) -> Result<BTreeMap<usize, Option<BBox>>> {
    let mut out = BTreeMap::new();
    for r in rows {
        if out.insert(r.frame_index, r.bbox).is_some() {
            return Err(Error::InvalidArgument(format!("frame {} appears twice", r.frame_index)));
        }
    }
    Ok(out)
}

/// Aligns a results track to ground truth; both must list the same frames.
pub fn align_tracks(results: &[TrackRow], gt: &[TrackRow]) -> Result<(Vec<Option<BBox>>, Vec<Option<BBox>>)> {
    let r = rows_to_track(results)?;
    let g = rows_to_track(gt)?;
    if r.len() != g.len() || r.keys().ne(g.keys()) {
        return Err(Error::InvalidArgument(format!(
            "results cover {} frames, ground truth {}; frame indices must match",
            r.len(),
            g.len()
        )));
    }
    Ok((r.into_values().collect(), g.into_values().collect()))
}

/// Groups detection rows by frame. Images are the union of frames seen in
/// either file, in ascending order.
pub fn group_detections(results: &[TrackRow], gt: &[TrackRow]) -> (Vec<Vec<ScoredBox>>, Vec<Vec<BBox>>) {
    let mut frames: BTreeMap<usize, (Vec<ScoredBox>, Vec<BBox>)> = BTreeMap::new();
    for r in results {
        let entry = frames.entry(r.frame_index).or_default();
        if let Some(b) = r.bbox {
            entry.0.push(ScoredBox::detector(b, r.score.unwrap_or(0.0)));
        }
    }
    for g in gt {
        let entry = frames.entry(g.frame_index).or_default();
        if let Some(b) = g.bbox {
            entry.1.push(b);
        }
    }
    frames.into_values().unzip()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub auc_a: f64,
    pub auc_b: f64,
    /// `auc_a - auc_b`.
    pub difference: f64,
    pub curve_a: Curve,
    pub curve_b: Curve,
}

impl CompareReport {
    /// Both success curves side by side, followed by `auc` and `difference` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,run_a,run_b\n");
        for ((t, a), (_, b)) in self.curve_a.points.iter().zip(&self.curve_b.points) {
            out.push_str(&format!("{t:.2},{a:.6},{b:.6}\n"));
        }
        out.push_str(&format!("auc,{:.6},{:.6}\n", self.auc_a, self.auc_b));
        out.push_str(&format!("difference,{:.6},\n", self.difference));
        out
    }
}

pub fn compare_tracks(run_a: &[TrackRow], run_b: &[TrackRow], gt: &[TrackRow]) -> Result<CompareReport> {
    let (a, g) = align_tracks(run_a, gt)?;
    let (b, _) = align_tracks(run_b, gt)?;
    let sa = success_curve(&a, &g)?;
    let sb = success_curve(&b, &g)?;
    Ok(CompareReport {
        auc_a: sa.auc,
        auc_b: sb.auc,
        difference: sa.auc - sb.auc,
        curve_a: sa.curve,
        curve_b: sb.curve,
    })
}

pub fn compare_runs(run_a: impl AsRef<Path>, run_b: impl AsRef<Path>, gt: impl AsRef<Path>) -> Result<CompareReport> {
    compare_tracks(&read_track_file(run_a)?, &read_track_file(run_b)?, &read_track_file(gt)?)
}
