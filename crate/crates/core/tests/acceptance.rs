//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dronewatch::augment::sequence::{linear_path, render_sequence};
use dronewatch::augment::synth::{drone_sprite, sky_background};
use dronewatch::augment::{composite_sample, generate_dataset, AugmentationPolicy, DatasetOptions, Scenario};
use dronewatch::eval::{iou, pr_curve, success_curve, success_rate};
use dronewatch::fusion::{
    calibrate, fuse, monitor_step, run_detector_only, select_candidate, Candidate, FusionParams, Mode, Monitor,
    MonitorState,
};
use dronewatch::imaging::shorter_side_dimensions;
use dronewatch::plugins::{
    Detector, ExternalDetector, PluginError, PluginErrorKind, PluginResult, ResidualBlobTracker, ScoredBox, Source,
    TemplateDetector, Tracker, DEFAULT_TIMEOUT,
};
use dronewatch::residual::{residual_frame, residuals, shift_clamped, ResidualStream};
use dronewatch::{BBox, ImageBuffer};

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s as f64, || {
        format!("took {:.1} s, limit {limit_s} s", elapsed.as_secs_f64())
    })
}

// 1 ---------------------------------------------------------------------------

fn brute_force_ap(dets: &[Vec<ScoredBox>], gt: &[Vec<BBox>], thresh: f64) -> f64 {
    let total: usize = gt.iter().map(Vec::len).sum();
    let mut scores: Vec<f64> = dets.iter().flatten().map(|d| d.score).collect();
    scores.sort_by(|a, b| b.total_cmp(a));
    scores.dedup();
    if total == 0 || scores.is_empty() {
        return 0.0;
    }
    let mut points = Vec::new();
    for &t in &scores {
        let (mut tp, mut fp) = (0usize, 0usize);
        for (img, ds) in dets.iter().enumerate() {
            let mut admitted: Vec<&ScoredBox> = ds.iter().filter(|d| d.score >= t).collect();
            admitted.sort_by(|a, b| b.score.total_cmp(&a.score));
            let mut used = vec![false; gt[img].len()];
            for d in admitted {
                let mut best: Option<(usize, f64)> = None;
                for (j, g) in gt[img].iter().enumerate() {
                    if used[j] {
                        continue;
                    }
                    let v = iou(&d.bbox, g);
                    if best.map_or(true, |(_, bv)| v > bv) {
                        best = Some((j, v));
                    }
                }
                match best {
                    Some((j, v)) if v >= thresh => {
                        used[j] = true;
                        tp += 1;
                    }
                    _ => fp += 1,
                }
            }
        }
        points.push((tp as f64 / total as f64, tp as f64 / (tp + fp) as f64));
    }
    let mut area = 0.0;
    let mut prev = (0.0, points[0].1);
    for p in points {
        area += (p.0 - prev.0) * (p.1 + prev.1) / 2.0;
        prev = p;
    }
    area
}

fn raster_iou(a: (i64, i64, i64, i64), b: (i64, i64, i64, i64)) -> f64 {
    let inside = |r: (i64, i64, i64, i64), x: i64, y: i64| x >= r.0 && x < r.0 + r.2 && y >= r.1 && y < r.1 + r.3;
    let (mut inter, mut union) = (0u64, 0u64);
    for y in -2..40 {
        for x in -2..40 {
            let (ia, ib) = (inside(a, x, y), inside(b, x, y));
            inter += (ia && ib) as u64;
            union += (ia || ib) as u64;
        }
    }
    inter as f64 / union as f64
}

fn criterion_metric_oracles() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let grid_box = |rng: &mut ChaCha8Rng| {
        (
            rng.random_range(0..20i64),
            rng.random_range(0..20i64),
            rng.random_range(1..12i64),
            rng.random_range(1..12i64),
        )
    };
    let to_box = |r: (i64, i64, i64, i64)| BBox::new(r.0 as f64, r.1 as f64, r.2 as f64, r.3 as f64);
    let mut worst = 0.0f64;
    for instance in 0..200 {
        let images = rng.random_range(1..=5usize);
        let mut gt = vec![Vec::new(); images];
        let mut dets = vec![Vec::new(); images];
        for g in gt.iter_mut() {
            for _ in 0..rng.random_range(0..=4) {
                g.push(to_box(grid_box(&mut rng)));
            }
        }
        for _ in 0..rng.random_range(0..=20) {
            let img = rng.random_range(0..images);
            // Coarse scores so ties occur; some detections copy or nudge a GT box.
            let score = rng.random_range(0..8) as f64 / 8.0;
            let bbox = match gt[img].len() {
                n if n > 0 && rng.random_bool(0.6) => {
                    let g: BBox = gt[img][rng.random_range(0..n)];
                    BBox::new(g.x + rng.random_range(-2..=2) as f64, g.y, g.w, g.h)
                }
                _ => to_box(grid_box(&mut rng)),
            };
            dets[img].push(ScoredBox::detector(bbox, score));
        }
        let thresh = [0.5, 0.3, 0.75][instance % 3];
        let got = pr_curve(&dets, &gt, thresh).map_err(|e| e.to_string())?.average_precision;
        let want = brute_force_ap(&dets, &gt, thresh);
        worst = worst.max((got - want).abs());
        ensure((got - want).abs() <= 1e-9, || format!("instance {instance}: AP {got} vs oracle {want}"))?;
    }
    for k in 0..2000 {
        let (a, b) = (grid_box(&mut rng), grid_box(&mut rng));
        let (got, want) = (iou(&to_box(a), &to_box(b)), raster_iou(a, b));
        ensure(got == want, || format!("pair {k}: iou {got} vs raster {want} for {a:?} {b:?}"))?;
    }
    within(start.elapsed(), 10)?;
    Ok(format!("200 PR instances (max |diff| {worst:.1e}), 2000 IoU pairs exact"))
}

// 2 ---------------------------------------------------------------------------

fn criterion_worked_examples() -> Result<String, String> {
    let g = vec![vec![BBox::new(0.0, 0.0, 10.0, 10.0), BBox::new(50.0, 50.0, 10.0, 10.0)]];
    let d = vec![vec![
        ScoredBox::detector(BBox::new(0.0, 0.0, 10.0, 10.0), 0.9),
        ScoredBox::detector(BBox::new(100.0, 100.0, 10.0, 10.0), 0.8),
        ScoredBox::detector(BBox::new(50.0, 50.0, 10.0, 10.0), 0.7),
    ]];
    let pr = pr_curve(&d, &g, 0.5).map_err(|e| e.to_string())?;
    ensure((pr.average_precision - 0.79167).abs() <= 1e-5, || format!("AUC {}", pr.average_precision))?;
    let rate = success_rate(&[1.0, 0.4, 0.0], 0.5);
    ensure(rate == 1.0 / 3.0, || format!("success rate {rate}"))?;
    let c = calibrate(1.0, 0.5, 10.0);
    ensure((c - 0.99331).abs() <= 1e-5, || format!("calibrate {c}"))?;
    let dims = shorter_side_dimensions(1920, 1080, 600).map_err(|e| e.to_string())?;
    ensure(dims == (1067, 600), || format!("rescale {dims:?}"))?;
    Ok(format!(
        "AUC {:.5}, success 1/3, calibrate {c:.5}, rescale {}x{}",
        pr.average_precision, dims.0, dims.1
    ))
}

// 3 ---------------------------------------------------------------------------

fn ks_uniform(mut xs: Vec<f64>, lo: f64, hi: f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = (x - lo) / (hi - lo);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

fn tight_against_owner(owner: &[u8], w: u32, h: u32, k: u8, b: &BBox) -> Result<(), String> {
    let (x0, y0) = (b.x as u32, b.y as u32);
    let (x1, y1) = (b.right() as u32, b.bottom() as u32);
    let (mut top, mut bottom, mut left, mut right) = (false, false, false, false);
    for y in 0..h {
        for x in 0..w {
            if owner[(y * w + x) as usize] != k {
                continue;
            }
            if !(x >= x0 && x < x1 && y >= y0 && y < y1) {
                return Err(format!("opaque pixel ({x},{y}) outside box {b:?}"));
            }
            top |= y == y0;
            bottom |= y + 1 == y1;
            left |= x == x0;
            right |= x + 1 == x1;
        }
    }
    ensure(top && bottom && left && right, || format!("box {b:?} can shrink"))
}

fn read_tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn criterion_augmentation() -> Result<String, String> {
    const N: usize = 1000;
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut bg_paths = Vec::new();
    let mut backgrounds = Vec::new();
    for i in 0..3 {
        let bg = sky_background(640, 480, 100 + i);
        let p = tmp.path().join(format!("bg{i}.png"));
        bg.save_png(&p).map_err(|e| e.to_string())?;
        bg_paths.push(p);
        backgrounds.push(bg);
    }
    let mut asset_paths = Vec::new();
    for i in 0..3 {
        let a = drone_sprite(96, 200 + i);
        let p = tmp.path().join(format!("drone{i}.png"));
        a.sprite().save_png(&p).map_err(|e| e.to_string())?;
        asset_paths.push(p);
    }
    let policy = AugmentationPolicy { seed: 77, ..Default::default() };
    let opts = DatasetOptions::default();
    let run_a = generate_dataset(&bg_paths, &asset_paths, &policy, N, tmp.path().join("a"), &opts).map_err(|e| e.to_string())?;
    let run_b = generate_dataset(&bg_paths, &asset_paths, &policy, N, tmp.path().join("b"), &opts).map_err(|e| e.to_string())?;
    let (files_a, files_b) = (read_tree(&run_a.root), read_tree(&run_b.root));
    ensure(files_a.len() == N + 3, || format!("{} files written", files_a.len()))?;
    ensure(files_a == files_b, || "re-run is not byte-identical".into())?;

    let loaded: Vec<_> = asset_paths
        .iter()
        .map(dronewatch::ForegroundAsset::load)
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let mut rotations = Vec::with_capacity(N);
    for rec in &run_a.samples {
        let bg_index = bg_paths.iter().position(|p| *p == rec.background).unwrap();
        let bg = &backgrounds[bg_index];
        let s = composite_sample(bg, &loaded, &policy, rec.index).map_err(|e| e.to_string())?;
        ensure(s.boxes == rec.boxes, || format!("sample {}: boxes differ from dataset", rec.index))?;
        let (w, h) = s.image.dimensions();
        for (k, p) in s.provenance.iter().enumerate() {
            if let Some(b) = &p.bbox {
                tight_against_owner(&s.owner, w, h, k as u8 + 1, b).map_err(|e| format!("sample {}: {e}", rec.index))?;
            }
        }
        for y in 0..h {
            for x in 0..w {
                if s.image.pixel(x, y) != &bg.pixel(x, y)[..3] {
                    let px = BBox::new(x as f64, y as f64, 1.0, 1.0);
                    ensure(s.boxes.iter().any(|b| b.contains(&px)), || {
                        format!("sample {}: changed pixel ({x},{y}) outside every box", rec.index)
                    })?;
                }
            }
        }
        for p in &s.provenance {
            ensure(p.rotation > -30.0 && p.rotation < 30.0, || format!("rotation {}", p.rotation))?;
            rotations.push(p.rotation);
        }
    }
    let d = ks_uniform(rotations.clone(), -30.0, 30.0);
    let critical = 1.628 / (rotations.len() as f64).sqrt();
    ensure(d < critical, || format!("KS statistic {d:.4} >= {critical:.4}"))?;
    within(start.elapsed(), 60)?;
    Ok(format!(
        "{N} samples tight, rotations in ({:.2}, {:.2}), KS D={d:.4} < {critical:.4}, re-run byte-identical, {:.1} s",
        rotations.iter().cloned().fold(f64::INFINITY, f64::min),
        rotations.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        start.elapsed().as_secs_f64()
    ))
}

// 4 ---------------------------------------------------------------------------

fn criterion_residuals() -> Result<String, String> {
    let bg = sky_background(96, 72, 5);
    let sprite = drone_sprite(14, 6);

    let (still, _) = render_sequence(&bg, &sprite, &vec![Some((40.0, 30.0)); 8]).map_err(|e| e.to_string())?;
    for compensate in [false, true] {
        let r = residuals(&still, compensate, 8).map_err(|e| e.to_string())?;
        ensure(r.iter().all(|f| f.data().iter().all(|&v| v == 0)), || "static residual not zero".into())?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let texture = ImageBuffer::from_fn(64, 48, |_, _| [rng.random(), rng.random(), rng.random()]).unwrap();
    let mut pans = 0;
    for (dx, dy) in [(3, -2), (-8, 8), (0, 5), (7, 0), (-1, -1)] {
        let cur = shift_clamped(&texture, dx, dy);
        let comp = residual_frame(&texture, &cur, true, 8).map_err(|e| e.to_string())?;
        let raw = residual_frame(&texture, &cur, false, 8).map_err(|e| e.to_string())?;
        for y in 0..48i32 {
            for x in 0..64i32 {
                let (sx, sy) = (x - dx, y - dy);
                if (0..64).contains(&sx) && (0..48).contains(&sy) {
                    ensure(comp.pixel(x as u32, y as u32) == [0, 0, 0], || {
                        format!("pan ({dx},{dy}): residual at ({x},{y})")
                    })?;
                }
            }
        }
        let energy = |img: &ImageBuffer| img.data().iter().map(|&v| v as u64).sum::<u64>();
        ensure(energy(&comp) * 10 <= energy(&raw), || format!("pan ({dx},{dy}): compensation gain under 10x"))?;
        pans += 1;
    }

    let mut path = linear_path((12.0, 12.0), (80.0, 58.0), 20);
    path.extend([None, None]);
    path.extend(linear_path((70.0, 20.0), (20.0, 50.0), 10));
    let (frames, truth) = render_sequence(&bg, &sprite, &path).map_err(|e| e.to_string())?;
    let r = residuals(&frames, false, 8).map_err(|e| e.to_string())?;
    for i in 1..frames.len() {
        let support: Vec<BBox> = [truth[i - 1], truth[i]].into_iter().flatten().collect();
        for y in 0..72 {
            for x in 0..96 {
                if r[i].pixel(x, y).iter().any(|&v| v > 0) {
                    let px = BBox::new(x as f64, y as f64, 1.0, 1.0);
                    ensure(support.iter().any(|b| b.contains(&px)), || {
                        format!("frame {}: residual at ({x},{y}) outside consecutive boxes", i + 1)
                    })?;
                }
            }
        }
    }
    Ok(format!("static zero, {pans} pans cancelled on overlap, {} moving frames confined", frames.len()))
}

// 5 ---------------------------------------------------------------------------

fn brute_force_select(c: &[Candidate], p: &FusionParams) -> Option<(usize, f64)> {
    let fused: Vec<f64> = c
        .iter()
        .map(|c| {
            let d = c.detector_score.map(|s| calibrate(s, p.detector_midpoint, p.detector_steepness));
            let t = c.tracker_score.map(|s| calibrate(s, p.tracker_midpoint, p.tracker_steepness));
            fuse(d.unwrap_or(0.0), t.unwrap_or(0.0))
        })
        .collect();
    let top = fused.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let winners: Vec<usize> = (0..c.len()).filter(|&i| fused[i] == top).collect();
    let &first = winners.first()?;
    (top >= p.accept_floor).then_some((first, top))
}

struct RandomDetector(ChaCha8Rng);

impl Detector for RandomDetector {
    fn detect(&mut self, image: &ImageBuffer, _roi: Option<BBox>) -> PluginResult<Vec<ScoredBox>> {
        let r = &mut self.0;
        if r.random_bool(0.1) {
            return Err(PluginError::ProtocolViolation("scripted".into()));
        }
        let (w, h) = image.dimensions();
        let mut out: Vec<ScoredBox> = (0..r.random_range(0..4))
            .map(|_| {
                let b = BBox::new(r.random_range(0.0..w as f64 - 2.0), r.random_range(0.0..h as f64 - 2.0), 2.0, 2.0);
                ScoredBox::detector(b, r.random_range(-1.0..2.0))
            })
            .collect();
        out.sort_by(|a, b| b.score.total_cmp(&a.score));
        Ok(out)
    }
}

struct RandomTracker {
    rng: ChaCha8Rng,
    live: bool,
}

impl Tracker for RandomTracker {
    fn init(&mut self, _: &ImageBuffer, bbox: BBox) -> PluginResult<BBox> {
        if self.rng.random_bool(0.05) {
            return Err(PluginError::Timeout(Duration::from_millis(1)));
        }
        self.live = true;
        Ok(bbox)
    }

    fn update(&mut self, _: &ImageBuffer) -> PluginResult<ScoredBox> {
        if !self.live {
            return Err(PluginError::Uninitialized);
        }
        if self.rng.random_bool(0.1) {
            return Err(PluginError::ChildExited(None));
        }
        let r = &mut self.rng;
        let b = BBox::new(r.random_range(0.0..28.0), r.random_range(0.0..28.0), 3.0, 3.0);
        Ok(ScoredBox::tracker(b, r.random_range(-0.5..1.5)))
    }
}

fn criterion_fusion() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(55);

    for _ in 0..10_000 {
        let alpha = rng.random_range(-5.0..5.0);
        let beta: f64 = rng.random_range(0.1..20.0);
        // Stay where the logistic is not saturated in f64.
        let span = 15.0 / beta;
        let s1 = alpha + rng.random_range(-span..span);
        let s2 = s1 + rng.random_range(1e-3..span);
        let (c1, c2) = (calibrate(s1, alpha, beta), calibrate(s2, alpha, beta));
        ensure(c1 < c2 && c1 > 0.0 && c2 < 1.0, || format!("calibrate not increasing at {s1} {s2} ({alpha}, {beta})"))?;
    }

    let rescalings: [fn(f64) -> f64; 4] = [
        |s| 0.5 * s + 0.1,
        |s| 2.0 * s - 0.7,
        |s| (s + 2.0).powi(3) / 25.0 - 1.0,
        |s| (s + 2.0).sqrt() - 0.5,
    ];
    for k in 0..2000 {
        let p = FusionParams { accept_floor: 0.0, ..Default::default() };
        let n = rng.random_range(1..8);
        let tracker_side = k % 2 == 1;
        let raw: Vec<f64> = (0..n).map(|_| (rng.random_range(-150..=150) as f64) / 100.0).collect();
        let build = |f: &dyn Fn(f64) -> f64| -> Vec<Candidate> {
            raw.iter()
                .map(|&s| {
                    let b = BBox::new(0.0, 0.0, 1.0, 1.0);
                    if tracker_side {
                        Candidate::new(b, None, Some(f(s)))
                    } else {
                        Candidate::new(b, Some(f(s)), None)
                    }
                })
                .collect()
        };
        let base = select_candidate(&build(&|s| s), &p).index;
        for g in rescalings {
            let moved = select_candidate(&build(&g), &p).index;
            ensure(moved == base, || format!("argmax moved from {base:?} to {moved:?} for raw {raw:?}"))?;
        }
    }

    for k in 0..5000 {
        let p = FusionParams {
            accept_floor: rng.random_range(0.0..=1.0),
            detector_midpoint: rng.random_range(-1.0..1.0),
            tracker_midpoint: rng.random_range(-1.0..1.0),
            detector_steepness: rng.random_range(0.5..20.0),
            tracker_steepness: rng.random_range(0.5..20.0),
            ..Default::default()
        };
        let c: Vec<Candidate> = (0..rng.random_range(0..10))
            .map(|_| {
                let pick = |rng: &mut ChaCha8Rng| {
                    rng.random_bool(0.7).then(|| (rng.random_range(-4..=8) as f64) / 4.0)
                };
                let (d, t) = (pick(&mut rng), pick(&mut rng));
                Candidate::new(BBox::new(0.0, 0.0, 1.0, 1.0), d, t)
            })
            .collect();
        let got = select_candidate(&c, &p);
        let want = brute_force_select(&c, &p);
        let got_pair = got.index.zip(got.chosen.map(|x| x.score));
        ensure(got_pair == want, || format!("case {k}: {got_pair:?} vs brute force {want:?}"))?;
        ensure(got.is_rejected() == got.chosen.is_none(), || "rejection flag inconsistent".into())?;
    }

    let frame = ImageBuffer::filled(32, 32, &[0, 0, 0]).unwrap();
    let mut steps = 0;
    let mut tracking_steps = 0;
    for run in 0..100u64 {
        let params = FusionParams {
            lost_patience: rng.random_range(1..6),
            accept_floor: rng.random_range(0.2..0.9),
            reseed: rng.random_bool(0.5),
            ..Default::default()
        };
        let mut det = RandomDetector(ChaCha8Rng::seed_from_u64(run));
        let mut trk = RandomTracker { rng: ChaCha8Rng::seed_from_u64(run + 1000), live: false };
        let mut state = if rng.random_bool(0.3) {
            MonitorState::seeded(BBox::new(1.0, 1.0, 4.0, 4.0))
        } else {
            MonitorState::default()
        };
        for _ in 0..100 {
            let use_det = rng.random_bool(0.8);
            let use_trk = rng.random_bool(0.8);
            let step = monitor_step(
                &state,
                &frame,
                &frame,
                use_det.then_some(&mut det as &mut dyn Detector),
                use_trk.then_some(&mut trk as &mut dyn Tracker),
                &params,
            )
            .map_err(|e| e.to_string())?;
            state = step.state;
            steps += 1;
            if state.mode == Mode::Tracking {
                tracking_steps += 1;
                ensure(state.last_box.is_some(), || format!("step {steps}: TRACKING without last_box"))?;
                ensure(state.low_streak <= params.lost_patience, || format!("step {steps}: streak above patience"))?;
            }
            ensure(step.decision.is_rejected() == step.decision.chosen.is_none(), || "decision flag".into())?;
        }
    }
    Ok(format!(
        "monotone on 10000 triples, argmax invariant on 2000 lists, 5000 exact selections, {steps} monitor steps ({tracking_steps} tracking) safe"
    ))
}

// 6 ---------------------------------------------------------------------------

fn scenario_aucs(seed: u64) -> Result<(f64, f64, f64, f64, Vec<String>), String> {
    let s = Scenario::canonical(seed);
    let (frames, truth) = s.render().map_err(|e| e.to_string())?;
    let params = FusionParams::default();
    let pred = |rows: &[Option<BBox>]| success_curve(rows, &truth).map(|r| r.auc).map_err(|e| e.to_string());
    let template = || TemplateDetector::new(&[s.asset.clone()], Default::default()).map_err(|e| e.to_string());

    let seed_box = truth[0].ok_or("first frame has no target")?;
    let mut tracker_only = Monitor::new(
        params,
        None,
        Some(Box::new(ResidualBlobTracker::default())),
        ResidualStream::new(false, 8),
    )
    .map_err(|e| e.to_string())?
    .with_seed(seed_box);
    let t_rows: Vec<Option<BBox>> = tracker_only
        .run(&frames)
        .map_err(|e| e.to_string())?
        .iter()
        .map(|r| r.decision.chosen.map(|c| c.bbox))
        .collect();

    let mut raw = ResidualBlobTracker::default();
    raw.init(&frames[0], seed_box).map_err(|e| e.to_string())?;
    let mut raw_rows = vec![Some(seed_box)];
    let mut stream = ResidualStream::new(false, 8);
    stream.push(&frames[0]).map_err(|e| e.to_string())?;
    for f in &frames[1..] {
        let r = stream.push(f).map_err(|e| e.to_string())?;
        raw_rows.push(Some(raw.update(&r).map_err(|e| e.to_string())?.bbox));
    }

    let mut det = template()?;
    let (d_rows, _) = run_detector_only(&frames, &mut det, &params).map_err(|e| e.to_string())?;
    let d_rows: Vec<Option<BBox>> = d_rows.iter().map(|r| r.bbox).collect();

    let mut integrated = Monitor::new(
        params,
        Some(Box::new(template()?)),
        Some(Box::new(ResidualBlobTracker::default())),
        ResidualStream::new(false, 8),
    )
    .map_err(|e| e.to_string())?;
    let records = integrated.run(&frames).map_err(|e| e.to_string())?;
    let modes = records.iter().map(|r| r.mode.to_string()).collect();
    let i_rows: Vec<Option<BBox>> = records.iter().map(|r| r.decision.chosen.map(|c| c.bbox)).collect();
    Ok((pred(&t_rows)?, pred(&raw_rows)?, pred(&d_rows)?, pred(&i_rows)?, modes))
}

fn criterion_integration() -> Result<String, String> {
    let start = Instant::now();
    let (tracker, raw_tracker, detector, integrated, modes) = scenario_aucs(2018)?;
    let again = scenario_aucs(2018)?;
    ensure(again.0 == tracker && again.2 == detector && again.3 == integrated && again.4 == modes, || {
        "re-run differs".into()
    })?;
    ensure(integrated >= detector, || format!("integrated {integrated:.5} < detector-only {detector:.5}"))?;
    ensure(integrated >= tracker, || format!("integrated {integrated:.5} < tracker-only {tracker:.5}"))?;
    ensure(integrated > tracker, || format!("integrated {integrated:.5} not above tracker-only {tracker:.5}"))?;
    let searching_after_gap = modes[50..65].iter().any(|m| m == "SEARCHING");
    ensure(searching_after_gap, || "monitor never fell back to SEARCHING during the gap".into())?;
    ensure(modes[70..].iter().all(|m| m == "TRACKING"), || "monitor did not reacquire".into())?;
    within(start.elapsed(), 120)?;
    Ok(format!(
        "AUC integrated {integrated:.5}, detector-only {detector:.5}, tracker-only {tracker:.5} (ungated tracker {raw_tracker:.5}), deterministic, {:.1} s",
        start.elapsed().as_secs_f64()
    ))
}

// 7 ---------------------------------------------------------------------------

fn sh(script: &str) -> Vec<String> {
    vec!["sh".into(), "-c".into(), script.into()]
}

fn criterion_external_loopback() -> Result<String, String> {
    let bg = sky_background(120, 90, 3);
    let sprite = drone_sprite(16, 4);
    let (frames, _) = render_sequence(&bg, &sprite, &linear_path((15.0, 15.0), (100.0, 70.0), 100)).map_err(|e| e.to_string())?;

    let echo = r#"n=0; while read cmd path rest; do
        n=$((n+1))
        if [ "$cmd" != DETECT ] || [ ! -s "$path" ]; then echo "ERR bad request"; continue; fi
        echo "OK 1"; echo "BOX 40 30 16 16 0.9"; done"#;
    let det = ExternalDetector::spawn(sh(echo), DEFAULT_TIMEOUT).map_err(|e| e.to_string())?;
    let mut m = Monitor::new(
        FusionParams::default(),
        Some(Box::new(det)),
        Some(Box::new(ResidualBlobTracker::default())),
        ResidualStream::new(false, 8),
    )
    .map_err(|e| e.to_string())?;
    let recs = m.run(&frames).map_err(|e| e.to_string())?;
    ensure(recs.len() == 100, || format!("{} records", recs.len()))?;
    ensure(m.failures().is_empty(), || format!("{} plugin failures: {:?}", m.failures().len(), m.failures()[0].error))?;
    let detector_boxes = recs
        .iter()
        .filter(|r| r.decision.chosen.is_some_and(|c| c.source == Source::Detector))
        .count();
    ensure(detector_boxes == 100, || format!("{detector_boxes} frames used the external box"))?;

    let flaky = r#"n=0; while read cmd path rest; do
        n=$((n+1))
        if [ $n -eq 4 ]; then echo "OK banana"; continue; fi
        echo "OK 1"; echo "BOX 40 30 16 16 0.9"; done"#;
    let det = ExternalDetector::spawn(sh(flaky), DEFAULT_TIMEOUT).map_err(|e| e.to_string())?;
    let mut m = Monitor::new(
        FusionParams::default(),
        Some(Box::new(det)),
        Some(Box::new(ResidualBlobTracker::default())),
        ResidualStream::new(false, 8),
    )
    .map_err(|e| e.to_string())?;
    let recs = m.run(&frames[..20]).map_err(|e| e.to_string())?;
    ensure(recs.len() == 20, || "run aborted".into())?;
    let kinds: BTreeSet<String> = m.failures().iter().map(|f| format!("{:?}", f.error.kind())).collect();
    ensure(
        !m.failures().is_empty() && m.failures().iter().all(|f| f.error.kind() == PluginErrorKind::ProtocolViolation),
        || format!("failure kinds {kinds:?}"),
    )?;
    let violation_frame = m.failures()[0].frame_index;
    ensure(violation_frame == 4, || format!("first violation on frame {violation_frame}"))?;
    ensure(recs[4].decision.chosen.is_some(), || "bridge did not recover after restart".into())?;
    Ok(format!(
        "100 frames, 0 protocol errors; malformed reply on frame {violation_frame} -> {} protocol violation(s), run completed",
        m.failures().len()
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, Check); 7] = [
        ("metric oracle equivalence", criterion_metric_oracles),
        ("worked-example regression", criterion_worked_examples),
        ("augmentation soundness", criterion_augmentation),
        ("residual correctness", criterion_residuals),
        ("fusion and state-machine properties", criterion_fusion),
        ("integration beats parts", criterion_integration),
        ("external plugin loopback", criterion_external_loopback),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail} [{secs:.2} s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why} [{secs:.2} s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
