mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use dronewatch::augment::generate_dataset;
use dronewatch::augment::sequence::list_frames;
use dronewatch::augment::{read_manifest, DatasetOptions, Scenario};
use dronewatch::eval::{
    align_tracks, compare_runs, group_detections, pr_curve, read_track_file, success_curve, write_track_file,
};
use dronewatch::plugins::{
    ExternalDetector, ExternalTracker, PluginError, ResidualBlobTracker, TemplateDetector,
};
use dronewatch::residual::{residual_sequence, ResidualStream};
use dronewatch::{BBox, Detector, ForegroundAsset, ImageBuffer, Monitor, Tracker};

use config::{parse_command, DetectorKind, RunConfig, TrackerKind};

const SPRITE_FILE: &str = "sprite.png";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}{}: {message}", path.display(), if *line > 0 { format!(":{line}") } else { String::new() })]
    Config { path: PathBuf, line: usize, message: String },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] dronewatch::Error),
    #[error("plugin: {0}")]
    Plugin(#[from] PluginError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Parser)]
#[command(name = "dronewatch", version, about = "Drone augmentation, monitoring and evaluation")]
struct Cli {
    /// Key-value configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EvalMode {
    Detection,
    Tracking,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Composite drones onto backgrounds and write an annotated dataset.
    Augment {
        /// Manifest listing background images.
        #[arg(long)]
        backgrounds: Option<PathBuf>,
        /// Manifest listing RGBA drone sprites.
        #[arg(long)]
        assets: Option<PathBuf>,
        #[arg(short = 'n', long = "count", default_value_t = 100)]
        count: usize,
        /// Also write VOC-style XML annotations.
        #[arg(long)]
        voc: bool,
    },
    /// Render the built-in test sequence with ground truth and its sprite.
    Simulate,
    /// Write residual frames for a directory of frames.
    Residual {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        compensate: bool,
        #[arg(long)]
        window: Option<u32>,
    },
    /// Run detection and tracking fusion over a directory of frames.
    Monitor {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long, value_enum)]
        detector: Option<DetectorKind>,
        #[arg(long, value_enum)]
        tracker: Option<TrackerKind>,
        #[arg(long)]
        compensate: bool,
        #[arg(long)]
        window: Option<u32>,
        /// Sprite for the template detector; defaults to sprite.png in the frames directory.
        #[arg(long)]
        template: Option<PathBuf>,
        #[arg(long)]
        detector_command: Option<String>,
        #[arg(long)]
        tracker_command: Option<String>,
        /// Start tracking from this box on the first frame: x,y,w,h.
        #[arg(long)]
        init_box: Option<String>,
    },
    /// Score a results file against ground truth.
    Eval {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_enum, default_value_t = EvalMode::Tracking)]
        mode: EvalMode,
        #[arg(long, default_value_t = dronewatch::eval::DEFAULT_MATCH_IOU)]
        iou_thresh: f64,
    },
    /// Success curves of two tracking runs against the same ground truth.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
}

struct Ctx {
    cfg: RunConfig,
    out: Option<PathBuf>,
    quiet: bool,
}

impl Ctx {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }

    fn out(&self, what: &str) -> Result<&Path, CliError> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Usage(format!("--out is required ({what})")))
    }
}

fn parse_box(s: &str) -> Result<BBox, CliError> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Usage(format!("--init-box `{s}`: {e}")))?;
    match v[..] {
        [x, y, w, h] => BBox::try_new(x, y, w, h).map_err(CliError::from),
        _ => Err(CliError::Usage(format!("--init-box `{s}`: expected x,y,w,h"))),
    }
}

fn cmd_augment(ctx: &Ctx, count: usize, voc: bool) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let missing = |what: &str| CliError::Usage(format!("no {what} manifest given"));
    let bg_manifest = cfg.backgrounds.as_ref().ok_or_else(|| missing("background"))?;
    let asset_manifest = cfg.assets.as_ref().ok_or_else(|| missing("asset"))?;
    let backgrounds = read_manifest(bg_manifest)?;
    let assets = read_manifest(asset_manifest)?;
    let policy = dronewatch::AugmentationPolicy { seed: cfg.seed, ..cfg.policy.clone() };
    let manifest = generate_dataset(&backgrounds, &assets, &policy, count, ctx.out("dataset directory")?, &DatasetOptions { voc })?;
    ctx.say(format!("{} samples", manifest.samples.len()));
    ctx.say(format!("manifest: {}", manifest.manifest_path.display()));
    ctx.say(format!("annotations: {}", manifest.annotation_path.display()));
    Ok(())
}

fn cmd_simulate(ctx: &Ctx) -> Result<(), CliError> {
    let out = ctx.out("frames directory")?;
    let scenario = Scenario::canonical(ctx.cfg.seed);
    let truth = scenario.write(out)?;
    scenario.asset.sprite().save_png(out.join(SPRITE_FILE))?;
    let visible = truth.iter().flatten().count();
    ctx.say(format!("{} frames ({visible} with target) in {}", truth.len(), out.display()));
    Ok(())
}

fn cmd_residual(ctx: &Ctx, frames: &Path) -> Result<(), CliError> {
    let n = residual_sequence(frames, ctx.cfg.compensate, ctx.cfg.window, ctx.out("residual directory")?)?;
    ctx.say(format!("{n} residual frames"));
    Ok(())
}

fn build_detector(cfg: &RunConfig, frames: &Path) -> Result<Option<Box<dyn Detector>>, CliError> {
    Ok(match cfg.detector {
        DetectorKind::None => None,
        DetectorKind::Template => {
            let path = cfg.template.clone().unwrap_or_else(|| frames.join(SPRITE_FILE));
            if !path.exists() {
                return Err(CliError::Usage(format!("template {} not found; pass --template", path.display())));
            }
            let asset = ForegroundAsset::load(&path)?;
            Some(Box::new(TemplateDetector::new(&[asset], cfg.template_params.clone())?))
        }
        DetectorKind::External => {
            let cmd = cfg
                .detector_command
                .clone()
                .ok_or_else(|| CliError::Usage("external detector needs detector_command".into()))?;
            Some(Box::new(ExternalDetector::spawn(cmd, cfg.plugin_timeout)?))
        }
    })
}

fn build_tracker(cfg: &RunConfig) -> Result<Option<Box<dyn Tracker>>, CliError> {
    Ok(match cfg.tracker {
        TrackerKind::None => None,
        TrackerKind::Blob => Some(Box::new(ResidualBlobTracker::default())),
        TrackerKind::External => {
            let cmd = cfg
                .tracker_command
                .clone()
                .ok_or_else(|| CliError::Usage("external tracker needs tracker_command".into()))?;
            Some(Box::new(ExternalTracker::spawn(cmd, cfg.plugin_timeout)?))
        }
    })
}

fn cmd_monitor(ctx: &Ctx, frames_dir: &Path, init_box: Option<BBox>) -> Result<(), CliError> {
    let out = ctx.out("results file")?;
    let paths = list_frames(frames_dir)?;
    if paths.is_empty() {
        return Err(CliError::Usage(format!("{}: no frames", frames_dir.display())));
    }
    let cfg = &ctx.cfg;
    let detector = build_detector(cfg, frames_dir)?;
    let tracker = build_tracker(cfg)?;
    if detector.is_none() && tracker.is_none() {
        return Err(CliError::Usage("both detector and tracker are disabled".into()));
    }
    let mut monitor = Monitor::new(cfg.fusion, detector, tracker, ResidualStream::new(cfg.compensate, cfg.window))?;
    if let Some(b) = init_box {
        monitor = monitor.with_seed(b);
    }
    let mut rows = Vec::with_capacity(paths.len());
    for p in &paths {
        let frame = ImageBuffer::load(p)?;
        rows.push(monitor.push(&frame)?.to_row());
    }
    write_track_file(out, &rows)?;
    for f in monitor.failures() {
        if !ctx.quiet {
            eprintln!("frame {}: {} failed: {}", f.frame_index, f.source, f.error);
        }
    }
    ctx.say(format!(
        "{} frames, {} accepted, {} plugin failures, final mode {}",
        rows.len(),
        monitor.accepted(),
        monitor.failures().len(),
        monitor.state().mode
    ));
    Ok(())
}

fn cmd_eval(ctx: &Ctx, results: &Path, gt: &Path, mode: EvalMode, iou_thresh: f64) -> Result<(), CliError> {
    let r = read_track_file(results)?;
    let g = read_track_file(gt)?;
    let (curve, auc) = match mode {
        EvalMode::Tracking => {
            let (pred, truth) = align_tracks(&r, &g)?;
            let s = success_curve(&pred, &truth)?;
            (s.curve, s.auc)
        }
        EvalMode::Detection => {
            let (dets, truth) = group_detections(&r, &g);
            let p = pr_curve(&dets, &truth, iou_thresh)?;
            (p.curve, p.average_precision)
        }
    };
    if let Some(out) = &ctx.out {
        curve.write_csv(out)?;
    }
    println!("{auc:.5}");
    Ok(())
}

fn cmd_compare(ctx: &Ctx, a: &Path, b: &Path, gt: &Path) -> Result<(), CliError> {
    let report = compare_runs(a, b, gt)?;
    if let Some(out) = &ctx.out {
        std::fs::write(out, report.to_csv()).map_err(|source| CliError::Io { path: out.clone(), source })?;
    }
    println!("a {:.5}", report.auc_a);
    println!("b {:.5}", report.auc_b);
    println!("difference {:+.5}", report.difference);
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let mut init_box = None;
    match &cli.command {
        Command::Augment { backgrounds, assets, .. } => {
            if let Some(p) = backgrounds {
                cfg.backgrounds = Some(p.clone());
            }
            if let Some(p) = assets {
                cfg.assets = Some(p.clone());
            }
        }
        Command::Residual { compensate, window, .. } => {
            cfg.compensate |= compensate;
            cfg.window = window.unwrap_or(cfg.window);
        }
        Command::Monitor {
            detector,
            tracker,
            compensate,
            window,
            template,
            detector_command,
            tracker_command,
            init_box: b,
            ..
        } => {
            cfg.detector = detector.unwrap_or(cfg.detector);
            cfg.tracker = tracker.unwrap_or(cfg.tracker);
            cfg.compensate |= compensate;
            cfg.window = window.unwrap_or(cfg.window);
            if let Some(t) = template {
                cfg.template = Some(t.clone());
            }
            if let Some(c) = detector_command {
                cfg.detector_command = Some(parse_command("--detector-command", c).map_err(CliError::Usage)?);
            }
            if let Some(c) = tracker_command {
                cfg.tracker_command = Some(parse_command("--tracker-command", c).map_err(CliError::Usage)?);
            }
            init_box = b.as_deref().map(parse_box).transpose()?;
        }
        _ => {}
    }
    cfg.validate()?;
    let ctx = Ctx { cfg, out: cli.out.clone(), quiet: cli.quiet };
    match &cli.command {
        Command::Augment { count, voc, .. } => cmd_augment(&ctx, *count, *voc),
        Command::Simulate => cmd_simulate(&ctx),
        Command::Residual { frames, .. } => cmd_residual(&ctx, frames),
        Command::Monitor { frames, .. } => cmd_monitor(&ctx, frames, init_box),
        Command::Eval { results, gt, mode, iou_thresh } => cmd_eval(&ctx, results, gt, *mode, *iou_thresh),
        Command::Compare { a, b, gt } => cmd_compare(&ctx, a, b, gt),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
