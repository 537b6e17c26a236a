//! Flat `key = value` run configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use dronewatch::plugins::{TemplateDetectorParams, DEFAULT_TIMEOUT};
use dronewatch::residual::DEFAULT_WINDOW;
use dronewatch::{AugmentationPolicy, FusionParams};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum DetectorKind {
    Template,
    External,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TrackerKind {
    Blob,
    External,
    None,
}

macro_rules! keyword_parse {
    ($ty:ident { $($word:literal => $variant:ident),* }) => {
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($word => Ok($ty::$variant),)*
                    other => Err(format!("unknown value `{other}`")),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $word,)* })
            }
        }
    };
}

keyword_parse!(DetectorKind { "template" => Template, "external" => External, "none" => None });
keyword_parse!(TrackerKind { "blob" => Blob, "external" => External, "none" => None });

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub fusion: FusionParams,
    pub policy: AugmentationPolicy,
    pub detector: DetectorKind,
    pub tracker: TrackerKind,
    pub detector_command: Option<Vec<String>>,
    pub tracker_command: Option<Vec<String>>,
    pub plugin_timeout: Duration,
    pub template: Option<PathBuf>,
    pub template_params: TemplateDetectorParams,
    pub compensate: bool,
    pub window: u32,
    pub backgrounds: Option<PathBuf>,
    pub assets: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            fusion: FusionParams::default(),
            policy: AugmentationPolicy::default(),
            detector: DetectorKind::Template,
            tracker: TrackerKind::Blob,
            detector_command: None,
            tracker_command: None,
            plugin_timeout: DEFAULT_TIMEOUT,
            template: None,
            template_params: TemplateDetectorParams::default(),
            compensate: false,
            window: DEFAULT_WINDOW,
            backgrounds: None,
            assets: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| format!("{key}: {e}"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, String> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(format!("{key}: expected true or false, got `{value}`")),
    }
}

pub fn parse_command(key: &str, value: &str) -> Result<Vec<String>, String> {
    match shlex::split(value) {
        Some(words) if !words.is_empty() => Ok(words),
        _ => Err(format!("{key}: cannot split command line `{value}`")),
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            path: path.into(),
            line: 0,
            message: e.to_string(),
        })?;
        Self::parse_str(&text).map_err(|(line, message)| CliError::Config {
            path: path.into(),
            line,
            message,
        })
    }

    /// Errors carry the 1-based line number.
    pub fn parse_str(text: &str) -> Result<Self, (usize, String)> {
        let mut cfg = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |(l, _)| l).trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err((n + 1, format!("expected `key = value`, got `{line}`")));
            };
            cfg.set(key.trim(), value.trim()).map_err(|m| (n + 1, m))?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let f = &mut self.fusion;
        let p = &mut self.policy;
        match key {
            "seed" => self.seed = parse(key, value)?,
            "detector_midpoint" => f.detector_midpoint = parse(key, value)?,
            "detector_steepness" => f.detector_steepness = parse(key, value)?,
            "tracker_midpoint" => f.tracker_midpoint = parse(key, value)?,
            "tracker_steepness" => f.tracker_steepness = parse(key, value)?,
            "accept_floor" => f.accept_floor = parse(key, value)?,
            "lost_patience" => f.lost_patience = parse(key, value)?,
            "reseed" => f.reseed = parse_bool(key, value)?,
            "rotation_min" => p.rotation_range.0 = parse(key, value)?,
            "rotation_max" => p.rotation_range.1 = parse(key, value)?,
            "scale_min" => p.scale_range.0 = parse(key, value)?,
            "scale_max" => p.scale_range.1 = parse(key, value)?,
            "shadow_probability" => p.shadow_probability = parse(key, value)?,
            "monochrome_probability" => p.monochrome_probability = parse(key, value)?,
            "blur_probability" => p.blur_probability = parse(key, value)?,
            "drones_per_image" => p.drones_per_image = parse(key, value)?,
            "detector" => self.detector = parse(key, value)?,
            "tracker" => self.tracker = parse(key, value)?,
            "detector_command" => self.detector_command = Some(parse_command(key, value)?),
            "tracker_command" => self.tracker_command = Some(parse_command(key, value)?),
            "plugin_timeout_ms" => self.plugin_timeout = Duration::from_millis(parse(key, value)?),
            "template" => self.template = Some(value.into()),
            "template_stride" => self.template_params.stride = parse(key, value)?,
            "template_top_k" => self.template_params.top_k = parse(key, value)?,
            "template_nms_iou" => self.template_params.nms_iou = parse(key, value)?,
            "template_scales" => {
                self.template_params.scales = value
                    .split(',')
                    .map(|s| parse(key, s.trim()))
                    .collect::<Result<_, _>>()?
            }
            "compensate" => self.compensate = parse_bool(key, value)?,
            "window" => self.window = parse(key, value)?,
            "backgrounds" => self.backgrounds = Some(value.into()),
            "assets" => self.assets = Some(value.into()),
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.fusion.validate()?;
        self.policy.validate()?;
        let bad = |m: String| Err(CliError::Usage(m));
        if self.window > 64 {
            return bad(format!("window {} exceeds 64", self.window));
        }
        let t = &self.template_params;
        if t.stride == 0 || t.top_k == 0 || t.scales.is_empty() || t.scales.iter().any(|s| !(*s > 0.0)) {
            return bad("template stride, top_k and scales must be positive".into());
        }
        if !(0.0..=1.0).contains(&t.nms_iou) {
            return bad("template_nms_iou must lie in [0, 1]".into());
        }
        if self.plugin_timeout.is_zero() {
            return bad("plugin_timeout_ms must be positive".into());
        }
        for p in [&self.template, &self.backgrounds, &self.assets].into_iter().flatten() {
            if !p.exists() {
                return bad(format!("{}: no such file", p.display()));
            }
        }
        Ok(())
    }
}
