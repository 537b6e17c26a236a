//! Line protocol to a detector or tracker running as a child process.
//!
//! Requests, one per line on the child's stdin:
//!
//! ```text
//! DETECT <frame_path> [<x> <y> <w> <h>]
//! INIT <frame_path> <x> <y> <w> <h>
//! TRACK <frame_path>
//! ```
//!
//! Responses on stdout: `OK <n>` followed by `n` lines `BOX <x> <y> <w> <h> <score>`,
//! or a single `ERR <message>`. `INIT` answers `OK 0`, `TRACK` answers `OK 1`.

use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use tempfile::TempDir;

use crate::imaging::{BBox, ImageBuffer};

use super::{sort_descending, Detector, PluginError, PluginResult, ScoredBox, Tracker};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

struct Running {
    process: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Running {
    fn exit_message(&mut self) -> Option<String> {
        match self.process.try_wait() {
            Ok(Some(status)) => Some(status.to_string()),
            _ => None,
        }
    }
}

/// Owns the child process and restarts it after timeouts, protocol errors
/// and exits.
struct Bridge {
    command: Vec<String>,
    timeout: Duration,
    child: Option<Running>,
    scratch: TempDir,
    spawns: u64,
}

impl Bridge {
    fn new(command: Vec<String>, timeout: Duration) -> PluginResult<Self> {
        if command.is_empty() {
            return Err(PluginError::Io(std::io::Error::new(
                std::io::ErrorKind::InvalidInput,
                "empty plugin command line",
            )));
        }
        let mut bridge = Self {
            command,
            timeout,
            child: None,
            scratch: tempfile::tempdir()?,
            spawns: 0,
        };
        bridge.spawn()?;
        Ok(bridge)
    }

    fn spawn(&mut self) -> PluginResult<()> {
        let mut process = Command::new(&self.command[0])
            .args(&self.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = process.stdin.take().expect("piped stdin");
        let stdout = process.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        self.child = Some(Running {
            process,
            stdin,
            lines: rx,
        });
        self.spawns += 1;
        Ok(())
    }

    fn kill(&mut self) {
        if let Some(mut c) = self.child.take() {
            let _ = c.process.kill();
            let _ = c.process.wait();
        }
    }

    fn frame_path(&self) -> PathBuf {
        self.scratch.path().join("frame.png")
    }

    fn write_frame(&self, image: &ImageBuffer) -> PluginResult<PathBuf> {
        let path = self.frame_path();
        std::fs::write(&path, image.encode_png())?;
        Ok(path)
    }

    fn read_line(&mut self) -> PluginResult<String> {
        let timeout = self.timeout;
        let child = self.child.as_mut().expect("child running");
        match child.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(PluginError::Io(e)),
            Err(RecvTimeoutError::Timeout) => Err(PluginError::Timeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => {
                // Give the process a moment to be reaped so the status is known.
                thread::sleep(Duration::from_millis(5));
                Err(PluginError::ChildExited(child.exit_message()))
            }
        }
    }

    /// Sends one request and returns the parsed boxes. Any failure other
    /// than a remote `ERR` leaves the stream in an unknown state, so the
    /// child is replaced.
    fn request(&mut self, line: &str) -> PluginResult<Vec<[f64; 5]>> {
        if self.child.is_none() {
            self.spawn()?;
        }
        let result = self.exchange(line);
        if let Err(e) = &result {
            if !matches!(e, PluginError::Remote(_)) {
                self.kill();
            }
        }
        result
    }

    fn exchange(&mut self, line: &str) -> PluginResult<Vec<[f64; 5]>> {
        let child = self.child.as_mut().expect("child running");
        if let Err(e) = writeln!(child.stdin, "{line}").and_then(|_| child.stdin.flush()) {
            return Err(match e.kind() {
                std::io::ErrorKind::BrokenPipe => PluginError::ChildExited(child.exit_message()),
                _ => PluginError::Io(e),
            });
        }
        let header = self.read_line()?;
        let header = header.trim();
        if let Some(msg) = header.strip_prefix("ERR") {
            if msg.is_empty() || msg.starts_with(' ') {
                return Err(PluginError::Remote(msg.trim().to_owned()));
            }
        }
        let n: usize = header
            .strip_prefix("OK ")
            .and_then(|n| n.trim().parse().ok())
            .ok_or_else(|| PluginError::ProtocolViolation(format!("expected `OK <n>` or `ERR`, got {header:?}")))?;
        (0..n).map(|_| self.read_line().and_then(|l| parse_box_line(&l))).collect()
    }
}

impl Drop for Bridge {
    fn drop(&mut self) {
        self.kill();
    }
}

fn parse_box_line(line: &str) -> PluginResult<[f64; 5]> {
    let bad = || PluginError::ProtocolViolation(format!("malformed box line {line:?}"));
    let mut it = line.split_whitespace();
    if it.next() != Some("BOX") {
        return Err(bad());
    }
    let mut v = [0.0; 5];
    for slot in &mut v {
        *slot = it.next().and_then(|s| s.parse::<f64>().ok()).ok_or_else(bad)?;
    }
    if it.next().is_some() || v.iter().any(|x| !x.is_finite()) || v[2] <= 0.0 || v[3] <= 0.0 {
        return Err(bad());
    }
    Ok(v)
}

fn fmt_box(b: &BBox) -> String {
    format!("{} {} {} {}", b.x, b.y, b.w, b.h)
}

/// Detector backed by a child process. Returned boxes are clipped to the
/// frame (boxes entirely outside are dropped) and sorted by descending score;
/// the region of interest is forwarded as a hint.
pub struct ExternalDetector {
    bridge: Bridge,
}

impl ExternalDetector {
    /// Starts the child; `command[0]` is the program.
    pub fn spawn(command: Vec<String>, timeout: Duration) -> PluginResult<Self> {
        Ok(Self {
            bridge: Bridge::new(command, timeout)?,
        })
    }

    /// How many times a child process has been started, including the first.
    pub fn spawn_count(&self) -> u64 {
        self.bridge.spawns
    }
}

impl Detector for ExternalDetector {
    fn detect(&mut self, image: &ImageBuffer, roi: Option<BBox>) -> PluginResult<Vec<ScoredBox>> {
        let path = self.bridge.write_frame(image)?;
        let mut line = format!("DETECT {}", path.display());
        if let Some(r) = roi {
            line.push(' ');
            line.push_str(&fmt_box(&r));
        }
        let (w, h) = image.dimensions();
        let mut out: Vec<ScoredBox> = self
            .bridge
            .request(&line)?
            .into_iter()
            .filter_map(|[x, y, bw, bh, s]| BBox::new(x, y, bw, bh).clip(w, h).map(|b| ScoredBox::detector(b, s)))
            .collect();
        sort_descending(&mut out);
        Ok(out)
    }
}

/// Tracker backed by a child process. If the child is restarted, it is
/// re-initialised from the last known box before the next `TRACK`.
pub struct ExternalTracker {
    bridge: Bridge,
    current: Option<BBox>,
    initialised_at: u64,
}

impl ExternalTracker {
    pub fn spawn(command: Vec<String>, timeout: Duration) -> PluginResult<Self> {
        Ok(Self {
            bridge: Bridge::new(command, timeout)?,
            current: None,
            initialised_at: 0,
        })
    }

    fn send_init(&mut self, image: &ImageBuffer, bbox: BBox) -> PluginResult<()> {
        let path = self.bridge.write_frame(image)?;
        let boxes = self.bridge.request(&format!("INIT {} {}", path.display(), fmt_box(&bbox)))?;
        if !boxes.is_empty() {
            self.bridge.kill();
            return Err(PluginError::ProtocolViolation("INIT must answer `OK 0`".into()));
        }
        self.initialised_at = self.bridge.spawns;
        Ok(())
    }
}

impl Tracker for ExternalTracker {
    fn init(&mut self, image: &ImageBuffer, bbox: BBox) -> PluginResult<BBox> {
        self.current = Some(bbox);
        self.send_init(image, bbox)?;
        Ok(bbox)
    }

    fn update(&mut self, image: &ImageBuffer) -> PluginResult<ScoredBox> {
        let last = self.current.ok_or(PluginError::Uninitialized)?;
        if self.bridge.child.is_none() || self.initialised_at != self.bridge.spawns {
            if self.bridge.child.is_none() {
                self.bridge.spawn()?;
            }
            self.send_init(image, last)?;
        }
        let path = self.bridge.write_frame(image)?;
        let boxes = self.bridge.request(&format!("TRACK {}", path.display()))?;
        let [x, y, w, h, s] = match boxes.as_slice() {
            [b] => *b,
            _ => {
                self.bridge.kill();
                return Err(PluginError::ProtocolViolation(format!(
                    "TRACK must answer exactly one box, got {}",
                    boxes.len()
                )));
            }
        };
        let (iw, ih) = image.dimensions();
        let bbox = BBox::new(x, y, w, h).clip(iw, ih).unwrap_or(last);
        self.current = Some(bbox);
        Ok(ScoredBox::tracker(bbox, s))
    }
}
