use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

const HEADER: &str = "# world manifest v1";
const COLUMNS: &str = "frame_id\ttraversal_id\tx\ty\ttimestamp";

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Pose) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Ground-truth radius within which a retrieval counts as correct: either a
/// metric distance between representative poses, or a radius on frame
/// indices within their traversals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Threshold {
    Meters(f64),
    Frames(u64),
}

impl Default for Threshold {
    fn default() -> Self {
        Threshold::Meters(25.0)
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::Meters(m) => write!(f, "{m}m"),
            Threshold::Frames(n) => write!(f, "{n}frames"),
        }
    }
}

impl FromStr for Threshold {
    type Err = Error;

    /// Accepts `25m`, `25` (meters), `2frames`, `2frame` or `2f`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Config(format!("bad threshold {s:?} (expected e.g. `25m` or `2frames`)"));
        for suffix in ["frames", "frame", "f"] {
            if let Some(n) = s.strip_suffix(suffix) {
                return n.trim().parse().map(Threshold::Frames).map_err(|_| bad());
            }
        }
        let m: f64 = s.strip_suffix('m').unwrap_or(s).trim().parse().map_err(|_| bad())?;
        if !(m.is_finite() && m >= 0.0) {
            return Err(bad());
        }
        Ok(Threshold::Meters(m))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameInfo {
    pub frame_id: String,
    pub traversal_id: String,
    pub pose: Pose,
    pub timestamp: f64,
}

/// Frames of one or more traversals with their poses.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldManifest {
    frames: Vec<FrameInfo>,
    pub threshold: Threshold,
    pub domain_tag: String,
}

impl WorldManifest {
    pub fn new(frames: Vec<FrameInfo>, threshold: Threshold, domain_tag: impl Into<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut last_ts: HashMap<&str, f64> = HashMap::new();
        for f in &frames {
            if !seen.insert(f.frame_id.as_str()) {
                return Err(Error::Config(format!("duplicate frame id {}", f.frame_id)));
            }
            if f.frame_id.contains(char::is_whitespace) || f.traversal_id.contains(char::is_whitespace) {
                return Err(Error::Config(format!("ids must not contain whitespace: {}", f.frame_id)));
            }
            if let Some(prev) = last_ts.insert(&f.traversal_id, f.timestamp) {
                if f.timestamp < prev {
                    return Err(Error::Config(format!(
                        "frame {} goes back in time within traversal {}",
                        f.frame_id, f.traversal_id
                    )));
                }
            }
        }
        let domain_tag = domain_tag.into();
        if domain_tag.contains(char::is_whitespace) {
            return Err(Error::Config("domain tag must not contain whitespace".into()));
        }
        Ok(Self { frames, threshold, domain_tag })
    }

    pub fn frames(&self) -> &[FrameInfo] {
        &self.frames
    }

    /// Traversal ids in order of first appearance.
    pub fn traversals(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for f in &self.frames {
            if !out.contains(&f.traversal_id) {
                out.push(f.traversal_id.clone());
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{HEADER}\ndomain {}\nthreshold {}\n{COLUMNS}\n", self.domain_tag, self.threshold);
        for f in &self.frames {
            out.push_str(&format!(
                "{}\t{}\t{:?}\t{:?}\t{:?}\n",
                f.frame_id, f.traversal_id, f.pose.x, f.pose.y, f.timestamp
            ));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let mut expect = |prefix: &str| -> Result<String> {
            let (ln, line) =
                lines.next().ok_or_else(|| Error::format(0, format!("manifest ends before `{prefix}`")))?;
            line.strip_prefix(prefix)
                .map(|s| s.trim().to_string())
                .ok_or_else(|| Error::format(ln as u64 + 1, format!("manifest line {}: expected `{prefix}`", ln + 1)))
        };
        expect(HEADER)?;
        let domain = expect("domain")?;
        let threshold: Threshold = expect("threshold")?.parse()?;
        expect(COLUMNS)?;
        let mut frames = Vec::new();
        for (ln, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::format(ln as u64 + 1, format!("manifest line {}: malformed row", ln + 1));
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 5 {
                return Err(bad());
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
            frames.push(FrameInfo {
                frame_id: cols[0].to_string(),
                traversal_id: cols[1].to_string(),
                pose: Pose::new(num(cols[2])?, num(cols[3])?),
                timestamp: num(cols[4])?,
            });
        }
        Self::new(frames, threshold, domain)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}
