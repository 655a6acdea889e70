use super::manifest::{Pose, Threshold, WorldManifest};
use crate::error::{Error, Result};

/// A window of consecutive frames from one traversal.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceRecord {
    pub frame_ids: Vec<String>,
    pub traversal_id: String,
    /// Pose of the middle frame (lower-middle for even lengths).
    pub pose: Pose,
    /// Index of that middle frame within its traversal.
    pub frame_index: usize,
}

impl SequenceRecord {
    /// Whether two sequences are within `threshold` of each other.
    pub fn matches(&self, other: &SequenceRecord, threshold: Threshold) -> bool {
        match threshold {
            Threshold::Meters(m) => self.pose.distance(&other.pose) <= m,
            Threshold::Frames(n) => self.frame_index.abs_diff(other.frame_index) as u64 <= n,
        }
    }

    /// The representative frame id, used as a label in reports.
    pub fn label(&self) -> &str {
        let mid = (self.frame_ids.len().max(1) - 1) / 2;
        self.frame_ids.get(mid).map_or("", String::as_str)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Windowing {
    pub records: Vec<SequenceRecord>,
    /// Traversals too short to yield a single window.
    pub skipped_traversals: usize,
}

/// Slides a window of `seq_len` frames with the given stride over every
/// traversal. Windows never cross traversal boundaries.
pub fn window_sequences(manifest: &WorldManifest, seq_len: usize, stride: usize) -> Result<Windowing> {
    if seq_len == 0 || stride == 0 {
        return Err(Error::Config(format!("sequence length ({seq_len}) and stride ({stride}) must be >= 1")));
    }
    let mut records = Vec::new();
    let mut skipped = 0;
    for trav in manifest.traversals() {
        let frames: Vec<_> = manifest.frames().iter().filter(|f| f.traversal_id == trav).collect();
        if frames.len() < seq_len {
            skipped += 1;
            continue;
        }
        let mid = (seq_len - 1) / 2;
        let mut start = 0;
        while start + seq_len <= frames.len() {
            let window = &frames[start..start + seq_len];
            records.push(SequenceRecord {
                frame_ids: window.iter().map(|f| f.frame_id.clone()).collect(),
                traversal_id: trav.clone(),
                pose: window[mid].pose,
                frame_index: start + mid,
            });
            start += stride;
        }
    }
    if skipped > 0 {
        log::info!("{skipped} traversal(s) shorter than {seq_len} frames contributed no windows");
    }
    Ok(Windowing { records, skipped_traversals: skipped })
}
