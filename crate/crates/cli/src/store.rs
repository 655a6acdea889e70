//! A directory of per-sequence VDNAs: `index.txt` lists every window and
//! its pose, and each window's counts live in their own `.vdna` file.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use vdnapr_core::sequences::{split_by_position, Segment};
use vdnapr_core::vdna::{load_vdna, save_vdna};
use vdnapr_core::{Error, LabeledSequence, Pose, Result, SequenceRecord};

use crate::SegmentArg;

pub const INDEX: &str = "index.txt";
const HEADER: &str = "# vdnapr sequences v1";
const COLUMNS: &str = "file\ttraversal\tframe_index\tx\ty\tframes";

pub fn write_sequences(dir: &Path, seqs: &[LabeledSequence]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut index = format!("{HEADER}\n{COLUMNS}\n");
    for (i, s) in seqs.iter().enumerate() {
        let r = &s.record;
        if let Some(id) = r.frame_ids.iter().find(|id| id.contains(',')) {
            return Err(Error::Config(format!("frame id {id:?} contains a comma")));
        }
        let file = format!("{i:06}.vdna");
        save_vdna(dir.join(&file), &s.vdna)?;
        let _ = writeln!(
            index,
            "{file}\t{}\t{}\t{:?}\t{:?}\t{}",
            r.traversal_id,
            r.frame_index,
            r.pose.x,
            r.pose.y,
            r.frame_ids.join(",")
        );
    }
    fs::write(dir.join(INDEX), index)?;
    Ok(())
}

pub fn read_sequences(dir: &Path) -> Result<Vec<LabeledSequence>> {
    let text = fs::read_to_string(dir.join(INDEX))?;
    let bad = |ln: usize, what: &str| Error::Format {
        offset: ln as u64 + 1,
        message: format!("{INDEX} line {}: {what}", ln + 1),
    };
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, l)| l) != Some(HEADER) {
        return Err(bad(0, "missing header"));
    }
    if lines.next().map(|(_, l)| l) != Some(COLUMNS) {
        return Err(bad(1, "missing column line"));
    }
    let mut out = Vec::new();
    for (ln, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 6 {
            return Err(bad(ln, "expected 6 columns"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(ln, "bad coordinate"));
        let record = SequenceRecord {
            frame_ids: cols[5].split(',').map(String::from).collect(),
            traversal_id: cols[1].to_string(),
            pose: Pose::new(num(cols[3])?, num(cols[4])?),
            frame_index: cols[2].parse().map_err(|_| bad(ln, "bad frame index"))?,
        };
        let vdna = load_vdna(dir.join(cols[0]))?;
        out.push(LabeledSequence { record, vdna });
    }
    Ok(out)
}

/// Sequences in `segment` (split by position along each traversal) whose
/// traversal passes `keep`.
pub fn select(
    seqs: &[LabeledSequence],
    segment: SegmentArg,
    split: (f64, f64),
    keep: impl Fn(&str) -> bool,
) -> Result<Vec<LabeledSequence>> {
    let records: Vec<SequenceRecord> = seqs.iter().map(|s| s.record.clone()).collect();
    let segments = split_by_position(&records, split.0, split.1)?;
    let wanted = match segment {
        SegmentArg::All => None,
        SegmentArg::Train => Some(Segment::Train),
        SegmentArg::Val => Some(Segment::Validation),
        SegmentArg::Test => Some(Segment::Test),
    };
    Ok(seqs
        .iter()
        .zip(segments)
        .filter(|(s, seg)| wanted.is_none_or(|w| w == *seg) && keep(&s.record.traversal_id))
        .map(|(s, _)| s.clone())
        .collect())
}
