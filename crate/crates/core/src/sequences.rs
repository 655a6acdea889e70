//! Turns frame streams into per-sequence VDNAs and splits sequences into
//! train / validation / test segments.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::activation::{ActivationFrame, SequenceRecord};
use crate::error::{Error, Result};
use crate::vdna::{BinnedImage, HistogramSpec, Vdna};

/// Frames binned in parallel per batch.
const BATCH: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSequence {
    pub record: SequenceRecord,
    pub vdna: Vdna,
}

/// Accumulates one VDNA per window from a stream of frames. Each frame is
/// binned once and added to every window that contains it; frames that
/// belong to no window are skipped. Every window frame must appear.
pub fn build_sequence_vdnas<I>(
    frames: I,
    spec: &HistogramSpec,
    windows: &[SequenceRecord],
) -> Result<Vec<LabeledSequence>>
where
    I: IntoIterator<Item = Result<ActivationFrame>>,
{
    let mut members: HashMap<&str, Vec<usize>> = HashMap::new();
    for (w, rec) in windows.iter().enumerate() {
        for id in &rec.frame_ids {
            members.entry(id.as_str()).or_default().push(w);
        }
    }
    let mut vdnas: Vec<Vdna> = windows.iter().map(|_| Vdna::empty(spec)).collect();
    let mut seen = 0usize;
    let mut batch = Vec::with_capacity(BATCH);
    let mut index = 0usize;
    let flush = |batch: &mut Vec<(usize, ActivationFrame)>, vdnas: &mut Vec<Vdna>| -> Result<()> {
        let binned = batch.par_iter().map(|(i, f)| BinnedImage::new(f, spec, *i)).collect::<Result<Vec<_>>>()?;
        for ((_, f), b) in batch.iter().zip(&binned) {
            for &w in &members[f.frame_id.as_str()] {
                vdnas[w].insert_binned(b)?;
            }
        }
        batch.clear();
        Ok(())
    };
    for frame in frames {
        let frame = frame?;
        if let Some(ws) = members.get(frame.frame_id.as_str()) {
            seen += ws.len();
            batch.push((index, frame));
            if batch.len() == BATCH {
                flush(&mut batch, &mut vdnas)?;
            }
        }
        index += 1;
    }
    flush(&mut batch, &mut vdnas)?;
    let expected: usize = windows.iter().map(|w| w.frame_ids.len()).sum();
    if seen != expected {
        return Err(Error::Config(format!("{} window frame(s) missing from the activation stream", expected - seen)));
    }
    Ok(windows.iter().cloned().zip(vdnas).map(|(record, vdna)| LabeledSequence { record, vdna }).collect())
}

/// One VDNA over every frame of the stream, built from per-shard VDNAs
/// merged at the end.
pub fn accumulate_all<I>(frames: I, spec: &HistogramSpec) -> Result<Vdna>
where
    I: IntoIterator<Item = Result<ActivationFrame>>,
{
    let mut total = Vdna::empty(spec);
    let mut batch = Vec::with_capacity(BATCH);
    let flush = |batch: &mut Vec<(usize, ActivationFrame)>, total: &mut Vdna| -> Result<()> {
        let shard = batch
            .par_iter()
            .map(|(i, f)| {
                let mut v = Vdna::empty(spec);
                v.insert_binned(&BinnedImage::new(f, spec, *i)?)?;
                Ok(v)
            })
            .try_reduce(|| Vdna::empty(spec), |a, b| a.merge(&b))?;
        total.merge_in(&shard)?;
        batch.clear();
        Ok(())
    };
    for (i, frame) in frames.into_iter().enumerate() {
        batch.push((i, frame?));
        if batch.len() == BATCH {
            flush(&mut batch, &mut total)?;
        }
    }
    flush(&mut batch, &mut total)?;
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Segment {
    Train,
    Validation,
    Test,
}

/// Assigns each record to a segment by its position along its traversal:
/// the first `train` fraction of frames trains, the next `validation`
/// fraction validates and the rest is held out. Splitting by position keeps
/// every place in one segment across all traversals.
pub fn split_by_position(records: &[SequenceRecord], train: f64, validation: f64) -> Result<Vec<Segment>> {
    if !(train >= 0.0 && validation >= 0.0 && train + validation <= 1.0) {
        return Err(Error::Config(format!("bad split fractions {train}/{validation}")));
    }
    let mut extent: HashMap<&str, usize> = HashMap::new();
    for r in records {
        let e = extent.entry(r.traversal_id.as_str()).or_default();
        *e = (*e).max(r.frame_index + 1);
    }
    Ok(records
        .iter()
        .map(|r| {
            let pos = r.frame_index as f64 / extent[r.traversal_id.as_str()] as f64;
            if pos < train {
                Segment::Train
            } else if pos < train + validation {
                Segment::Validation
            } else {
                Segment::Test
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::{generate_world, window_sequences, SyntheticWorldConfig};
    use crate::vdna::calibrate_spec;

    fn small() -> SyntheticWorldConfig {
        SyntheticWorldConfig { places: 12, layers: 3, neurons_per_layer: 4, samples: 8, ..Default::default() }
    }

    #[test]
    fn sequence_vdnas_match_direct_accumulation() {
        let (manifest, world) = generate_world(&small()).unwrap();
        let spec =
            calibrate_spec(world.frames(), &world.shapes().iter().map(|s| s.info()).collect::<Vec<_>>(), 16, 0.01)
                .unwrap();
        let windows = window_sequences(&manifest, 5, 2).unwrap().records;
        let seqs = build_sequence_vdnas(world.frames().map(Ok), &spec, &windows).unwrap();
        assert_eq!(seqs.len(), windows.len());
        for s in &seqs {
            let mut direct = Vdna::empty(&spec);
            for id in &s.record.frame_ids {
                let idx = (0..world.frame_count()).find(|&i| &world.frame(i).frame_id == id).unwrap();
                direct.accumulate(&world.frame(idx), &spec).unwrap();
            }
            assert_eq!(direct, s.vdna);
            assert_eq!(s.vdna.image_count(), 5);
        }
    }

    #[test]
    fn missing_frames_are_reported() {
        let (manifest, world) = generate_world(&small()).unwrap();
        let spec =
            calibrate_spec(world.frames(), &world.shapes().iter().map(|s| s.info()).collect::<Vec<_>>(), 16, 0.01)
                .unwrap();
        let windows = window_sequences(&manifest, 3, 1).unwrap().records;
        let err = build_sequence_vdnas(world.frames().take(5).map(Ok), &spec, &windows);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn accumulate_all_equals_sequential() {
        let (_, world) = generate_world(&small()).unwrap();
        let spec =
            calibrate_spec(world.frames(), &world.shapes().iter().map(|s| s.info()).collect::<Vec<_>>(), 16, 0.01)
                .unwrap();
        let all = accumulate_all(world.frames().map(Ok), &spec).unwrap();
        let mut seq = Vdna::empty(&spec);
        for f in world.frames() {
            seq.accumulate(&f, &spec).unwrap();
        }
        assert_eq!(all, seq);
    }

    #[test]
    fn split_keeps_places_together() {
        let (manifest, _) = generate_world(&small()).unwrap();
        let windows = window_sequences(&manifest, 1, 1).unwrap().records;
        let seg = split_by_position(&windows, 0.5, 0.25).unwrap();
        for (r, s) in windows.iter().zip(&seg) {
            let other = windows
                .iter()
                .position(|o| o.frame_index == r.frame_index && o.traversal_id != r.traversal_id)
                .unwrap();
            assert_eq!(seg[other], *s);
        }
        assert_eq!(seg.iter().filter(|s| **s == Segment::Train).count(), 12);
        assert_eq!(seg.iter().filter(|s| **s == Segment::Test).count(), 6);
    }
}
