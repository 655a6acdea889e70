use rayon::prelude::*;

use super::db::{DescriptorDb, Neighbor};
use super::eval::{rank_and_score, recall_at_n, EvalReport};
use crate::activation::Threshold;
use crate::encoder::{Descriptor, DescriptorKind, EncoderParams, NeuronSelection};
use crate::error::{Error, Result};
use crate::sequences::LabeledSequence;
use crate::vdna::{emd_vdna, HistogramSpec, NormalizedVdna};

#[derive(Clone, Debug, PartialEq)]
pub struct SweepEntry {
    pub selection: NeuronSelection,
    pub descriptor_len: usize,
    pub report: EvalReport,
}

fn embed(params: &EncoderParams, seqs: &[LabeledSequence]) -> Result<Vec<Vec<f64>>> {
    seqs.par_iter().map(|s| params.embed_all(&s.vdna.normalize())).collect()
}

fn db_for(
    full: &[Vec<f64>],
    seqs: &[LabeledSequence],
    embed_dim: usize,
    neurons: &[usize],
    selection: &NeuronSelection,
) -> Result<DescriptorDb> {
    let mut db = DescriptorDb::new(neurons.len() * embed_dim, DescriptorKind::NeuronConcat, selection.clone());
    for (e, s) in full.iter().zip(seqs) {
        db.push(&Descriptor::select_blocks(e, embed_dim, neurons), s.record.clone())?;
    }
    Ok(db)
}

/// Evaluates neuron-concat descriptors restricted to each single layer, in
/// spec order, followed by each inclusive layer range in `ranges`. Every
/// sequence is embedded once and the blocks are sliced per selection.
pub fn layer_sweep(
    params: &EncoderParams,
    db: &[LabeledSequence],
    queries: &[LabeledSequence],
    ranges: &[(u32, u32)],
    ns: &[usize],
    threshold: Threshold,
) -> Result<Vec<SweepEntry>> {
    let h = params.config().embed_dim;
    let db_full = embed(params, db)?;
    let q_full = embed(params, queries)?;
    let selections = params
        .layers()
        .iter()
        .map(|l| NeuronSelection::Layers(vec![l.index]))
        .chain(ranges.iter().map(|&(first, last)| NeuronSelection::LayerRange { first, last }));
    let mut out = Vec::new();
    for selection in selections {
        let neurons = selection.resolve(params.layers())?;
        let d = db_for(&db_full, db, h, &neurons, &selection)?;
        let q = db_for(&q_full, queries, h, &neurons, &selection)?;
        let mut report = recall_at_n(&d, &q, ns, threshold)?;
        report.meta.push(("selection".into(), selection.to_string()));
        out.push(SweepEntry { selection, descriptor_len: neurons.len() * h, report });
    }
    Ok(out)
}

/// Recall@N when ranking by mean per-neuron EMD between raw normalized
/// histograms of the selected neurons (no encoder involved).
pub fn emd_recall(
    spec: &HistogramSpec,
    db: &[LabeledSequence],
    queries: &[LabeledSequence],
    selection: &NeuronSelection,
    ns: &[usize],
    threshold: Threshold,
) -> Result<EvalReport> {
    if db.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    let neurons = selection.resolve(spec.layers())?;
    let mut weights = vec![0.0; spec.neuron_count()];
    for &i in &neurons {
        weights[i] = 1.0;
    }
    let db_norm: Vec<NormalizedVdna> = db.iter().map(|s| s.vdna.normalize()).collect();
    let q_norm: Vec<NormalizedVdna> = queries.iter().map(|s| s.vdna.normalize()).collect();
    let db_records: Vec<_> = db.iter().map(|s| s.record.clone()).collect();
    let q_records: Vec<_> = queries.iter().map(|s| s.record.clone()).collect();
    let mut report = rank_and_score(&db_records, &q_records, ns, threshold, |q, n| {
        let mut all = db_norm
            .iter()
            .enumerate()
            .map(|(i, v)| Ok(Neighbor { index: i, distance: emd_vdna(&q_norm[q], v, spec, Some(&weights))? }))
            .collect::<Result<Vec<_>>>()?;
        all.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.index.cmp(&b.index)));
        all.truncate(n);
        Ok(all)
    })?;
    report.meta.push(("ranking".into(), "emd".into()));
    report.meta.push(("selection".into(), selection.to_string()));
    Ok(report)
}
