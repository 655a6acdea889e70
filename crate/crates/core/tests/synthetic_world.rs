mod common;

use common::{select, Experiment};
use vdnapr_core::retrieval::emd_recall;
use vdnapr_core::sequences::Segment;
use vdnapr_core::{NeuronSelection, SyntheticWorldConfig};

#[test]
fn raw_emd_ranks_deep_layer_above_shallow_layer() {
    let ex = Experiment::new(SyntheticWorldConfig::default()).unwrap();
    let (seqs, segments) = ex.sequences(5).unwrap();
    let db = select(&seqs, &segments, Segment::Test, Some("t0"));
    let queries = select(&seqs, &segments, Segment::Test, Some("t1"));
    let recall = |layer: u32| {
        emd_recall(&ex.spec, &db, &queries, &NeuronSelection::Layers(vec![layer]), &[1], ex.threshold())
            .unwrap()
            .recalls[0]
    };
    let (first, last) = (recall(1), recall(12));
    assert!(last > first, "layer 12 R@1 {last} vs layer 1 R@1 {first}");
}

#[test]
fn clean_world_retrieves_every_place_exactly() {
    let clean = SyntheticWorldConfig { noise_scale: 0.0, appearance_scale: 0.0, places: 12, ..Default::default() };
    let ex = Experiment::new(clean).unwrap();
    let (seqs, _) = ex.sequences(1).unwrap();
    let db: Vec<_> = seqs.iter().filter(|s| s.record.traversal_id == "t0").cloned().collect();
    let queries: Vec<_> = seqs.iter().filter(|s| s.record.traversal_id == "t1").cloned().collect();
    let report = emd_recall(&ex.spec, &db, &queries, &NeuronSelection::All, &[1], ex.threshold()).unwrap();
    assert_eq!(report.recalls[0], 100.0);
}
