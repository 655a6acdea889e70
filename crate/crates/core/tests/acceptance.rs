//! Acceptance suite. Runs every criterion at its stated tolerance and
//! prints one PASS/FAIL line per criterion; exits non-zero if any fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;

use common::*;
use vdnapr_core::activation::SyntheticWorldConfig;
use vdnapr_core::encoder::{mine_and_train, Descriptor, TrainOutcome};
use vdnapr_core::nn::write_checkpoint;
use vdnapr_core::retrieval::{knn, layer_sweep, recall_at_n, DescriptorDb};
use vdnapr_core::sequences::{LabeledSequence, Segment};
use vdnapr_core::vdna::write_vdna;
use vdnapr_core::{
    emd_neuron, DescriptorKind, EncoderConfig, EncoderParams, HistogramSpec, LayerInfo, NeuronSelection, Result, Vdna,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn within(limit: Duration, started: Instant) -> (bool, String) {
    let took = started.elapsed();
    (took < limit, format!("{:.1}s of {}s", took.as_secs_f64(), limit.as_secs()))
}

fn dimensional_fidelity() -> Result<Verdict> {
    let started = Instant::now();
    let spec = HistogramSpec::with_uniform_range(LayerInfo::uniform(12, 768), 500, -1.0, 1.0)?;
    let params = EncoderParams::init(EncoderConfig::standard(500), &spec, 1)?;
    let mut r = rng(1);
    let image: Vec<Vec<f32>> =
        (0..spec.neuron_count()).map(|_| (0..16).map(|_| r.random_range(-1.0f32..1.0)).collect()).collect();
    let mut v = Vdna::empty(&spec);
    v.accumulate(&image, &spec)?;
    let v = v.normalize();

    let full = params.encode_vdna(&v, &NeuronSelection::All)?;
    let last = params.encode_vdna(&v, &NeuronSelection::Layers(vec![12]))?;
    let pair = params.encode_vdna(&v, &NeuronSelection::LayerRange { first: 11, last: 12 })?;
    let ranges_ok = (1..=12u32).all(|k| {
        let neurons = NeuronSelection::LayerRange { first: 13 - k, last: 12 }.resolve(params.layers()).unwrap();
        Descriptor::select_blocks(&full.values, 4, &neurons).len() == 3072 * k as usize
    });
    let w = params.project_w(&full.values)?;
    let capacity = spec.neuron_count() * spec.bins();
    let (fast, time) = within(Duration::from_secs(60), started);
    let pass = full.len() == 36864
        && last.len() == 3072
        && pair.len() == 6144
        && pair.values[..] == full.values[10 * 3072..]
        && ranges_ok
        && w.len() == 128
        && capacity == 4_608_000
        && fast;
    Ok(verdict(
        pass,
        format!(
            "N={} N*b={capacity} concat={} layer12={} layers11-12={} k-layer ranges 3072k={ranges_ok} W={} ({time})",
            spec.neuron_count(),
            full.len(),
            last.len(),
            pair.len(),
            w.len()
        ),
    ))
}

fn emd_oracle() -> Result<Verdict> {
    let started = Instant::now();
    let mut r = rng(101);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let b = r.random_range(2..=32);
        let width = r.random_range(0.01..2.0);
        let (p, q) = (random_mass(&mut r, b), random_mass(&mut r, b));
        worst = worst.max((emd_neuron(&p, &q, width)? - greedy_transport(&p, &q, width)).abs());
    }
    let mut violations = 0;
    for _ in 0..1000 {
        let b = r.random_range(2..=32);
        let [p, q, s] = [0, 1, 2].map(|_| random_mass(&mut r, b));
        let d = |a: &[f64], c: &[f64]| emd_neuron(a, c, 1.0).unwrap();
        let ok = d(&p, &q) >= 0.0
            && (d(&p, &q) - d(&q, &p)).abs() <= 1e-9
            && d(&p, &p) == 0.0
            && (p == q || d(&p, &q) > 0.0)
            && d(&p, &s) <= d(&p, &q) + d(&q, &s) + 1e-9;
        violations += usize::from(!ok);
    }
    let (fast, time) = within(Duration::from_secs(60), started);
    Ok(verdict(
        worst <= 1e-9 && violations == 0 && fast,
        format!("max |emd - transport| = {worst:.2e} over 1000 pairs, {violations} metric violations over 1000 triples ({time})"),
    ))
}

fn gradient_suite_verdict() -> Result<Verdict> {
    let started = Instant::now();
    let suite = gradient_suite()?;
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, report) in &suite {
        let err = report.max_relative_error();
        pass &= report.probes.len() >= FD_PROBES && err <= FD_TOLERANCE;
        parts.push(format!("{name} {err:.1e}/{}p/{}s", report.probes.len(), report.skipped));
    }
    let (fast, time) = within(Duration::from_secs(300), started);
    Ok(verdict(pass && fast, format!("max rel err/probes/kink-skips: {} ({time})", parts.join(", "))))
}

fn retrieval_oracle() -> Result<Verdict> {
    let mut r = rng(202);
    let mut mismatches = 0;
    for instance in 0..1000 {
        let m = r.random_range(1..120);
        let dim = r.random_range(1..16);
        let grid = instance % 2 == 0;
        let value = |r: &mut rand_chacha::ChaCha8Rng| {
            if grid {
                r.random_range(-2..=2) as f32
            } else {
                r.random_range(-1.0f32..1.0)
            }
        };
        let rows: Vec<Vec<f32>> = (0..m).map(|_| (0..dim).map(|_| value(&mut r)).collect()).collect();
        let query: Vec<f32> = (0..dim).map(|_| value(&mut r)).collect();
        let n = r.random_range(1..m + 10);
        let mut db = DescriptorDb::new(dim, DescriptorKind::NeuronConcat, NeuronSelection::All);
        for (i, row) in rows.iter().enumerate() {
            let v: Vec<f64> = row.iter().map(|&x| x as f64).collect();
            db.push(&v, record(&format!("r{i}"), i as f64))?;
        }
        let got: Vec<(f64, usize)> = knn(&db, &query, n)?.iter().map(|h| (h.distance, h.index)).collect();
        let want: Vec<(f64, usize)> = full_sort(&rows, &query).into_iter().take(n).collect();
        mismatches += usize::from(got != want);
    }

    let mut db = DescriptorDb::new(2, DescriptorKind::NeuronConcat, NeuronSelection::All);
    for (id, x, v) in
        [("A", 0.0, [0.0, 0.0]), ("B", 100.0, [1.0, 0.0]), ("C", 200.0, [0.0, 1.0]), ("D", 300.0, [5.0, 5.0])]
    {
        db.push(&v, record(id, x))?;
    }
    let mut q = DescriptorDb::new(2, DescriptorKind::NeuronConcat, NeuronSelection::All);
    for (id, x, v) in [("q1", 0.0, [0.0, 0.1]), ("q2", 100.0, [1.0, 0.1]), ("q3", 200.0, [0.4, -0.3])] {
        q.push(&v, record(id, x))?;
    }
    let toy = recall_at_n(&db, &q, &[1, 5], vdnapr_core::Threshold::Meters(25.0))?;
    let (r1, r5) = (toy.recall(1).unwrap_or(f64::NAN), toy.recall(5).unwrap_or(f64::NAN));
    let toy_ok = (r1 - 200.0 / 3.0).abs() < 1e-9 && r5 == 100.0;
    Ok(verdict(
        mismatches == 0 && toy_ok,
        format!("{mismatches}/1000 kNN mismatches vs full sort; toy R@1={r1:.3} R@5={r5:.1} (expected 66.667 / 100)"),
    ))
}

fn record(id: &str, x: f64) -> vdnapr_core::SequenceRecord {
    vdnapr_core::SequenceRecord {
        frame_ids: vec![id.to_string()],
        traversal_id: "t".into(),
        pose: vdnapr_core::Pose::new(x, 0.0),
        frame_index: 0,
    }
}

/// The default world, its sequences and a trained model shared by the
/// behavioural criteria.
struct World {
    ex: Experiment,
    seqs: Vec<LabeledSequence>,
    segments: Vec<Segment>,
    initial: EncoderParams,
    trained: TrainOutcome,
    train_time: Duration,
}

const WORLD_SEED: u64 = 0;
const EPOCHS: usize = 8;

fn trained_world() -> Result<World> {
    let ex = Experiment::new(SyntheticWorldConfig { seed: WORLD_SEED, ..Default::default() })?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("thread pool");
    let started = Instant::now();
    let (seqs, segments, initial, trained) = pool.install(|| -> Result<_> {
        let (seqs, segments) = ex.sequences(5)?;
        let initial = initial_params(&ex.spec, 7)?;
        let trained = mine_and_train(
            initial.clone(),
            &train_set(&seqs, &segments),
            Some(&validation(&seqs, &segments)),
            &training_config(EPOCHS, 7),
        )?;
        Ok((seqs, segments, initial, trained))
    })?;
    Ok(World { ex, seqs, segments, initial, trained, train_time: started.elapsed() })
}

fn training_effect(w: &World) -> Result<Verdict> {
    let db = select(&w.seqs, &w.segments, Segment::Test, Some("t0"));
    let q = select(&w.seqs, &w.segments, Segment::Test, Some("t1"));
    let before = r1(&w.initial, &db, &q, w.ex.threshold())?;
    let after = r1(&w.trained.params, &db, &q, w.ex.threshold())?;
    let fast = w.train_time < Duration::from_secs(30 * 60);
    Ok(verdict(
        after >= before + 15.0 && fast,
        format!(
            "held-out R@1 (all neurons, W removed): untrained {before:.2}, trained {after:.2} (+{:.2}pp, need +15); {} queries; single-threaded setup+training {:.1}s of 1800s",
            after - before,
            q.len(),
            w.train_time.as_secs_f64()
        ),
    ))
}

fn sequence_length(w: &World) -> Result<Verdict> {
    let spec = &w.ex.spec;
    let params = &w.trained.params;
    let describe = |v: &Vdna| params.encode_vdna(&v.normalize(), &NeuronSelection::All).map(|d| d.values);

    let mut frames: Vec<_> = (10..15).map(|i| w.ex.world.frame(i)).collect();
    let (mut once, mut twice) = (Vdna::empty(spec), Vdna::empty(spec));
    for f in &frames {
        once.accumulate(f, spec)?;
        twice.accumulate(f, spec)?;
        twice.accumulate(f, spec)?;
    }
    let duplicate_ok = describe(&once)? == describe(&twice)?;
    let reference = describe(&once)?;
    let mut r = rng(303);
    let mut permutation_ok = true;
    for _ in 0..20 {
        frames.shuffle(&mut r);
        let mut v = Vdna::empty(spec);
        for f in &frames {
            v.accumulate(f, spec)?;
        }
        permutation_ok &= describe(&v)?.iter().zip(&reference).all(|(a, b)| a.to_bits() == b.to_bits());
    }

    let (singles, single_segments) = w.ex.sequences(1)?;
    let db5 = select(&w.seqs, &w.segments, Segment::Test, Some("t0"));
    let q5 = select(&w.seqs, &w.segments, Segment::Test, Some("t1"));
    let db1 = select(&singles, &single_segments, Segment::Test, Some("t0"));
    let q1 = select(&singles, &single_segments, Segment::Test, Some("t1"));
    let five_five = r1(params, &db5, &q5, w.ex.threshold())?;
    let one_five = r1(params, &db1, &q5, w.ex.threshold())?;
    let five_one = r1(params, &db5, &q1, w.ex.threshold())?;
    let gap = (one_five - five_five).abs();
    Ok(verdict(
        duplicate_ok && permutation_ok && gap < 10.0,
        format!(
            "S vs S+S identical={duplicate_ok}, permutations bit-identical={permutation_ok}; R@1 5/5={five_five:.2} 1/5={one_five:.2} (gap {gap:.2}pp, need <10); 5/1={five_one:.2} (not gated)"
        ),
    ))
}

fn layer_behaviour(w: &World) -> Result<Verdict> {
    let db = select(&w.seqs, &w.segments, Segment::Test, Some("t0"));
    let q = select(&w.seqs, &w.segments, Segment::Test, Some("t1"));
    let layers = w.ex.config.layers as u32;
    let sweep = layer_sweep(&w.trained.params, &db, &q, &[(layers - 2, layers)], &[1], w.ex.threshold())?;
    let r1_of =
        |sel: &NeuronSelection| sweep.iter().find(|e| &e.selection == sel).map(|e| e.report.recalls[0]).unwrap();
    let first = r1_of(&NeuronSelection::Layers(vec![1]));
    let last = r1_of(&NeuronSelection::Layers(vec![layers]));
    let range = r1_of(&NeuronSelection::LayerRange { first: layers - 2, last: layers });
    let worst_in_range =
        (layers - 2..=layers).map(|l| r1_of(&NeuronSelection::Layers(vec![l]))).fold(f64::INFINITY, f64::min);
    let per_layer: Vec<String> =
        (1..=layers).map(|l| format!("{:.0}", r1_of(&NeuronSelection::Layers(vec![l])))).collect();
    Ok(verdict(
        last > first && range >= worst_in_range,
        format!(
            "R@1 per layer [{}]; first {first:.2} < last {last:.2}; layers {}-{layers} {range:.2} >= worst single {worst_in_range:.2}",
            per_layer.join(" "),
            layers - 2
        ),
    ))
}

/// Bytes of every primary artifact of a reduced but complete pipeline run.
fn pipeline_artifacts(threads: usize) -> Result<Vec<Vec<u8>>> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool");
    pool.install(|| {
        let ex = Experiment::new(SyntheticWorldConfig { seed: 42, places: 60, ..Default::default() })?;
        let (seqs, segments) = ex.sequences(5)?;
        let mut out = Vec::new();
        let mut vdna_bytes = Vec::new();
        for s in &seqs {
            write_vdna(&mut vdna_bytes, &s.vdna)?;
        }
        out.push(vdna_bytes);
        let mut tc = training_config(2, 42);
        tc.cache.refresh_every = 60;
        let trained = mine_and_train(
            initial_params(&ex.spec, 42)?,
            &train_set(&seqs, &segments),
            Some(&validation(&seqs, &segments)),
            &tc,
        )?;
        let mut ckpt = Vec::new();
        write_checkpoint(&mut ckpt, &trained.params.to_checkpoint(&[], Some(trained.optimizer.clone())))?;
        out.push(ckpt);
        out.push(trained.log.to_text().into_bytes());
        let db = select(&seqs, &segments, Segment::Test, Some("t0"));
        let q = select(&seqs, &segments, Segment::Test, Some("t1"));
        let sel = NeuronSelection::All;
        let ddb = vdnapr_core::TrainSet::from_sequences(&db).descriptor_db(
            &trained.params,
            DescriptorKind::NeuronConcat,
            &sel,
        )?;
        let dq = vdnapr_core::TrainSet::from_sequences(&q).descriptor_db(
            &trained.params,
            DescriptorKind::NeuronConcat,
            &sel,
        )?;
        out.push(recall_at_n(&ddb, &dq, &[1, 5, 10], ex.threshold())?.to_text().into_bytes());
        Ok(out)
    })
}

fn determinism() -> Result<Verdict> {
    let a = pipeline_artifacts(1)?;
    let b = pipeline_artifacts(4)?;
    let names = ["VDNAs", "checkpoint", "training log", "eval table"];
    let same: Vec<String> = names.iter().zip(a.iter().zip(&b)).map(|(n, (x, y))| format!("{n}={}", x == y)).collect();
    Ok(verdict(a == b, format!("two seeded runs (1 and 4 threads) byte-identical: {}", same.join(", "))))
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, Result<Verdict>)> = vec![
        ("dimensional fidelity", dimensional_fidelity()),
        ("EMD oracle", emd_oracle()),
        ("gradient suite", gradient_suite_verdict()),
        ("retrieval oracle", retrieval_oracle()),
    ];
    match trained_world() {
        Ok(w) => {
            results.push(("sequence-length invariance", sequence_length(&w)));
            results.push(("training effect", training_effect(&w)));
            results.push(("layer behaviour", layer_behaviour(&w)));
        }
        Err(e) => {
            for name in ["sequence-length invariance", "training effect", "layer behaviour"] {
                results.push((name, Err(vdnapr_core::Error::TrainingData(format!("world setup failed: {e}")))));
            }
        }
    }
    results.push(("determinism", determinism()));

    let mut failed = 0;
    for (name, result) in &results {
        match result {
            Ok(v) => {
                failed += usize::from(!v.pass);
                println!("{} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
            }
            Err(e) => {
                failed += 1;
                println!("FAIL {name}: error[{}] {e}", e.name());
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
