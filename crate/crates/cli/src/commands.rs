use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use anyhow::{bail, Context, Result};
use log::info;
use vdnapr_core::activation::{ActivationReader, ActivationWriter};
use vdnapr_core::encoder::ValidationSplit;
use vdnapr_core::nn::AdamWConfig;
use vdnapr_core::retrieval::{emd_recall, layer_sweep, load_db, save_db, SweepEntry};
use vdnapr_core::sequences::{accumulate_all, build_sequence_vdnas, split_by_position, Segment};
use vdnapr_core::vdna::{load_vdna, save_vdna};
use vdnapr_core::{
    calibrate_spec, emd_vdna, generate_world, mine_and_train, recall_at_n, window_sequences, ActivationFrame,
    DescriptorDb, EncoderConfig, EncoderParams, Error, HistogramSpec, LabeledSequence, MiningCacheConfig,
    NeuronSelection, SyntheticWorldConfig, TrainConfig, TrainSet, WorldManifest,
};

use crate::meta::RunMeta;
use crate::{plot, store};
use crate::{
    AccumulateArgs, CalibrateArgs, Command, EmdArgs, EncodeArgs, EncoderSize, EvalArgs, IndexArgs, SweepArgs,
    SynthArgs, TrainArgs,
};

pub const ACTIVATIONS: &str = "activations.vact";
pub const MANIFEST: &str = "manifest.txt";
pub const SPEC: &str = "spec.txt";
pub const SEQUENCES: &str = "sequences";
pub const WHOLE: &str = "all.vdna";
pub const CHECKPOINT: &str = "encoder.ckpt";
pub const TRAIN_LOG: &str = "train.log";

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Accumulate(a) => accumulate(a),
        Command::Train(a) => train(a),
        Command::Encode(a) => encode(a),
        Command::Index(a) => index(a),
        Command::Eval(a) => eval(a),
        Command::Emd(a) => emd(a),
        Command::Sweep(a) => sweep(a),
    }
}

fn out_dir(dir: &Path) -> Result<&Path> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

/// Streams frames out of an activation file, stashing the first read error
/// so consumers that take plain frames can still report it.
struct Frames {
    reader: ActivationReader<std::io::BufReader<File>>,
    error: Option<Error>,
}

impl Frames {
    fn open(path: &Path) -> Result<Self> {
        let reader = ActivationReader::open(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(Self { reader, error: None })
    }

    fn finish(self) -> Result<(), Error> {
        self.error.map_or(Ok(()), Err)
    }
}

impl Iterator for &mut Frames {
    type Item = ActivationFrame;

    fn next(&mut self) -> Option<ActivationFrame> {
        match self.reader.next()? {
            Ok(f) => Some(f),
            Err(e) => {
                self.error = Some(e);
                None
            }
        }
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let config = SyntheticWorldConfig {
        seed: a.seed,
        places: a.places,
        traversals: a.traversals,
        step_m: a.step,
        layers: a.layers,
        neurons_per_layer: a.neurons,
        samples: a.samples,
        ..Default::default()
    };
    let (manifest, world) = generate_world(&config)?;
    let dir = out_dir(&a.out.out_dir)?;
    let shapes = world.shapes();
    let mut w = ActivationWriter::new(
        BufWriter::new(File::create(dir.join(ACTIVATIONS))?),
        &shapes,
        world.frame_count() as u64,
    )?;
    for frame in world.frames() {
        w.write_frame(&frame)?;
    }
    w.finish()?;
    manifest.save(dir.join(MANIFEST))?;

    let mut meta = RunMeta::new("synth");
    meta.seed(a.seed)
        .set("places", config.places)
        .set("traversals", config.traversals)
        .set("step_m", config.step_m)
        .set("layers", config.layers)
        .set("neurons_per_layer", config.neurons_per_layer)
        .set("samples", config.samples)
        .set("latent_dim", config.latent_dim)
        .set("place_correlation", config.place_correlation)
        .set("appearance_scale", config.appearance_scale)
        .set("noise_scale", config.noise_scale)
        .set("threshold", config.threshold);
    meta.write(&dir.join("synth.meta"))?;
    info!("wrote {} frames to {}", world.frame_count(), dir.display());
    Ok(())
}

fn calibrate(a: CalibrateArgs) -> Result<()> {
    let mut frames = Frames::open(&a.activations)?;
    let layers: Vec<_> = frames.reader.shapes().iter().map(|s| s.info()).collect();
    let spec = calibrate_spec(&mut frames, &layers, a.bins, a.expansion);
    frames.finish()?;
    let spec = spec?;
    let dir = out_dir(&a.out.out_dir)?;
    spec.save(dir.join(SPEC))?;

    let mut meta = RunMeta::new("calibrate");
    meta.set("bins", a.bins).set("expansion", a.expansion).set("spec_id", spec.id());
    meta.input("activations", &a.activations)?;
    meta.write(&dir.join("calibrate.meta"))?;
    info!("spec {} over {} neurons", spec.id(), spec.neuron_count());
    Ok(())
}

fn windows_vdnas(
    manifest: &WorldManifest,
    activations: &Path,
    spec: &HistogramSpec,
    seq_len: usize,
    stride: usize,
) -> Result<Vec<LabeledSequence>> {
    let windows = window_sequences(manifest, seq_len, stride)?;
    if windows.skipped_traversals > 0 {
        log::warn!("{} traversal(s) shorter than {seq_len} frames skipped", windows.skipped_traversals);
    }
    let reader = ActivationReader::open(activations)?;
    Ok(build_sequence_vdnas(reader, spec, &windows.records)?)
}

fn accumulate(a: AccumulateArgs) -> Result<()> {
    let spec = HistogramSpec::load(&a.spec)?;
    let dir = out_dir(&a.out.out_dir)?;
    let mut meta = RunMeta::new("accumulate");
    meta.input("activations", &a.activations)?.input("spec", &a.spec)?;
    if a.whole {
        let vdna = accumulate_all(ActivationReader::open(&a.activations)?, &spec)?;
        save_vdna(dir.join(WHOLE), &vdna)?;
        meta.set("mode", "whole");
        info!("accumulated {} images", vdna.image_count());
    } else {
        let manifest_path = a.manifest.as_deref().expect("clap requires --manifest without --whole");
        let manifest = WorldManifest::load(manifest_path)?;
        let seqs = windows_vdnas(&manifest, &a.activations, &spec, a.seq_len, a.stride)?;
        store::write_sequences(&dir.join(SEQUENCES), &seqs)?;
        meta.set("mode", "sequences").set("seq_len", a.seq_len).set("stride", a.stride);
        meta.input("manifest", manifest_path)?;
        info!("accumulated {} sequences", seqs.len());
    }
    meta.write(&dir.join("accumulate.meta"))?;
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let manifest = WorldManifest::load(&a.manifest)?;
    let spec = HistogramSpec::load(&a.spec)?;
    let threshold = a.threshold.unwrap_or(manifest.threshold);
    let db_traversal = match &a.db_traversal {
        Some(t) => t.clone(),
        None => manifest
            .traversals()
            .into_iter()
            .next()
            .ok_or_else(|| Error::TrainingData("manifest has no frames".into()))?,
    };
    let seqs = windows_vdnas(&manifest, &a.activations, &spec, a.seq_len, a.stride)?;
    let records: Vec<_> = seqs.iter().map(|s| s.record.clone()).collect();
    let segments = split_by_position(&records, a.split.split.0, a.split.split.1)?;
    let part = |seg: Segment, keep: &dyn Fn(&str) -> bool| {
        TrainSet::from_sequences(
            seqs.iter().zip(&segments).filter(|(s, g)| **g == seg && keep(&s.record.traversal_id)).map(|(s, _)| s),
        )
    };
    let train_set = part(Segment::Train, &|_| true);
    let val = ValidationSplit {
        db: part(Segment::Validation, &|t| t == db_traversal),
        queries: part(Segment::Validation, &|t| t != db_traversal),
    };
    let val = (!val.db.is_empty() && !val.queries.is_empty()).then_some(val);
    if val.is_none() {
        log::warn!("no validation split; keeping the final parameters");
    }

    let config = match a.encoder {
        EncoderSize::Standard => EncoderConfig::standard(spec.bins()),
        EncoderSize::Compact => EncoderConfig::compact(spec.bins()),
    };
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        margin: a.margin,
        optimizer: AdamWConfig { lr: a.lr, weight_decay: a.weight_decay, ..Default::default() },
        cache: MiningCacheConfig {
            queries: a.cache_queries,
            negatives: a.cache_negatives,
            carryover: a.carryover,
            refresh_every: a.refresh_every,
            ..Default::default()
        },
        seed: a.seed,
        threshold,
        cross_traversal_positives: !a.same_traversal_positives,
        ..Default::default()
    };
    let initial = EncoderParams::init(config, &spec, a.seed)?;
    info!("training on {} sequences ({} train)", seqs.len(), train_set.len());
    let outcome = mine_and_train(initial, &train_set, val.as_ref(), &cfg)?;

    let dir = out_dir(&a.out.out_dir)?;
    let best = outcome.best_epoch.map_or_else(|| "none".to_string(), |e| e.to_string());
    outcome
        .params
        .save(dir.join(CHECKPOINT), &[("seed".into(), a.seed.to_string()), ("best_epoch".into(), best.clone())])?;
    fs::write(dir.join(TRAIN_LOG), outcome.log.to_text())?;

    let mut meta = RunMeta::new("train");
    meta.seed(a.seed)
        .set("encoder", format!("{:?}", a.encoder).to_lowercase())
        .set("seq_len", a.seq_len)
        .set("stride", a.stride)
        .set("margin", a.margin)
        .set("lr", a.lr)
        .set("weight_decay", a.weight_decay)
        .set("epochs", a.epochs)
        .set("batch_size", a.batch_size)
        .set("cache_queries", a.cache_queries)
        .set("cache_negatives", a.cache_negatives)
        .set("carryover", a.carryover)
        .set("refresh_every", a.refresh_every)
        .set("threshold", threshold)
        .set("split", format!("{},{}", a.split.split.0, a.split.split.1))
        .set("db_traversal", &db_traversal)
        .set("cross_traversal_positives", cfg.cross_traversal_positives)
        .set("best_epoch", &best);
    meta.input("manifest", &a.manifest)?.input("activations", &a.activations)?.input("spec", &a.spec)?;
    meta.write(&dir.join("train.meta"))?;
    match outcome.best_val_r1 {
        Some(r) => info!("best validation R@1 {r:.2} at epoch {best}"),
        None => info!("trained {} epochs", a.epochs),
    }
    Ok(())
}

fn encode(a: EncodeArgs) -> Result<()> {
    let params = EncoderParams::load(&a.checkpoint)?;
    let seqs = store::read_sequences(&a.filter.sequences)?;
    let chosen = store::select(&seqs, a.filter.segment, a.filter.split.split, |t| {
        a.traversal.as_deref().is_none_or(|want| t == want)
    })?;
    if chosen.is_empty() {
        return Err(Error::Config("no sequences match the traversal/segment filter".into()).into());
    }
    let db = TrainSet::from_sequences(&chosen).descriptor_db(&params, a.kind, &a.select)?;
    let dir = out_dir(&a.out.out_dir)?;
    save_db(dir.join(format!("{}.vpdb", a.name)), &db)?;

    let mut meta = RunMeta::new("encode");
    meta.set("kind", a.kind)
        .set("select", &a.select)
        .set("traversal", a.traversal.as_deref().unwrap_or("all"))
        .set("segment", format!("{:?}", a.filter.segment).to_lowercase())
        .set("split", format!("{},{}", a.filter.split.split.0, a.filter.split.split.1))
        .set("count", db.len())
        .set("dim", db.dim());
    meta.input("checkpoint", &a.checkpoint)?.input("sequences", &a.filter.sequences)?;
    meta.write(&dir.join(format!("{}.meta", a.name)))?;
    info!("encoded {} descriptors of length {}", db.len(), db.dim());
    Ok(())
}

fn index(a: IndexArgs) -> Result<()> {
    let mut merged: Option<DescriptorDb> = None;
    for path in &a.inputs {
        let part = load_db(path).with_context(|| format!("reading {}", path.display()))?;
        let db = merged.get_or_insert_with(|| DescriptorDb::new(part.dim(), part.kind(), part.selection().clone()));
        if part.kind() != db.kind() || part.selection() != db.selection() {
            return Err(Error::Shape(format!(
                "{} holds {} / {} descriptors, expected {} / {}",
                path.display(),
                part.kind(),
                part.selection(),
                db.kind(),
                db.selection()
            ))
            .into());
        }
        for i in 0..part.len() {
            let row: Vec<f64> = part.row(i).iter().map(|&v| v as f64).collect();
            db.push(&row, part.record(i).clone())?;
        }
    }
    let db = merged.expect("clap requires at least one input");
    let dir = out_dir(&a.out.out_dir)?;
    save_db(dir.join(format!("{}.vpdb", a.name)), &db)?;

    let mut meta = RunMeta::new("index");
    meta.set("count", db.len()).set("dim", db.dim()).set("kind", db.kind());
    for (i, path) in a.inputs.iter().enumerate() {
        meta.input(&format!("part{i}"), path)?;
    }
    meta.write(&dir.join(format!("{}.meta", a.name)))?;
    info!("database of {} descriptors", db.len());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let db = load_db(&a.db)?;
    let queries = load_db(&a.queries)?;
    let mut report = recall_at_n(&db, &queries, &a.n, a.threshold)?;
    report.meta.push(("kind".into(), db.kind().to_string()));
    report.meta.push(("selection".into(), db.selection().to_string()));
    let dir = out_dir(&a.out.out_dir)?;
    fs::write(dir.join(format!("{}.txt", a.name)), report.to_text())?;

    let mut meta = RunMeta::new("eval");
    meta.set("n", a.n.iter().map(usize::to_string).collect::<Vec<_>>().join(",")).set("threshold", a.threshold);
    meta.input("db", &a.db)?.input("queries", &a.queries)?;
    meta.write(&dir.join(format!("{}.meta", a.name)))?;
    println!("queries\t{}\nexcluded\t{}", report.evaluated, report.excluded);
    for (n, r) in report.ns.iter().zip(&report.recalls) {
        println!("R@{n}\t{r:.3}");
    }
    Ok(())
}

fn emd(a: EmdArgs) -> Result<()> {
    let spec = HistogramSpec::load(&a.spec)?;
    let x = load_vdna(&a.a)?;
    let y = load_vdna(&a.b)?;
    for v in [&x, &y] {
        if v.spec_id() != spec.id() {
            return Err(Error::SpecMismatch { expected: spec.id(), found: v.spec_id() }.into());
        }
    }
    let neurons = a.select.resolve(spec.layers())?;
    let mut weights = vec![0.0; spec.neuron_count()];
    for i in neurons {
        weights[i] = 1.0;
    }
    let d = emd_vdna(&x.normalize(), &y.normalize(), &spec, Some(&weights))?;

    let dir = out_dir(&a.out.out_dir)?;
    let mut meta = RunMeta::new("emd");
    meta.set("select", &a.select).set("emd", format!("{d:?}"));
    meta.input("a", &a.a)?.input("b", &a.b)?.input("spec", &a.spec)?;
    meta.write(&dir.join("emd.meta"))?;
    println!("{d:?}");
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let seqs = store::read_sequences(&a.filter.sequences)?;
    let split = a.filter.split.split;
    let db = store::select(&seqs, a.filter.segment, split, |t| t == a.db_traversal)?;
    let queries = store::select(&seqs, a.filter.segment, split, |t| match &a.query_traversal {
        Some(q) => t == q,
        None => t != a.db_traversal,
    })?;
    if queries.is_empty() {
        bail!(Error::Config("no query sequences match the filter".into()));
    }

    let mut meta = RunMeta::new("sweep");
    let entries = match (&a.checkpoint, &a.emd_spec) {
        (Some(ckpt), _) => {
            let params = EncoderParams::load(ckpt)?;
            meta.set("ranking", "encoder").input("checkpoint", ckpt)?;
            layer_sweep(&params, &db, &queries, &a.ranges, &a.n, a.threshold)?
        }
        (None, Some(spec_path)) => {
            let spec = HistogramSpec::load(spec_path)?;
            meta.set("ranking", "emd").input("spec", spec_path)?;
            let selections = spec
                .layers()
                .iter()
                .map(|l| NeuronSelection::Layers(vec![l.index]))
                .chain(a.ranges.iter().map(|&(first, last)| NeuronSelection::LayerRange { first, last }));
            let mut out = Vec::new();
            for selection in selections {
                let report = emd_recall(&spec, &db, &queries, &selection, &a.n, a.threshold)?;
                let descriptor_len = selection.resolve(spec.layers())?.len() * spec.bins();
                out.push(SweepEntry { selection, descriptor_len, report });
            }
            out
        }
        (None, None) => unreachable!("clap requires a ranker"),
    };

    let mut text = String::from("# vdnapr sweep v1\nselection\tlength");
    for n in &a.n {
        let _ = write!(text, "\tR@{n}");
    }
    text.push('\n');
    for e in &entries {
        let _ = write!(text, "{}\t{}", e.selection, e.descriptor_len);
        for r in &e.report.recalls {
            let _ = write!(text, "\t{r:.3}");
        }
        text.push('\n');
    }
    let dir = out_dir(&a.out.out_dir)?;
    fs::write(dir.join(format!("{}.txt", a.name)), &text)?;
    if let Some(path) = &a.plot {
        let labels: Vec<String> = entries.iter().map(|e| selection_label(&e.selection)).collect();
        let series: Vec<(String, Vec<f64>)> =
            a.n.iter()
                .enumerate()
                .map(|(k, n)| (format!("R@{n}"), entries.iter().map(|e| e.report.recalls[k]).collect()))
                .collect();
        fs::write(path, plot::recall_chart("recall by layer", &labels, &series))?;
    }

    meta.set("db_traversal", &a.db_traversal)
        .set("query_traversal", a.query_traversal.as_deref().unwrap_or("others"))
        .set("segment", format!("{:?}", a.filter.segment).to_lowercase())
        .set("split", format!("{},{}", split.0, split.1))
        .set("threshold", a.threshold)
        .set("n", a.n.iter().map(usize::to_string).collect::<Vec<_>>().join(","));
    meta.input("sequences", &a.filter.sequences)?;
    meta.write(&dir.join(format!("{}.meta", a.name)))?;
    print!("{text}");
    Ok(())
}

fn selection_label(s: &NeuronSelection) -> String {
    match s {
        NeuronSelection::Layers(l) if l.len() == 1 => l[0].to_string(),
        NeuronSelection::LayerRange { first, last } => format!("{first}-{last}"),
        other => other.to_string(),
    }
}
