use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use vdnapr_core::activation::SequenceRecord;
use vdnapr_core::vdna::DEFAULT_EXPANSION;
use vdnapr_core::{
    calibrate_spec, emd_vdna, generate_world, DescriptorDb, DescriptorKind, EncoderConfig, EncoderParams, LayerInfo,
    NeuronSelection, Pose, SyntheticWorldConfig, Vdna,
};

fn world(samples: usize) -> (Vec<vdnapr_core::ActivationFrame>, Vec<LayerInfo>) {
    let config = SyntheticWorldConfig { places: 20, samples, ..Default::default() };
    let (_, world) = generate_world(&config).unwrap();
    let layers = world.shapes().iter().map(|s| s.info()).collect();
    (world.frames().collect(), layers)
}

fn accumulate(c: &mut Criterion) {
    let (frames, layers) = world(256);
    let spec = calibrate_spec(frames.iter().cloned(), &layers, 500, DEFAULT_EXPANSION).unwrap();
    let mut g = c.benchmark_group("accumulate");
    g.throughput(Throughput::Elements(frames.len() as u64));
    g.bench_function("96 neurons x 256 samples, b=500", |b| {
        b.iter(|| {
            let mut v = Vdna::empty(&spec);
            for f in &frames {
                v.accumulate(f, &spec).unwrap();
            }
            black_box(v)
        })
    });
    g.finish();
}

fn emd(c: &mut Criterion) {
    let (frames, layers) = world(256);
    let mut g = c.benchmark_group("emd_vdna");
    for bins in [32, 500] {
        let spec = calibrate_spec(frames.iter().cloned(), &layers, bins, DEFAULT_EXPANSION).unwrap();
        let half = frames.len() / 2;
        let mut a = Vdna::empty(&spec);
        let mut b = Vdna::empty(&spec);
        for f in &frames[..half] {
            a.accumulate(f, &spec).unwrap();
        }
        for f in &frames[half..] {
            b.accumulate(f, &spec).unwrap();
        }
        let (a, b) = (a.normalize(), b.normalize());
        g.bench_with_input(BenchmarkId::new("96 neurons", bins), &bins, |bench, _| {
            bench.iter(|| emd_vdna(black_box(&a), black_box(&b), &spec, None).unwrap())
        });
    }
    g.finish();
}

fn encoder_forward(c: &mut Criterion) {
    let (frames, layers) = world(256);
    let mut g = c.benchmark_group("encoder_forward");
    g.sample_size(10);
    for (name, config) in
        [("compact b=32", EncoderConfig::compact(32)), ("standard b=500", EncoderConfig::standard(500))]
    {
        let spec = calibrate_spec(frames.iter().cloned(), &layers, config.bins, DEFAULT_EXPANSION).unwrap();
        let mut v = Vdna::empty(&spec);
        for f in &frames[..5] {
            v.accumulate(f, &spec).unwrap();
        }
        let v = v.normalize();
        let params = EncoderParams::init(config, &spec, 0).unwrap();
        g.throughput(Throughput::Elements(spec.neuron_count() as u64));
        g.bench_function(name, |b| {
            b.iter(|| params.describe(black_box(&v), DescriptorKind::NeuronConcat, &NeuronSelection::All).unwrap())
        });
    }
    g.finish();
}

/// Deterministic pseudo-random fill; benchmark data only needs to be
/// spread out, not statistically sound.
fn fill(i: usize, dim: usize) -> Vec<f64> {
    (0..dim).map(|j| ((i * 7919 + j * 104_729) as f64 * 0.618_033_988_75).fract() - 0.5).collect()
}

fn knn(c: &mut Criterion) {
    let dim = 3072;
    let mut g = c.benchmark_group("knn");
    g.sample_size(20);
    for size in [1_000, 10_000] {
        let mut db = DescriptorDb::new(dim, DescriptorKind::NeuronConcat, NeuronSelection::All);
        for i in 0..size {
            let record = SequenceRecord {
                frame_ids: vec![format!("f{i}")],
                traversal_id: "t0".into(),
                pose: Pose::new(i as f64, 0.0),
                frame_index: i,
            };
            db.push(&fill(i, dim), record).unwrap();
        }
        let query: Vec<f32> = fill(size + 1, dim).iter().map(|&v| v as f32).collect();
        g.throughput(Throughput::Elements(size as u64));
        g.bench_with_input(BenchmarkId::new("top10 dim 3072", size), &size, |b, _| {
            b.iter(|| db.knn(black_box(&query), 10).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, accumulate, emd, encoder_forward, knn);
criterion_main!(benches);
