//! Shared fixtures and independent reference implementations for the
//! integration and acceptance tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vdnapr_core::activation::{generate_world, window_sequences, SyntheticWorld, SyntheticWorldConfig};
use vdnapr_core::encoder::{DescriptorKind, NeuronSelection, TrainConfig, TrainSet, ValidationSplit};
use vdnapr_core::nn::gradcheck::{check_gradients, GradCheckReport};
use vdnapr_core::nn::Tensor;
use vdnapr_core::retrieval::recall_at_n;
use vdnapr_core::sequences::{build_sequence_vdnas, split_by_position, LabeledSequence, Segment};
use vdnapr_core::{
    calibrate_spec, EncoderConfig, EncoderParams, HistogramSpec, LayerInfo, NormalizedVdna, Result, Threshold,
    WorldManifest,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random probability vector of length `b`; roughly a third of the bins
/// are empty.
pub fn random_mass(rng: &mut ChaCha8Rng, b: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..b).map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random::<f64>() }).collect();
    let total: f64 = raw.iter().sum();
    if total == 0.0 {
        let mut v = vec![0.0; b];
        v[rng.random_range(0..b)] = 1.0;
        return v;
    }
    raw.iter().map(|x| x / total).collect()
}

/// Optimal 1D transport by matching supply and demand left to right (the
/// north-west corner rule, which is optimal for the |i − j| ground cost).
pub fn greedy_transport(p: &[f64], q: &[f64], bin_width: f64) -> f64 {
    let (mut i, mut j) = (0, 0);
    let (mut supply, mut demand) = (p[0], q[0]);
    let mut cost = 0.0;
    loop {
        let moved = supply.min(demand);
        cost += moved * (i as f64 - j as f64).abs() * bin_width;
        supply -= moved;
        demand -= moved;
        if supply <= 0.0 {
            i += 1;
            if i == p.len() {
                break;
            }
            supply = p[i];
        }
        if demand <= 0.0 {
            j += 1;
            if j == q.len() {
                break;
            }
            demand = q[j];
        }
    }
    cost
}

/// Full-sort reference for kNN: `(distance, index)` pairs, ascending.
pub fn full_sort(rows: &[Vec<f32>], query: &[f32]) -> Vec<(f64, usize)> {
    let mut all: Vec<(f64, usize)> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let d: f64 = r.iter().zip(query).map(|(&a, &b)| (a as f64 - b as f64).powi(2)).sum();
            (d.sqrt(), i)
        })
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    all
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>, scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Values uniformly in ±[lo, hi], keeping clear of zero.
pub fn away_from_zero(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let v = rng.random_range(lo..hi);
            if rng.random_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect()
}

pub const FD_STEP: f64 = 1e-3;
pub const FD_TOLERANCE: f64 = 1e-4;
pub const FD_PROBES: usize = 100;

fn weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Finite-difference checks for every differentiable graph operation and
/// for the full encoder + head + triplet-loss graph.
pub fn gradient_suite() -> Result<Vec<(&'static str, GradCheckReport)>> {
    let mut r = rng(2024);
    let mut out = Vec::new();

    let w = weights(&mut r, 2 * 3 * 5);
    let leaves = vec![
        random_tensor(&mut r, vec![2, 2, 9], 1.0),
        random_tensor(&mut r, vec![3, 2, 3], 1.0),
        random_tensor(&mut r, vec![3], 1.0),
    ];
    out.push((
        "conv1d",
        check_gradients(
            &leaves,
            |g, v| {
                let y = g.conv1d(v[0], v[1], v[2], 2, 1)?;
                g.weighted_sum(y, w.clone())
            },
            FD_PROBES,
            FD_STEP,
            1,
        )?,
    ));

    let w = weights(&mut r, 3 * 4);
    let leaves = vec![
        random_tensor(&mut r, vec![3, 5], 1.0),
        random_tensor(&mut r, vec![4, 5], 1.0),
        random_tensor(&mut r, vec![4], 1.0),
    ];
    out.push((
        "linear",
        check_gradients(
            &leaves,
            |g, v| {
                let y = g.linear(v[0], v[1], v[2])?;
                g.weighted_sum(y, w.clone())
            },
            FD_PROBES,
            FD_STEP,
            2,
        )?,
    ));

    let w = weights(&mut r, 24);
    let leaves = vec![Tensor::new(vec![24], away_from_zero(&mut r, 24, 0.05, 1.0))?];
    out.push((
        "relu",
        check_gradients(
            &leaves,
            |g, v| {
                let y = g.relu(v[0])?;
                g.weighted_sum(y, w.clone())
            },
            FD_PROBES,
            FD_STEP,
            3,
        )?,
    ));

    let w = weights(&mut r, 12);
    let leaves = vec![random_tensor(&mut r, vec![3, 4], 1.0)];
    out.push((
        "normalize_rows",
        check_gradients(
            &leaves,
            |g, v| {
                let y = g.normalize_rows(v[0])?;
                g.weighted_sum(y, w.clone())
            },
            FD_PROBES,
            FD_STEP,
            4,
        )?,
    ));

    let w = weights(&mut r, 6);
    let leaves = vec![random_tensor(&mut r, vec![12], 1.0), random_tensor(&mut r, vec![4, 2], 1.0)];
    out.push((
        "reshape+matmul",
        check_gradients(
            &leaves,
            |g, v| {
                let a = g.reshape(v[0], vec![3, 4])?;
                let y = g.matmul(a, v[1])?;
                g.weighted_sum(y, w.clone())
            },
            FD_PROBES,
            FD_STEP,
            5,
        )?,
    ));

    let leaves = vec![random_tensor(&mut r, vec![7, 6], 0.5)];
    out.push(("triplet", check_gradients(&leaves, |g, v| g.triplet(v[0], 0.1), FD_PROBES, FD_STEP, 6)?));

    let leaves = vec![random_tensor(&mut r, vec![10], 1.0)];
    out.push(("sum", check_gradients(&leaves, |g, v| g.sum(v[0]), FD_PROBES, FD_STEP, 7)?));
    out.push(("sum_squares", check_gradients(&leaves, |g, v| g.sum_squares(v[0]), FD_PROBES, FD_STEP, 8)?));

    out.push(("encoder+W+triplet", full_model_check(200, 8)?));
    Ok(out)
}

/// Encoder, head and triplet loss on a small topology (two layers of three
/// neurons, 16 bins) with random normalized histograms for 7 sequences.
pub fn full_model_check(probes: usize, seed: u64) -> Result<GradCheckReport> {
    let spec = HistogramSpec::with_uniform_range(LayerInfo::uniform(2, 3), 16, 0.0, 1.0)?;
    let config = EncoderConfig { out_dim: 8, ..EncoderConfig::compact(16) };
    let params = EncoderParams::init(config, &spec, seed)?;
    let mut r = rng(seed);
    let hist: Vec<f64> = (0..7 * 6).flat_map(|_| random_mass(&mut r, 16)).collect();
    check_gradients(
        params.tensors(),
        |g, v| {
            let y = params.head_graph(g, v, hist.clone(), 7)?;
            g.triplet(y, 0.1)
        },
        probes,
        FD_STEP,
        seed,
    )
}

/// The synthetic-world experiment shared by the behavioural tests: the
/// default world, calibrated histograms, windows of `seq_len` frames split
/// by position into train (50%), validation (20%) and test (30%) segments.
/// Traversal `t0` is the database and `t1` the query side.
pub struct Experiment {
    pub config: SyntheticWorldConfig,
    pub manifest: WorldManifest,
    pub world: SyntheticWorld,
    pub spec: HistogramSpec,
}

pub const BINS: usize = 32;

impl Experiment {
    pub fn new(config: SyntheticWorldConfig) -> Result<Self> {
        let (manifest, world) = generate_world(&config)?;
        let layers: Vec<LayerInfo> = world.shapes().iter().map(|s| s.info()).collect();
        let spec = calibrate_spec(world.frames(), &layers, BINS, 0.01)?;
        Ok(Self { config, manifest, world, spec })
    }

    pub fn threshold(&self) -> Threshold {
        self.config.threshold
    }

    pub fn sequences(&self, seq_len: usize) -> Result<(Vec<LabeledSequence>, Vec<Segment>)> {
        let windows = window_sequences(&self.manifest, seq_len, 1)?.records;
        let seqs = build_sequence_vdnas(self.world.frames().map(Ok), &self.spec, &windows)?;
        let segments = split_by_position(&windows, 0.5, 0.2)?;
        Ok((seqs, segments))
    }
}

pub fn select<'a>(
    seqs: &'a [LabeledSequence],
    segments: &'a [Segment],
    segment: Segment,
    traversal: Option<&'a str>,
) -> Vec<LabeledSequence> {
    seqs.iter()
        .zip(segments)
        .filter(|(s, g)| **g == segment && traversal.is_none_or(|t| s.record.traversal_id == t))
        .map(|(s, _)| s.clone())
        .collect()
}

pub fn train_set(seqs: &[LabeledSequence], segments: &[Segment]) -> TrainSet {
    TrainSet::from_sequences(&select(seqs, segments, Segment::Train, None))
}

pub fn validation(seqs: &[LabeledSequence], segments: &[Segment]) -> ValidationSplit {
    ValidationSplit {
        db: TrainSet::from_sequences(&select(seqs, segments, Segment::Validation, Some("t0"))),
        queries: TrainSet::from_sequences(&select(seqs, segments, Segment::Validation, Some("t1"))),
    }
}

/// Held-out R@1 with all-neuron concat descriptors (W removed).
pub fn r1(
    params: &EncoderParams,
    db: &[LabeledSequence],
    queries: &[LabeledSequence],
    threshold: Threshold,
) -> Result<f64> {
    let db = TrainSet::from_sequences(db).descriptor_db(params, DescriptorKind::NeuronConcat, &NeuronSelection::All)?;
    let q =
        TrainSet::from_sequences(queries).descriptor_db(params, DescriptorKind::NeuronConcat, &NeuronSelection::All)?;
    Ok(recall_at_n(&db, &q, &[1], threshold)?.recalls[0])
}

/// Normalized VDNA assembled from given mass rows.
pub fn normalized(spec: &HistogramSpec, rows: &[Vec<f64>]) -> NormalizedVdna {
    NormalizedVdna::from_mass(spec.id(), spec.bins(), rows.concat()).unwrap()
}

/// Training settings used by the behavioural experiments: the compact
/// encoder with 32 bins, AdamW at lr 1e-3 and 300-triplet cache periods.
pub fn training_config(epochs: usize, seed: u64) -> TrainConfig {
    let mut tc = TrainConfig { epochs, seed, ..Default::default() };
    tc.optimizer.lr = 1e-3;
    tc.cache.refresh_every = 300;
    tc
}

pub fn initial_params(spec: &HistogramSpec, seed: u64) -> Result<EncoderParams> {
    EncoderParams::init(EncoderConfig::compact(BINS), spec, seed)
}
