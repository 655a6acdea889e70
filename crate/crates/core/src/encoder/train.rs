//! Triplet training with a periodically refreshed mining cache.
//!
//! Each cache period samples query sequences and a pool of candidate
//! negatives, computes their current W-output descriptors, and mines one
//! triplet per query: the descriptor-nearest ground-truth positive and the
//! descriptor-nearest ground-truth negatives. The highest-loss triplets of
//! the previous period are replayed verbatim alongside the fresh ones. A
//! period ends after a fixed number of consumed triplets, cycling through
//! the cache as often as needed.

use std::fmt::Write as _;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::descriptor::{DescriptorKind, NeuronSelection};
use super::params::EncoderParams;
use crate::activation::{SequenceRecord, Threshold};
use crate::error::{Error, Result};
use crate::nn::{AdamWConfig, AdamWState, Graph, Var};
use crate::retrieval::{recall_at_n, DescriptorDb};
use crate::sequences::LabeledSequence;
use crate::vdna::NormalizedVdna;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MiningCacheConfig {
    pub queries: usize,
    pub negatives: usize,
    /// Highest-loss triplets replayed from the previous period.
    pub carryover: usize,
    /// Triplets consumed per cache period.
    pub refresh_every: usize,
    pub negatives_per_triplet: usize,
}

impl Default for MiningCacheConfig {
    fn default() -> Self {
        Self { queries: 1000, negatives: 5000, carryover: 500, refresh_every: 1500, negatives_per_triplet: 5 }
    }
}

impl MiningCacheConfig {
    pub fn validate(&self) -> Result<()> {
        if self.queries == 0 || self.negatives == 0 || self.refresh_every == 0 || self.negatives_per_triplet == 0 {
            return Err(Error::Config("mining cache sizes must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Cache periods per epoch; validation runs after each epoch.
    pub refreshes_per_epoch: usize,
    /// Triplets per optimizer step.
    pub batch_size: usize,
    pub margin: f64,
    pub optimizer: AdamWConfig,
    pub cache: MiningCacheConfig,
    pub seed: u64,
    pub threshold: Threshold,
    /// Only accept positives from a different traversal than the query.
    pub cross_traversal_positives: bool,
    /// Descriptor used for validation R@1 and checkpoint selection.
    pub validation_kind: DescriptorKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            refreshes_per_epoch: 1,
            batch_size: 16,
            margin: 0.1,
            optimizer: AdamWConfig::default(),
            cache: MiningCacheConfig::default(),
            seed: 0,
            threshold: Threshold::default(),
            cross_traversal_positives: true,
            validation_kind: DescriptorKind::NeuronConcat,
        }
    }
}

/// Normalized sequence VDNAs with their records.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainSet {
    pub records: Vec<SequenceRecord>,
    pub vdnas: Vec<NormalizedVdna>,
}

impl TrainSet {
    pub fn from_sequences<'a>(seqs: impl IntoIterator<Item = &'a LabeledSequence>) -> Self {
        let (records, vdnas) = seqs.into_iter().map(|s| (s.record.clone(), s.vdna.normalize())).unzip();
        Self { records, vdnas }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Descriptors for every sequence, in order.
    pub fn descriptor_db(
        &self,
        params: &EncoderParams,
        kind: DescriptorKind,
        selection: &NeuronSelection,
    ) -> Result<DescriptorDb> {
        let descs = self.vdnas.par_iter().map(|v| params.describe(v, kind, selection)).collect::<Result<Vec<_>>>()?;
        if descs.is_empty() {
            return Ok(DescriptorDb::new(0, kind, selection.clone()));
        }
        DescriptorDb::build(&descs, self.records.clone())
    }
}

/// A query, its positive and its negatives, as indices into a [`TrainSet`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Triplet {
    pub query: usize,
    pub positive: usize,
    pub negatives: Vec<usize>,
}

/// Counts consumed triplets and reports when a cache refresh is due.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CacheSchedule {
    refresh_every: usize,
    consumed: usize,
    refreshes: usize,
}

impl CacheSchedule {
    pub fn new(refresh_every: usize) -> Self {
        assert!(refresh_every > 0, "refresh period must be positive");
        Self { refresh_every, consumed: 0, refreshes: 0 }
    }

    /// Records one consumed triplet; returns true when it completes a period.
    pub fn consume(&mut self) -> bool {
        self.consumed += 1;
        if self.consumed.is_multiple_of(self.refresh_every) {
            self.refreshes += 1;
            true
        } else {
            false
        }
    }

    pub fn consumed(&self) -> usize {
        self.consumed
    }

    pub fn refreshes(&self) -> usize {
        self.refreshes
    }
}

/// One line of the training log, written at the end of each cache period.
#[derive(Clone, Debug, PartialEq)]
pub struct RefreshRecord {
    pub epoch: usize,
    pub period: usize,
    pub steps: u64,
    pub consumed: usize,
    pub cached_triplets: usize,
    pub carried_over: usize,
    /// Mean triplet loss over the triplets consumed this period.
    pub mean_loss: f64,
    /// Fraction of freshly mined triplets with a positive loss at mining time.
    pub active_fraction: f64,
    pub mean_positive_distance: f64,
    pub mean_negative_distance: f64,
    /// Set on the last period of an epoch when validation data is given.
    pub val_r1: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RefreshLog {
    pub records: Vec<RefreshRecord>,
}

impl RefreshLog {
    pub fn to_text(&self) -> String {
        let mut s = String::from("# vdnapr training log v1\n");
        s.push_str("epoch\tperiod\tsteps\tconsumed\tcached\tcarried\tmean_loss\tactive\tpos_dist\tneg_dist\tval_r1\n");
        for r in &self.records {
            let val = r.val_r1.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.4}\t{:.6}\t{:.6}\t{val}",
                r.epoch,
                r.period,
                r.steps,
                r.consumed,
                r.cached_triplets,
                r.carried_over,
                r.mean_loss,
                r.active_fraction,
                r.mean_positive_distance,
                r.mean_negative_distance
            );
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters with the best validation R@1 (the final ones without
    /// validation data).
    pub params: EncoderParams,
    pub final_params: EncoderParams,
    pub optimizer: AdamWState,
    pub log: RefreshLog,
    pub best_epoch: Option<usize>,
    pub best_val_r1: Option<f64>,
}

/// Query/database split used for validation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationSplit {
    pub db: TrainSet,
    pub queries: TrainSet,
}

/// Ground-truth neighbourhoods of every sequence in a set.
struct Neighbourhoods {
    positives: Vec<Vec<usize>>,
    is_negative: Vec<Vec<bool>>,
}

impl Neighbourhoods {
    fn new(set: &TrainSet, threshold: Threshold, cross_traversal: bool) -> Self {
        let n = set.len();
        let rows: Vec<(Vec<usize>, Vec<bool>)> = (0..n)
            .into_par_iter()
            .map(|q| {
                let rq = &set.records[q];
                let mut pos = Vec::new();
                let mut neg = vec![false; n];
                for (i, r) in set.records.iter().enumerate() {
                    if r.matches(rq, threshold) {
                        if i != q && (!cross_traversal || r.traversal_id != rq.traversal_id) {
                            pos.push(i);
                        }
                    } else {
                        neg[i] = true;
                    }
                }
                (pos, neg)
            })
            .collect();
        let (positives, is_negative) = rows.into_iter().unzip();
        Self { positives, is_negative }
    }

    fn valid_queries(&self, negatives_needed: usize) -> Vec<usize> {
        (0..self.positives.len())
            .filter(|&q| {
                !self.positives[q].is_empty() && self.is_negative[q].iter().filter(|&&b| b).count() >= negatives_needed
            })
            .collect()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

struct Mined {
    triplets: Vec<Triplet>,
    active: usize,
    pos_dist: f64,
    neg_dist: f64,
}

fn mine(
    params: &EncoderParams,
    set: &TrainSet,
    hood: &Neighbourhoods,
    queries: &[usize],
    pool: &[usize],
    cfg: &TrainConfig,
) -> Result<Mined> {
    let mut needed = vec![false; set.len()];
    for &q in queries {
        needed[q] = true;
        for &p in &hood.positives[q] {
            needed[p] = true;
        }
    }
    for &i in pool {
        needed[i] = true;
    }
    let descs: Vec<Option<Vec<f64>>> = (0..set.len())
        .into_par_iter()
        .map(|i| {
            if needed[i] {
                params.describe(&set.vdnas[i], DescriptorKind::WOutput, &NeuronSelection::All).map(|d| Some(d.values))
            } else {
                Ok(None)
            }
        })
        .collect::<Result<_>>()?;
    let desc = |i: usize| descs[i].as_deref().expect("descriptor computed");
    let k = cfg.cache.negatives_per_triplet;

    let mined: Vec<Option<(Triplet, f64, f64, bool)>> = queries
        .par_iter()
        .map(|&q| {
            let dq = desc(q);
            let (positive, dp) = hood.positives[q]
                .iter()
                .map(|&p| (p, sq_dist(dq, desc(p))))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))?;
            let mut negs: Vec<(usize, f64)> =
                pool.iter().filter(|&&i| hood.is_negative[q][i]).map(|&i| (i, sq_dist(dq, desc(i)))).collect();
            if negs.len() < k {
                return None;
            }
            negs.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            negs.truncate(k);
            let dn = negs.iter().map(|n| n.1).sum::<f64>() / k as f64;
            let active = negs.iter().any(|n| dp - n.1 + cfg.margin > 0.0);
            Some((Triplet { query: q, positive, negatives: negs.into_iter().map(|n| n.0).collect() }, dp, dn, active))
        })
        .collect();
    let mut out = Mined { triplets: Vec::new(), active: 0, pos_dist: 0.0, neg_dist: 0.0 };
    for (t, dp, dn, active) in mined.into_iter().flatten() {
        out.triplets.push(t);
        out.pos_dist += dp;
        out.neg_dist += dn;
        out.active += usize::from(active);
    }
    let m = out.triplets.len().max(1) as f64;
    out.pos_dist /= m;
    out.neg_dist /= m;
    Ok(out)
}

/// Loss and parameter gradients of one triplet through E, W and the
/// triplet loss.
pub fn triplet_gradients(
    params: &EncoderParams,
    set: &TrainSet,
    t: &Triplet,
    margin: f64,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut g = Graph::new();
    let vars: Vec<Var> = params.tensors().iter().map(|p| g.leaf(p.clone())).collect();
    let members: Vec<usize> = [t.query, t.positive].into_iter().chain(t.negatives.iter().copied()).collect();
    let mut hist = Vec::with_capacity(members.len() * set.vdnas[t.query].mass().len());
    for &i in &members {
        hist.extend_from_slice(set.vdnas[i].mass());
    }
    let y = params.head_graph(&mut g, &vars, hist, members.len())?;
    let loss = g.triplet(y, margin)?;
    let grads = g.backward(loss)?;
    let value = g.value(loss).data()[0];
    Ok((value, vars.iter().zip(params.tensors()).map(|(v, p)| grads.get_or_zeros(*v, p.len())).collect()))
}

fn validation_r1(params: &EncoderParams, val: &ValidationSplit, cfg: &TrainConfig) -> Result<f64> {
    let db = val.db.descriptor_db(params, cfg.validation_kind, &NeuronSelection::All)?;
    let q = val.queries.descriptor_db(params, cfg.validation_kind, &NeuronSelection::All)?;
    Ok(recall_at_n(&db, &q, &[1], cfg.threshold)?.recalls[0])
}

/// Trains E and W from `initial`. Deterministic for a given seed: all
/// randomness comes from `cfg.seed` and parallel work is reduced in a fixed
/// order.
pub fn mine_and_train(
    initial: EncoderParams,
    train: &TrainSet,
    val: Option<&ValidationSplit>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let optimizer = AdamWState::new(cfg.optimizer, initial.tensors());
    if cfg.epochs == 0 {
        return Ok(TrainOutcome {
            params: initial.clone(),
            final_params: initial,
            optimizer,
            log: RefreshLog::default(),
            best_epoch: None,
            best_val_r1: None,
        });
    }
    cfg.cache.validate()?;
    if cfg.batch_size == 0 || cfg.refreshes_per_epoch == 0 {
        return Err(Error::Config("batch size and refreshes per epoch must be >= 1".into()));
    }
    if !(cfg.margin >= 0.0) {
        return Err(Error::Config(format!("margin must be >= 0, got {}", cfg.margin)));
    }
    if let Some(v) = train.vdnas.iter().find(|v| v.spec_id() != initial.spec_id()) {
        return Err(Error::SpecMismatch { expected: initial.spec_id(), found: v.spec_id() });
    }
    let hood = Neighbourhoods::new(train, cfg.threshold, cfg.cross_traversal_positives);
    let valid = hood.valid_queries(cfg.cache.negatives_per_triplet);
    if valid.is_empty() {
        return Err(Error::TrainingData(format!(
            "no query has a positive within {} and {} negatives beyond it",
            cfg.threshold, cfg.cache.negatives_per_triplet
        )));
    }
    let all: Vec<usize> = (0..train.len()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6d69_6e65);
    let mut params = initial;
    let mut opt = optimizer;
    let mut schedule = CacheSchedule::new(cfg.cache.refresh_every);
    let mut log = RefreshLog::default();
    let mut carried: Vec<Triplet> = Vec::new();
    let mut best: Option<(f64, usize, EncoderParams)> = None;

    for epoch in 1..=cfg.epochs {
        for period in 1..=cfg.refreshes_per_epoch {
            let queries: Vec<usize> =
                valid.choose_multiple(&mut rng, cfg.cache.queries.min(valid.len())).copied().collect();
            let mut pool: Vec<usize> =
                all.choose_multiple(&mut rng, cfg.cache.negatives.min(all.len())).copied().collect();
            pool.sort_unstable();
            let mined = mine(&params, train, &hood, &queries, &pool, cfg)?;
            let fresh = mined.triplets.len();
            let carried_over = carried.len();
            let mut cache = mined.triplets;
            cache.append(&mut carried);
            if cache.is_empty() {
                return Err(Error::TrainingData("the mining cache produced no triplet".into()));
            }

            let mut losses: Vec<f64> = vec![0.0; cache.len()];
            let mut order: Vec<usize> = Vec::new();
            let mut loss_sum = 0.0;
            let mut consumed = 0usize;
            let mut done = false;
            while !done {
                if order.is_empty() {
                    order = (0..cache.len()).collect();
                    order.shuffle(&mut rng);
                    order.reverse();
                }
                let mut batch = Vec::with_capacity(cfg.batch_size);
                while batch.len() < cfg.batch_size {
                    let Some(i) = order.pop() else { break };
                    batch.push(i);
                    if schedule.consume() {
                        done = true;
                        break;
                    }
                }
                let results = batch
                    .par_iter()
                    .map(|&i| triplet_gradients(&params, train, &cache[i], cfg.margin))
                    .collect::<Result<Vec<_>>>()?;
                let mut sum: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
                for (&i, (loss, grads)) in batch.iter().zip(&results) {
                    losses[i] = *loss;
                    loss_sum += loss;
                    for (s, g) in sum.iter_mut().zip(grads) {
                        for (a, b) in s.iter_mut().zip(g) {
                            *a += b;
                        }
                    }
                }
                let scale = 1.0 / batch.len() as f64;
                for s in &mut sum {
                    s.iter_mut().for_each(|x| *x *= scale);
                }
                opt.step(params.tensors_mut(), &sum)?;
                consumed += batch.len();
            }

            let mut ranked: Vec<usize> = (0..cache.len()).collect();
            ranked.sort_by(|&a, &b| losses[b].total_cmp(&losses[a]).then(a.cmp(&b)));
            carried = ranked.into_iter().take(cfg.cache.carryover).map(|i| cache[i].clone()).collect();

            let val_r1 = match val {
                Some(v) if period == cfg.refreshes_per_epoch => Some(validation_r1(&params, v, cfg)?),
                _ => None,
            };
            let record = RefreshRecord {
                epoch,
                period,
                steps: opt.step,
                consumed: schedule.consumed(),
                cached_triplets: cache.len(),
                carried_over,
                mean_loss: loss_sum / consumed as f64,
                active_fraction: if fresh == 0 { 0.0 } else { mined.active as f64 / fresh as f64 },
                mean_positive_distance: mined.pos_dist,
                mean_negative_distance: mined.neg_dist,
                val_r1,
            };
            log::info!(
                "epoch {epoch} period {period}: loss {:.5}, active {:.3}, val R@1 {}",
                record.mean_loss,
                record.active_fraction,
                val_r1.map_or_else(|| "-".into(), |v| format!("{v:.2}"))
            );
            log.records.push(record);
            if let Some(r1) = val_r1 {
                if best.as_ref().is_none_or(|(b, _, _)| r1 > *b) {
                    best = Some((r1, epoch, params.clone()));
                }
            }
        }
    }

    let (best_val_r1, best_epoch, best_params) = match best {
        Some((r, e, p)) => (Some(r), Some(e), p),
        None => (None, None, params.clone()),
    };
    Ok(TrainOutcome { params: best_params, final_params: params, optimizer: opt, log, best_epoch, best_val_r1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_counts_refreshes() {
        let mut s = CacheSchedule::new(1500);
        let triggered = (0..3000).filter(|_| s.consume()).count();
        assert_eq!(triggered, 2);
        assert_eq!(s.refreshes(), 2);
        assert_eq!(s.consumed(), 3000);
    }

    #[test]
    fn squared_distance() {
        assert_eq!(sq_dist(&[1.0, 2.0], &[4.0, 6.0]), 25.0);
    }
}
