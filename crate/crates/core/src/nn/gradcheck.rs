//! Central finite-difference gradient checking.
//!
//! The numeric side only ever calls the forward pass, so it stays
//! independent of the reverse-mode code it checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::Result;

/// Denominator floor for the relative error, so that gradients that are
/// (numerically) zero on both sides do not divide by zero.
pub const RELATIVE_FLOOR: f64 = 1e-7;

#[derive(Clone, Debug)]
pub struct Probe {
    pub leaf: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub probes: Vec<Probe>,
    /// Draws rejected because the stencil crossed a non-smooth point.
    pub skipped: usize,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.probes.iter().map(|p| p.relative_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&Probe> {
        self.probes.iter().max_by(|a, b| a.relative_error.total_cmp(&b.relative_error))
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Checks `probes` randomly chosen coordinates of `leaves` (chosen with
/// probability proportional to leaf size) against the fourth-order central
/// difference `(f(x−2h) − 8f(x−h) + 8f(x+h) − f(x+2h)) / 12h`. `build` must record a scalar loss from the given leaves.
///
/// Central differences are only exact where the function is smooth over
/// the whole stencil, so a probe whose `±h`, `±2h` evaluations take a different
/// branch at any ReLU, triplet hinge or normalization floor than the base
/// point (see [`Graph::branch_pattern`]) is counted in `skipped` and
/// another coordinate is drawn. At most `50 × probes` draws are made.
pub fn check_gradients<F>(leaves: &[Tensor], build: F, probes: usize, h: f64, seed: u64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |ls: &[Tensor]| -> Result<(f64, Vec<bool>)> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ls.iter().map(|t| g.leaf(t.clone())).collect();
        let loss = build(&mut g, &vars)?;
        Ok((g.value(loss).data()[0], g.branch_pattern()))
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = leaves.iter().map(|t| g.leaf(t.clone())).collect();
    let loss = build(&mut g, &vars)?;
    let grads = g.backward(loss)?;
    let base_pattern = g.branch_pattern();
    let analytic: Vec<Vec<f64>> = vars.iter().zip(leaves).map(|(v, t)| grads.get_or_zeros(*v, t.len())).collect();

    let total: usize = leaves.iter().map(Tensor::len).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work: Vec<Tensor> = leaves.to_vec();
    let mut out = Vec::with_capacity(probes);
    let mut skipped = 0;
    let mut draws = 0;
    while out.len() < probes && draws < 50 * probes {
        draws += 1;
        let mut flat = rng.random_range(0..total);
        let mut leaf = 0;
        while flat >= leaves[leaf].len() {
            flat -= leaves[leaf].len();
            leaf += 1;
        }
        let original = work[leaf].data()[flat];
        let mut values = [0.0; 4];
        let mut smooth = true;
        for (slot, offset) in [-2.0, -1.0, 1.0, 2.0].into_iter().enumerate() {
            work[leaf].data_mut()[flat] = original + offset * h;
            let (v, pattern) = eval(&work)?;
            values[slot] = v;
            smooth &= pattern == base_pattern;
        }
        work[leaf].data_mut()[flat] = original;
        if !smooth {
            skipped += 1;
            continue;
        }
        let [m2, m1, p1, p2] = values;
        let numeric = (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h);
        let a = analytic[leaf][flat];
        out.push(Probe { leaf, index: flat, analytic: a, numeric, relative_error: relative_error(a, numeric) });
    }
    Ok(GradCheckReport { probes: out, skipped })
}
