//! Deterministic synthetic world standing in for a real backbone and
//! dataset. Places lie along a gently curving path; every traversal visits
//! every place once. A neuron's activations for a frame are
//!
//! ```text
//! v[s] = a(l) · tanh(w_i · z_place + c_i[s]) + b(l) · appearance · o[t, i] + noise · ε
//! ```
//!
//! where `a` grows and `b` shrinks with layer depth, so shallow layers are
//! dominated by the traversal's appearance offset and deep layers by the
//! place latent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::frame::{ActivationFrame, LayerActivations, LayerShape};
use super::manifest::{FrameInfo, Pose, Threshold, WorldManifest};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticWorldConfig {
    pub seed: u64,
    pub places: usize,
    pub traversals: usize,
    /// Distance between consecutive places, in meters.
    pub step_m: f64,
    /// Scale of the per-traversal, per-neuron appearance offset.
    pub appearance_scale: f64,
    /// Scale of the per-frame Gaussian noise.
    pub noise_scale: f64,
    pub layers: usize,
    pub neurons_per_layer: usize,
    pub samples: usize,
    pub latent_dim: usize,
    /// Correlation between latents of consecutive places.
    pub place_correlation: f64,
    pub threshold: Threshold,
}

impl Default for SyntheticWorldConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            places: 200,
            traversals: 2,
            step_m: 10.0,
            appearance_scale: 1.0,
            noise_scale: 0.1,
            layers: 12,
            neurons_per_layer: 8,
            samples: 32,
            latent_dim: 8,
            place_correlation: 0.6,
            threshold: Threshold::Meters(25.0),
        }
    }
}

impl SyntheticWorldConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("places", self.places),
            ("traversals", self.traversals),
            ("layers", self.layers),
            ("neurons_per_layer", self.neurons_per_layer),
            ("samples", self.samples),
            ("latent_dim", self.latent_dim),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be >= 1")));
        }
        let scales =
            [("step_m", self.step_m), ("appearance_scale", self.appearance_scale), ("noise_scale", self.noise_scale)];
        if let Some((name, _)) = scales.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config(format!("{name} must be finite and >= 0")));
        }
        if !(0.0..1.0).contains(&self.place_correlation) {
            return Err(Error::Config("place_correlation must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn shapes(&self) -> Vec<LayerShape> {
        (1..=self.layers as u32)
            .map(|index| LayerShape { index, neurons: self.neurons_per_layer, samples: self.samples })
            .collect()
    }
}

/// Frame generator for a synthetic world. Every frame is a pure function of
/// the config and the frame index, so frames can be produced in any order
/// or in parallel.
#[derive(Clone, Debug)]
pub struct SyntheticWorld {
    config: SyntheticWorldConfig,
    place_latents: Vec<Vec<f64>>,
    neuron_weights: Vec<Vec<f64>>,
    sample_offsets: Vec<Vec<f64>>,
    appearance: Vec<Vec<f64>>,
    place_gain: Vec<f64>,
    appearance_gain: Vec<f64>,
}

const TAG_PLACES: u64 = 1;
const TAG_NEURONS: u64 = 2;
const TAG_APPEARANCE: u64 = 3;
const TAG_NOISE: u64 = 4;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(splitmix(seed ^ splitmix(tag)) ^ index))
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn generate_world(config: &SyntheticWorldConfig) -> Result<(WorldManifest, SyntheticWorld)> {
    config.validate()?;
    let c = config;
    let d = c.latent_dim;

    let mut rng = stream(c.seed, TAG_PLACES, 0);
    let rho = c.place_correlation;
    let innovation = (1.0 - rho * rho).sqrt();
    let mut place_latents: Vec<Vec<f64>> = Vec::with_capacity(c.places);
    for p in 0..c.places {
        let fresh: Vec<f64> = (0..d).map(|_| gaussian(&mut rng)).collect();
        let z = if p == 0 {
            fresh
        } else {
            place_latents[p - 1].iter().zip(&fresh).map(|(prev, e)| rho * prev + innovation * e).collect()
        };
        place_latents.push(z);
    }

    let n = c.layers * c.neurons_per_layer;
    let mut neuron_weights = Vec::with_capacity(n);
    let mut sample_offsets = Vec::with_capacity(n);
    for i in 0..n {
        let mut r = stream(c.seed, TAG_NEURONS, i as u64);
        let w: Vec<f64> = (0..d).map(|_| 1.5 * gaussian(&mut r) / (d as f64).sqrt()).collect();
        let spread = r.random_range(0.5..1.5);
        let shift = 0.3 * gaussian(&mut r);
        let offsets = (0..c.samples)
            .map(|s| {
                let u = if c.samples == 1 { 0.0 } else { 2.0 * s as f64 / (c.samples - 1) as f64 - 1.0 };
                shift + spread * u
            })
            .collect();
        neuron_weights.push(w);
        sample_offsets.push(offsets);
    }

    let appearance = (0..c.traversals)
        .map(|t| {
            let mut r = stream(c.seed, TAG_APPEARANCE, t as u64);
            (0..n).map(|_| gaussian(&mut r)).collect()
        })
        .collect();

    let depth = |l: usize| if c.layers == 1 { 1.0 } else { l as f64 / (c.layers - 1) as f64 };
    let place_gain = (0..c.layers).map(depth).collect();
    let appearance_gain = (0..c.layers).map(|l| 1.0 - depth(l)).collect();

    let mut frames = Vec::with_capacity(c.places * c.traversals);
    for t in 0..c.traversals {
        for p in 0..c.places {
            frames.push(FrameInfo {
                frame_id: frame_id(t, p),
                traversal_id: format!("t{t}"),
                pose: place_pose(c, p),
                timestamp: p as f64,
            });
        }
    }
    let manifest = WorldManifest::new(frames, c.threshold, "synthetic")?;
    let world = SyntheticWorld {
        config: c.clone(),
        place_latents,
        neuron_weights,
        sample_offsets,
        appearance,
        place_gain,
        appearance_gain,
    };
    Ok((manifest, world))
}

fn frame_id(traversal: usize, place: usize) -> String {
    format!("t{traversal}_p{place:05}")
}

fn place_pose(c: &SyntheticWorldConfig, place: usize) -> Pose {
    let x = place as f64 * c.step_m;
    Pose::new(x, 20.0 * (x / 400.0).sin())
}

impl SyntheticWorld {
    pub fn config(&self) -> &SyntheticWorldConfig {
        &self.config
    }

    pub fn shapes(&self) -> Vec<LayerShape> {
        self.config.shapes()
    }

    pub fn frame_count(&self) -> usize {
        self.config.places * self.config.traversals
    }

    /// Frames are numbered traversal-major: `index = traversal · places + place`.
    pub fn frame(&self, index: usize) -> ActivationFrame {
        let c = &self.config;
        assert!(index < self.frame_count(), "frame {index} out of range");
        let (t, p) = (index / c.places, index % c.places);
        let z = &self.place_latents[p];
        let mut noise = stream(c.seed, TAG_NOISE, index as u64);
        let mut layers = Vec::with_capacity(c.layers);
        for l in 0..c.layers {
            let mut values = Vec::with_capacity(c.neurons_per_layer * c.samples);
            for k in 0..c.neurons_per_layer {
                let i = l * c.neurons_per_layer + k;
                let proj: f64 = self.neuron_weights[i].iter().zip(z).map(|(w, z)| w * z).sum();
                let offset = self.appearance_gain[l] * c.appearance_scale * self.appearance[t][i];
                for s in 0..c.samples {
                    let place = self.place_gain[l] * (proj + self.sample_offsets[i][s]).tanh();
                    let eps = c.noise_scale * gaussian(&mut noise);
                    values.push((place + offset + eps) as f32);
                }
            }
            layers.push(LayerActivations { neurons: c.neurons_per_layer, samples: c.samples, values });
        }
        ActivationFrame { frame_id: frame_id(t, p), layers }
    }

    pub fn frames(&self) -> impl ExactSizeIterator<Item = ActivationFrame> + '_ {
        (0..self.frame_count()).map(move |i| self.frame(i))
    }
}
