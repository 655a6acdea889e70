use std::fmt;
use std::str::FromStr;

use super::params::EncoderParams;
use crate::error::{Error, Result};
use crate::nn::ops;
use crate::vdna::{neuron_range, LayerInfo, NormalizedVdna};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DescriptorKind {
    /// Output of the linear head, length `d`.
    WOutput,
    /// Concatenated per-neuron embeddings, length `h · |selection|`.
    NeuronConcat,
}

impl DescriptorKind {
    pub fn code(self) -> u8 {
        match self {
            DescriptorKind::WOutput => 1,
            DescriptorKind::NeuronConcat => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(DescriptorKind::WOutput),
            2 => Some(DescriptorKind::NeuronConcat),
            _ => None,
        }
    }
}

impl fmt::Display for DescriptorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DescriptorKind::WOutput => "w-output",
            DescriptorKind::NeuronConcat => "neuron-concat",
        })
    }
}

impl FromStr for DescriptorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "w-output" | "w" => Ok(DescriptorKind::WOutput),
            "neuron-concat" | "concat" => Ok(DescriptorKind::NeuronConcat),
            _ => Err(Error::Config(format!("unknown descriptor kind {s:?} (expected w-output or neuron-concat)"))),
        }
    }
}

/// Which neurons contribute blocks to a neuron-concat descriptor.
///
/// Text form: `all`, `layers:11,12`, `range:10:12` (inclusive) or
/// `neurons:0,5,9`.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub enum NeuronSelection {
    #[default]
    All,
    Layers(Vec<u32>),
    LayerRange {
        first: u32,
        last: u32,
    },
    Neurons(Vec<usize>),
}

impl NeuronSelection {
    /// Neuron indices in ascending order. Duplicates are kept out; unknown
    /// layers or neurons and empty selections are errors.
    pub fn resolve(&self, layers: &[LayerInfo]) -> Result<Vec<usize>> {
        let total: usize = layers.iter().map(|l| l.neurons).sum();
        let layer =
            |idx: u32| neuron_range(layers, idx).ok_or_else(|| Error::Selection(format!("no layer with index {idx}")));
        let mut out: Vec<usize> = match self {
            NeuronSelection::All => (0..total).collect(),
            NeuronSelection::Layers(ids) => {
                let mut v = Vec::new();
                for &id in ids {
                    v.extend(layer(id)?);
                }
                v
            }
            NeuronSelection::LayerRange { first, last } => {
                if first > last {
                    return Err(Error::Selection(format!("empty layer range {first}:{last}")));
                }
                let mut v = Vec::new();
                for id in *first..=*last {
                    v.extend(layer(id)?);
                }
                v
            }
            NeuronSelection::Neurons(ids) => {
                if let Some(&bad) = ids.iter().find(|&&i| i >= total) {
                    return Err(Error::Selection(format!("neuron {bad} out of range (spec has {total})")));
                }
                ids.clone()
            }
        };
        out.sort_unstable();
        out.dedup();
        if out.is_empty() {
            return Err(Error::Selection("selection is empty".into()));
        }
        Ok(out)
    }
}

impl fmt::Display for NeuronSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn join<T: ToString>(v: &[T]) -> String {
            v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
        }
        match self {
            NeuronSelection::All => f.write_str("all"),
            NeuronSelection::Layers(ids) => write!(f, "layers:{}", join(ids)),
            NeuronSelection::LayerRange { first, last } => write!(f, "range:{first}:{last}"),
            NeuronSelection::Neurons(ids) => write!(f, "neurons:{}", join(ids)),
        }
    }
}

impl FromStr for NeuronSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        fn list<T: FromStr>(s: &str) -> Result<Vec<T>> {
            s.split(',')
                .filter(|p| !p.is_empty())
                .map(|p| p.trim().parse().map_err(|_| Error::Selection(format!("bad index {p:?}"))))
                .collect()
        }
        let s = s.trim();
        if s == "all" {
            return Ok(NeuronSelection::All);
        }
        let (kind, rest) = s.split_once(':').ok_or_else(|| Error::Selection(format!("bad selection {s:?}")))?;
        match kind {
            "layers" | "layer" => Ok(NeuronSelection::Layers(list(rest)?)),
            "neurons" => Ok(NeuronSelection::Neurons(list(rest)?)),
            "range" => {
                let (a, b) =
                    rest.split_once(':').ok_or_else(|| Error::Selection(format!("bad layer range {rest:?}")))?;
                let parse = |x: &str| x.parse().map_err(|_| Error::Selection(format!("bad layer range {rest:?}")));
                Ok(NeuronSelection::LayerRange { first: parse(a)?, last: parse(b)? })
            }
            _ => Err(Error::Selection(format!("bad selection {s:?}"))),
        }
    }
}

/// A sequence descriptor compared with plain L2 distance.
#[derive(Clone, Debug, PartialEq)]
pub struct Descriptor {
    pub values: Vec<f64>,
    pub kind: DescriptorKind,
    /// Neurons contributing blocks; `All` for W outputs.
    pub selection: NeuronSelection,
}

impl Descriptor {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Copies the `embed_dim` blocks of `neurons` out of a full concat.
    pub fn select_blocks(full: &[f64], embed_dim: usize, neurons: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(neurons.len() * embed_dim);
        for &i in neurons {
            out.extend_from_slice(&full[i * embed_dim..(i + 1) * embed_dim]);
        }
        out
    }
}

impl EncoderParams {
    /// Embeds one normalized histogram of length `b` into a unit `h`-vector.
    pub fn encode_histogram(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.config().bins {
            return Err(Error::shape(format!(
                "histogram has {} bins, encoder expects {}",
                row.len(),
                self.config().bins
            )));
        }
        self.encode_rows(row)
    }

    /// Embeddings of every neuron, concatenated in neuron order (`N · h`).
    pub fn embed_all(&self, v: &NormalizedVdna) -> Result<Vec<f64>> {
        if v.spec_id() != self.spec_id() {
            return Err(Error::SpecMismatch { expected: self.spec_id(), found: v.spec_id() });
        }
        if v.bins() != self.config().bins || v.neuron_count() != self.neuron_count() {
            return Err(Error::shape(format!(
                "VDNA is {}x{}, encoder expects {}x{}",
                v.neuron_count(),
                v.bins(),
                self.neuron_count(),
                self.config().bins
            )));
        }
        self.encode_rows(v.mass())
    }

    /// Neuron-concat descriptor for the selected neurons.
    pub fn encode_vdna(&self, v: &NormalizedVdna, selection: &NeuronSelection) -> Result<Descriptor> {
        if v.spec_id() != self.spec_id() {
            return Err(Error::SpecMismatch { expected: self.spec_id(), found: v.spec_id() });
        }
        let neurons = selection.resolve(self.layers())?;
        let h = self.config().embed_dim;
        let b = self.config().bins;
        let values = if neurons.len() == self.neuron_count() {
            self.embed_all(v)?
        } else {
            let mut rows = Vec::with_capacity(neurons.len() * b);
            for &i in &neurons {
                rows.extend_from_slice(v.row(i));
            }
            let e = self.encode_rows(&rows)?;
            debug_assert_eq!(e.len(), neurons.len() * h);
            e
        };
        Ok(Descriptor { values, kind: DescriptorKind::NeuronConcat, selection: selection.clone() })
    }

    /// `normalize(e · W)` for a full neuron-concat embedding `e`.
    pub fn project_w(&self, e: &[f64]) -> Result<Descriptor> {
        let head = self.head();
        let (rows, d) = (head.shape()[0], head.shape()[1]);
        if e.len() != rows {
            return Err(Error::shape(format!("W expects a length-{rows} embedding, got {}", e.len())));
        }
        let mut y = vec![0.0; d];
        ops::matmul_kernel(e, head.data(), 1, rows, d, &mut y);
        ops::l2_normalize_rows(&mut y, d);
        Ok(Descriptor { values: y, kind: DescriptorKind::WOutput, selection: NeuronSelection::All })
    }

    /// Descriptor of the requested kind. `selection` applies to
    /// neuron-concat only; W always sees every neuron.
    pub fn describe(
        &self,
        v: &NormalizedVdna,
        kind: DescriptorKind,
        selection: &NeuronSelection,
    ) -> Result<Descriptor> {
        match kind {
            DescriptorKind::NeuronConcat => self.encode_vdna(v, selection),
            DescriptorKind::WOutput => self.project_w(&self.embed_all(v)?),
        }
    }
}
