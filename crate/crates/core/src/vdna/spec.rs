use std::fmt;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 500;
pub const DEFAULT_EXPANSION: f64 = 0.01;

const TEXT_HEADER: &str = "# vdna histogram spec v1";

/// 16-byte content hash of a [`HistogramSpec`].
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct SpecId(pub [u8; 16]);

impl fmt::Display for SpecId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for SpecId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SpecId({self})")
    }
}

impl FromStr for SpecId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let raw = hex::decode(s.trim()).map_err(|e| Error::Config(format!("bad spec id {s:?}: {e}")))?;
        let bytes: [u8; 16] = raw.try_into().map_err(|_| Error::Config(format!("spec id {s:?} is not 16 bytes")))?;
        Ok(SpecId(bytes))
    }
}

/// One backbone layer: its (1-based, as reported by the backbone) index and
/// how many neurons it contributes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LayerInfo {
    pub index: u32,
    pub neurons: usize,
}

impl LayerInfo {
    pub fn new(index: u32, neurons: usize) -> Self {
        Self { index, neurons }
    }

    /// `count` layers of `neurons` each, indexed from 1.
    pub fn uniform(count: usize, neurons: usize) -> Vec<LayerInfo> {
        (1..=count as u32).map(|i| LayerInfo::new(i, neurons)).collect()
    }
}

/// Anything that can hand out the activation values of each neuron for a
/// single image.
pub trait ImageActivations {
    fn neuron_count(&self) -> usize;
    fn neuron_values(&self, neuron: usize) -> &[f32];
}

impl ImageActivations for Vec<Vec<f32>> {
    fn neuron_count(&self) -> usize {
        self.len()
    }

    fn neuron_values(&self, neuron: usize) -> &[f32] {
        &self[neuron]
    }
}

impl ImageActivations for [Vec<f32>] {
    fn neuron_count(&self) -> usize {
        self.len()
    }

    fn neuron_values(&self, neuron: usize) -> &[f32] {
        &self[neuron]
    }
}

/// Backbone topology plus per-neuron histogram bounds. Every VDNA carries
/// the id of the spec it was built with, and all cross-VDNA operations
/// require matching ids.
#[derive(Clone, Debug, PartialEq)]
pub struct HistogramSpec {
    layers: Vec<LayerInfo>,
    bins: usize,
    ranges: Vec<(f64, f64)>,
    widths: Vec<f64>,
    id: SpecId,
}

impl HistogramSpec {
    pub fn new(layers: Vec<LayerInfo>, bins: usize, ranges: Vec<(f64, f64)>) -> Result<Self> {
        if bins < 2 {
            return Err(Error::Config(format!("bins per neuron must be >= 2, got {bins}")));
        }
        if layers.is_empty() {
            return Err(Error::Config("topology has no layers".into()));
        }
        if let Some(l) = layers.iter().find(|l| l.neurons == 0) {
            return Err(Error::Config(format!("layer {} has no neurons", l.index)));
        }
        for (i, a) in layers.iter().enumerate() {
            if layers[..i].iter().any(|b| b.index == a.index) {
                return Err(Error::Config(format!("duplicate layer index {}", a.index)));
            }
        }
        let n: usize = layers.iter().map(|l| l.neurons).sum();
        if ranges.len() != n {
            return Err(Error::shape(format!("{} ranges for {n} neurons", ranges.len())));
        }
        for (i, &(lo, hi)) in ranges.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!("neuron {i}: range ({lo}, {hi}) must be finite with low < high")));
            }
        }
        let widths = ranges.iter().map(|&(lo, hi)| (hi - lo) / bins as f64).collect();
        let id = compute_id(&layers, bins, &ranges);
        Ok(Self { layers, bins, ranges, widths, id })
    }

    /// Same range for every neuron.
    pub fn with_uniform_range(layers: Vec<LayerInfo>, bins: usize, low: f64, high: f64) -> Result<Self> {
        let n = layers.iter().map(|l| l.neurons).sum();
        Self::new(layers, bins, vec![(low, high); n])
    }

    pub fn id(&self) -> SpecId {
        self.id
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn layers(&self) -> &[LayerInfo] {
        &self.layers
    }

    pub fn neuron_count(&self) -> usize {
        self.ranges.len()
    }

    pub fn range(&self, neuron: usize) -> (f64, f64) {
        self.ranges[neuron]
    }

    pub fn ranges(&self) -> &[(f64, f64)] {
        &self.ranges
    }

    pub fn bin_width(&self, neuron: usize) -> f64 {
        self.widths[neuron]
    }

    /// Dense neuron indices belonging to the layer with the given index.
    pub fn layer_neurons(&self, layer_index: u32) -> Option<Range<usize>> {
        neuron_range(&self.layers, layer_index)
    }

    /// Half-open bins with the last bin closed; out-of-range values clamp
    /// into the edge bins. `value` must not be NaN.
    #[inline]
    pub fn bin_index(&self, neuron: usize, value: f64) -> usize {
        let (lo, hi) = self.ranges[neuron];
        if value <= lo {
            return 0;
        }
        if value >= hi {
            return self.bins - 1;
        }
        let k = ((value - lo) / self.widths[neuron]) as usize;
        k.min(self.bins - 1)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(TEXT_HEADER);
        out.push('\n');
        out.push_str(&format!("spec_id {}\n", self.id));
        out.push_str(&format!("bins {}\n", self.bins));
        out.push_str(&format!("layers {}\n", self.layers.len()));
        for l in &self.layers {
            out.push_str(&format!("layer {} {}\n", l.index, l.neurons));
        }
        out.push_str(&format!("ranges {}\n", self.ranges.len()));
        for (lo, hi) in &self.ranges {
            out.push_str(&format!("{lo:?} {hi:?}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let bad =
            |line: usize, msg: &str| Error::format(line as u64 + 1, format!("spec text line {}: {msg}", line + 1));
        let mut next = |what: &str| lines.next().ok_or_else(|| bad(usize::MAX - 1, &format!("missing {what}")));

        let (ln, header) = next("header")?;
        if header.trim() != TEXT_HEADER {
            return Err(bad(ln, "unrecognized header"));
        }
        let keyed = |(ln, line): (usize, &str), key: &str| -> Result<String> {
            let mut it = line.split_whitespace();
            if it.next() != Some(key) {
                return Err(bad(ln, &format!("expected `{key}`")));
            }
            Ok(it.collect::<Vec<_>>().join(" "))
        };
        let stored_id: SpecId = keyed(next("spec_id")?, "spec_id")?.parse()?;
        let bins: usize = keyed(next("bins")?, "bins")?.parse().map_err(|_| bad(0, "bad bins"))?;
        let layer_count: usize = keyed(next("layers")?, "layers")?.parse().map_err(|_| bad(0, "bad layer count"))?;
        let mut layers = Vec::with_capacity(layer_count);
        for _ in 0..layer_count {
            let entry = next("layer")?;
            let ln = entry.0;
            let rest = keyed(entry, "layer")?;
            let mut f = rest.split_whitespace();
            let index = f.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad(ln, "bad layer index"))?;
            let neurons = f.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad(ln, "bad neuron count"))?;
            layers.push(LayerInfo { index, neurons });
        }
        let n: usize = keyed(next("ranges")?, "ranges")?.parse().map_err(|_| bad(0, "bad range count"))?;
        let mut ranges = Vec::with_capacity(n);
        for _ in 0..n {
            let (ln, line) = next("range")?;
            let mut f = line.split_whitespace();
            let lo: f64 = f.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad(ln, "bad range low"))?;
            let hi: f64 = f.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad(ln, "bad range high"))?;
            ranges.push((lo, hi));
        }
        let spec = HistogramSpec::new(layers, bins, ranges)?;
        if spec.id != stored_id {
            return Err(Error::format(0, format!("spec_id {stored_id} does not match content hash {}", spec.id)));
        }
        Ok(spec)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

pub(crate) fn neuron_range(layers: &[LayerInfo], layer_index: u32) -> Option<Range<usize>> {
    let mut start = 0;
    for l in layers {
        if l.index == layer_index {
            return Some(start..start + l.neurons);
        }
        start += l.neurons;
    }
    None
}

fn compute_id(layers: &[LayerInfo], bins: usize, ranges: &[(f64, f64)]) -> SpecId {
    let mut h = Sha256::new();
    h.update(b"vdna-spec-v1");
    h.update((bins as u64).to_le_bytes());
    h.update((layers.len() as u64).to_le_bytes());
    for l in layers {
        h.update(l.index.to_le_bytes());
        h.update((l.neurons as u64).to_le_bytes());
    }
    for (lo, hi) in ranges {
        h.update(lo.to_bits().to_le_bytes());
        h.update(hi.to_bits().to_le_bytes());
    }
    let digest = h.finalize();
    let mut id = [0u8; 16];
    id.copy_from_slice(&digest[..16]);
    SpecId(id)
}

/// Derives per-neuron bin ranges from the min/max over a calibration set,
/// widened on both sides by `expansion × (max − min)`. A neuron that only
/// ever took one value `v` gets the range `(v − 1, v + 1)`.
pub fn calibrate_spec<I, A>(source: I, layers: &[LayerInfo], bins: usize, expansion: f64) -> Result<HistogramSpec>
where
    I: IntoIterator<Item = A>,
    A: ImageActivations,
{
    if !(expansion.is_finite() && expansion >= 0.0) {
        return Err(Error::Config(format!("expansion must be finite and >= 0, got {expansion}")));
    }
    let n: usize = layers.iter().map(|l| l.neurons).sum();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    let mut images = 0usize;
    for image in source {
        if image.neuron_count() != n {
            return Err(Error::shape(format!(
                "image {images} has {} neurons, topology declares {n}",
                image.neuron_count()
            )));
        }
        for neuron in 0..n {
            let values = image.neuron_values(neuron);
            if values.is_empty() {
                return Err(Error::shape(format!("image {images} has no values for neuron {neuron}")));
            }
            for &v in values {
                if !v.is_finite() {
                    return Err(Error::InvalidActivation { neuron, image: images });
                }
                let v = v as f64;
                lo[neuron] = lo[neuron].min(v);
                hi[neuron] = hi[neuron].max(v);
            }
        }
        images += 1;
    }
    if images == 0 {
        return Err(Error::CalibrationEmpty);
    }
    let ranges = lo
        .into_iter()
        .zip(hi)
        .map(|(min, max)| {
            if min == max {
                (min - 1.0, max + 1.0)
            } else {
                let pad = expansion * (max - min);
                (min - pad, max + pad)
            }
        })
        .collect();
    HistogramSpec::new(layers.to_vec(), bins, ranges)
}
