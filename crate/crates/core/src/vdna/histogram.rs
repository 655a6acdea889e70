use super::spec::{HistogramSpec, ImageActivations, SpecId};
use crate::error::{Error, Result};

/// Per-neuron activation counts over a set of images.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vdna {
    spec_id: SpecId,
    neurons: usize,
    bins: usize,
    counts: Vec<u64>,
    image_count: u64,
}

/// One image already mapped onto bin indices, ready to be added to any
/// number of VDNAs built with the same spec.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinnedImage {
    spec_id: SpecId,
    offsets: Vec<usize>,
    bins: Vec<u32>,
}

impl BinnedImage {
    pub fn new(image: &(impl ImageActivations + ?Sized), spec: &HistogramSpec, image_index: usize) -> Result<Self> {
        let n = spec.neuron_count();
        if image.neuron_count() != n {
            return Err(Error::shape(format!("image provides {} neurons, spec declares {n}", image.neuron_count())));
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let total: usize = (0..n).map(|i| image.neuron_values(i).len()).sum();
        let mut bins = Vec::with_capacity(total);
        for neuron in 0..n {
            for &v in image.neuron_values(neuron) {
                if v.is_nan() {
                    return Err(Error::InvalidActivation { neuron, image: image_index });
                }
                bins.push(spec.bin_index(neuron, v as f64) as u32);
            }
            offsets.push(bins.len());
        }
        Ok(Self { spec_id: spec.id(), offsets, bins })
    }

    pub fn spec_id(&self) -> SpecId {
        self.spec_id
    }

    pub fn neuron_bins(&self, neuron: usize) -> &[u32] {
        &self.bins[self.offsets[neuron]..self.offsets[neuron + 1]]
    }
}

impl Vdna {
    pub fn empty(spec: &HistogramSpec) -> Self {
        let (neurons, bins) = (spec.neuron_count(), spec.bins());
        Self { spec_id: spec.id(), neurons, bins, counts: vec![0; neurons * bins], image_count: 0 }
    }

    /// Rebuilds a VDNA from raw parts, checking the count/image invariants.
    pub fn from_parts(
        spec_id: SpecId,
        neurons: usize,
        bins: usize,
        counts: Vec<u64>,
        image_count: u64,
    ) -> Result<Self> {
        if counts.len() != neurons * bins {
            return Err(Error::shape(format!("{} counts for {neurons}x{bins} histogram", counts.len())));
        }
        let any = counts.iter().any(|&c| c > 0);
        if any != (image_count > 0) {
            return Err(Error::shape(format!(
                "image count {image_count} is inconsistent with {} counts",
                if any { "non-zero" } else { "all-zero" }
            )));
        }
        Ok(Self { spec_id, neurons, bins, counts, image_count })
    }

    pub fn spec_id(&self) -> SpecId {
        self.spec_id
    }

    pub fn neuron_count(&self) -> usize {
        self.neurons
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    /// Number of images accumulated (L).
    pub fn image_count(&self) -> u64 {
        self.image_count
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn row(&self, neuron: usize) -> &[u64] {
        &self.counts[neuron * self.bins..(neuron + 1) * self.bins]
    }

    /// Total values inserted for one neuron.
    pub fn sample_count(&self, neuron: usize) -> u64 {
        self.row(neuron).iter().sum()
    }

    fn check_spec(&self, other: SpecId) -> Result<()> {
        if self.spec_id != other {
            return Err(Error::SpecMismatch { expected: self.spec_id, found: other });
        }
        Ok(())
    }

    /// Adds one image. Nothing is modified when the image is rejected.
    pub fn accumulate(&mut self, image: &(impl ImageActivations + ?Sized), spec: &HistogramSpec) -> Result<()> {
        self.check_spec(spec.id())?;
        let binned = BinnedImage::new(image, spec, self.image_count as usize)?;
        self.insert_binned(&binned)
    }

    pub fn insert_binned(&mut self, image: &BinnedImage) -> Result<()> {
        self.check_spec(image.spec_id)?;
        for neuron in 0..self.neurons {
            let row = &mut self.counts[neuron * self.bins..(neuron + 1) * self.bins];
            for &b in image.neuron_bins(neuron) {
                row[b as usize] += 1;
            }
        }
        self.image_count += 1;
        Ok(())
    }

    pub fn merge(&self, other: &Vdna) -> Result<Vdna> {
        let mut out = self.clone();
        out.merge_in(other)?;
        Ok(out)
    }

    pub fn merge_in(&mut self, other: &Vdna) -> Result<()> {
        self.check_spec(other.spec_id)?;
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.image_count += other.image_count;
        Ok(())
    }

    /// Divides every row by its sum. All-zero rows become uniform `1/b`
    /// and are flagged empty.
    pub fn normalize(&self) -> NormalizedVdna {
        let b = self.bins;
        let mut mass = Vec::with_capacity(self.counts.len());
        let mut empty = Vec::with_capacity(self.neurons);
        for row in self.counts.chunks_exact(b) {
            let total: u64 = row.iter().sum();
            if total == 0 {
                empty.push(true);
                mass.extend(std::iter::repeat_n(1.0 / b as f64, b));
            } else {
                empty.push(false);
                let t = total as f64;
                mass.extend(row.iter().map(|&c| c as f64 / t));
            }
        }
        NormalizedVdna { spec_id: self.spec_id, neurons: self.neurons, bins: b, mass, empty }
    }
}

/// Row-stochastic version of a [`Vdna`]: what the encoder consumes.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedVdna {
    spec_id: SpecId,
    neurons: usize,
    bins: usize,
    mass: Vec<f64>,
    empty: Vec<bool>,
}

impl NormalizedVdna {
    /// Builds from explicit mass rows; each row must be non-negative and
    /// sum to 1 within 1e-9.
    pub fn from_mass(spec_id: SpecId, bins: usize, mass: Vec<f64>) -> Result<Self> {
        if bins == 0 || !mass.len().is_multiple_of(bins) {
            return Err(Error::shape(format!("{} mass values is not a multiple of {bins} bins", mass.len())));
        }
        for (i, row) in mass.chunks_exact(bins).enumerate() {
            let s: f64 = row.iter().sum();
            if row.iter().any(|&m| !(m >= 0.0)) || (s - 1.0).abs() > 1e-9 {
                return Err(Error::shape(format!("row {i} is not a probability vector (sum {s})")));
            }
        }
        let neurons = mass.len() / bins;
        Ok(Self { spec_id, neurons, bins, mass, empty: vec![false; neurons] })
    }

    pub fn spec_id(&self) -> SpecId {
        self.spec_id
    }

    pub fn neuron_count(&self) -> usize {
        self.neurons
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn row(&self, neuron: usize) -> &[f64] {
        &self.mass[neuron * self.bins..(neuron + 1) * self.bins]
    }

    pub fn is_empty_row(&self, neuron: usize) -> bool {
        self.empty[neuron]
    }
}
