//! VDNAs: one activation histogram per neuron, accumulated over a set of
//! images, plus the Earth Mover's Distance used to compare them.

mod emd;
mod histogram;
mod io;
mod spec;

pub use emd::{emd_neuron, emd_vdna};
pub use histogram::{BinnedImage, NormalizedVdna, Vdna};
pub use io::{load_vdna, read_vdna, save_vdna, write_vdna, VDNA_MAGIC, VDNA_VERSION};
pub(crate) use spec::neuron_range;
pub use spec::{calibrate_spec, HistogramSpec, ImageActivations, LayerInfo, SpecId, DEFAULT_BINS, DEFAULT_EXPANSION};
