//! Place recognition from per-neuron activation histograms.
//!
//! The pipeline turns a sequence of images into a VDNA (one activation
//! histogram per neuron of a frozen backbone), encodes every normalized
//! histogram with a small shared 1D CNN, and concatenates the per-neuron
//! embeddings into a descriptor that is compared with plain L2 distance.
//!
//! Modules:
//! - [`vdna`]: histogram specs, accumulation, merging, normalization, EMD.
//! - [`activation`]: activation ingestion format, manifests, sequence
//!   windows and a deterministic synthetic world.
//! - [`nn`]: a small reverse-mode autodiff stack, AdamW and checkpoints.
//! - [`encoder`]: the histogram encoder, descriptor assembly and the
//!   triplet-mining training loop.
//! - [`retrieval`]: descriptor databases, exact kNN and Recall@N.
//! - [`sequences`]: glue that turns activation streams into per-sequence
//!   VDNAs and experiment splits.

pub mod activation;
mod binio;
pub mod encoder;
pub mod error;
pub mod nn;
pub mod retrieval;
pub mod sequences;
pub mod vdna;

pub use activation::{
    generate_world, window_sequences, ActivationFrame, LayerShape, Pose, SequenceRecord, SyntheticWorld,
    SyntheticWorldConfig, Threshold, WorldManifest,
};

pub use encoder::{
    mine_and_train, Descriptor, DescriptorKind, EncoderConfig, EncoderParams, MiningCacheConfig, NeuronSelection,
    TrainConfig, TrainSet,
};
pub use error::{Error, Result};
pub use retrieval::{knn, recall_at_n, DescriptorDb, EvalReport};
pub use sequences::LabeledSequence;

pub use vdna::{calibrate_spec, emd_neuron, emd_vdna, HistogramSpec, LayerInfo, NormalizedVdna, SpecId, Vdna};
