//! The histogram encoder: a shared 1D CNN mapping every normalized neuron
//! histogram to a short unit vector, the training-only linear head `W`,
//! descriptor assembly with neuron/layer selection, and the triplet-mining
//! training loop.

mod config;
mod descriptor;
mod forward;
mod params;
mod train;

pub use config::{ConvSpec, EncoderConfig};
pub use descriptor::{Descriptor, DescriptorKind, NeuronSelection};
pub use params::EncoderParams;
pub use train::{
    mine_and_train, triplet_gradients, CacheSchedule, MiningCacheConfig, RefreshLog, RefreshRecord, TrainConfig,
    TrainOutcome, TrainSet, Triplet, ValidationSplit,
};
