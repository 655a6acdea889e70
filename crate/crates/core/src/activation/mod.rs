//! Getting activations into the pipeline: the `VACT` dump format for real
//! backbones, world manifests with ground-truth poses, sequence windowing,
//! and a deterministic synthetic world for desk-scale experiments.

mod frame;
mod manifest;
mod synth;
mod vact;
mod window;

pub use frame::{ActivationFrame, LayerActivations, LayerShape, DEFAULT_SAMPLE_CAP};
pub use manifest::{FrameInfo, Pose, Threshold, WorldManifest};
pub use synth::{generate_world, SyntheticWorld, SyntheticWorldConfig};
pub use vact::{
    read_activation_file, write_activation_file, ActivationReader, ActivationWriter, VACT_MAGIC, VACT_VERSION,
};
pub use window::{window_sequences, SequenceRecord, Windowing};
