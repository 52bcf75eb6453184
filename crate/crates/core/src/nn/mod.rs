//! A small reverse-mode network core.
//!
//! Networks are fixed sequential stacks of dense, convolutional, pooling,
//! flatten and ReLU layers, followed by an implicit dense output layer whose
//! columns go through per-head activations. Parameters live in one flat
//! [`ParamStore`]; activations needed for the backward pass are kept in a
//! [`Tape`]. Image tensors are stored channel-last (HWC), one row per
//! example.

mod activation;
mod adam;
mod checkpoint;
mod layers;
mod network;
mod params;
mod spec;

pub use activation::{sigmoid, softplus, HeadActivation};
pub use adam::{clip_grad_norm, AdamConfig, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use network::{Network, Tape};
pub use params::{ParamStore, Segment, SegmentKind};
pub use spec::{
    build_cnn, build_cnn_2d, build_mlp, build_mlp_0d, mve_heads, nig_heads, HeadSpec, LayerSpec,
    NetworkSpec, Shape,
};
