//! A small residual convolutional super-resolver with hand-written
//! forward/backward passes, L1 loss and Adam.

mod adam;
mod checkpoint;
mod conv;
mod layers;
mod network;
mod tensor;
mod train;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{checkpoint_paths, load_checkpoint, save_checkpoint, CheckpointManifest, LayerEntry};
pub use conv::{Conv2d, ConvGrads};
pub use layers::{l1_loss_backward, l1_loss_forward, relu_backward, relu_forward};
pub use network::{
    backward, forward, forward_with_cache, ForwardCache, NetworkParams, ResBlock, TensorSpec, DEFAULT_BLOCKS,
    DEFAULT_FEATURES,
};
pub use tensor::Tensor4;
pub use train::{evaluate, super_resolve, train, train_on, EpochLog, TrainConfig, TrainOutcome};
