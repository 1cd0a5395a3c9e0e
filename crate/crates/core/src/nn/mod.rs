//! From-scratch dense regression networks: masked forward/backward passes,
//! Adam, a deterministic mini-batch trainer and JSON checkpoints.

mod checkpoint;
mod model;
mod optim;

pub use checkpoint::CHECKPOINT_FORMAT;
pub use model::{
    five_layer, hidden_stack, two_layer, validate_specs, Activation, BackwardTrace, ForwardTrace,
    LayerSpec, LossReduction, Mlp,
};
pub use optim::{adam_step, train, AdamState, TrainConfig, TrainOutcome};
