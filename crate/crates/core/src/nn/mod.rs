//! The shared model: an MLP feature extractor with LayerNorm and a private
//! linear classification head, plus optimizers and local training.

mod checkpoint;
mod client;
mod model;
mod optim;
mod params;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointLayout};
pub use client::{evaluate, ClientState, OptimSettings, OptimizerKind, TrainPlan};
pub use model::{
    argmax_rows, backward, forward, loss_and_grads, predict_logits, softmax_cross_entropy, ForwardCache,
    Gradients, ParamGroup, LN_EPS,
};
pub use optim::{Adam, AdamConfig, SgdMomentum};
pub use params::{init_model, ExtractorParams, HeadParams, ModelDims, EMBED, HIDDEN};
