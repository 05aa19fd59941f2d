//! The two-layer message-passing classifier, its gradients and optimizer, and
//! parameter surgery.

pub mod adam;
pub mod backprop;
pub mod model;
pub mod spectral;
pub mod surgery;
pub mod train;

pub use adam::{adam_step, AdamState};
pub use backprop::{loss_and_grads, loss_and_grads_with_mask, softmax_rows};
pub use model::{
    forward, init_params, sample_dropout_mask, ForwardOutputs, Gradients, ModelParams, Provenance,
    TrainConfig,
};
pub use spectral::{spectral_norm, spectral_norm_default};
pub use surgery::{perturb_params, prune_weights};
pub use train::{
    accuracy, evaluate, finetune, finetune_config, finetune_on, fit, objective_grads, train, Objective, TrainHistory,
};
