//! Trainable projector, losses, batch sampling and the iterative training loop.

pub mod ablation;
pub mod checkpoint;
mod hsr;
pub mod loss;
mod model;
mod sampler;

pub use hsr::{
    embed, initial_model, run_hsr, run_hsr_from, HsrRun, IterationRecord, TrainConfig, TripletMode,
};
pub use model::{
    sgd_step, ClassifierHead, ForwardCache, ProjectorGrads, ProjectorModel, DEFAULT_EMBEDDING_DIM,
};
pub use sampler::pk_sample;
