//! Three-stage inference orchestration, stage-wise training loops, and the
//! objective evaluation harness.

use thiserror::Error;

pub mod evalkit;
pub mod pipeline;
pub mod trainer;

pub use pipeline::{
    detect_bandwidth_limited, enhance, run_fill, run_res, run_sep, BandwidthEstimate,
    EnhanceOutcome, EnhanceRequest, ResRoute, StageMask,
};
pub use trainer::{lr_at, FinetunePhase, TrainSchedule, TrainStage, Trainer, TrainerConfig};

#[derive(Error, Debug)]
pub enum RuntimeError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("training aborted: {0}")]
    TrainingAborted(String),
    #[error(transparent)]
    Dsp(#[from] trident_dsp::DspError),
    #[error(transparent)]
    Sim(#[from] trident_sim::SimError),
    #[error(transparent)]
    Net(#[from] trident_nets::NetError),
    #[error(transparent)]
    Loss(#[from] trident_losses::LossError),
    #[error(transparent)]
    Grad(#[from] trident_autograd::GradError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, RuntimeError>;
