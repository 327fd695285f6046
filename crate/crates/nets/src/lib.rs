//! Neural architectures: TF-GridNet at two scales, the channel-wise-subband
//! wrapper for 48 kHz restoration, and the MPD/MRD/MBD discriminator family.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod audit;
pub mod bundle;
pub mod cws_net;
pub mod disc;
pub mod gridnet;

pub use audit::{bundle_macs_per_second, bundle_param_count, AuditReport};
pub use bundle::ModelBundle;
pub use cws_net::CwsTfGridNet;
pub use disc::{DiscConfig, DiscriminatorOutput, Mbd, Mpd, Mrd};
pub use gridnet::{NetInit, TfGridNet};

#[derive(Error, Debug)]
pub enum NetError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported sampling rate: {0} Hz ({1})")]
    UnsupportedRate(u32, String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Grad(#[from] trident_autograd::GradError),
}

pub type Result<T> = std::result::Result<T, NetError>;

/// TF-GridNet hyperparameters (Table-1 style tuple).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridNetConfig {
    /// D: embedding dimension
    pub emb_dim: usize,
    /// B: block count
    pub blocks: usize,
    /// I: unfold kernel
    pub kernel: usize,
    /// J: unfold stride
    pub stride: usize,
    /// H: LSTM hidden units per direction
    pub hidden: usize,
    /// E: attention output channels for the query/key projections
    pub attn_channels: usize,
    /// L: attention heads
    pub heads: usize,
}

impl GridNetConfig {
    /// Small preset: D=48, B=5, I=4, J=1, H=100, E=2, L=4.
    pub fn preset_s() -> Self {
        Self {
            emb_dim: 48,
            blocks: 5,
            kernel: 4,
            stride: 1,
            hidden: 100,
            attn_channels: 2,
            heads: 4,
        }
    }

    /// Large preset: everything doubled except the unfold kernel/stride.
    pub fn preset_l() -> Self {
        Self {
            emb_dim: 96,
            blocks: 10,
            kernel: 4,
            stride: 1,
            hidden: 200,
            attn_channels: 4,
            heads: 8,
        }
    }

    /// Tiny config for smoke tests and toy training.
    pub fn tiny() -> Self {
        Self {
            emb_dim: 8,
            blocks: 1,
            kernel: 4,
            stride: 1,
            hidden: 12,
            attn_channels: 2,
            heads: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [
            self.emb_dim,
            self.blocks,
            self.kernel,
            self.stride,
            self.hidden,
            self.attn_channels,
            self.heads,
        ];
        if pos.iter().any(|v| *v == 0) {
            return Err(NetError::InvalidArgument(
                "all hyperparameters must be positive".into(),
            ));
        }
        if self.kernel < self.stride {
            return Err(NetError::InvalidArgument(
                "unfold kernel must be >= stride".into(),
            ));
        }
        if self.emb_dim % self.heads != 0 {
            return Err(NetError::InvalidArgument(
                "embedding dimension must divide evenly across attention heads".into(),
            ));
        }
        Ok(())
    }
}
