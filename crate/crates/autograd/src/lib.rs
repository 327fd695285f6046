//! Reverse-mode automatic differentiation on `ndarray` tensors.
//!
//! A [`Tape`] records the forward computation; [`Tape::backward`] walks it in
//! reverse and accumulates cotangents per node and per trainable variable.
//! Everything is generic over the float type so training runs in f32 while
//! gradient verification runs in f64.

use ndarray::NdFloat;
use num_traits::FromPrimitive;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub mod check;
pub mod ckpt;
pub mod nn;
pub mod optim;
pub mod signal;
pub mod tape;
pub mod var;

pub use tape::{Gradients, Tape, T};
pub use var::{Init, VarBuilder, VarId, VarStore};

#[derive(Error, Debug)]
pub enum GradError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GradError>;

/// Float element type usable on a tape.
pub trait Scalar: NdFloat + FromPrimitive + 'static {
    const DTYPE: &'static str;
    fn f(v: f64) -> Self;
    fn to64(self) -> f64;
    fn sample_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Self;
    fn sample_normal(rng: &mut ChaCha8Rng) -> Self;
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";
    fn f(v: f64) -> Self {
        v as f32
    }
    fn to64(self) -> f64 {
        self as f64
    }
    fn sample_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Self {
        use rand::Rng;
        rng.gen_range(lo..hi) as f32
    }
    fn sample_normal(rng: &mut ChaCha8Rng) -> Self {
        use rand::Rng;
        let v: f64 = rng.sample(rand_distr::StandardNormal);
        v as f32
    }
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";
    fn f(v: f64) -> Self {
        v
    }
    fn to64(self) -> f64 {
        self
    }
    fn sample_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Self {
        use rand::Rng;
        rng.gen_range(lo..hi)
    }
    fn sample_normal(rng: &mut ChaCha8Rng) -> Self {
        use rand::Rng;
        rng.sample(rand_distr::StandardNormal)
    }
}
