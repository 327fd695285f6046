//! Sampling-frequency-independent time-frequency transforms, resampling,
//! channel-wise subband split/merge, and WAV file I/O.
//!
//! Everything in this crate is a pure function: no globals, no interior
//! mutability, safe to call concurrently on distinct inputs.

use thiserror::Error;

pub mod cws;
pub mod mel;
pub mod resample;
pub mod stft;
pub mod wav;

pub use cws::{cws_merge, cws_split, SubbandStack};
pub use resample::{resample, resample_arbitrary, resample_to_len};
pub use stft::{istft, stft, ComplexSpectrogram, StftConfig};
pub use wav::{read_wav, write_wav, SampleFormat};

/// Sampling frequencies the toolkit accepts, in Hz.
pub const SUPPORTED_RATES: [u32; 7] = [8000, 16000, 22050, 24000, 32000, 44100, 48000];

/// The fixed operating rate of the restoration stage.
pub const FULLBAND_RATE: u32 = 48000;

pub fn is_supported_rate(fs: u32) -> bool {
    SUPPORTED_RATES.contains(&fs)
}

#[derive(Error, Debug)]
pub enum DspError {
    #[error("unsupported sampling rate: {0} Hz")]
    UnsupportedRate(u32),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
}

pub type Result<T> = std::result::Result<T, DspError>;

/// A finite, mono waveform tagged with its sampling frequency.
///
/// Samples are nominally in [-1, 1] but the type does not clamp; it only
/// rejects non-finite values and unsupported rates.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    fs: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, fs: u32) -> Result<Self> {
        if !is_supported_rate(fs) {
            return Err(DspError::UnsupportedRate(fs));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(DspError::NonFinite(i));
        }
        Ok(Self { samples, fs })
    }

    /// All-zero waveform of `len` samples.
    pub fn silence(len: usize, fs: u32) -> Result<Self> {
        Self::new(vec![0.0; len], fs)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn fs(&self) -> u32 {
        self.fs
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.fs as f64
    }

    /// Mean squared sample value.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }

    /// Sum of squared samples.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()))
    }

    /// Consumes the waveform and returns its sample buffer.
    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    /// Maps the sample buffer through `f`, revalidating finiteness.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.samples.iter().map(|s| f(*s)).collect(), self.fs)
    }
}

/// Relative L2 distance ||a - b|| / ||a||, with an exact-zero special case.
pub fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "rel_l2 length mismatch");
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = a.iter().map(|x| x * x).sum();
    if den == 0.0 {
        return if num == 0.0 { 0.0 } else { f64::INFINITY };
    }
    (num / den).sqrt()
}
