//! Channel-wise subband split and merge for 48 kHz fullband spectrograms.
//!
//! The fullband one-sided spectrum is cut into three contiguous bands of
//! equal width (0-8, 8-16, 16-24 kHz); the Nyquist bin goes to the top band.
//! Merging concatenates the bands back along frequency, bit-exactly.

use ndarray::{s, Array2};
use num_complex::Complex64;

use crate::stft::{ComplexSpectrogram, StftConfig};
use crate::{DspError, Result, FULLBAND_RATE};

pub const NUM_BANDS: usize = 3;

/// Three complex T x F_b band matrices plus the bin boundaries that produced
/// them. Band widths are `[F/3, F/3, F/3 + 1]` bins where F is the fullband
/// bin count; the extra bin is Nyquist.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandStack {
    pub bands: Vec<Array2<Complex64>>,
    pub band_edges: [usize; NUM_BANDS + 1],
    pub cfg: StftConfig,
    pub fs: u32,
}

impl SubbandStack {
    pub fn num_frames(&self) -> usize {
        self.bands[0].nrows()
    }

    /// Width in bins of the widest band (the top band, which holds Nyquist).
    pub fn max_band_bins(&self) -> usize {
        self.bands.iter().map(|b| b.ncols()).max().unwrap_or(0)
    }
}

/// Bin edges for the three subbands of a one-sided spectrum with `n_bins`
/// bins (n_bins = fft/2 + 1, fft divisible by 6 at 48 kHz).
pub fn band_edges(n_bins: usize) -> [usize; NUM_BANDS + 1] {
    let third = (n_bins - 1) / 3;
    [0, third, 2 * third, n_bins]
}

/// Splits a 48 kHz fullband spectrogram into three subbands.
pub fn cws_split(spec: &ComplexSpectrogram) -> Result<SubbandStack> {
    if spec.fs != FULLBAND_RATE {
        return Err(DspError::UnsupportedRate(spec.fs));
    }
    let n_bins = spec.num_bins();
    if (n_bins - 1) % 3 != 0 {
        return Err(DspError::ShapeMismatch(format!(
            "bin count {n_bins} does not split into three equal bands"
        )));
    }
    let edges = band_edges(n_bins);
    let bands = (0..NUM_BANDS)
        .map(|b| spec.data.slice(s![.., edges[b]..edges[b + 1]]).to_owned())
        .collect();
    Ok(SubbandStack {
        bands,
        band_edges: edges,
        cfg: spec.cfg,
        fs: spec.fs,
    })
}

/// Concatenates three subbands back into a fullband spectrogram.
pub fn cws_merge(stack: &SubbandStack) -> Result<ComplexSpectrogram> {
    if stack.bands.len() != NUM_BANDS {
        return Err(DspError::ShapeMismatch(format!(
            "expected {} bands, got {}",
            NUM_BANDS,
            stack.bands.len()
        )));
    }
    let t = stack.num_frames();
    let total: usize = stack.bands.iter().map(|b| b.ncols()).sum();
    if total != stack.band_edges[NUM_BANDS] {
        return Err(DspError::ShapeMismatch(format!(
            "band widths sum to {total}, expected {}",
            stack.band_edges[NUM_BANDS]
        )));
    }
    let mut data = Array2::<Complex64>::zeros((t, total));
    for (b, band) in stack.bands.iter().enumerate() {
        if band.nrows() != t {
            return Err(DspError::ShapeMismatch(format!(
                "band {b} has {} frames, expected {t}",
                band.nrows()
            )));
        }
        if band.ncols() != stack.band_edges[b + 1] - stack.band_edges[b] {
            return Err(DspError::ShapeMismatch(format!(
                "band {b} width {} does not match its edges",
                band.ncols()
            )));
        }
        data.slice_mut(s![.., stack.band_edges[b]..stack.band_edges[b + 1]])
            .assign(band);
    }
    Ok(ComplexSpectrogram {
        data,
        cfg: stack.cfg,
        fs: stack.fs,
    })
}
