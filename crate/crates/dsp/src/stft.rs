//! STFT / iSTFT with a periodic Hann window at 50% overlap.
//!
//! Frame geometry is fixed so the frame count is `ceil(len / hop)` for any
//! input length: the signal is reflection-padded by one hop on the left and
//! whatever remains on the right. Overlap-add synthesis divides by the
//! summed squared window, which is strictly positive over the signal region,
//! so `istft(stft(x))` reconstructs `x` up to FFT roundoff.

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::{is_supported_rate, DspError, Result, Waveform};

/// Analysis settings: a Hann window whose length and hop are given in
/// milliseconds so the same config applies at every sampling frequency.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StftConfig {
    pub win_ms: f64,
    pub hop_ms: f64,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            win_ms: 32.0,
            hop_ms: 16.0,
        }
    }
}

impl StftConfig {
    /// Hop length in samples at `fs`.
    pub fn hop_len(&self, fs: u32) -> usize {
        (fs as f64 * self.hop_ms / 1000.0).round() as usize
    }

    /// Window length in samples. Derived as twice the hop so the 50% overlap
    /// is exact in samples even where `fs * win_ms` would round odd
    /// (22.05 and 44.1 kHz).
    pub fn win_len(&self, fs: u32) -> usize {
        2 * self.hop_len(fs)
    }

    /// FFT size equals the window length.
    pub fn fft_size(&self, fs: u32) -> usize {
        self.win_len(fs)
    }

    /// Frequency bin count of a one-sided spectrum.
    pub fn num_bins(&self, fs: u32) -> usize {
        self.fft_size(fs) / 2 + 1
    }

    /// Frame count for a signal of `len` samples: `ceil(len / hop)`.
    pub fn num_frames(&self, fs: u32, len: usize) -> usize {
        let hop = self.hop_len(fs);
        len.div_ceil(hop)
    }

    fn validate(&self, fs: u32) -> Result<()> {
        if !is_supported_rate(fs) {
            return Err(DspError::UnsupportedRate(fs));
        }
        if self.win_ms <= 0.0 || self.hop_ms <= 0.0 {
            return Err(DspError::InvalidArgument(
                "window and hop must be positive".into(),
            ));
        }
        if (self.win_ms - 2.0 * self.hop_ms).abs() > 1e-12 {
            return Err(DspError::InvalidArgument(format!(
                "hop_ms * 2 must equal win_ms (got win {} hop {})",
                self.win_ms, self.hop_ms
            )));
        }
        Ok(())
    }
}

/// A T x F one-sided complex spectrogram plus the settings that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub data: Array2<Complex64>,
    pub cfg: StftConfig,
    pub fs: u32,
}

impl ComplexSpectrogram {
    pub fn num_frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn num_bins(&self) -> usize {
        self.data.ncols()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            data: Array2::zeros(self.data.dim()),
            cfg: self.cfg,
            fs: self.fs,
        }
    }

    fn check_consistent(&self, cfg: &StftConfig) -> Result<()> {
        if self.cfg != *cfg {
            return Err(DspError::ShapeMismatch(
                "spectrogram config differs from requested config".into(),
            ));
        }
        let expect_f = cfg.num_bins(self.fs);
        if self.num_bins() != expect_f {
            return Err(DspError::ShapeMismatch(format!(
                "expected {} bins for fs {}, got {}",
                expect_f,
                self.fs,
                self.num_bins()
            )));
        }
        Ok(())
    }
}

/// Periodic Hann window of length `n`.
pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (std::f64::consts::TAU * i as f64 / n as f64).cos()))
        .collect()
}

/// Mirror (reflection) index into a signal of length `len`, without
/// repeating the edge sample. Degenerates to clamping for len == 1.
pub fn mirror_index(i: isize, len: usize) -> usize {
    debug_assert!(len > 0);
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= len as isize {
        m = period - m;
    }
    m as usize
}

/// Short-time Fourier transform.
pub fn stft(wav: &Waveform, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    cfg.validate(wav.fs())?;
    if wav.is_empty() {
        return Err(DspError::InvalidArgument("empty waveform".into()));
    }
    Ok(ComplexSpectrogram {
        data: stft_raw(wav.samples(), cfg, wav.fs()),
        cfg: *cfg,
        fs: wav.fs(),
    })
}

/// STFT on a raw sample slice, skipping waveform validation. Used by the
/// differentiable transform ops, which must tolerate transient non-finite
/// values during training.
pub fn stft_raw(x: &[f64], cfg: &StftConfig, fs: u32) -> Array2<Complex64> {
    stft_core(x, cfg.win_len(fs), cfg.hop_len(fs))
}

/// STFT with explicit window/hop sample counts (hop <= win/2 keeps the
/// synthesis well conditioned; the multi-resolution discriminators use
/// 25% hops). Frame count is `ceil(len / hop)`.
pub fn stft_core(x: &[f64], win: usize, hop: usize) -> Array2<Complex64> {
    assert!(win % 2 == 0 && hop > 0 && hop <= win, "bad stft geometry");
    let n_bins = win / 2 + 1;
    let n_frames = x.len().div_ceil(hop);
    let window = hann_periodic(win);

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(win);
    let mut buf = vec![Complex::default(); win];
    let mut scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];

    let mut out = Array2::<Complex64>::zeros((n_frames, n_bins));
    let pad = win / 2;
    for m in 0..n_frames {
        // frame m is centered at signal sample m*hop (left pad of win/2)
        for (n, b) in buf.iter_mut().enumerate() {
            let idx = (m * hop + n) as isize - pad as isize;
            let s = x[mirror_index(idx, x.len())];
            *b = Complex::new(s * window[n], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for k in 0..n_bins {
            out[(m, k)] = buf[k];
        }
    }
    out
}

/// Inverse STFT via windowed overlap-add, normalized by the summed squared
/// window. Output is trimmed or zero-padded to exactly `out_len` samples.
pub fn istft(spec: &ComplexSpectrogram, cfg: &StftConfig, out_len: usize) -> Result<Waveform> {
    cfg.validate(spec.fs)?;
    spec.check_consistent(cfg)?;
    Waveform::new(istft_raw(&spec.data, cfg, spec.fs, out_len), spec.fs)
}

/// Inverse STFT on a raw spectrogram matrix, skipping validation.
pub fn istft_raw(
    spec: &Array2<Complex64>,
    cfg: &StftConfig,
    fs: u32,
    out_len: usize,
) -> Vec<f64> {
    istft_core(spec, cfg.win_len(fs), cfg.hop_len(fs), out_len)
}

/// Inverse of [`stft_core`].
pub fn istft_core(spec: &Array2<Complex64>, win: usize, hop: usize, out_len: usize) -> Vec<f64> {
    let n_frames = spec.nrows();
    let window = hann_periodic(win);

    let padded_len = (n_frames - 1) * hop + win;
    let mut acc = vec![0.0f64; padded_len];
    let mut den = vec![0.0f64; padded_len];

    let mut planner = FftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(win);
    let mut buf = vec![Complex::default(); win];
    let mut scratch = vec![Complex::default(); ifft.get_inplace_scratch_len()];

    for m in 0..n_frames {
        // Hermitian extension of the one-sided spectrum; the real part of
        // the inverse transform is the orthogonal projection onto real
        // signals, which keeps arbitrary (network-predicted) spectra valid.
        buf[0] = spec[(m, 0)];
        buf[win / 2] = spec[(m, win / 2)];
        for k in 1..win / 2 {
            buf[k] = spec[(m, k)];
            buf[win - k] = spec[(m, k)].conj();
        }
        ifft.process_with_scratch(&mut buf, &mut scratch);
        let base = m * hop;
        for n in 0..win {
            let v = buf[n].re / win as f64;
            acc[base + n] += window[n] * v;
            den[base + n] += window[n] * window[n];
        }
    }

    let mut out = vec![0.0f64; out_len];
    let pad = win / 2;
    for (i, o) in out.iter_mut().enumerate() {
        let p = i + pad; // undo the centering pad
        if p < padded_len && den[p] > 0.0 {
            *o = acc[p] / den[p];
        }
    }
    out
}

/// Vector-Jacobian product of `stft`: maps a cotangent spectrogram
/// (d loss / d Re, d loss / d Im per bin) back to a gradient over the input
/// samples. `stft` is linear, so this is exactly its adjoint.
pub fn stft_vjp(
    grad: &Array2<Complex64>,
    cfg: &StftConfig,
    fs: u32,
    in_len: usize,
) -> Result<Vec<f64>> {
    cfg.validate(fs)?;
    Ok(stft_vjp_core(grad, cfg.win_len(fs), cfg.hop_len(fs), in_len))
}

/// Adjoint of [`stft_core`].
pub fn stft_vjp_core(
    grad: &Array2<Complex64>,
    win: usize,
    hop: usize,
    in_len: usize,
) -> Vec<f64> {
    let n_bins = win / 2 + 1;
    assert_eq!(grad.ncols(), n_bins, "stft_vjp_core bin count");
    let n_frames = grad.nrows();
    let window = hann_periodic(win);

    let mut planner = FftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(win);
    let mut buf = vec![Complex::default(); win];
    let mut scratch = vec![Complex::default(); ifft.get_inplace_scratch_len()];

    let mut gx = vec![0.0f64; in_len];
    for m in 0..n_frames {
        // adjoint of the real-input DFT: zero-extend the one-sided cotangent
        // (no Hermitian mirror) and take the real part of the unnormalized
        // inverse transform
        buf.iter_mut().for_each(|b| *b = Complex::default());
        for k in 0..n_bins {
            let g = grad[(m, k)];
            // Im of bins 0 and Nyquist is identically zero in the forward
            // map, so their cotangent cannot flow back.
            buf[k] = if k == 0 || k == win / 2 {
                Complex::new(g.re, 0.0)
            } else {
                g
            };
        }
        ifft.process_with_scratch(&mut buf, &mut scratch);
        let pad = win / 2;
        for n in 0..win {
            let contrib = buf[n].re * window[n];
            let idx = (m * hop + n) as isize - pad as isize;
            gx[mirror_index(idx, in_len)] += contrib;
        }
    }
    gx
}

/// Vector-Jacobian product of `istft`: maps a cotangent over output samples
/// back to a gradient spectrogram.
pub fn istft_vjp(
    grad_out: &[f64],
    cfg: &StftConfig,
    fs: u32,
    n_frames: usize,
) -> Result<Array2<Complex64>> {
    cfg.validate(fs)?;
    Ok(istft_vjp_core(
        grad_out,
        cfg.win_len(fs),
        cfg.hop_len(fs),
        n_frames,
    ))
}

/// Adjoint of [`istft_core`].
pub fn istft_vjp_core(
    grad_out: &[f64],
    win: usize,
    hop: usize,
    n_frames: usize,
) -> Array2<Complex64> {
    let n_bins = win / 2 + 1;
    let window = hann_periodic(win);
    let padded_len = (n_frames - 1) * hop + win;

    // adjoint of trim + OLA normalization: place grads at padded positions
    let mut den = vec![0.0f64; padded_len];
    for m in 0..n_frames {
        for n in 0..win {
            den[m * hop + n] += window[n] * window[n];
        }
    }
    let mut gpad = vec![0.0f64; padded_len];
    let pad = win / 2;
    for (i, g) in grad_out.iter().enumerate() {
        let p = i + pad;
        if p < padded_len && den[p] > 0.0 {
            gpad[p] = g / den[p];
        }
    }

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(win);
    let mut buf = vec![Complex::default(); win];
    let mut scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];

    let mut gspec = Array2::<Complex64>::zeros((n_frames, n_bins));
    for m in 0..n_frames {
        let base = m * hop;
        for n in 0..win {
            buf[n] = Complex::new(gpad[base + n] * window[n] / win as f64, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for k in 0..n_bins {
            let c = if k == 0 || k == win / 2 { 1.0 } else { 2.0 };
            let g = buf[k];
            gspec[(m, k)] = if k == 0 || k == win / 2 {
                Complex64::new(c * g.re, 0.0)
            } else {
                Complex64::new(c * g.re, c * g.im)
            };
        }
    }
    gspec
}
