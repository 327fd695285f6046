//! Band-limited rational resampling with a Kaiser-windowed sinc kernel.
//!
//! Rates are converted by their exact rational ratio L/M (after gcd
//! reduction), never by a floating approximation, so output length is a pure
//! function of input length and the two rates. The kernel is designed for
//! 80 dB stopband attenuation with a 0.9 passband fraction.

use crate::{is_supported_rate, DspError, Result, Waveform};

const KAISER_ATTEN_DB: f64 = 80.0;
const ROLLOFF: f64 = 0.9;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let half_sq = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= half_sq / ((k * k) as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

struct SincKernel {
    cutoff: f64,
    half_width: f64,
    beta: f64,
    i0_beta: f64,
}

impl SincKernel {
    /// `ratio` is output rate over input rate. The kernel lives in input
    /// sample units.
    fn design(ratio: f64) -> Self {
        let band = ratio.min(1.0);
        let cutoff = ROLLOFF * band;
        // Kaiser length estimate: N = (A - 8) / (2.285 * dw), with the
        // transition band (1 - rolloff) * band * pi rad/sample.
        let trans = (1.0 - ROLLOFF) * band * std::f64::consts::PI;
        let n_taps = (KAISER_ATTEN_DB - 8.0) / (2.285 * trans);
        let half_width = (n_taps / 2.0).ceil().max(2.0);
        let beta = 0.1102 * (KAISER_ATTEN_DB - 8.7);
        Self {
            cutoff,
            half_width,
            beta,
            i0_beta: bessel_i0(beta),
        }
    }

    /// Kernel value at offset `u` input samples from the output point.
    fn eval(&self, u: f64) -> f64 {
        if u.abs() >= self.half_width {
            return 0.0;
        }
        let t = u / self.half_width;
        let kaiser = bessel_i0(self.beta * (1.0 - t * t).sqrt()) / self.i0_beta;
        let x = self.cutoff * u;
        let sinc = if x.abs() < 1e-12 {
            1.0
        } else {
            (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
        };
        self.cutoff * sinc * kaiser
    }
}

/// Resamples a raw sample buffer between two arbitrary positive rates.
///
/// This is the computational core of [`resample`]; it performs no rate-set
/// validation so internal callers (bandwidth limitation) can pass transient
/// rates such as 4 kHz. Output length is `round(len * to_fs / from_fs)`.
pub fn resample_arbitrary(x: &[f64], from_fs: u32, to_fs: u32) -> Vec<f64> {
    assert!(from_fs > 0 && to_fs > 0, "rates must be positive");
    if from_fs == to_fs || x.is_empty() {
        return x.to_vec();
    }
    let g = gcd(to_fs as u64, from_fs as u64);
    let l = (to_fs as u64 / g) as i64;
    let m = (from_fs as u64 / g) as i64;
    let out_len = ((x.len() as u64 * to_fs as u64 + from_fs as u64 / 2) / from_fs as u64) as usize;

    let kernel = SincKernel::design(l as f64 / m as f64);
    let half = kernel.half_width as i64 + 1;

    // polyphase tap table: one row per output phase r = (j*M) mod L
    let n_phases = l as usize;
    let taps_per_phase = (2 * half) as usize;
    let mut table = vec![0.0f64; n_phases * taps_per_phase];
    let mut norms = vec![0.0f64; n_phases];
    for r in 0..n_phases {
        let frac = r as f64 / l as f64; // output point sits frac after sample q
        let mut sum = 0.0;
        for (t, slot) in table[r * taps_per_phase..(r + 1) * taps_per_phase]
            .iter_mut()
            .enumerate()
        {
            let i_off = t as i64 - half + 1; // input index offset from q
            let u = i_off as f64 - frac;
            let v = kernel.eval(u);
            *slot = v;
            sum += v;
        }
        // normalize each phase to unit DC gain
        norms[r] = if sum.abs() > 1e-12 { sum } else { 1.0 };
    }

    let n = x.len() as i64;
    let mut out = Vec::with_capacity(out_len);
    for j in 0..out_len as i64 {
        let num = j * m;
        let q = num.div_euclid(l);
        let r = num.rem_euclid(l) as usize;
        let row = &table[r * taps_per_phase..(r + 1) * taps_per_phase];
        let mut acc = 0.0;
        for (t, w) in row.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            let i = q + t as i64 - half + 1;
            let s = x[crate::stft::mirror_index(i as isize, n as usize)];
            acc += s * w;
        }
        out.push(acc / norms[r]);
    }
    out
}

/// Resamples a waveform to `target_fs`. Both rates must be in the supported
/// set; resampling to the same rate returns the input unchanged.
pub fn resample(wav: &Waveform, target_fs: u32) -> Result<Waveform> {
    if !is_supported_rate(target_fs) {
        return Err(DspError::UnsupportedRate(target_fs));
    }
    if wav.fs() == target_fs {
        return Ok(wav.clone());
    }
    Waveform::new(resample_arbitrary(wav.samples(), wav.fs(), target_fs), target_fs)
}

/// Resamples then trims or zero-pads to an exact sample count. Round trips
/// through another rate can land one sample off; stage boundaries use this
/// to keep length contracts exact.
pub fn resample_to_len(wav: &Waveform, target_fs: u32, out_len: usize) -> Result<Waveform> {
    let mut y = resample(wav, target_fs)?.into_samples();
    y.resize(out_len, 0.0);
    Waveform::new(y, target_fs)
}
