//! Individual loss terms. Waveform nodes are 1-D; spectrogram nodes are
//! (2, T, F) with real/imaginary channels.

use trident_autograd::{Scalar, Tape, T};

use crate::{LossError, Result, EPS};

fn check_same_shape<F: Scalar>(tape: &Tape<F>, a: T, b: T, what: &str) -> Result<()> {
    if tape.shape(a) != tape.shape(b) {
        return Err(LossError::ShapeMismatch(format!(
            "{what}: {:?} vs {:?}",
            tape.shape(a),
            tape.shape(b)
        )));
    }
    Ok(())
}

/// Smoothed magnitude of a (2, T, F) spectrogram node:
/// sqrt(re^2 + im^2 + EPS^2), shape (T, F). The floor keeps every term and
/// its gradient finite on exactly-zero bins.
pub fn complex_mag_eps<F: Scalar>(tape: &mut Tape<F>, spec: T) -> T {
    let shape = tape.shape(spec).to_vec();
    debug_assert_eq!(shape[0], 2);
    let re = tape.slice_axis(spec, 0, 0, 1);
    let im = tape.slice_axis(spec, 0, 1, 2);
    let re2 = tape.square(re);
    let im2 = tape.square(im);
    let p = tape.add(re2, im2);
    let p = tape.add_scalar(p, EPS * EPS);
    let m = tape.sqrt(p);
    tape.reshape(m, &[shape[1], shape[2]])
}

fn mse<F: Scalar>(tape: &mut Tape<F>, a: T, b: T) -> T {
    let d = tape.sub(a, b);
    let sq = tape.square(d);
    tape.mean_all(sq)
}

/// Negated log power ratio: -log10(||s||^2 / (||s - s_hat||^2 + EPS)).
pub fn sdr_loss<F: Scalar>(tape: &mut Tape<F>, s: T, s_hat: T) -> Result<T> {
    check_same_shape(tape, s, s_hat, "sdr_loss")?;
    let sq = tape.square(s);
    let num = tape.sum_all(sq);
    if tape.scalar(num).to64() <= 0.0 {
        return Err(LossError::DegenerateReference(
            "zero-power reference signal".into(),
        ));
    }
    let d = tape.sub(s, s_hat);
    let dsq = tape.square(d);
    let den = tape.sum_all(dsq);
    let den = tape.add_scalar(den, EPS);
    let log_num = tape.log10(num);
    let log_den = tape.log10(den);
    let ratio = tape.sub(log_num, log_den);
    Ok(tape.neg(ratio))
}

/// Log-spectral distance: per-frame RMS over frequency of the log10
/// magnitude ratio, averaged over frames.
pub fn lsd_loss<F: Scalar>(tape: &mut Tape<F>, s_spec: T, s_hat_spec: T) -> Result<T> {
    check_same_shape(tape, s_spec, s_hat_spec, "lsd_loss")?;
    let mag_s = complex_mag_eps(tape, s_spec);
    let mag_h = complex_mag_eps(tape, s_hat_spec);
    let ls = tape.log10(mag_s);
    let lh = tape.log10(mag_h);
    let ratio = tape.sub(ls, lh); // (T, F)
    let sq = tape.square(ratio);
    let per_frame = tape.mean_axis(sq, 1); // (T,)
    let rms = tape.sqrt(per_frame);
    Ok(tape.mean_all(rms))
}

/// MSE of 0.3-power-compressed magnitudes.
pub fn mag_loss<F: Scalar>(tape: &mut Tape<F>, s_spec: T, s_hat_spec: T) -> Result<T> {
    check_same_shape(tape, s_spec, s_hat_spec, "mag_loss")?;
    let mag_s = complex_mag_eps(tape, s_spec);
    let mag_h = complex_mag_eps(tape, s_hat_spec);
    let cs = tape.powf(mag_s, 0.3);
    let ch = tape.powf(mag_h, 0.3);
    Ok(mse(tape, cs, ch))
}

fn phase_part_loss<F: Scalar>(
    tape: &mut Tape<F>,
    s_spec: T,
    s_hat_spec: T,
    channel: usize,
) -> Result<T> {
    check_same_shape(tape, s_spec, s_hat_spec, "phase loss")?;
    let shape = tape.shape(s_spec).to_vec();
    let (t_dim, f_dim) = (shape[1], shape[2]);
    let part = |tape: &mut Tape<F>, spec: T| {
        let c = tape.slice_axis(spec, 0, channel, channel + 1);
        let c = tape.reshape(c, &[t_dim, f_dim]);
        let m = complex_mag_eps(tape, spec);
        let m07 = tape.powf(m, 0.7);
        tape.div(c, m07)
    };
    let a = part(tape, s_spec);
    let b = part(tape, s_hat_spec);
    Ok(mse(tape, a, b))
}

/// MSE of real parts normalized by |S|^0.7.
pub fn phase_real_loss<F: Scalar>(tape: &mut Tape<F>, s: T, s_hat: T) -> Result<T> {
    phase_part_loss(tape, s, s_hat, 0)
}

/// MSE of imaginary parts normalized by |S|^0.7.
pub fn phase_imag_loss<F: Scalar>(tape: &mut Tape<F>, s: T, s_hat: T) -> Result<T> {
    phase_part_loss(tape, s, s_hat, 1)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MfccConfig {
    pub n_mels: usize,
    pub n_coeffs: usize,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            n_mels: 80,
            n_coeffs: 13,
        }
    }
}

/// Differentiable MFCC matrix of a waveform node: power spectrum -> mel
/// energies -> log10 -> DCT-II, keeping `n_coeffs` rows (row 0 is energy).
pub fn mfcc<F: Scalar>(
    tape: &mut Tape<F>,
    wav: T,
    cfg: &MfccConfig,
    stft_cfg: &trident_dsp::StftConfig,
    fs: u32,
) -> Result<T> {
    let len = tape.shape(wav)[0];
    let win = stft_cfg.win_len(fs);
    if len < win {
        return Err(LossError::InvalidArgument(format!(
            "signal of {len} samples is shorter than one analysis frame ({win})"
        )));
    }
    let spec = tape.stft_op(wav, *stft_cfg, fs); // (2, T, F)
    let shape = tape.shape(spec).to_vec();
    let (t_dim, f_dim) = (shape[1], shape[2]);
    let re = tape.slice_axis(spec, 0, 0, 1);
    let im = tape.slice_axis(spec, 0, 1, 2);
    let re2 = tape.square(re);
    let im2 = tape.square(im);
    let power = tape.add(re2, im2);
    let power = tape.reshape(power, &[t_dim, f_dim]);
    let power = tape.permute(power, &[1, 0]); // (F, T)

    let mel = trident_dsp::mel::mel_filterbank(fs, stft_cfg.fft_size(fs), cfg.n_mels);
    let mel = tape.constant(mel.mapv(|v| F::f(v)).into_dyn());
    let mel_e = tape.matmul(mel, power); // (n_mels, T)
    let mel_e = tape.add_scalar(mel_e, 1e-10);
    let log_mel = tape.log10(mel_e);
    let dct = trident_dsp::mel::dct_ii_matrix(cfg.n_coeffs, cfg.n_mels);
    let dct = tape.constant(dct.mapv(|v| F::f(v)).into_dyn());
    Ok(tape.matmul(dct, log_mel)) // (n_coeffs, T)
}

/// MSE between the MFCC matrices of clean and enhanced speech.
pub fn mcd_aware_loss<F: Scalar>(
    tape: &mut Tape<F>,
    s: T,
    s_hat: T,
    cfg: &MfccConfig,
    stft_cfg: &trident_dsp::StftConfig,
    fs: u32,
) -> Result<T> {
    check_same_shape(tape, s, s_hat, "mcd_aware_loss")?;
    let a = mfcc(tape, s, cfg, stft_cfg, fs)?;
    let b = mfcc(tape, s_hat, cfg, stft_cfg, fs)?;
    Ok(mse(tape, a, b))
}

/// Continuous distillation loss over (T, D) feature sequences: cosine
/// similarity per feature dimension across time, through sigmoid and log10,
/// negated. The written 1/(T*D) double-sum normalization reduces to a mean
/// over D because the per-dimension cosine does not depend on t.
pub fn wavlm_distill_loss<F: Scalar>(tape: &mut Tape<F>, r: T, r_hat: T) -> Result<T> {
    check_same_shape(tape, r, r_hat, "wavlm_distill_loss")?;
    if tape.shape(r).len() != 2 {
        return Err(LossError::ShapeMismatch(
            "feature sequences must be (T, D)".into(),
        ));
    }
    let prod = tape.mul(r, r_hat);
    let num = tape.sum_axis(prod, 0); // (D,)
    let r2 = tape.square(r);
    let rn = tape.sum_axis(r2, 0);
    let rn = tape.add_scalar(rn, EPS * EPS);
    let rn = tape.sqrt(rn);
    let h2 = tape.square(r_hat);
    let hn = tape.sum_axis(h2, 0);
    let hn = tape.add_scalar(hn, EPS * EPS);
    let hn = tape.sqrt(hn);
    let den = tape.mul(rn, hn);
    let den = tape.add_scalar(den, EPS);
    let cos = tape.div(num, den); // (D,)
    let sig = tape.sigmoid(cos);
    let log = tape.log10(sig);
    let mean = tape.mean_all(log);
    Ok(tape.neg(mean))
}
