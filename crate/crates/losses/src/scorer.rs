//! Pluggable differentiable metric scorers. The default build ships
//! deterministic synthetic stand-ins (small fixed-weight networks) so the
//! full loss stack is testable offline; adapters for real pretrained
//! scorers implement the same trait.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trident_autograd::{Scalar, Tape, T};

use crate::terms::MfccConfig;
use crate::{LossError, Result};

/// A quality scorer whose score is differentiable w.r.t. the enhanced
/// signal. Higher scores mean better quality; `loss` is an affinely
/// normalized negation.
pub trait MetricScorer<F: Scalar> {
    fn name(&self) -> &str;
    fn reference_free(&self) -> bool;
    /// Score range (lo, hi) used for the affine loss normalization.
    fn range(&self) -> (f64, f64);
    fn score(&self, tape: &mut Tape<F>, s_hat: T, s: Option<T>, fs: u32) -> Result<T>;

    fn loss(&self, tape: &mut Tape<F>, s_hat: T, s: Option<T>, fs: u32) -> Result<T> {
        if !self.reference_free() && s.is_none() {
            return Err(LossError::InvalidArgument(format!(
                "scorer {} requires a reference signal",
                self.name()
            )));
        }
        let score = self.score(tape, s_hat, s, fs)?;
        let (lo, hi) = self.range();
        // loss = (hi - score) / (hi - lo): 0 at the top score, 1 at the floor
        Ok(tape.affine(score, -1.0 / (hi - lo), hi / (hi - lo)))
    }
}

fn fixed_weights<F: Scalar>(seed: u64, shape: &[usize], scale: f64) -> ndarray::ArrayD<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ndarray::ArrayD::from_shape_simple_fn(ndarray::IxDyn(shape), || {
        F::sample_uniform(&mut rng, -scale, scale)
    })
}

/// Shared front end: mean log-mel energy vector of a waveform node.
fn log_mel_mean<F: Scalar>(tape: &mut Tape<F>, wav: T, fs: u32, n_mels: usize) -> T {
    let stft_cfg = trident_dsp::StftConfig::default();
    let spec = tape.stft_op(wav, stft_cfg, fs);
    let shape = tape.shape(spec).to_vec();
    let (t_dim, f_dim) = (shape[1], shape[2]);
    let re = tape.slice_axis(spec, 0, 0, 1);
    let im = tape.slice_axis(spec, 0, 1, 2);
    let re2 = tape.square(re);
    let im2 = tape.square(im);
    let p = tape.add(re2, im2);
    let p = tape.reshape(p, &[t_dim, f_dim]);
    let p = tape.permute(p, &[1, 0]);
    let mel = trident_dsp::mel::mel_filterbank(fs, stft_cfg.fft_size(fs), n_mels);
    let mel = tape.constant(mel.mapv(|v| F::f(v)).into_dyn());
    let me = tape.matmul(mel, p);
    let me = tape.add_scalar(me, 1e-10);
    let lm = tape.log10(me); // (n_mels, T)
    tape.mean_axis(lm, 1) // (n_mels,)
}

/// Intrusive stand-in (PESQ-like): a perceptually-weighted spectral distance
/// pushed through a sigmoid. The distance is linear-quadratic in the
/// enhanced signal, so moving toward the reference strictly improves it.
pub struct SyntheticIntrusiveScorer {
    name: String,
    seed: u64,
}

impl SyntheticIntrusiveScorer {
    pub fn pesq_stand_in() -> Self {
        Self {
            name: "pesq".into(),
            seed: 0x9e5c,
        }
    }
}

impl<F: Scalar> MetricScorer<F> for SyntheticIntrusiveScorer {
    fn name(&self) -> &str {
        &self.name
    }

    fn reference_free(&self) -> bool {
        false
    }

    fn range(&self) -> (f64, f64) {
        (1.0, 4.5)
    }

    fn score(&self, tape: &mut Tape<F>, s_hat: T, s: Option<T>, fs: u32) -> Result<T> {
        let s = s.ok_or_else(|| {
            LossError::InvalidArgument("intrusive scorer requires a reference".into())
        })?;
        let stft_cfg = trident_dsp::StftConfig::default();
        let sh = tape.stft_op(s_hat, stft_cfg, fs);
        let sr = tape.stft_op(s, stft_cfg, fs);
        let d = tape.sub(sh, sr);
        let d2 = tape.square(d);
        // fixed per-bin weighting plays the role of a perceptual model
        let shape = tape.shape(d2).to_vec();
        let w = fixed_weights::<F>(self.seed, &[shape[2]], 1.0);
        let w = w.mapv(|v| v * v + F::f(0.1));
        let w_full = ndarray::ArrayD::from_shape_fn(ndarray::IxDyn(&shape), |idx| w[[idx[2]]]);
        let wt = tape.constant(w_full);
        let d2w = tape.mul(d2, wt);
        let dist = tape.mean_all(d2w);
        let ref2 = tape.square(sr);
        let ref_e = tape.mean_all(ref2);
        let ref_e = tape.add_scalar(ref_e, 1e-6);
        let nd = tape.div(dist, ref_e);
        let z = tape.affine(nd, -8.0, 2.5);
        let sig = tape.sigmoid(z);
        Ok(tape.affine(sig, 3.5, 1.0)) // 1.0 .. 4.5
    }
}

/// Reference-free stand-in (UTMOS/DNSMOS-like): a tiny fixed-weight MLP on
/// the mean log-mel vector.
pub struct SyntheticReferenceFreeScorer {
    name: String,
    seed: u64,
}

impl SyntheticReferenceFreeScorer {
    pub fn utmos_stand_in() -> Self {
        Self {
            name: "utmos".into(),
            seed: 0x07f0,
        }
    }

    pub fn dnsmos_stand_in() -> Self {
        Self {
            name: "dnsmos".into(),
            seed: 0xd05,
        }
    }
}

impl<F: Scalar> MetricScorer<F> for SyntheticReferenceFreeScorer {
    fn name(&self) -> &str {
        &self.name
    }

    fn reference_free(&self) -> bool {
        true
    }

    fn range(&self) -> (f64, f64) {
        (1.0, 5.0)
    }

    fn score(&self, tape: &mut Tape<F>, s_hat: T, _s: Option<T>, fs: u32) -> Result<T> {
        const MELS: usize = 32;
        const HIDDEN: usize = 16;
        let v = log_mel_mean(tape, s_hat, fs, MELS); // (MELS,)
        let v = tape.reshape(v, &[1, MELS]);
        let w1 = tape.constant(fixed_weights::<F>(self.seed, &[MELS, HIDDEN], 0.4));
        let h = tape.matmul(v, w1);
        let h = tape.tanh(h);
        let w2 = tape.constant(fixed_weights::<F>(self.seed + 1, &[HIDDEN, 1], 0.6));
        let z = tape.matmul(h, w2);
        let z = tape.reshape(z, &[]);
        let sig = tape.sigmoid(z);
        Ok(tape.affine(sig, 4.0, 1.0)) // 1.0 .. 5.0
    }
}

/// Feature extractor behind the distillation term. The synthetic stand-in
/// projects log-mel frames through a fixed random layer with tanh.
pub trait FeatureExtractor<F: Scalar> {
    fn features(&self, tape: &mut Tape<F>, wav: T, fs: u32) -> Result<T>; // (T', D)
}

pub struct SyntheticFeatureExtractor {
    pub dim: usize,
    seed: u64,
}

impl SyntheticFeatureExtractor {
    pub fn wavlm_stand_in() -> Self {
        Self {
            dim: 32,
            seed: 0x3a71,
        }
    }
}

impl<F: Scalar> FeatureExtractor<F> for SyntheticFeatureExtractor {
    fn features(&self, tape: &mut Tape<F>, wav: T, fs: u32) -> Result<T> {
        const MELS: usize = 40;
        let stft_cfg = trident_dsp::StftConfig::default();
        let spec = tape.stft_op(wav, stft_cfg, fs);
        let shape = tape.shape(spec).to_vec();
        let (t_dim, f_dim) = (shape[1], shape[2]);
        let re = tape.slice_axis(spec, 0, 0, 1);
        let im = tape.slice_axis(spec, 0, 1, 2);
        let re2 = tape.square(re);
        let im2 = tape.square(im);
        let p = tape.add(re2, im2);
        let p = tape.reshape(p, &[t_dim, f_dim]);
        let p = tape.permute(p, &[1, 0]);
        let mel = trident_dsp::mel::mel_filterbank(fs, stft_cfg.fft_size(fs), MELS);
        let mel = tape.constant(mel.mapv(|v| F::f(v)).into_dyn());
        let me = tape.matmul(mel, p);
        let me = tape.add_scalar(me, 1e-10);
        let lm = tape.log10(me); // (MELS, T)
        let lm = tape.permute(lm, &[1, 0]); // (T, MELS)
        let w = tape.constant(fixed_weights::<F>(self.seed, &[MELS, self.dim], 0.3));
        let proj = tape.matmul(lm, w);
        Ok(tape.tanh(proj)) // (T, D)
    }
}

/// The full scorer complement used by the metric-aware losses.
pub struct ScorerSet<F: Scalar> {
    pub mfcc: MfccConfig,
    pub pesq: Box<dyn MetricScorer<F>>,
    pub utmos: Box<dyn MetricScorer<F>>,
    pub dnsmos: Box<dyn MetricScorer<F>>,
    pub wavlm: Box<dyn FeatureExtractor<F>>,
}

impl<F: Scalar> ScorerSet<F> {
    /// Deterministic synthetic stand-ins for offline builds.
    pub fn synthetic() -> Self {
        Self {
            mfcc: MfccConfig::default(),
            pesq: Box::new(SyntheticIntrusiveScorer::pesq_stand_in()),
            utmos: Box::new(SyntheticReferenceFreeScorer::utmos_stand_in()),
            dnsmos: Box::new(SyntheticReferenceFreeScorer::dnsmos_stand_in()),
            wavlm: Box::new(SyntheticFeatureExtractor::wavlm_stand_in()),
        }
    }
}
