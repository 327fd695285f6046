//! Inference: the fill -> sep -> res cascade with stage-level level
//! normalization, resampling policy, and bandwidth-aware routing.

use ndarray::ArrayD;
use num_complex::Complex64;
use trident_autograd::{Scalar, Tape};
use trident_dsp::{istft, resample_to_len, stft, ComplexSpectrogram, Waveform};
use trident_nets::{CwsTfGridNet, ModelBundle, TfGridNet};

use crate::{Result, RuntimeError};

/// Peak level stages normalize to before the network sees the signal.
const STAGE_PEAK: f64 = 0.9;

fn spec_to_tensor<F: Scalar>(spec: &ComplexSpectrogram) -> ArrayD<F> {
    let (t, f) = spec.data.dim();
    let mut out = ArrayD::<F>::zeros(ndarray::IxDyn(&[2, t, f]));
    for ti in 0..t {
        for fi in 0..f {
            out[[0, ti, fi]] = F::f(spec.data[(ti, fi)].re);
            out[[1, ti, fi]] = F::f(spec.data[(ti, fi)].im);
        }
    }
    out
}

fn tensor_to_spec<F: Scalar>(
    v: &ArrayD<F>,
    template: &ComplexSpectrogram,
) -> ComplexSpectrogram {
    let (t, f) = template.data.dim();
    let mut data = ndarray::Array2::<Complex64>::zeros((t, f));
    for ti in 0..t {
        for fi in 0..f {
            data[(ti, fi)] = Complex64::new(v[[0, ti, fi]].to64(), v[[1, ti, fi]].to64());
        }
    }
    ComplexSpectrogram {
        data,
        cfg: template.cfg,
        fs: template.fs,
    }
}

/// Forward a waveform through a spectrogram-to-spectrogram network at the
/// waveform's own rate, with peak normalization in and out.
fn net_apply<F: Scalar>(
    bundle: &ModelBundle<F>,
    net: &TfGridNet,
    wav: &Waveform,
) -> Result<Waveform> {
    let peak = wav.peak();
    let gain = if peak > 1e-12 { STAGE_PEAK / peak } else { 1.0 };
    let x = wav.map(|s| s * gain)?;
    let spec = stft(&x, &bundle.config.stft)?;
    let mut tape = Tape::<F>::new();
    let xt = tape.constant(spec_to_tensor::<F>(&spec));
    let yt = net.forward(&mut tape, &bundle.store, xt);
    let out_spec = tensor_to_spec(tape.value(yt), &spec);
    let y = istft(&out_spec, &bundle.config.stft, x.len())?;
    Ok(y.map(|s| s / gain)?)
}

/// Filling stage: residual form, output = input + network contribution.
pub fn run_fill<F: Scalar>(bundle: &ModelBundle<F>, wav: &Waveform) -> Result<Waveform> {
    let net_out = net_apply(bundle, &bundle.fill, wav)?;
    Ok(Waveform::new(
        wav.samples()
            .iter()
            .zip(net_out.samples())
            .map(|(a, b)| a + b)
            .collect(),
        wav.fs(),
    )?)
}

/// Separation stage: full regression, no residual.
pub fn run_sep<F: Scalar>(bundle: &ModelBundle<F>, wav: &Waveform) -> Result<Waveform> {
    net_apply(bundle, &bundle.sep, wav)
}

/// Which restoration network serves a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResRoute {
    Base,
    Finetuned,
}

/// Restoration stage: resample to 48 kHz, CWS network with a skip connection
/// in the 48 kHz domain, resample back. Output keeps the input's length and
/// rate exactly.
pub fn run_res<F: Scalar>(
    bundle: &ModelBundle<F>,
    wav: &Waveform,
    route: ResRoute,
) -> Result<Waveform> {
    let net: &CwsTfGridNet = match route {
        ResRoute::Base => &bundle.res,
        ResRoute::Finetuned => bundle.res_ft.as_ref().ok_or_else(|| {
            RuntimeError::Configuration(
                "fine-tuned restoration network requested but not present in the bundle".into(),
            )
        })?,
    };
    let orig_fs = wav.fs();
    let orig_len = wav.len();
    let x48 = trident_dsp::resample(wav, 48000)?;

    let peak = x48.peak();
    let gain = if peak > 1e-12 { STAGE_PEAK / peak } else { 1.0 };
    let xn = x48.map(|s| s * gain)?;
    let spec = stft(&xn, &bundle.config.stft)?;
    let mut tape = Tape::<F>::new();
    let xt = tape.constant(spec_to_tensor::<F>(&spec));
    let yt = net.forward(&mut tape, &bundle.store, xt, 48000)?;
    let out_spec = tensor_to_spec(tape.value(yt), &spec);
    let contribution = istft(&out_spec, &bundle.config.stft, xn.len())?;

    // skip connection in the 48 kHz domain
    let y48 = Waveform::new(
        x48.samples()
            .iter()
            .zip(contribution.samples())
            .map(|(a, b)| a + b / gain)
            .collect(),
        48000,
    )?;
    Ok(resample_to_len(&y48, orig_fs, orig_len)?)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BandwidthEstimate {
    pub effective_cutoff_hz: f64,
    pub is_band_limited: bool,
    pub threshold_db: f64,
}

/// Estimates the effective bandwidth from the long-term power spectrum: the
/// highest frequency whose smoothed level sits within `threshold_db` of the
/// 1-3 kHz reference band. Signals cut below 0.85 x Nyquist count as
/// band-limited.
pub fn detect_bandwidth_limited(wav: &Waveform) -> Result<BandwidthEstimate> {
    detect_bandwidth_limited_with(wav, 35.0, 0.85)
}

pub fn detect_bandwidth_limited_with(
    wav: &Waveform,
    threshold_db: f64,
    nyquist_fraction: f64,
) -> Result<BandwidthEstimate> {
    if wav.duration_s() < 0.5 {
        return Err(RuntimeError::InvalidArgument(format!(
            "bandwidth detection needs at least 0.5 s of audio, got {:.3} s",
            wav.duration_s()
        )));
    }
    let cfg = trident_dsp::StftConfig::default();
    let spec = stft(wav, &cfg)?;
    let (t, f) = spec.data.dim();
    let mut psd = vec![0.0f64; f];
    for ti in 0..t {
        for fi in 0..f {
            psd[fi] += spec.data[(ti, fi)].norm_sqr();
        }
    }
    for v in &mut psd {
        *v /= t as f64;
    }
    // light smoothing across bins
    let smooth: Vec<f64> = (0..f)
        .map(|i| {
            let lo = i.saturating_sub(2);
            let hi = (i + 3).min(f);
            psd[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let bin_hz = wav.fs() as f64 / cfg.fft_size(wav.fs()) as f64;
    let lo_bin = (1000.0 / bin_hz).round() as usize;
    let hi_bin = ((3000.0 / bin_hz).round() as usize).min(f - 1);
    if lo_bin >= hi_bin {
        return Err(RuntimeError::InvalidArgument(
            "sampling rate too low for the 1-3 kHz reference band".into(),
        ));
    }
    let reference =
        smooth[lo_bin..=hi_bin].iter().sum::<f64>() / (hi_bin - lo_bin + 1) as f64;
    let floor = reference * 10f64.powf(-threshold_db / 10.0);
    let mut cutoff_bin = lo_bin;
    for fi in (0..f).rev() {
        if smooth[fi] >= floor {
            cutoff_bin = fi;
            break;
        }
    }
    let effective_cutoff_hz = (cutoff_bin as f64 * bin_hz).max(bin_hz);
    let nyquist = wav.fs() as f64 / 2.0;
    Ok(BandwidthEstimate {
        effective_cutoff_hz,
        is_band_limited: effective_cutoff_hz < nyquist_fraction * nyquist,
        threshold_db,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageMask {
    pub fill: bool,
    pub sep: bool,
    pub res: bool,
}

impl Default for StageMask {
    fn default() -> Self {
        Self {
            fill: true,
            sep: true,
            res: true,
        }
    }
}

impl StageMask {
    pub fn is_empty(&self) -> bool {
        !(self.fill || self.sep || self.res)
    }
}

#[derive(Debug, Clone)]
pub struct EnhanceRequest {
    pub wav: Waveform,
    pub bwai_enabled: bool,
    pub stage_mask: StageMask,
}

impl EnhanceRequest {
    pub fn new(wav: Waveform) -> Self {
        Self {
            wav,
            bwai_enabled: false,
            stage_mask: StageMask::default(),
        }
    }
}

pub struct EnhanceOutcome {
    pub wav: Waveform,
    /// Route taken by the restoration stage, if it ran.
    pub route: Option<ResRoute>,
    pub bandwidth: Option<BandwidthEstimate>,
}

/// Sequential fill -> sep -> res with bandwidth-aware routing of the
/// restoration stage. Output keeps the input rate and length.
pub fn enhance<F: Scalar>(req: &EnhanceRequest, bundle: &ModelBundle<F>) -> Result<EnhanceOutcome> {
    if req.stage_mask.is_empty() {
        return Err(RuntimeError::InvalidArgument(
            "stage mask must enable at least one stage".into(),
        ));
    }
    if req.bwai_enabled && bundle.res_ft.is_none() {
        return Err(RuntimeError::Configuration(
            "bandwidth-aware inference requires the fine-tuned restoration network".into(),
        ));
    }
    let mut x = req.wav.clone();
    if req.stage_mask.fill {
        x = run_fill(bundle, &x)?;
    }
    if req.stage_mask.sep {
        x = run_sep(bundle, &x)?;
    }
    let mut route = None;
    let mut bandwidth = None;
    if req.stage_mask.res {
        let r = if req.bwai_enabled {
            let est = detect_bandwidth_limited(&x)?;
            let r = if est.is_band_limited {
                ResRoute::Finetuned
            } else {
                ResRoute::Base
            };
            bandwidth = Some(est);
            r
        } else {
            ResRoute::Base
        };
        x = run_res(bundle, &x, r)?;
        route = Some(r);
    }
    Ok(EnhanceOutcome {
        wav: x,
        route,
        bandwidth,
    })
}
