//! The individual degradation operators. Every operator preserves length and
//! sampling frequency.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use trident_dsp::{resample_arbitrary, Waveform};

use crate::{Result, SimError};

/// Mixes scaled noise into `clean` at an exact SNR in dB.
pub fn apply_noise(clean: &Waveform, noise: &Waveform, snr_db: f64) -> Result<Waveform> {
    if clean.fs() != noise.fs() {
        return Err(SimError::InvalidArgument(format!(
            "noise fs {} != clean fs {}",
            noise.fs(),
            clean.fs()
        )));
    }
    if !snr_db.is_finite() {
        return Err(SimError::InvalidArgument("snr_db must be finite".into()));
    }
    let p_clean = clean.power();
    if p_clean == 0.0 {
        return Err(SimError::DegenerateInput("silent clean signal".into()));
    }
    if noise.is_empty() || noise.power() == 0.0 {
        return Err(SimError::DegenerateInput("silent noise signal".into()));
    }
    // loop or trim the noise to the clean length
    let n: Vec<f64> = (0..clean.len())
        .map(|i| noise.samples()[i % noise.len()])
        .collect();
    let p_noise = n.iter().map(|v| v * v).sum::<f64>() / n.len() as f64;
    let alpha = (p_clean / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt();
    let out = clean
        .samples()
        .iter()
        .zip(&n)
        .map(|(c, v)| c + alpha * v)
        .collect();
    Ok(Waveform::new(out, clean.fs())?)
}

/// Convolves with a room impulse response (FFT product), truncates to the
/// input length, and normalizes the output peak to the input peak.
pub fn apply_reverb(clean: &Waveform, rir: &Waveform) -> Result<Waveform> {
    if clean.fs() != rir.fs() {
        return Err(SimError::InvalidArgument(format!(
            "rir fs {} != clean fs {}",
            rir.fs(),
            clean.fs()
        )));
    }
    if rir.is_empty() || rir.samples().iter().all(|v| *v == 0.0) {
        return Err(SimError::DegenerateInput("zero impulse response".into()));
    }
    let n = clean.len();
    let m = rir.len();
    let size = (n + m - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(size);
    let ifft = planner.plan_fft_inverse(size);

    let mut a: Vec<Complex64> = clean
        .samples()
        .iter()
        .map(|v| Complex64::new(*v, 0.0))
        .chain(std::iter::repeat(Complex64::default()))
        .take(size)
        .collect();
    let mut b: Vec<Complex64> = rir
        .samples()
        .iter()
        .map(|v| Complex64::new(*v, 0.0))
        .chain(std::iter::repeat(Complex64::default()))
        .take(size)
        .collect();
    fft.process(&mut a);
    fft.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    ifft.process(&mut a);
    let mut out: Vec<f64> = a[..n].iter().map(|c| c.re / size as f64).collect();

    let peak_in = clean.peak();
    let peak_out = out.iter().fold(0.0f64, |p, v| p.max(v.abs()));
    if peak_out > 0.0 && peak_in > 0.0 {
        let s = peak_in / peak_out;
        for v in &mut out {
            *v *= s;
        }
    }
    Ok(Waveform::new(out, clean.fs())?)
}

/// Hard clip at `clip_ratio * peak`.
pub fn apply_clip(wav: &Waveform, clip_ratio: f64) -> Result<Waveform> {
    if !(clip_ratio > 0.0 && clip_ratio <= 1.0) {
        return Err(SimError::InvalidArgument(format!(
            "clip_ratio {clip_ratio} out of (0, 1]"
        )));
    }
    if wav.peak() == 0.0 {
        return Err(SimError::DegenerateInput("silent input to clipping".into()));
    }
    let theta = clip_ratio * wav.peak();
    Ok(wav.map(|s| s.clamp(-theta, theta))?)
}

/// Band-limits by resampling down to `cutoff_fs` and back. Length preserved.
pub fn apply_bandwidth_limit(wav: &Waveform, cutoff_fs: u32) -> Result<Waveform> {
    if cutoff_fs >= wav.fs() {
        return Err(SimError::InvalidArgument(format!(
            "cutoff {} must be below fs {}",
            cutoff_fs,
            wav.fs()
        )));
    }
    if cutoff_fs == 0 {
        return Err(SimError::InvalidArgument("cutoff must be positive".into()));
    }
    let down = resample_arbitrary(wav.samples(), wav.fs(), cutoff_fs);
    let mut up = resample_arbitrary(&down, cutoff_fs, wav.fs());
    up.resize(wav.len(), 0.0);
    Ok(Waveform::new(up, wav.fs())?)
}

/// Codec simulation preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "codec", rename_all = "snake_case", deny_unknown_fields)]
pub enum CodecPreset {
    /// Mu-law companding quantization at `bits` (6 or 8 in training recipes).
    MuLaw { bits: u8 },
    /// Mu-law quantization composed with a bandwidth limit.
    MuLawBand { bits: u8, cutoff_fs: u32 },
    /// 16-bit PCM passthrough (quantization only).
    Pcm16,
    /// External encoder/decoder command reading WAV on stdin, writing WAV on
    /// stdout.
    External { command: Vec<String> },
}

impl CodecPreset {
    pub fn validate(&self) -> Result<()> {
        match self {
            CodecPreset::MuLaw { bits } | CodecPreset::MuLawBand { bits, .. } => {
                if !(2..=16).contains(bits) {
                    return Err(SimError::InvalidArgument(format!(
                        "mu-law bits {bits} out of 2..=16"
                    )));
                }
            }
            CodecPreset::Pcm16 => {}
            CodecPreset::External { command } => {
                if command.is_empty() {
                    return Err(SimError::InvalidArgument(
                        "external codec command is empty".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Mu-law compress/quantize/expand with 2^(bits-1) - 1 magnitude levels.
fn mu_law_quantize(x: f64, bits: u8) -> f64 {
    const MU: f64 = 255.0;
    let k = ((1u32 << (bits - 1)) - 1) as f64;
    let clipped = x.clamp(-1.0, 1.0);
    let companded = clipped.signum() * (1.0 + MU * clipped.abs()).ln() / (1.0 + MU).ln();
    let q = (companded * k).round() / k;
    q.signum() * ((1.0 + MU).powf(q.abs()) - 1.0) / MU
}

pub fn apply_codec(wav: &Waveform, preset: &CodecPreset) -> Result<Waveform> {
    preset.validate()?;
    match preset {
        CodecPreset::MuLaw { bits } => Ok(wav.map(|s| mu_law_quantize(s, *bits))?),
        CodecPreset::MuLawBand { bits, cutoff_fs } => {
            let q = wav.map(|s| mu_law_quantize(s, *bits))?;
            apply_bandwidth_limit(&q, *cutoff_fs)
        }
        CodecPreset::Pcm16 => Ok(wav.map(|s| (s * 32768.0).round().clamp(-32768.0, 32767.0) / 32768.0)?),
        CodecPreset::External { command } => apply_external_codec(wav, command),
    }
}

/// Runs an external codec command with WAV piped through stdin/stdout.
fn apply_external_codec(wav: &Waveform, command: &[String]) -> Result<Waveform> {
    use std::io::{Read, Write};
    use std::process::{Command, Stdio};

    let mut wav_bytes = Vec::new();
    {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: wav.fs(),
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let cursor = std::io::Cursor::new(&mut wav_bytes);
        let mut writer = hound::WavWriter::new(cursor, spec)
            .map_err(trident_dsp::DspError::Wav)?;
        for s in wav.samples() {
            writer
                .write_sample(*s as f32)
                .map_err(trident_dsp::DspError::Wav)?;
        }
        writer.finalize().map_err(trident_dsp::DspError::Wav)?;
    }

    let mut child = Command::new(&command[0])
        .args(&command[1..])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| SimError::CodecAdapter {
            stderr: format!("spawn {}: {e}", command[0]),
        })?;

    let mut stdin = child.stdin.take().expect("piped stdin");
    let writer = std::thread::spawn(move || {
        let _ = stdin.write_all(&wav_bytes);
    });
    let mut out_bytes = Vec::new();
    child
        .stdout
        .take()
        .expect("piped stdout")
        .read_to_end(&mut out_bytes)?;
    let mut err_bytes = Vec::new();
    child
        .stderr
        .take()
        .expect("piped stderr")
        .read_to_end(&mut err_bytes)?;
    writer.join().ok();
    let status = child.wait()?;
    if !status.success() {
        return Err(SimError::CodecAdapter {
            stderr: String::from_utf8_lossy(&err_bytes).into_owned(),
        });
    }

    let cursor = std::io::Cursor::new(out_bytes);
    let mut reader = hound::WavReader::new(cursor).map_err(|e| SimError::CodecAdapter {
        stderr: format!("decode output wav: {e}"),
    })?;
    let spec = reader.spec();
    let decoded: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(trident_dsp::DspError::Wav)?,
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(trident_dsp::DspError::Wav)?,
        (f, b) => {
            return Err(SimError::CodecAdapter {
                stderr: format!("unsupported output format {f:?}/{b}"),
            })
        }
    };
    let mono: Vec<f64> = if spec.channels == 1 {
        decoded
    } else {
        let ch = spec.channels as usize;
        decoded.chunks(ch).map(|c| c.iter().sum::<f64>() / ch as f64).collect()
    };
    let mut resampled = if spec.sample_rate == wav.fs() {
        mono
    } else {
        resample_arbitrary(&mono, spec.sample_rate, wav.fs())
    };
    resampled.resize(wav.len(), 0.0);
    Ok(Waveform::new(resampled, wav.fs())?)
}

/// Sample ranges (start, end) that were zeroed, exclusive end, disjoint and
/// sorted.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PacketLossMask {
    pub lost_segments: Vec<(usize, usize)>,
}

impl PacketLossMask {
    pub fn lost_samples(&self) -> usize {
        self.lost_segments.iter().map(|(s, e)| e - s).sum()
    }

    pub fn covers(&self, i: usize) -> bool {
        self.lost_segments.iter().any(|(s, e)| i >= *s && i < *e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacketLossParams {
    /// Target lost fraction, in (0, 0.5].
    pub rate: f64,
    pub min_segment_ms: f64,
    pub max_segment_ms: f64,
}

/// Zeroes random disjoint segments totaling about `rate` of the signal.
pub fn apply_packet_loss(
    wav: &Waveform,
    rng: &mut ChaCha8Rng,
    params: &PacketLossParams,
) -> Result<(Waveform, PacketLossMask)> {
    if !(params.rate > 0.0 && params.rate <= 0.5) {
        return Err(SimError::InvalidArgument(format!(
            "packet loss rate {} out of (0, 0.5]",
            params.rate
        )));
    }
    if params.min_segment_ms <= 0.0 || params.min_segment_ms > params.max_segment_ms {
        return Err(SimError::InvalidArgument(
            "segment duration range must be positive and ordered".into(),
        ));
    }
    let len = wav.len();
    let fs = wav.fs() as f64;
    let min_seg = ((params.min_segment_ms * fs / 1000.0).round() as usize).max(1);
    let max_seg = ((params.max_segment_ms * fs / 1000.0).round() as usize).max(min_seg);
    let target = (params.rate * len as f64).round() as usize;

    let mut segments: Vec<(usize, usize)> = Vec::new();
    let mut lost = 0usize;
    let mut attempts = 0usize;
    while lost < target && attempts < 4096 {
        attempts += 1;
        let mut dur = rng.gen_range(min_seg..=max_seg);
        dur = dur.min(target - lost).max(1).min(len);
        if dur > len {
            break;
        }
        let start = rng.gen_range(0..=(len - dur));
        let end = start + dur;
        // keep segments disjoint with one sample of slack
        if segments
            .iter()
            .any(|(s, e)| start < e.saturating_add(1) && *s < end + 1)
        {
            continue;
        }
        segments.push((start, end));
        lost += dur;
    }
    segments.sort_unstable();

    let mut out = wav.samples().to_vec();
    for (s, e) in &segments {
        for v in &mut out[*s..*e] {
            *v = 0.0;
        }
    }
    Ok((
        Waveform::new(out, wav.fs())?,
        PacketLossMask {
            lost_segments: segments,
        },
    ))
}
