//! WAV read/write. 16-bit PCM and 32-bit float, mono; multi-channel files
//! are averaged to mono on ingest.

use std::path::Path;

use crate::{DspError, Result, Waveform};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    Pcm16,
    Float32,
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(DspError::InvalidArgument(format!(
            "{}: zero channels",
            path.display()
        )));
    }

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()?,
        (fmt, bits) => {
            return Err(DspError::InvalidArgument(format!(
                "{}: unsupported wav format {fmt:?}/{bits}-bit (want 16-bit PCM or 32-bit float)",
                path.display()
            )))
        }
    };

    let frames = interleaved.len() / channels;
    let mono: Vec<f64> = if channels == 1 {
        interleaved
    } else {
        eprintln!(
            "note: {} has {channels} channels; averaging to mono",
            path.display()
        );
        (0..frames)
            .map(|i| {
                interleaved[i * channels..(i + 1) * channels].iter().sum::<f64>() / channels as f64
            })
            .collect()
    };
    Waveform::new(mono, spec.sample_rate)
}

pub fn write_wav(path: impl AsRef<Path>, wav: &Waveform, format: SampleFormat) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wav.fs(),
        bits_per_sample: match format {
            SampleFormat::Pcm16 => 16,
            SampleFormat::Float32 => 32,
        },
        sample_format: match format {
            SampleFormat::Pcm16 => hound::SampleFormat::Int,
            SampleFormat::Float32 => hound::SampleFormat::Float,
        },
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    match format {
        SampleFormat::Pcm16 => {
            for s in wav.samples() {
                let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                writer.write_sample(v)?;
            }
        }
        SampleFormat::Float32 => {
            for s in wav.samples() {
                writer.write_sample(*s as f32)?;
            }
        }
    }
    writer.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pcm16_round_trip_within_quantization_step() {
        let dir = std::env::temp_dir().join("trident_dsp_wav_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("rt16.wav");
        let x =
            Waveform::new((0..256).map(|i| (i as f64 * 0.1).sin() * 0.8).collect(), 16000).unwrap();
        write_wav(&path, &x, SampleFormat::Pcm16).unwrap();
        let y = read_wav(&path).unwrap();
        assert_eq!(y.fs(), 16000);
        assert_eq!(y.len(), x.len());
        for (a, b) in x.samples().iter().zip(y.samples()) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn float32_round_trip_preserves_fs() {
        let dir = std::env::temp_dir().join("trident_dsp_wav_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("rt32.wav");
        let x = Waveform::new(vec![0.125, -0.25, 0.5, 1.0], 44100).unwrap();
        write_wav(&path, &x, SampleFormat::Float32).unwrap();
        let y = read_wav(&path).unwrap();
        assert_eq!(y.fs(), 44100);
        for (a, b) in x.samples().iter().zip(y.samples()) {
            assert!((a - b).abs() < 1e-7);
        }
    }
}
