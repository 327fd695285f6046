//! Operation-level tests for transforms, resampling, and subband handling.
//! Oracles here are deliberately independent of the implementation paths
//! they check: naive DFT loops, direct FFT band-energy measurement, and
//! closed-form constructions.

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trident_dsp::stft::{hann_periodic, istft_vjp, stft_vjp};
use trident_dsp::{
    cws_merge, cws_split, istft, rel_l2, resample, stft, ComplexSpectrogram, DspError, StftConfig,
    Waveform, SUPPORTED_RATES,
};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_wave(len: usize, fs: u32, seed: u64) -> Waveform {
    let mut r = rng(seed);
    Waveform::new((0..len).map(|_| r.gen_range(-0.9..0.9)).collect(), fs).unwrap()
}

/// Oracle: naive O(N^2) DFT of one windowed frame.
fn naive_windowed_dft(frame: &[f64], window: &[f64]) -> Vec<Complex64> {
    let n = frame.len();
    (0..n / 2 + 1)
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, (x, w)) in frame.iter().zip(window).enumerate() {
                let theta = -std::f64::consts::TAU * k as f64 * i as f64 / n as f64;
                acc += Complex64::new(theta.cos(), theta.sin()) * (x * w);
            }
            acc
        })
        .collect()
}

/// Oracle: fraction of total energy above `cutoff_hz`, measured with a plain
/// full-signal FFT (no framing, no windowing).
fn energy_fraction_above(x: &[f64], fs: u32, cutoff_hz: f64) -> f64 {
    use rustfft::{num_complex::Complex, FftPlanner};
    let n = x.len();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(*v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let mut total = 0.0;
    let mut above = 0.0;
    for (k, b) in buf.iter().enumerate().take(n / 2 + 1) {
        let f = k as f64 * fs as f64 / n as f64;
        let e = b.norm_sqr();
        total += e;
        if f > cutoff_hz {
            above += e;
        }
    }
    above / total
}

/// Multitone burst with a Hann fade over the whole length, band-limited to
/// `max_hz`. Fading to zero at the edges keeps boundary extension out of
/// resampling comparisons.
fn multitone(len: usize, fs: u32, max_hz: f64, seed: u64) -> Waveform {
    let mut r = rng(seed);
    let tones: Vec<(f64, f64, f64)> = (0..6)
        .map(|_| {
            (
                r.gen_range(60.0..max_hz),
                r.gen_range(0.05..0.15),
                r.gen_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let env = hann_periodic(len);
    let samples = (0..len)
        .map(|i| {
            let t = i as f64 / fs as f64;
            env[i]
                * tones
                    .iter()
                    .map(|(f, a, p)| a * (std::f64::consts::TAU * f * t + p).sin())
                    .sum::<f64>()
        })
        .collect();
    Waveform::new(samples, fs).unwrap()
}

#[test]
fn stft_of_silence_is_zero() {
    let cfg = StftConfig::default();
    let wav = Waveform::silence(16000, 16000).unwrap();
    let spec = stft(&wav, &cfg).unwrap();
    assert_eq!(spec.num_frames(), 16000usize.div_ceil(cfg.hop_len(16000)));
    assert!(spec.data.iter().all(|c| c.norm() == 0.0));
}

#[test]
fn stft_matches_naive_dft_oracle_and_concentrates_bin_energy() {
    let cfg = StftConfig::default();
    let fs = 16000u32;
    let win = cfg.win_len(fs);
    let hop = cfg.hop_len(fs);
    let k = 37usize; // bin-center frequency
    let freq = k as f64 * fs as f64 / win as f64;
    let wav = Waveform::new(
        (0..win * 4)
            .map(|i| (std::f64::consts::TAU * freq * i as f64 / fs as f64).cos())
            .collect(),
        fs,
    )
    .unwrap();
    let spec = stft(&wav, &cfg).unwrap();

    // frame 2 starts at signal sample 2*hop - hop = hop; fully interior
    let m = 2usize;
    let window = hann_periodic(win);
    let frame: Vec<f64> = (0..win)
        .map(|n| wav.samples()[m * hop + n - hop])
        .collect();
    let oracle = naive_windowed_dft(&frame, &window);
    for (kk, o) in oracle.iter().enumerate() {
        let got = spec.data[(m, kk)];
        assert!(
            (got - o).norm() <= 1e-9 * (1.0 + o.norm()),
            "bin {kk}: impl {got} oracle {o}"
        );
    }

    // Hann leakage is confined to k-1..=k+1 for a bin-centered cosine
    let total: f64 = oracle.iter().map(|c| c.norm_sqr()).sum();
    let near: f64 = (k - 1..=k + 1).map(|kk| oracle[kk].norm_sqr()).sum();
    assert!(near / total > 0.999, "near fraction {}", near / total);
    let peak_bin = (0..oracle.len())
        .max_by(|a, b| oracle[*a].norm_sqr().total_cmp(&oracle[*b].norm_sqr()))
        .unwrap();
    assert_eq!(peak_bin, k);
}

#[test]
fn stft_rejects_empty_input() {
    let cfg = StftConfig::default();
    let wav = Waveform::silence(0, 16000).unwrap();
    assert!(matches!(
        stft(&wav, &cfg),
        Err(DspError::InvalidArgument(_))
    ));
}

#[test]
fn istft_of_zero_spectrogram_is_silence() {
    let cfg = StftConfig::default();
    let spec = ComplexSpectrogram {
        data: Array2::zeros((10, cfg.num_bins(8000))),
        cfg,
        fs: 8000,
    };
    let wav = istft(&spec, &cfg, 1000).unwrap();
    assert_eq!(wav.len(), 1000);
    assert!(wav.samples().iter().all(|s| *s == 0.0));
}

#[test]
fn istft_rejects_inconsistent_bins() {
    let cfg = StftConfig::default();
    let spec = ComplexSpectrogram {
        data: Array2::zeros((10, 5)),
        cfg,
        fs: 8000,
    };
    assert!(matches!(
        istft(&spec, &cfg, 100),
        Err(DspError::ShapeMismatch(_))
    ));
}

#[test]
fn round_trip_below_1e6_at_every_supported_rate() {
    let cfg = StftConfig::default();
    for (i, fs) in SUPPORTED_RATES.iter().enumerate() {
        let len = (*fs as usize) / 2 + 17; // about half a second, ragged length
        let wav = random_wave(len, *fs, 100 + i as u64);
        let spec = stft(&wav, &cfg).unwrap();
        let back = istft(&spec, &cfg, len).unwrap();
        let err = rel_l2(wav.samples(), back.samples());
        assert!(err < 1e-6, "fs {fs}: round trip rel err {err}");
    }
}

#[test]
fn stft_istft_stft_is_a_fixed_point() {
    let cfg = StftConfig::default();
    let wav = random_wave(20000, 16000, 7);
    let spec = stft(&wav, &cfg).unwrap();
    let wav2 = istft(&spec, &cfg, wav.len()).unwrap();
    let spec2 = stft(&wav2, &cfg).unwrap();
    let num: f64 = (&spec.data - &spec2.data).iter().map(|c| c.norm_sqr()).sum();
    let den: f64 = spec.data.iter().map(|c| c.norm_sqr()).sum();
    assert!((num / den).sqrt() < 1e-6);
}

#[test]
fn stft_is_linear() {
    let cfg = StftConfig::default();
    let x = random_wave(9000, 24000, 1);
    let y = random_wave(9000, 24000, 2);
    let (a, b) = (0.7, -1.3);
    let combo = Waveform::new(
        x.samples()
            .iter()
            .zip(y.samples())
            .map(|(xs, ys)| a * xs + b * ys)
            .collect(),
        24000,
    )
    .unwrap();
    let sx = stft(&x, &cfg).unwrap();
    let sy = stft(&y, &cfg).unwrap();
    let sc = stft(&combo, &cfg).unwrap();
    let lin = &sx.data * Complex64::new(a, 0.0) + &sy.data * Complex64::new(b, 0.0);
    let num: f64 = (&sc.data - &lin).iter().map(|c| c.norm_sqr()).sum();
    let den: f64 = sc.data.iter().map(|c| c.norm_sqr()).sum();
    assert!((num / den).sqrt() < 1e-9);
}

#[test]
fn resample_preserves_nyquist_safe_content() {
    // 48 -> 16 -> 48 on content comfortably below 8 kHz
    let x = multitone(96000, 48000, 6500.0, 11);
    let down = resample(&x, 16000).unwrap();
    let up = resample(&down, 48000).unwrap();
    let n = x.len().min(up.len());
    let err = rel_l2(&x.samples()[..n], &up.samples()[..n]);
    assert!(err < 1e-3, "round trip rel err {err}");
}

#[test]
fn upsampling_leaves_image_band_below_minus_60_db() {
    let x = random_wave(32000, 16000, 3);
    let up = resample(&x, 48000).unwrap();
    let frac = energy_fraction_above(up.samples(), 48000, 8000.0);
    assert!(
        10.0 * frac.log10() < -60.0,
        "image band at {} dB",
        10.0 * frac.log10()
    );
}

#[test]
fn resample_length_is_deterministic_function_of_rates() {
    for &(from, to) in &[(48000u32, 16000u32), (22050, 48000), (44100, 48000), (8000, 24000)] {
        for len in [1usize, 999, 16000, 48001] {
            let x = Waveform::silence(len, from).unwrap();
            let y = resample(&x, to).unwrap();
            let expect = ((len as u64 * to as u64 + from as u64 / 2) / from as u64) as usize;
            assert_eq!(y.len(), expect, "{from}->{to} len {len}");
            let y2 = resample(&random_wave(len, from, 5), to).unwrap();
            assert_eq!(y2.len(), expect);
        }
    }
}

fn random_fullband_spec(t: usize, seed: u64) -> ComplexSpectrogram {
    let cfg = StftConfig::default();
    let f = cfg.num_bins(48000);
    let mut r = rng(seed);
    let data = Array2::from_shape_fn((t, f), |_| {
        Complex64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0))
    });
    ComplexSpectrogram { data, cfg, fs: 48000 }
}

#[test]
fn cws_bands_partition_the_spectrum() {
    let spec = random_fullband_spec(12, 21);
    let stack = cws_split(&spec).unwrap();
    assert_eq!(stack.bands.len(), 3);
    let widths: Vec<usize> = stack.bands.iter().map(|b| b.ncols()).collect();
    assert_eq!(widths.iter().sum::<usize>(), spec.num_bins());
    assert_eq!(widths, vec![256, 256, 257]); // Nyquist bin rides in the top band
    for (b, band) in stack.bands.iter().enumerate() {
        let (lo, hi) = (stack.band_edges[b], stack.band_edges[b + 1]);
        for t in 0..spec.num_frames() {
            for k in lo..hi {
                assert_eq!(band[(t, k - lo)], spec.data[(t, k)]);
            }
        }
    }
}

#[test]
fn cws_split_requires_48k() {
    let cfg = StftConfig::default();
    let spec = ComplexSpectrogram {
        data: Array2::zeros((4, cfg.num_bins(16000))),
        cfg,
        fs: 16000,
    };
    assert!(matches!(cws_split(&spec), Err(DspError::UnsupportedRate(16000))));
}

#[test]
fn lowband_only_spectrogram_leaves_upper_bands_zero() {
    let mut spec = random_fullband_spec(6, 23);
    for t in 0..6 {
        for k in 256..spec.num_bins() {
            spec.data[(t, k)] = Complex64::new(0.0, 0.0);
        }
    }
    let stack = cws_split(&spec).unwrap();
    assert!(stack.bands[1].iter().all(|c| c.norm() == 0.0));
    assert!(stack.bands[2].iter().all(|c| c.norm() == 0.0));
    assert!(stack.bands[0].iter().any(|c| c.norm() > 0.0));
}

#[test]
fn cws_merge_split_is_bit_exact_identity() {
    let spec = random_fullband_spec(9, 29);
    let merged = cws_merge(&cws_split(&spec).unwrap()).unwrap();
    assert_eq!(merged.data, spec.data);
    assert_eq!(merged.fs, spec.fs);
}

#[test]
fn cws_merge_of_zero_bands_is_zero() {
    let spec = random_fullband_spec(3, 31);
    let mut stack = cws_split(&spec).unwrap();
    for b in &mut stack.bands {
        b.fill(Complex64::new(0.0, 0.0));
    }
    let merged = cws_merge(&stack).unwrap();
    assert!(merged.data.iter().all(|c| c.norm() == 0.0));
}

#[test]
fn cws_merge_is_order_sensitive() {
    let spec = random_fullband_spec(5, 37);
    let mut stack = cws_split(&spec).unwrap();
    stack.bands.swap(0, 1);
    // widths still line up (256/256), so the merge succeeds but must differ
    let merged = cws_merge(&stack).unwrap();
    assert_ne!(merged.data, spec.data);
}

#[test]
fn cws_merge_rejects_wrong_band_count() {
    let spec = random_fullband_spec(5, 41);
    let mut stack = cws_split(&spec).unwrap();
    stack.bands.pop();
    assert!(matches!(cws_merge(&stack), Err(DspError::ShapeMismatch(_))));
}

// Adjoint identities: <A x, y> == <x, A* y> for the linear maps behind the
// differentiable transform ops.

#[test]
fn stft_vjp_satisfies_adjoint_identity() {
    let cfg = StftConfig::default();
    let fs = 8000u32;
    let x = random_wave(2000, fs, 51);
    let spec = stft(&x, &cfg).unwrap();
    let mut r = rng(52);
    let cotangent = Array2::from_shape_fn(spec.data.dim(), |_| {
        Complex64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0))
    });
    // <stft(x), Y> using the real inner product over (re, im) pairs
    let lhs: f64 = spec
        .data
        .iter()
        .zip(cotangent.iter())
        .map(|(a, b)| a.re * b.re + a.im * b.im)
        .sum();
    let gx = stft_vjp(&cotangent, &cfg, fs, x.len()).unwrap();
    let rhs: f64 = x.samples().iter().zip(&gx).map(|(a, b)| a * b).sum();
    assert!(
        (lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0),
        "lhs {lhs} rhs {rhs}"
    );
}

#[test]
fn istft_vjp_satisfies_adjoint_identity() {
    let cfg = StftConfig::default();
    let fs = 8000u32;
    let spec = {
        let mut r = rng(61);
        let f = cfg.num_bins(fs);
        ComplexSpectrogram {
            data: Array2::from_shape_fn((9, f), |_| {
                Complex64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0))
            }),
            cfg,
            fs,
        }
    };
    let out_len = 9 * cfg.hop_len(fs);
    let y = istft(&spec, &cfg, out_len).unwrap();
    let mut r = rng(62);
    let cot: Vec<f64> = (0..out_len).map(|_| r.gen_range(-1.0..1.0)).collect();
    let lhs: f64 = y.samples().iter().zip(&cot).map(|(a, b)| a * b).sum();
    let gspec = istft_vjp(&cot, &cfg, fs, spec.num_frames()).unwrap();
    let rhs: f64 = spec
        .data
        .iter()
        .zip(gspec.iter())
        .map(|(a, b)| a.re * b.re + a.im * b.im)
        .sum();
    assert!(
        (lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0),
        "lhs {lhs} rhs {rhs}"
    );
}
