//! Oracle-backed tests for every distortion operator and the pair builder.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trident_dsp::{rel_l2, Waveform};
use trident_sim::distort::PacketLossParams;
use trident_sim::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn speechish(len: usize, fs: u32, seed: u64) -> Waveform {
    // tone mixture with an envelope, a stand-in for voiced speech
    let mut r = rng(seed);
    let f0 = r.gen_range(90.0..220.0);
    let samples = (0..len)
        .map(|i| {
            let t = i as f64 / fs as f64;
            let env = 0.4 + 0.3 * (std::f64::consts::TAU * 1.7 * t).sin();
            env * (1..=5)
                .map(|h| (std::f64::consts::TAU * f0 * h as f64 * t).sin() / h as f64)
                .sum::<f64>()
                * 0.2
        })
        .collect();
    Waveform::new(samples, fs).unwrap()
}

/// Oracle: measured SNR in dB between a mixture and the signal it embeds.
fn measure_snr_db(mix: &Waveform, signal: &Waveform) -> f64 {
    let noise: Vec<f64> = mix
        .samples()
        .iter()
        .zip(signal.samples())
        .map(|(m, s)| m - s)
        .collect();
    let p_s = signal.power();
    let p_n = noise.iter().map(|v| v * v).sum::<f64>() / noise.len() as f64;
    10.0 * (p_s / p_n).log10()
}

#[test]
fn noise_mixing_hits_requested_snr() {
    let clean = speechish(16000, 16000, 1);
    let noise = synth::white_noise(16000, 16000, &mut rng(2)).unwrap();
    for snr in [-5.0, 0.0, 12.5, 60.0] {
        let mix = apply_noise(&clean, &noise, snr).unwrap();
        let measured = measure_snr_db(&mix, &clean);
        assert!(
            (measured - snr).abs() < 0.01,
            "snr {snr}: measured {measured}"
        );
    }
}

#[test]
fn noise_snr_survives_random_draws() {
    for i in 0..100 {
        let clean = speechish(8000, 16000, 100 + i);
        let noise = synth::pink_noise(5000, 16000, &mut rng(200 + i)).unwrap(); // shorter: loops
        let snr = rng(300 + i).gen_range(-5.0..20.0);
        let mix = apply_noise(&clean, &noise, snr).unwrap();
        assert!((measure_snr_db(&mix, &clean) - snr).abs() < 0.01);
    }
}

#[test]
fn noise_on_silence_is_degenerate() {
    let clean = Waveform::silence(1000, 16000).unwrap();
    let noise = synth::white_noise(1000, 16000, &mut rng(3)).unwrap();
    assert!(matches!(
        apply_noise(&clean, &noise, 10.0),
        Err(SimError::DegenerateInput(_))
    ));
}

#[test]
fn sixty_db_snr_keeps_residual_sixty_db_down() {
    let clean = speechish(16000, 16000, 4);
    let noise = synth::white_noise(16000, 16000, &mut rng(5)).unwrap();
    let mix = apply_noise(&clean, &noise, 60.0).unwrap();
    let resid: f64 = mix
        .samples()
        .iter()
        .zip(clean.samples())
        .map(|(m, c)| (m - c) * (m - c))
        .sum();
    let total = clean.energy();
    assert!(10.0 * (resid / total).log10() < -59.9);
}

#[test]
fn reverb_with_unit_impulse_is_identity() {
    let x = speechish(4000, 16000, 6);
    let mut imp = vec![0.0; 64];
    imp[0] = 1.0;
    let rir = Waveform::new(imp, 16000).unwrap();
    let y = apply_reverb(&x, &rir).unwrap();
    assert!(rel_l2(x.samples(), y.samples()) < 1e-12);
}

#[test]
fn reverb_with_delayed_impulse_shifts() {
    let x = speechish(4000, 16000, 7);
    let d = 25usize;
    let mut imp = vec![0.0; 64];
    imp[d] = 1.0;
    let rir = Waveform::new(imp, 16000).unwrap();
    let y = apply_reverb(&x, &rir).unwrap();
    // output peak-normalization rescales; compensate by the known ratio
    let scale = x.peak()
        / x.samples()[..x.len() - d]
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
    for i in d..x.len() {
        assert!((y.samples()[i] - scale * x.samples()[i - d]).abs() < 1e-9);
    }
    for s in &y.samples()[..d] {
        assert!(s.abs() < 1e-9);
    }
}

#[test]
fn reverb_matches_naive_convolution_oracle() {
    let x = speechish(500, 16000, 8);
    let rir = synth::exp_decay_rir(0.01, 16000, &mut rng(9)).unwrap();
    let y = apply_reverb(&x, &rir).unwrap();
    // oracle: direct O(N*M) convolution, then the same peak normalization
    let mut conv = vec![0.0f64; x.len()];
    for (i, c) in conv.iter_mut().enumerate() {
        for (j, r) in rir.samples().iter().enumerate() {
            if i >= j {
                *c += x.samples()[i - j] * r;
            }
        }
    }
    let peak_out = conv.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let s = x.peak() / peak_out;
    for (a, b) in y.samples().iter().zip(&conv) {
        assert!((a - s * b).abs() < 1e-9);
    }
}

#[test]
fn reverb_rejects_zero_rir() {
    let x = speechish(100, 16000, 10);
    let rir = Waveform::silence(16, 16000).unwrap();
    assert!(matches!(
        apply_reverb(&x, &rir),
        Err(SimError::DegenerateInput(_))
    ));
}

#[test]
fn clip_ratio_one_is_identity() {
    let x = speechish(2000, 16000, 11);
    let y = apply_clip(&x, 1.0).unwrap();
    assert_eq!(x, y);
}

#[test]
fn clip_half_on_unit_ramp_plateaus() {
    let n = 1000;
    let ramp =
        Waveform::new((0..n).map(|i| i as f64 / (n - 1) as f64).collect(), 16000).unwrap();
    let y = apply_clip(&ramp, 0.5).unwrap();
    for (i, v) in y.samples().iter().enumerate() {
        let x = ramp.samples()[i];
        assert_eq!(*v, x.min(0.5));
    }
}

#[test]
fn clipped_fraction_matches_threshold_count_oracle() {
    let x = speechish(8000, 16000, 12);
    let ratio = 0.3;
    let y = apply_clip(&x, ratio).unwrap();
    let theta = ratio * x.peak();
    let oracle = x.samples().iter().filter(|v| v.abs() > theta).count();
    let clipped = y
        .samples()
        .iter()
        .zip(x.samples())
        .filter(|(yv, xv)| yv != xv)
        .count();
    assert_eq!(clipped, oracle);
    assert!(matches!(apply_clip(&x, 0.0), Err(SimError::InvalidArgument(_))));
}

#[test]
fn bandwidth_limit_passes_inband_content() {
    // content below half the 8 kHz cutoff, sampled at 48 kHz
    let mut r = rng(13);
    let phases: Vec<f64> = (0..4).map(|_| r.gen_range(0.0..1.0)).collect();
    let env: Vec<f64> = trident_dsp::stft::hann_periodic(48000);
    let samples: Vec<f64> = (0..48000)
        .map(|i| {
            let t = i as f64 / 48000.0;
            env[i]
                * (0..4)
                    .map(|k| {
                        (std::f64::consts::TAU * (300.0 + 700.0 * k as f64) * t + phases[k]).sin()
                    })
                    .sum::<f64>()
                * 0.2
        })
        .collect();
    let x = Waveform::new(samples, 48000).unwrap();
    let y = apply_bandwidth_limit(&x, 8000).unwrap();
    assert_eq!(y.len(), x.len());
    assert!(rel_l2(x.samples(), y.samples()) < 1e-3);
}

#[test]
fn bandwidth_limit_kills_out_of_band_energy() {
    let x = synth::white_noise(48000, 48000, &mut rng(14)).unwrap();
    let y = apply_bandwidth_limit(&x, 8000).unwrap();
    // oracle: full-signal FFT band split
    use rustfft::{num_complex::Complex, FftPlanner};
    let n = y.len();
    let mut buf: Vec<Complex<f64>> = y.samples().iter().map(|v| Complex::new(*v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let (mut above, mut total) = (0.0, 0.0);
    for (k, b) in buf.iter().enumerate().take(n / 2 + 1) {
        let f = k as f64 * 48000.0 / n as f64;
        let e = b.norm_sqr();
        total += e;
        if f > 4000.0 {
            above += e;
        }
    }
    assert!(10.0 * (above / total).log10() < -50.0, "above fraction {}", above / total);
}

#[test]
fn bandwidth_limit_rejects_cutoff_at_or_above_fs() {
    let x = speechish(1000, 16000, 15);
    assert!(matches!(
        apply_bandwidth_limit(&x, 16000),
        Err(SimError::InvalidArgument(_))
    ));
}

#[test]
fn pcm16_passthrough_is_within_quantization_step() {
    let x = speechish(4000, 16000, 16);
    let y = apply_codec(&x, &CodecPreset::Pcm16).unwrap();
    for (a, b) in x.samples().iter().zip(y.samples()) {
        assert!((a - b).abs() <= 0.5 / 32768.0 + 1e-12);
    }
}

#[test]
fn mu_law_output_lies_on_the_mu_law_grid() {
    let x = speechish(4000, 16000, 17);
    let y = apply_codec(&x, &CodecPreset::MuLaw { bits: 8 }).unwrap();
    // oracle: enumerate the 255-level grid directly from the expansion formula
    let k = 127.0f64;
    let grid: Vec<f64> = (-127..=127)
        .map(|q| {
            let qq = q as f64 / k;
            qq.signum() * (256f64.powf(qq.abs()) - 1.0) / 255.0
        })
        .collect();
    for v in y.samples() {
        let nearest = grid
            .iter()
            .map(|g| (g - v).abs())
            .fold(f64::INFINITY, f64::min);
        assert!(nearest < 1e-12, "value {v} off-grid by {nearest}");
    }
}

#[test]
fn external_codec_identity_command_preserves_input() {
    let x = speechish(2000, 16000, 18);
    let y = apply_codec(
        &x,
        &CodecPreset::External {
            command: vec!["cat".to_string()],
        },
    )
    .unwrap();
    for (a, b) in x.samples().iter().zip(y.samples()) {
        assert!((a - b).abs() < 1e-6); // f32 wav round trip
    }
}

#[test]
fn external_codec_failure_captures_stderr() {
    let x = speechish(100, 16000, 19);
    let err = apply_codec(
        &x,
        &CodecPreset::External {
            command: vec!["sh".into(), "-c".into(), "echo boom >&2; exit 3".into()],
        },
    )
    .unwrap_err();
    match err {
        SimError::CodecAdapter { stderr } => assert!(stderr.contains("boom")),
        other => panic!("expected codec adapter error, got {other}"),
    }
}

#[test]
fn packet_loss_zeroes_exactly_the_mask() {
    let x = speechish(32000, 16000, 20);
    let params = PacketLossParams {
        rate: 0.2,
        min_segment_ms: 20.0,
        max_segment_ms: 320.0,
    };
    let (y, mask) = apply_packet_loss(&x, &mut rng(21), &params).unwrap();
    assert!(!mask.lost_segments.is_empty());
    for i in 0..x.len() {
        if mask.covers(i) {
            assert_eq!(y.samples()[i], 0.0);
        } else {
            assert_eq!(y.samples()[i], x.samples()[i]);
        }
    }
    // disjoint and sorted
    for w in mask.lost_segments.windows(2) {
        assert!(w[0].1 <= w[1].0);
    }
}

#[test]
fn packet_loss_vanishing_rate_leaves_input_untouched() {
    let x = speechish(16000, 16000, 22);
    let params = PacketLossParams {
        rate: 1e-9,
        min_segment_ms: 20.0,
        max_segment_ms: 40.0,
    };
    let (y, mask) = apply_packet_loss(&x, &mut rng(23), &params).unwrap();
    assert!(mask.lost_segments.is_empty());
    assert_eq!(x, y);
}

#[test]
fn packet_loss_fraction_tracks_rate_over_many_draws() {
    let x = speechish(48000, 16000, 24); // 3 s
    let params = PacketLossParams {
        rate: 0.25,
        min_segment_ms: 20.0,
        max_segment_ms: 320.0,
    };
    let mut total = 0.0;
    let n = 1000;
    let mut r = rng(25);
    for _ in 0..n {
        let (_, mask) = apply_packet_loss(&x, &mut r, &params).unwrap();
        total += mask.lost_samples() as f64 / x.len() as f64;
    }
    let mean = total / n as f64;
    assert!(
        (mean - 0.25).abs() < 0.025,
        "mean lost fraction {mean} vs rate 0.25"
    );
    assert!(matches!(
        apply_packet_loss(
            &x,
            &mut rng(26),
            &PacketLossParams { rate: 0.7, ..params }
        ),
        Err(SimError::InvalidArgument(_))
    ));
}

#[test]
fn wind_spectral_centroid_stays_low() {
    let w = synth_wind(2.0, 16000, &mut rng(27), 0.7).unwrap();
    // oracle: FFT spectral centroid
    use rustfft::{num_complex::Complex, FftPlanner};
    let n = w.len();
    let mut buf: Vec<Complex<f64>> = w.samples().iter().map(|v| Complex::new(*v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let (mut wsum, mut esum) = (0.0, 0.0);
    for (k, b) in buf.iter().enumerate().take(n / 2 + 1) {
        let f = k as f64 * 16000.0 / n as f64;
        let e = b.norm_sqr();
        wsum += f * e;
        esum += e;
    }
    let centroid = wsum / esum;
    assert!(centroid < 500.0, "centroid {centroid} Hz");
}
