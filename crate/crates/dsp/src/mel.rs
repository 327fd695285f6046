//! Mel filterbank and DCT-II matrices for cepstral features.

use ndarray::Array2;

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filterbank of shape (n_mels, n_bins) spanning 0..fs/2.
/// Filters are area-normalized (each row sums to 1) so log-mel levels are
/// comparable across band widths.
pub fn mel_filterbank(fs: u32, fft_size: usize, n_mels: usize) -> Array2<f64> {
    let n_bins = fft_size / 2 + 1;
    let f_max = fs as f64 / 2.0;
    let mel_max = hz_to_mel(f_max);
    let centers: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
        .collect();

    let mut fb = Array2::<f64>::zeros((n_mels, n_bins));
    for m in 0..n_mels {
        let (lo, mid, hi) = (centers[m], centers[m + 1], centers[m + 2]);
        let mut row_sum = 0.0;
        for k in 0..n_bins {
            let f = k as f64 * fs as f64 / fft_size as f64;
            let w = if f >= lo && f <= mid && mid > lo {
                (f - lo) / (mid - lo)
            } else if f > mid && f <= hi && hi > mid {
                (hi - f) / (hi - mid)
            } else {
                0.0
            };
            fb[(m, k)] = w;
            row_sum += w;
        }
        if row_sum > 0.0 {
            for k in 0..n_bins {
                fb[(m, k)] /= row_sum;
            }
        }
    }
    fb
}

/// Orthonormal DCT-II matrix of shape (n_coeffs, n). Row 0 is the energy
/// coefficient.
pub fn dct_ii_matrix(n_coeffs: usize, n: usize) -> Array2<f64> {
    let mut d = Array2::<f64>::zeros((n_coeffs, n));
    let norm0 = (1.0 / n as f64).sqrt();
    let norm = (2.0 / n as f64).sqrt();
    for c in 0..n_coeffs {
        for j in 0..n {
            let angle = std::f64::consts::PI * (j as f64 + 0.5) * c as f64 / n as f64;
            d[(c, j)] = if c == 0 { norm0 } else { norm * angle.cos() };
        }
    }
    d
}
