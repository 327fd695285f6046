//! Differentiable STFT / iSTFT tape ops. Both transforms are linear, so the
//! backward passes are their exact adjoints, delegated to the dsp crate.

use ndarray::ArrayD;

use crate::tape::{Tape, T};
use crate::Scalar;

impl<F: Scalar> Tape<F> {
    /// STFT of a 1-D sample node with explicit window/hop sample counts
    /// -> (2, T, F) with channel 0 = real, channel 1 = imaginary.
    pub fn stft_sized_op(&mut self, x: T, win: usize, hop: usize) -> T {
        let xv = self.value(x);
        assert_eq!(xv.ndim(), 1, "stft op input must be 1-D");
        let in_len = xv.len();
        let samples: Vec<f64> = xv.iter().map(|v| v.to64()).collect();
        let spec = trident_dsp::stft::stft_core(&samples, win, hop);
        let (t_dim, f_dim) = spec.dim();
        let mut out = ArrayD::<F>::zeros(ndarray::IxDyn(&[2, t_dim, f_dim]));
        for t in 0..t_dim {
            for f in 0..f_dim {
                out[[0, t, f]] = F::f(spec[(t, f)].re);
                out[[1, t, f]] = F::f(spec[(t, f)].im);
            }
        }
        let px = x.0;
        self.push(
            out,
            vec![px],
            Some(Box::new(move |_, g| {
                let mut cot = ndarray::Array2::<num_complex::Complex64>::zeros((t_dim, f_dim));
                for t in 0..t_dim {
                    for f in 0..f_dim {
                        cot[(t, f)] = num_complex::Complex64::new(
                            g[[0, t, f]].to64(),
                            g[[1, t, f]].to64(),
                        );
                    }
                }
                let gx = trident_dsp::stft::stft_vjp_core(&cot, win, hop, in_len);
                let gx = ArrayD::from_shape_vec(
                    ndarray::IxDyn(&[in_len]),
                    gx.into_iter().map(F::f).collect(),
                )
                .unwrap();
                vec![(px, gx)]
            })),
            None,
            false,
        )
    }

    /// STFT using the standard millisecond-based config at `fs`.
    pub fn stft_op(&mut self, x: T, cfg: trident_dsp::StftConfig, fs: u32) -> T {
        self.stft_sized_op(x, cfg.win_len(fs), cfg.hop_len(fs))
    }

    /// Inverse STFT of a (2, T, F) node -> 1-D samples of length `out_len`.
    pub fn istft_sized_op(&mut self, spec: T, win: usize, hop: usize, out_len: usize) -> T {
        let sv = self.value(spec);
        assert_eq!(sv.ndim(), 3, "istft op input must be (2, T, F)");
        assert_eq!(sv.shape()[0], 2, "istft op needs re/im channels");
        let (t_dim, f_dim) = (sv.shape()[1], sv.shape()[2]);
        assert_eq!(f_dim, win / 2 + 1, "istft op bin count");
        let mut cspec = ndarray::Array2::<num_complex::Complex64>::zeros((t_dim, f_dim));
        for t in 0..t_dim {
            for f in 0..f_dim {
                cspec[(t, f)] =
                    num_complex::Complex64::new(sv[[0, t, f]].to64(), sv[[1, t, f]].to64());
            }
        }
        let y = trident_dsp::stft::istft_core(&cspec, win, hop, out_len);
        let out = ArrayD::from_shape_vec(
            ndarray::IxDyn(&[out_len]),
            y.into_iter().map(F::f).collect(),
        )
        .unwrap();
        let ps = spec.0;
        self.push(
            out,
            vec![ps],
            Some(Box::new(move |_, g| {
                let gy: Vec<f64> = g.iter().map(|v| v.to64()).collect();
                let gs = trident_dsp::stft::istft_vjp_core(&gy, win, hop, t_dim);
                let mut out = ArrayD::<F>::zeros(ndarray::IxDyn(&[2, t_dim, f_dim]));
                for t in 0..t_dim {
                    for f in 0..f_dim {
                        out[[0, t, f]] = F::f(gs[(t, f)].re);
                        out[[1, t, f]] = F::f(gs[(t, f)].im);
                    }
                }
                vec![(ps, out)]
            })),
            None,
            false,
        )
    }

    /// Inverse STFT using the standard millisecond-based config at `fs`.
    pub fn istft_op(
        &mut self,
        spec: T,
        cfg: trident_dsp::StftConfig,
        fs: u32,
        out_len: usize,
    ) -> T {
        self.istft_sized_op(spec, cfg.win_len(fs), cfg.hop_len(fs), out_len)
    }
}
