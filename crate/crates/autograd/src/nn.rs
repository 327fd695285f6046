//! Fused network ops: unfold/fold over a sequence axis, single-layer LSTM
//! with hand-rolled BPTT, 2-D convolution, channel layer norm, softmax, and
//! PReLU. Each op checks shapes on entry and implements its exact adjoint.

use ndarray::{s, Array1, Array2, Array3, ArrayD, Axis, Ix1, Ix2, Ix3};

use crate::tape::{Tape, T};
use crate::Scalar;

impl<F: Scalar> Tape<F> {
    /// Sliding windows along the middle axis: (B, S, D) -> (B, P, I*D) with
    /// P = (S - kernel)/stride + 1. Requires (S - kernel) % stride == 0;
    /// callers pad first.
    pub fn unfold_seq(&mut self, x: T, kernel: usize, stride: usize) -> T {
        let xv = self.value(x).view().into_dimensionality::<Ix3>().unwrap();
        let (b, s_len, d) = xv.dim();
        assert!(s_len >= kernel, "unfold: sequence shorter than kernel");
        assert_eq!((s_len - kernel) % stride, 0, "unfold: pad first");
        let p = (s_len - kernel) / stride + 1;
        let mut out = Array3::<F>::zeros((b, p, kernel * d));
        for bi in 0..b {
            for pi in 0..p {
                for k in 0..kernel {
                    let src = xv.slice(s![bi, pi * stride + k, ..]);
                    out.slice_mut(s![bi, pi, k * d..(k + 1) * d])
                        .assign(&src);
                }
            }
        }
        let px = x.0;
        let in_dim = self.value(x).raw_dim();
        self.push(
            out.into_dyn(),
            vec![px],
            Some(Box::new(move |_, g| {
                let gv = g.view().into_dimensionality::<Ix3>().unwrap();
                let mut gx = Array3::<F>::zeros((b, s_len, d));
                for bi in 0..b {
                    for pi in 0..p {
                        for k in 0..kernel {
                            let mut dst = gx.slice_mut(s![bi, pi * stride + k, ..]);
                            dst += &gv.slice(s![bi, pi, k * d..(k + 1) * d]);
                        }
                    }
                }
                vec![(px, gx.into_dyn().into_shape_with_order(in_dim.clone()).unwrap())]
            })),
            None,
            false,
        )
    }

    /// Adjoint-shaped inverse of [`Tape::unfold_seq`]: overlap-adds windows
    /// back onto the sequence axis: (B, P, I*D) -> (B, S, D) with
    /// S = (P-1)*stride + kernel.
    pub fn fold_seq(&mut self, x: T, kernel: usize, stride: usize, d: usize) -> T {
        let xv = self.value(x).view().into_dimensionality::<Ix3>().unwrap();
        let (b, p, kd) = xv.dim();
        assert_eq!(kd, kernel * d, "fold: feature dim must be kernel*d");
        let s_len = (p - 1) * stride + kernel;
        let mut out = Array3::<F>::zeros((b, s_len, d));
        for bi in 0..b {
            for pi in 0..p {
                for k in 0..kernel {
                    let mut dst = out.slice_mut(s![bi, pi * stride + k, ..]);
                    dst += &xv.slice(s![bi, pi, k * d..(k + 1) * d]);
                }
            }
        }
        let px = x.0;
        self.push(
            out.into_dyn(),
            vec![px],
            Some(Box::new(move |_, g| {
                let gv = g.view().into_dimensionality::<Ix3>().unwrap();
                let mut gx = Array3::<F>::zeros((b, p, kernel * d));
                for bi in 0..b {
                    for pi in 0..p {
                        for k in 0..kernel {
                            let src = gv.slice(s![bi, pi * stride + k, ..]);
                            gx.slice_mut(s![bi, pi, k * d..(k + 1) * d]).assign(&src);
                        }
                    }
                }
                vec![(px, gx.into_dyn())]
            })),
            None,
            false,
        )
    }

    /// Single-layer unidirectional LSTM over (S, B, In) with weights
    /// w_ih (4H, In), w_hh (4H, H), bias (4H); gate order i, f, g, o.
    /// Returns hidden states (S, B, H). Zero initial state.
    pub fn lstm(&mut self, x: T, w_ih: T, w_hh: T, bias: T) -> T {
        let xv = self.value(x).view().into_dimensionality::<Ix3>().unwrap();
        let (s_len, b, in_dim) = xv.dim();
        let wih = self.value(w_ih).view().into_dimensionality::<Ix2>().unwrap();
        let whh = self.value(w_hh).view().into_dimensionality::<Ix2>().unwrap();
        let bv = self.value(bias).view().into_dimensionality::<Ix1>().unwrap();
        let h4 = wih.nrows();
        assert_eq!(h4 % 4, 0);
        let h = h4 / 4;
        assert_eq!(wih.ncols(), in_dim, "lstm w_ih input dim");
        assert_eq!(whh.dim(), (h4, h), "lstm w_hh dims");
        assert_eq!(bv.len(), h4, "lstm bias dim");

        // hoisted input projection: one big gemm over all timesteps
        let xflat = xv.to_shape((s_len * b, in_dim)).unwrap();
        let mut gates_all = xflat.dot(&wih.t()); // (S*B, 4H)
        for mut row in gates_all.rows_mut() {
            row.zip_mut_with(&bv, |t, bb| *t = *t + *bb);
        }
        let mut gates_all = gates_all
            .into_shape_with_order((s_len, b, h4))
            .unwrap();

        let mut h_state = Array2::<F>::zeros((b, h));
        let mut c_state = Array2::<F>::zeros((b, h));
        let mut acts = Array3::<F>::zeros((s_len, b, h4)); // post-activation gates
        let mut c_all = Array3::<F>::zeros((s_len, b, h));
        let mut h_all = Array3::<F>::zeros((s_len, b, h));
        let one = F::one();
        for t in 0..s_len {
            let mut gt = gates_all.index_axis_mut(Axis(0), t);
            gt += &h_state.dot(&whh.t());
            for bi in 0..b {
                for j in 0..h {
                    let ig = one / (one + (-gt[(bi, j)]).exp());
                    let fg = one / (one + (-gt[(bi, h + j)]).exp());
                    let gg = gt[(bi, 2 * h + j)].tanh();
                    let og = one / (one + (-gt[(bi, 3 * h + j)]).exp());
                    let c = fg * c_state[(bi, j)] + ig * gg;
                    let hh = og * c.tanh();
                    acts[(t, bi, j)] = ig;
                    acts[(t, bi, h + j)] = fg;
                    acts[(t, bi, 2 * h + j)] = gg;
                    acts[(t, bi, 3 * h + j)] = og;
                    c_state[(bi, j)] = c;
                    h_state[(bi, j)] = hh;
                }
            }
            c_all.index_axis_mut(Axis(0), t).assign(&c_state);
            h_all.index_axis_mut(Axis(0), t).assign(&h_state);
        }

        let (px, pwih, pwhh, pb) = (x.0, w_ih.0, w_hh.0, bias.0);
        let out_val = h_all.clone().into_dyn();
        self.push(
            out_val,
            vec![px, pwih, pwhh, pb],
            Some(Box::new(move |vals, g| {
                let gv = g.view().into_dimensionality::<Ix3>().unwrap();
                let wih = vals[pwih].view().into_dimensionality::<Ix2>().unwrap();
                let whh = vals[pwhh].view().into_dimensionality::<Ix2>().unwrap();
                let xv = vals[px].view().into_dimensionality::<Ix3>().unwrap();

                let mut dgates = Array3::<F>::zeros((s_len, b, h4));
                let mut dh_next = Array2::<F>::zeros((b, h));
                let mut dc_next = Array2::<F>::zeros((b, h));
                for t in (0..s_len).rev() {
                    for bi in 0..b {
                        for j in 0..h {
                            let ig = acts[(t, bi, j)];
                            let fg = acts[(t, bi, h + j)];
                            let gg = acts[(t, bi, 2 * h + j)];
                            let og = acts[(t, bi, 3 * h + j)];
                            let c = c_all[(t, bi, j)];
                            let c_prev = if t == 0 { F::zero() } else { c_all[(t - 1, bi, j)] };
                            let tc = c.tanh();
                            let dh = gv[(t, bi, j)] + dh_next[(bi, j)];
                            let dc = dh * og * (one - tc * tc) + dc_next[(bi, j)];
                            let d_og = dh * tc * og * (one - og);
                            let d_ig = dc * gg * ig * (one - ig);
                            let d_fg = dc * c_prev * fg * (one - fg);
                            let d_gg = dc * ig * (one - gg * gg);
                            dgates[(t, bi, j)] = d_ig;
                            dgates[(t, bi, h + j)] = d_fg;
                            dgates[(t, bi, 2 * h + j)] = d_gg;
                            dgates[(t, bi, 3 * h + j)] = d_og;
                            dc_next[(bi, j)] = dc * fg;
                        }
                    }
                    let dg_t = dgates.index_axis(Axis(0), t);
                    dh_next = dg_t.dot(&whh);
                }

                // batched weight grads
                let dg_flat = dgates.to_shape((s_len * b, h4)).unwrap();
                let x_flat = xv.to_shape((s_len * b, in_dim)).unwrap();
                let d_wih = dg_flat.t().dot(&x_flat);
                // previous hidden states, shifted by one step
                let mut h_prev = Array3::<F>::zeros((s_len, b, h));
                for t in 1..s_len {
                    let src = h_all.index_axis(Axis(0), t - 1).to_owned();
                    h_prev.index_axis_mut(Axis(0), t).assign(&src);
                }
                let hp_flat = h_prev.to_shape((s_len * b, h)).unwrap();
                let d_whh = dg_flat.t().dot(&hp_flat);
                let d_b = dg_flat.sum_axis(Axis(0));
                let d_x = dg_flat
                    .dot(&wih)
                    .into_shape_with_order((s_len, b, in_dim))
                    .unwrap();

                vec![
                    (px, d_x.into_dyn()),
                    (pwih, d_wih.into_dyn()),
                    (pwhh, d_whh.into_dyn()),
                    (pb, d_b.into_dyn()),
                ]
            })),
            None,
            false,
        )
    }

    /// Bidirectional LSTM: forward and time-reversed passes concatenated on
    /// the feature axis -> (S, B, 2H).
    #[allow(clippy::too_many_arguments)]
    pub fn bilstm(
        &mut self,
        x: T,
        w_ih_f: T,
        w_hh_f: T,
        b_f: T,
        w_ih_b: T,
        w_hh_b: T,
        b_b: T,
    ) -> T {
        let fwd = self.lstm(x, w_ih_f, w_hh_f, b_f);
        let xrev = self.reverse_axis(x, 0);
        let bwd_rev = self.lstm(xrev, w_ih_b, w_hh_b, b_b);
        let bwd = self.reverse_axis(bwd_rev, 0);
        self.concat(&[fwd, bwd], 2)
    }

    /// 2-D convolution on a single sample: input (C_in, H, W), weight
    /// (C_out, C_in, KH, KW), bias (C_out), zero padding.
    #[allow(clippy::too_many_arguments)]
    pub fn conv2d(
        &mut self,
        x: T,
        w: T,
        b: T,
        stride: (usize, usize),
        pad: (usize, usize),
    ) -> T {
        let xv = self.value(x).view().into_dimensionality::<Ix3>().unwrap();
        let wv = self
            .value(w)
            .view()
            .into_dimensionality::<ndarray::Ix4>()
            .unwrap();
        let (c_in, hh, ww) = xv.dim();
        let (c_out, wc_in, kh, kw) = wv.dim();
        assert_eq!(c_in, wc_in, "conv2d channel mismatch");
        let (sh, sw) = stride;
        let (ph, pw) = pad;
        assert!(hh + 2 * ph >= kh && ww + 2 * pw >= kw, "conv2d: input smaller than kernel");
        let oh = (hh + 2 * ph - kh) / sh + 1;
        let ow = (ww + 2 * pw - kw) / sw + 1;

        let cols = im2col(&xv, kh, kw, sh, sw, ph, pw, oh, ow);
        let wmat = wv.to_shape((c_out, c_in * kh * kw)).unwrap();
        let mut out = wmat.dot(&cols); // (C_out, OH*OW)
        let bv = self.value(b).view().into_dimensionality::<Ix1>().unwrap();
        assert_eq!(bv.len(), c_out, "conv2d bias");
        for (mut row, bc) in out.rows_mut().into_iter().zip(bv.iter()) {
            row.mapv_inplace(|t| t + *bc);
        }
        let out = out.into_shape_with_order((c_out, oh, ow)).unwrap();

        let (px, pw_id, pb) = (x.0, w.0, b.0);
        self.push(
            out.into_dyn(),
            vec![px, pw_id, pb],
            Some(Box::new(move |vals, g| {
                let gv = g.view().into_dimensionality::<Ix3>().unwrap();
                let gmat = gv.to_shape((c_out, oh * ow)).unwrap();
                let xv = vals[px].view().into_dimensionality::<Ix3>().unwrap();
                let wv = vals[pw_id]
                    .view()
                    .into_dimensionality::<ndarray::Ix4>()
                    .unwrap();
                let wmat = wv.to_shape((c_out, c_in * kh * kw)).unwrap();
                // recompute cols rather than caching them
                let cols = im2col(&xv, kh, kw, sh, sw, ph, pw, oh, ow);
                let d_w = gmat.dot(&cols.t()).into_shape_with_order((c_out, c_in, kh, kw)).unwrap();
                let d_b = gmat.sum_axis(Axis(1));
                let d_cols = wmat.t().dot(&gmat);
                let d_x = col2im(&d_cols, c_in, hh, ww, kh, kw, sh, sw, ph, pw, oh, ow);
                vec![
                    (px, d_x.into_dyn()),
                    (pw_id, d_w.into_dyn()),
                    (pb, d_b.into_dyn()),
                ]
            })),
            None,
            false,
        )
    }

    /// Layer normalization over axis 0 (the channel axis) at every trailing
    /// position, with per-channel affine parameters.
    pub fn layer_norm_ch(&mut self, x: T, gamma: T, beta: T, eps: f64) -> T {
        let shape = self.value(x).shape().to_vec();
        let c = shape[0];
        let cols: usize = shape[1..].iter().product::<usize>().max(1);
        assert_eq!(self.value(gamma).len(), c, "layer_norm gamma");
        assert_eq!(self.value(beta).len(), c, "layer_norm beta");
        let xm = self
            .value(x)
            .view()
            .into_shape_with_order((c, cols))
            .unwrap()
            .to_owned();
        let eps_f = F::f(eps);
        let inv_c = F::f(1.0 / c as f64);

        let mut xhat = Array2::<F>::zeros((c, cols));
        let mut rstd = Array1::<F>::zeros(cols);
        for j in 0..cols {
            let col = xm.column(j);
            let mu = col.sum() * inv_c;
            let var = col.iter().fold(F::zero(), |a, v| a + (*v - mu) * (*v - mu)) * inv_c;
            let r = F::one() / (var + eps_f).sqrt();
            rstd[j] = r;
            for i in 0..c {
                xhat[(i, j)] = (xm[(i, j)] - mu) * r;
            }
        }
        let gv = self.value(gamma).view().into_shape_with_order(c).unwrap().to_owned();
        let bv = self.value(beta).view().into_shape_with_order(c).unwrap().to_owned();
        let mut out = Array2::<F>::zeros((c, cols));
        for i in 0..c {
            for j in 0..cols {
                out[(i, j)] = gv[i] * xhat[(i, j)] + bv[i];
            }
        }
        let out = out.into_dyn().into_shape_with_order(shape.clone()).unwrap();

        let (px, pg, pb) = (x.0, gamma.0, beta.0);
        self.push(
            out,
            vec![px, pg, pb],
            Some(Box::new(move |vals, g| {
                let gm = g.view().into_shape_with_order((c, cols)).unwrap();
                let gv = vals[pg].view().into_shape_with_order(c).unwrap();
                let mut d_gamma = Array1::<F>::zeros(c);
                let mut d_beta = Array1::<F>::zeros(c);
                let mut d_x = Array2::<F>::zeros((c, cols));
                for j in 0..cols {
                    let mut sum_gy = F::zero();
                    let mut sum_gyx = F::zero();
                    for i in 0..c {
                        let gy = gm[(i, j)] * gv[i];
                        sum_gy = sum_gy + gy;
                        sum_gyx = sum_gyx + gy * xhat[(i, j)];
                    }
                    let mean_gy = sum_gy * inv_c;
                    let mean_gyx = sum_gyx * inv_c;
                    for i in 0..c {
                        let gy = gm[(i, j)] * gv[i];
                        d_x[(i, j)] = (gy - mean_gy - xhat[(i, j)] * mean_gyx) * rstd[j];
                        d_gamma[i] = d_gamma[i] + gm[(i, j)] * xhat[(i, j)];
                        d_beta[i] = d_beta[i] + gm[(i, j)];
                    }
                }
                let d_x = d_x.into_dyn().into_shape_with_order(vals[px].raw_dim()).unwrap();
                vec![
                    (px, d_x),
                    (pg, d_gamma.into_dyn()),
                    (pb, d_beta.into_dyn()),
                ]
            })),
            None,
            false,
        )
    }

    /// Softmax along the last axis.
    pub fn softmax_last(&mut self, x: T) -> T {
        let xv = self.value(x);
        let last = *xv.shape().last().unwrap();
        let rows = xv.len() / last;
        let xm = xv.view().into_shape_with_order((rows, last)).unwrap();
        let mut out = Array2::<F>::zeros((rows, last));
        for r in 0..rows {
            let row = xm.row(r);
            let mx = row.iter().cloned().fold(F::neg_infinity(), F::max);
            let mut denom = F::zero();
            for j in 0..last {
                let e = (row[j] - mx).exp();
                out[(r, j)] = e;
                denom = denom + e;
            }
            for j in 0..last {
                out[(r, j)] = out[(r, j)] / denom;
            }
        }
        let y = out.clone();
        let shape = xv.raw_dim();
        let out_dyn = out.into_dyn().into_shape_with_order(shape.clone()).unwrap();
        self.unary(out_dyn, x, move |_, g| {
            let gm = g.view().into_shape_with_order((rows, last)).unwrap();
            let mut d_x = Array2::<F>::zeros((rows, last));
            for r in 0..rows {
                let mut dot = F::zero();
                for j in 0..last {
                    dot = dot + gm[(r, j)] * y[(r, j)];
                }
                for j in 0..last {
                    d_x[(r, j)] = y[(r, j)] * (gm[(r, j)] - dot);
                }
            }
            d_x.into_dyn().into_shape_with_order(shape.clone()).unwrap()
        })
    }

    /// PReLU with a single shared slope parameter (shape [1]).
    pub fn prelu(&mut self, x: T, alpha: T) -> T {
        assert_eq!(self.value(alpha).len(), 1, "prelu alpha must be scalar");
        let a = *self.value(alpha).iter().next().unwrap();
        let v = self.value(x).mapv(|t| if t >= F::zero() { t } else { a * t });
        let (px, pa) = (x.0, alpha.0);
        self.push(
            v,
            vec![px, pa],
            Some(Box::new(move |vals, g| {
                let xval = &vals[px];
                let a = *vals[pa].iter().next().unwrap();
                let mut d_x = g.clone();
                d_x.zip_mut_with(xval, |gg, xx| {
                    if *xx < F::zero() {
                        *gg = *gg * a;
                    }
                });
                let mut d_a = F::zero();
                for (gg, xx) in g.iter().zip(xval.iter()) {
                    if *xx < F::zero() {
                        d_a = d_a + *gg * *xx;
                    }
                }
                vec![
                    (px, d_x),
                    (pa, ArrayD::from_elem(ndarray::IxDyn(&[1]), d_a)),
                ]
            })),
            None,
            false,
        )
    }
}

#[allow(clippy::too_many_arguments)]
fn im2col<F: Scalar>(
    x: &ndarray::ArrayView3<F>,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    ph: usize,
    pw: usize,
    oh: usize,
    ow: usize,
) -> Array2<F> {
    let (c_in, hh, www) = x.dim();
    let mut cols = Array2::<F>::zeros((c_in * kh * kw, oh * ow));
    for c in 0..c_in {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (c * kh + ki) * kw + kj;
                for oi in 0..oh {
                    let ii = (oi * sh + ki) as isize - ph as isize;
                    if ii < 0 || ii >= hh as isize {
                        continue;
                    }
                    for oj in 0..ow {
                        let jj = (oj * sw + kj) as isize - pw as isize;
                        if jj < 0 || jj >= www as isize {
                            continue;
                        }
                        cols[(row, oi * ow + oj)] = x[(c, ii as usize, jj as usize)];
                    }
                }
            }
        }
    }
    cols
}

#[allow(clippy::too_many_arguments)]
fn col2im<F: Scalar>(
    d_cols: &Array2<F>,
    c_in: usize,
    hh: usize,
    ww: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    ph: usize,
    pw: usize,
    oh: usize,
    ow: usize,
) -> Array3<F> {
    let mut d_x = Array3::<F>::zeros((c_in, hh, ww));
    for c in 0..c_in {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (c * kh + ki) * kw + kj;
                for oi in 0..oh {
                    let ii = (oi * sh + ki) as isize - ph as isize;
                    if ii < 0 || ii >= hh as isize {
                        continue;
                    }
                    for oj in 0..ow {
                        let jj = (oj * sw + kj) as isize - pw as isize;
                        if jj < 0 || jj >= ww as isize {
                            continue;
                        }
                        d_x[(c, ii as usize, jj as usize)] =
                            d_x[(c, ii as usize, jj as usize)] + d_cols[(row, oi * ow + oj)];
                    }
                }
            }
        }
    }
    d_x
}
