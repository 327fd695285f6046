//! TF-GridNet: B blocks of (intra-frame frequency BLSTM, sub-band temporal
//! BLSTM, cross-frame self-attention) over D-channel T x F embeddings, with
//! 3x3 conv projections at both ends.
//!
//! Every learnable component is frequency-count agnostic (convs are 1x1 or
//! 3x3, norms are per-channel), so one network serves any sampling rate.

use trident_autograd::{Init, Scalar, Tape, VarBuilder, VarId, VarStore, T};

use crate::{GridNetConfig, NetError, Result};

/// Weight initialization scheme for a whole network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetInit {
    /// Random everywhere (gradient-flow probes, separation training).
    Random,
    /// Random with the final output projection zeroed, so a stage wrapped in
    /// a residual/skip connection starts as identity.
    ZeroOutput,
    /// Passthrough projections and zeroed path outputs: the network computes
    /// the identity map on its input channels.
    Identity,
}

pub(crate) struct Conv2dLayer {
    pub w: VarId,
    pub b: VarId,
    pub stride: (usize, usize),
    pub pad: (usize, usize),
}

impl Conv2dLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new<F: Scalar>(
        vb: &mut VarBuilder<'_, F>,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: (usize, usize),
        stride: (usize, usize),
        pad: (usize, usize),
        init: Init,
    ) -> Self {
        let mut scope = vb.scoped(name);
        let w = scope.get(&[c_out, c_in, k.0, k.1], "w", init);
        let b = scope.get(&[c_out], "b", Init::Zeros);
        Self { w, b, stride, pad }
    }

    pub fn forward<F: Scalar>(&self, tape: &mut Tape<F>, store: &VarStore<F>, x: T) -> T {
        let w = tape.var(store, self.w);
        let b = tape.var(store, self.b);
        tape.conv2d(x, w, b, self.stride, self.pad)
    }
}

struct BiLstmWeights {
    w_ih_f: VarId,
    w_hh_f: VarId,
    b_f: VarId,
    w_ih_b: VarId,
    w_hh_b: VarId,
    b_b: VarId,
}

impl BiLstmWeights {
    fn new<F: Scalar>(vb: &mut VarBuilder<'_, F>, in_dim: usize, hidden: usize) -> Self {
        let init = Init::FanIn(hidden);
        Self {
            w_ih_f: vb.get(&[4 * hidden, in_dim], "w_ih_f", init),
            w_hh_f: vb.get(&[4 * hidden, hidden], "w_hh_f", init),
            b_f: vb.get(&[4 * hidden], "b_f", init),
            w_ih_b: vb.get(&[4 * hidden, in_dim], "w_ih_b", init),
            w_hh_b: vb.get(&[4 * hidden, hidden], "w_hh_b", init),
            b_b: vb.get(&[4 * hidden], "b_b", init),
        }
    }

    fn forward<F: Scalar>(&self, tape: &mut Tape<F>, store: &VarStore<F>, x: T) -> T {
        let w_ih_f = tape.var(store, self.w_ih_f);
        let w_hh_f = tape.var(store, self.w_hh_f);
        let b_f = tape.var(store, self.b_f);
        let w_ih_b = tape.var(store, self.w_ih_b);
        let w_hh_b = tape.var(store, self.w_hh_b);
        let b_b = tape.var(store, self.b_b);
        tape.bilstm(x, w_ih_f, w_hh_f, b_f, w_ih_b, w_hh_b, b_b)
    }
}

struct LayerNormW {
    gamma: VarId,
    beta: VarId,
}

impl LayerNormW {
    fn new<F: Scalar>(vb: &mut VarBuilder<'_, F>, name: &str, dim: usize) -> Self {
        let mut scope = vb.scoped(name);
        Self {
            gamma: scope.get(&[dim], "gamma", Init::Ones),
            beta: scope.get(&[dim], "beta", Init::Zeros),
        }
    }

    fn forward<F: Scalar>(&self, tape: &mut Tape<F>, store: &VarStore<F>, x: T) -> T {
        let g = tape.var(store, self.gamma);
        let b = tape.var(store, self.beta);
        tape.layer_norm_ch(x, g, b, 1e-5)
    }
}

/// One recurrent path (intra-frequency or inter-frame): pre-norm, unfold,
/// bidirectional LSTM, transposed-conv reassembly, residual add.
struct RnnPath {
    norm: LayerNormW,
    lstm: BiLstmWeights,
    /// (2H, D*I) linear applied per unfold position, overlap-added back.
    deconv_w: VarId,
    deconv_b: VarId,
}

impl RnnPath {
    fn new<F: Scalar>(vb: &mut VarBuilder<'_, F>, cfg: &GridNetConfig, zero_out: bool) -> Self {
        let d = cfg.emb_dim;
        let in_dim = d * cfg.kernel;
        let norm = LayerNormW::new(vb, "norm", d);
        let lstm = BiLstmWeights::new(vb, in_dim, cfg.hidden);
        let init = if zero_out {
            Init::Zeros
        } else {
            Init::FanIn(2 * cfg.hidden)
        };
        let deconv_w = vb.get(&[2 * cfg.hidden, d * cfg.kernel], "deconv_w", init);
        let deconv_b = vb.get(&[d], "deconv_b", Init::Zeros);
        Self {
            norm,
            lstm,
            deconv_w,
            deconv_b,
        }
    }

    /// `axis`: 2 = run over frequency (intra), 1 = run over time (inter).
    /// Input and output are (D, T, F).
    fn forward<F: Scalar>(
        &self,
        tape: &mut Tape<F>,
        store: &VarStore<F>,
        x: T,
        cfg: &GridNetConfig,
        axis: usize,
    ) -> T {
        let d = cfg.emb_dim;
        let (i_k, j_s) = (cfg.kernel, cfg.stride);
        let z = self.norm.forward(tape, store, x);
        // arrange as (batch, seq, D)
        let zp = match axis {
            2 => tape.permute(z, &[1, 2, 0]), // (T, F, D)
            1 => tape.permute(z, &[2, 1, 0]), // (F, T, D)
            _ => unreachable!(),
        };
        let seq_len = tape.shape(zp)[1];
        let padded = if seq_len < i_k {
            i_k
        } else {
            i_k + (seq_len - i_k).div_ceil(j_s) * j_s
        };
        let zp = tape.pad_end(zp, 1, padded - seq_len);
        let u = tape.unfold_seq(zp, i_k, j_s); // (B, P, I*D)
        let us = tape.permute(u, &[1, 0, 2]); // (P, B, I*D)
        let h = self.lstm.forward(tape, store, us); // (P, B, 2H)
        let (p, b2) = (tape.shape(h)[0], tape.shape(h)[1]);
        let hm = tape.reshape(h, &[p * b2, 2 * cfg.hidden]);
        let w2 = tape.var(store, self.deconv_w);
        let lin = tape.matmul(hm, w2); // (P*B, D*I)
        let lin3 = tape.reshape(lin, &[p, b2, d * i_k]);
        let lin3 = tape.permute(lin3, &[1, 0, 2]); // (B, P, D*I)
        let y = tape.fold_seq(lin3, i_k, j_s, d); // (B, padded, D)
        let y = tape.slice_axis(y, 1, 0, seq_len);
        let bias = tape.var(store, self.deconv_b);
        let y = tape.add_bias_last(y, bias);
        let yp = match axis {
            2 => tape.permute(y, &[2, 0, 1]), // back to (D, T, F)
            1 => tape.permute(y, &[2, 1, 0]),
            _ => unreachable!(),
        };
        tape.add(x, yp)
    }
}

/// 1x1 convolution (channel mixing) expressed as a matrix product over the
/// flattened T*F positions, followed by PReLU and channel layer norm.
struct ConvActNorm {
    w: VarId,
    b: VarId,
    alpha: VarId,
    norm: LayerNormW,
    c_out: usize,
}

impl ConvActNorm {
    fn new<F: Scalar>(
        vb: &mut VarBuilder<'_, F>,
        name: &str,
        c_in: usize,
        c_out: usize,
        zero: bool,
    ) -> Self {
        let mut scope = vb.scoped(name);
        let init = if zero { Init::Zeros } else { Init::FanIn(c_in) };
        let w = scope.get(&[c_out, c_in], "w", init);
        let b = scope.get(&[c_out], "b", Init::Zeros);
        let alpha = scope.get(&[1], "prelu", Init::Const(0.25));
        let norm = LayerNormW::new(&mut scope, "norm", c_out);
        Self {
            w,
            b,
            alpha,
            norm,
            c_out,
        }
    }

    /// (C_in, T, F) -> (C_out, T, F)
    fn forward<F: Scalar>(&self, tape: &mut Tape<F>, store: &VarStore<F>, x: T) -> T {
        let (t_dim, f_dim) = (tape.shape(x)[1], tape.shape(x)[2]);
        let c_in = tape.shape(x)[0];
        let xm = tape.reshape(x, &[c_in, t_dim * f_dim]);
        let w = tape.var(store, self.w);
        let y = tape.matmul(w, xm);
        let b = tape.var(store, self.b);
        let y = tape.add_bias_rows(y, b);
        let alpha = tape.var(store, self.alpha);
        let y = tape.prelu(y, alpha);
        let y = tape.reshape(y, &[self.c_out, t_dim, f_dim]);
        self.norm.forward(tape, store, y)
    }
}

/// Cross-frame self-attention: per head, 1x1-projected Q/K (E channels) and
/// V (D/L channels) flattened per frame, scaled dot-product over frames.
struct Attention {
    q: Vec<ConvActNorm>,
    k: Vec<ConvActNorm>,
    v: Vec<ConvActNorm>,
    proj: ConvActNorm,
}

impl Attention {
    fn new<F: Scalar>(vb: &mut VarBuilder<'_, F>, cfg: &GridNetConfig, zero_out: bool) -> Self {
        let d = cfg.emb_dim;
        let e = cfg.attn_channels;
        let dl = d / cfg.heads;
        let mut q = Vec::new();
        let mut k = Vec::new();
        let mut v = Vec::new();
        for h in 0..cfg.heads {
            let mut scope = vb.scoped(&format!("head{h}"));
            q.push(ConvActNorm::new(&mut scope, "q", d, e, false));
            k.push(ConvActNorm::new(&mut scope, "k", d, e, false));
            v.push(ConvActNorm::new(&mut scope, "v", d, dl, false));
        }
        let proj = ConvActNorm::new(vb, "proj", d, d, zero_out);
        Self { q, k, v, proj }
    }

    fn forward<F: Scalar>(
        &self,
        tape: &mut Tape<F>,
        store: &VarStore<F>,
        x: T,
        cfg: &GridNetConfig,
    ) -> T {
        let (t_dim, f_dim) = (tape.shape(x)[1], tape.shape(x)[2]);
        let e = cfg.attn_channels;
        let dl = cfg.emb_dim / cfg.heads;
        let scale = 1.0 / ((e * f_dim) as f64).sqrt();
        let mut heads_out = Vec::with_capacity(cfg.heads);
        for h in 0..cfg.heads {
            let qh = self.q[h].forward(tape, store, x); // (E, T, F)
            let kh = self.k[h].forward(tape, store, x);
            let vh = self.v[h].forward(tape, store, x); // (D/L, T, F)
            let qf = tape.permute(qh, &[1, 0, 2]);
            let qf = tape.reshape(qf, &[t_dim, e * f_dim]);
            let kf = tape.permute(kh, &[1, 0, 2]);
            let kf = tape.reshape(kf, &[t_dim, e * f_dim]);
            let kft = tape.permute(kf, &[1, 0]);
            let scores = tape.matmul(qf, kft);
            let scores = tape.scale(scores, scale);
            let attn = tape.softmax_last(scores); // (T, T)
            let vf = tape.permute(vh, &[1, 0, 2]);
            let vf = tape.reshape(vf, &[t_dim, dl * f_dim]);
            let out = tape.matmul(attn, vf); // (T, D/L * F)
            let out = tape.reshape(out, &[t_dim, dl, f_dim]);
            let out = tape.permute(out, &[1, 0, 2]); // (D/L, T, F)
            heads_out.push(out);
        }
        let cat = tape.concat(&heads_out, 0); // (D, T, F)
        let proj = self.proj.forward(tape, store, cat);
        tape.add(x, proj)
    }
}

struct GridBlock {
    intra: RnnPath,
    inter: RnnPath,
    attn: Attention,
}

impl GridBlock {
    fn new<F: Scalar>(vb: &mut VarBuilder<'_, F>, cfg: &GridNetConfig, init: NetInit) -> Self {
        let zero_paths = init == NetInit::Identity;
        let mut intra_scope = vb.scoped("intra");
        let intra = RnnPath::new(&mut intra_scope, cfg, zero_paths);
        let mut inter_scope = vb.scoped("inter");
        let inter = RnnPath::new(&mut inter_scope, cfg, zero_paths);
        let mut attn_scope = vb.scoped("attn");
        let attn = Attention::new(&mut attn_scope, cfg, zero_paths);
        Self { intra, inter, attn }
    }

    fn forward<F: Scalar>(
        &self,
        tape: &mut Tape<F>,
        store: &VarStore<F>,
        x: T,
        cfg: &GridNetConfig,
    ) -> T {
        let x = self.intra.forward(tape, store, x, cfg, 2);
        let x = self.inter.forward(tape, store, x, cfg, 1);
        self.attn.forward(tape, store, x, cfg)
    }
}

pub struct TfGridNet {
    pub cfg: GridNetConfig,
    pub in_channels: usize,
    pub out_channels: usize,
    in_conv: Conv2dLayer,
    blocks: Vec<GridBlock>,
    out_conv: Conv2dLayer,
}

impl TfGridNet {
    pub fn new<F: Scalar>(
        vb: &mut VarBuilder<'_, F>,
        cfg: GridNetConfig,
        in_channels: usize,
        out_channels: usize,
        init: NetInit,
    ) -> Result<Self> {
        cfg.validate()?;
        if in_channels == 0 || out_channels == 0 {
            return Err(NetError::InvalidArgument("channel counts must be positive".into()));
        }
        let d = cfg.emb_dim;
        let in_init = if init == NetInit::Identity {
            Init::Zeros
        } else {
            Init::FanIn(in_channels * 9)
        };
        let in_conv =
            Conv2dLayer::new(vb, "in_conv", in_channels, d, (3, 3), (1, 1), (1, 1), in_init);
        let blocks = (0..cfg.blocks)
            .map(|i| {
                let mut scope = vb.scoped(&format!("block{i}"));
                GridBlock::new(&mut scope, &cfg, init)
            })
            .collect();
        let out_init = match init {
            NetInit::Random => Init::FanIn(d * 9),
            NetInit::ZeroOutput | NetInit::Identity => Init::Zeros,
        };
        let out_conv =
            Conv2dLayer::new(vb, "out_conv", d, out_channels, (3, 3), (1, 1), (1, 1), out_init);
        Ok(Self {
            cfg,
            in_channels,
            out_channels,
            in_conv,
            blocks,
            out_conv,
        })
    }

    /// Rewrites the input/output projections as channel passthroughs (center
    /// tap one). Combined with [`NetInit::Identity`] block paths this makes
    /// the whole network an identity map on its first channels.
    pub fn set_passthrough_projections<F: Scalar>(&self, store: &mut VarStore<F>) {
        let d = self.cfg.emb_dim;
        let mut w_in = ndarray::ArrayD::<F>::zeros(ndarray::IxDyn(&[d, self.in_channels, 3, 3]));
        for c in 0..self.in_channels.min(d) {
            w_in[[c, c, 1, 1]] = F::one();
        }
        store.set_value(self.in_conv.w, w_in);
        let mut w_out =
            ndarray::ArrayD::<F>::zeros(ndarray::IxDyn(&[self.out_channels, d, 3, 3]));
        for c in 0..self.out_channels.min(d) {
            w_out[[c, c, 1, 1]] = F::one();
        }
        store.set_value(self.out_conv.w, w_out);
    }

    /// Forward pass over a (in_channels, T, F) node.
    pub fn forward<F: Scalar>(&self, tape: &mut Tape<F>, store: &VarStore<F>, spec: T) -> T {
        assert_eq!(tape.shape(spec)[0], self.in_channels, "input channel count");
        let mut x = self.in_conv.forward(tape, store, spec);
        for block in &self.blocks {
            x = block.forward(tape, store, x, &self.cfg);
        }
        self.out_conv.forward(tape, store, x)
    }
}
