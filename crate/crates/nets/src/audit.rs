//! Analytic parameter and MACs accounting. The parameter formulas mirror the
//! construction exactly and are asserted against constructed stores; the
//! MACs formulas count multiply-accumulates in convolutions, recurrences,
//! and attention products (norms, activations, and FFTs are sub-percent and
//! excluded).

use trident_dsp::StftConfig;

use crate::bundle::BundleConfig;
use crate::GridNetConfig;

fn conv2d_params(c_in: usize, c_out: usize, kh: usize, kw: usize) -> usize {
    c_out * c_in * kh * kw + c_out
}

fn bilstm_params(in_dim: usize, hidden: usize) -> usize {
    2 * (4 * hidden * in_dim + 4 * hidden * hidden + 4 * hidden)
}

fn rnn_path_params(cfg: &GridNetConfig) -> usize {
    let d = cfg.emb_dim;
    let in_dim = d * cfg.kernel;
    let norm = 2 * d;
    let lstm = bilstm_params(in_dim, cfg.hidden);
    let deconv = 2 * cfg.hidden * d * cfg.kernel + d;
    norm + lstm + deconv
}

fn conv_act_norm_params(c_in: usize, c_out: usize) -> usize {
    // 1x1 conv + bias + shared PReLU + channel layer norm
    c_out * c_in + c_out + 1 + 2 * c_out
}

fn attention_params(cfg: &GridNetConfig) -> usize {
    let d = cfg.emb_dim;
    let e = cfg.attn_channels;
    let dl = d / cfg.heads;
    cfg.heads * (2 * conv_act_norm_params(d, e) + conv_act_norm_params(d, dl))
        + conv_act_norm_params(d, d)
}

fn block_params(cfg: &GridNetConfig) -> usize {
    2 * rnn_path_params(cfg) + attention_params(cfg)
}

/// Exact parameter count of a TF-GridNet with the given io channels.
pub fn tfgridnet_params(cfg: &GridNetConfig, in_ch: usize, out_ch: usize) -> usize {
    conv2d_params(in_ch, cfg.emb_dim, 3, 3)
        + cfg.blocks * block_params(cfg)
        + conv2d_params(cfg.emb_dim, out_ch, 3, 3)
}

/// Per-network and total parameter counts for a bundle configuration.
pub fn bundle_param_count(config: &BundleConfig) -> BundleParams {
    let fill = tfgridnet_params(&config.fill, 2, 2);
    let sep = tfgridnet_params(&config.sep, 2, 2);
    let res = tfgridnet_params(&config.res, 6, 6);
    let res_ft = if config.with_finetuned { res } else { 0 };
    BundleParams {
        fill,
        sep,
        res,
        res_ft,
        total: fill + sep + res + res_ft,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BundleParams {
    pub fill: usize,
    pub sep: usize,
    pub res: usize,
    pub res_ft: usize,
    pub total: usize,
}

/// MACs for one second of audio through a TF-GridNet processing at `fs`.
pub fn tfgridnet_macs_per_second(
    cfg: &GridNetConfig,
    in_ch: usize,
    out_ch: usize,
    stft: &StftConfig,
    fs: u32,
) -> f64 {
    let hop = stft.hop_len(fs);
    let t = (fs as usize).div_ceil(hop) as f64;
    let f_bins = stft.num_bins(fs);
    macs_with_dims(cfg, in_ch, out_ch, t, f_bins)
}

/// MACs for one second through the CWS restoration net: the inner GridNet
/// sees the zero-padded top-band width, one third of the fullband bins.
pub fn cws_tfgridnet_macs_per_second(cfg: &GridNetConfig, stft: &StftConfig) -> f64 {
    let fs = 48000;
    let hop = stft.hop_len(fs);
    let t = (fs as usize).div_ceil(hop) as f64;
    let full_bins = stft.num_bins(fs);
    let band_bins = full_bins - 2 * ((full_bins - 1) / 3);
    macs_with_dims(cfg, 6, 6, t, band_bins)
}

fn macs_with_dims(cfg: &GridNetConfig, in_ch: usize, out_ch: usize, t: f64, f_bins: usize) -> f64 {
    let d = cfg.emb_dim as f64;
    let h = cfg.hidden as f64;
    let i_k = cfg.kernel;
    let j_s = cfg.stride;
    let e = cfg.attn_channels as f64;
    let dl = (cfg.emb_dim / cfg.heads) as f64;
    let heads = cfg.heads as f64;

    let pos = |len: usize| -> f64 {
        if len < i_k {
            1.0
        } else {
            ((len - i_k).div_ceil(j_s) + 1) as f64
        }
    };
    let p_f = pos(f_bins);
    let p_t = pos(t as usize);
    let f_bins = f_bins as f64;

    let lstm_step = 2.0 * (4.0 * h * (d * i_k as f64) + 4.0 * h * h); // bidir
    let deconv_pos = 2.0 * h * d * i_k as f64;
    let intra = (lstm_step + deconv_pos) * p_f * t;
    let inter = (lstm_step + deconv_pos) * p_t * f_bins;
    let attn_proj = t * f_bins * (2.0 * heads * d * e + heads * d * dl + d * d);
    let attn_prod = heads * t * t * (e * f_bins + dl * f_bins);
    let in_conv = in_ch as f64 * d * 9.0 * t * f_bins;
    let out_conv = out_ch as f64 * d * 9.0 * t * f_bins;

    in_conv + cfg.blocks as f64 * (intra + inter + attn_proj + attn_prod) + out_conv
}

/// MACs for one second of input at `input_fs` through the whole pipeline:
/// fill and sep run at the input rate, restoration always at 48 kHz.
pub fn bundle_macs_per_second(config: &BundleConfig, input_fs: u32) -> f64 {
    let fill = tfgridnet_macs_per_second(&config.fill, 2, 2, &config.stft, input_fs);
    let sep = tfgridnet_macs_per_second(&config.sep, 2, 2, &config.stft, input_fs);
    let res = cws_tfgridnet_macs_per_second(&config.res, &config.stft);
    fill + sep + res
}

#[derive(Debug, Clone)]
pub struct AuditReport {
    pub params: BundleParams,
    pub constructed_total: usize,
    pub macs_16k: f64,
    pub macs_48k: f64,
}

impl AuditReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str("parameter counts\n");
        s.push_str(&format!("  fill   : {:>12}\n", self.params.fill));
        s.push_str(&format!("  sep    : {:>12}\n", self.params.sep));
        s.push_str(&format!("  res    : {:>12}\n", self.params.res));
        s.push_str(&format!("  res_ft : {:>12}\n", self.params.res_ft));
        s.push_str(&format!(
            "  total  : {:>12}  ({:.2} M)\n",
            self.params.total,
            self.params.total as f64 / 1e6
        ));
        s.push_str(&format!(
            "  constructed: {:>8} (must equal analytic total)\n",
            self.constructed_total
        ));
        s.push_str("compute (MACs per second of input; FFTs and norms excluded)\n");
        s.push_str(&format!("  16 kHz : {:.1} G\n", self.macs_16k / 1e9));
        s.push_str(&format!("  48 kHz : {:.1} G\n", self.macs_48k / 1e9));
        s
    }
}
