//! Waveform discriminators for adversarial training: multi-period (MPD),
//! multi-resolution spectrogram (MRD), and multi-band (MBD) families.
//! Every sub-discriminator returns its score map plus per-layer features for
//! the feature-matching loss.

use trident_autograd::{Init, Scalar, Tape, VarBuilder, VarStore, T};

use crate::gridnet::Conv2dLayer;
use crate::{NetError, Result};

const LEAKY_SLOPE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DiscConfig {
    pub periods: Vec<usize>,
    pub mpd_channels: Vec<usize>,
    /// (fft, hop) in samples per resolution.
    pub mrd_resolutions: Vec<(usize, usize)>,
    pub mrd_channels: usize,
    pub mbd_channels: Vec<usize>,
}

impl DiscConfig {
    /// BigVGAN-style defaults.
    pub fn paper() -> Self {
        Self {
            periods: vec![2, 3, 5, 7, 11],
            mpd_channels: vec![32, 128, 512, 1024],
            mrd_resolutions: vec![(512, 128), (1024, 256), (2048, 512)],
            mrd_channels: 32,
            mbd_channels: vec![16, 64, 256],
        }
    }

    /// Small configuration for toy training and tests.
    pub fn tiny() -> Self {
        Self {
            periods: vec![2, 3],
            mpd_channels: vec![4, 8],
            mrd_resolutions: vec![(128, 32), (256, 64)],
            mrd_channels: 4,
            mbd_channels: vec![4, 8],
        }
    }

    pub fn min_input_len(&self) -> usize {
        let fft = self.mrd_resolutions.iter().map(|r| r.0).max().unwrap_or(0);
        let per = self.periods.iter().max().copied().unwrap_or(1) * 15;
        fft.max(per)
    }
}

/// Scores and per-layer feature maps, one entry per sub-discriminator.
pub struct DiscriminatorOutput {
    pub scores: Vec<T>,
    pub features: Vec<Vec<T>>,
}

fn check_len<F: Scalar>(tape: &Tape<F>, wav: T, cfg: &DiscConfig) -> Result<usize> {
    let shape = tape.shape(wav);
    if shape.len() != 1 {
        return Err(NetError::ShapeMismatch("discriminator input must be 1-D".into()));
    }
    let len = shape[0];
    if len < cfg.min_input_len() {
        return Err(NetError::InvalidArgument(format!(
            "input of {len} samples is shorter than the largest analysis window {}",
            cfg.min_input_len()
        )));
    }
    Ok(len)
}

/// One period branch of the MPD: the waveform is folded into a (1, T/p, p)
/// grid and run through strided 2-D convolutions.
struct PeriodBranch {
    period: usize,
    convs: Vec<Conv2dLayer>,
    post: Conv2dLayer,
}

impl PeriodBranch {
    fn new<F: Scalar>(vb: &mut VarBuilder<'_, F>, period: usize, channels: &[usize]) -> Self {
        let mut convs = Vec::new();
        let mut c_in = 1;
        for (i, c_out) in channels.iter().enumerate() {
            convs.push(Conv2dLayer::new(
                vb,
                &format!("conv{i}"),
                c_in,
                *c_out,
                (5, 1),
                (3, 1),
                (2, 0),
                Init::FanIn(c_in * 5),
            ));
            c_in = *c_out;
        }
        let post = Conv2dLayer::new(vb, "post", c_in, 1, (3, 1), (1, 1), (1, 0), Init::FanIn(c_in * 3));
        Self {
            period,
            convs,
            post,
        }
    }

    fn forward<F: Scalar>(
        &self,
        tape: &mut Tape<F>,
        store: &VarStore<F>,
        wav: T,
    ) -> (T, Vec<T>) {
        let len = tape.shape(wav)[0];
        let p = self.period;
        let rows = len.div_ceil(p);
        let padded = tape.pad_end(wav, 0, rows * p - len);
        let mut x = tape.reshape(padded, &[1, rows, p]);
        let mut feats = Vec::new();
        for conv in &self.convs {
            x = conv.forward(tape, store, x);
            x = tape.leaky_relu(x, LEAKY_SLOPE);
            feats.push(x);
        }
        let score = self.post.forward(tape, store, x);
        feats.push(score);
        (score, feats)
    }
}

pub struct Mpd {
    branches: Vec<PeriodBranch>,
    cfg: DiscConfig,
}

impl Mpd {
    pub fn new<F: Scalar>(vb: &mut VarBuilder<'_, F>, cfg: &DiscConfig) -> Self {
        let branches = cfg
            .periods
            .iter()
            .map(|p| {
                let mut scope = vb.scoped(&format!("period{p}"));
                PeriodBranch::new(&mut scope, *p, &cfg.mpd_channels)
            })
            .collect();
        Self {
            branches,
            cfg: cfg.clone(),
        }
    }

    pub fn forward<F: Scalar>(
        &self,
        tape: &mut Tape<F>,
        store: &VarStore<F>,
        wav: T,
    ) -> Result<DiscriminatorOutput> {
        check_len(tape, wav, &self.cfg)?;
        let mut out = DiscriminatorOutput {
            scores: Vec::new(),
            features: Vec::new(),
        };
        for b in &self.branches {
            let (score, feats) = b.forward(tape, store, wav);
            out.scores.push(score);
            out.features.push(feats);
        }
        Ok(out)
    }
}

/// One spectrogram branch of the MRD at a fixed (fft, hop).
struct ResolutionBranch {
    fft: usize,
    hop: usize,
    convs: Vec<Conv2dLayer>,
    post: Conv2dLayer,
}

impl ResolutionBranch {
    fn new<F: Scalar>(vb: &mut VarBuilder<'_, F>, fft: usize, hop: usize, ch: usize) -> Self {
        let specs: [((usize, usize), (usize, usize), (usize, usize)); 5] = [
            ((3, 9), (1, 1), (1, 4)),
            ((3, 9), (1, 2), (1, 4)),
            ((3, 9), (1, 2), (1, 4)),
            ((3, 9), (1, 2), (1, 4)),
            ((3, 3), (1, 1), (1, 1)),
        ];
        let mut convs = Vec::new();
        let mut c_in = 1;
        for (i, (k, s, p)) in specs.iter().enumerate() {
            convs.push(Conv2dLayer::new(
                vb,
                &format!("conv{i}"),
                c_in,
                ch,
                *k,
                *s,
                *p,
                Init::FanIn(c_in * k.0 * k.1),
            ));
            c_in = ch;
        }
        let post = Conv2dLayer::new(vb, "post", ch, 1, (3, 3), (1, 1), (1, 1), Init::FanIn(ch * 9));
        Self {
            fft,
            hop,
            convs,
            post,
        }
    }

    fn forward<F: Scalar>(
        &self,
        tape: &mut Tape<F>,
        store: &VarStore<F>,
        wav: T,
    ) -> (T, Vec<T>) {
        let spec = tape.stft_sized_op(wav, self.fft, self.hop); // (2, T, F)
        let re = tape.slice_axis(spec, 0, 0, 1);
        let im = tape.slice_axis(spec, 0, 1, 2);
        let re2 = tape.square(re);
        let im2 = tape.square(im);
        let p = tape.add(re2, im2);
        let p = tape.add_scalar(p, 1e-9);
        let mut x = tape.sqrt(p); // magnitude, (1, T, F)
        let mut feats = Vec::new();
        for conv in &self.convs {
            x = conv.forward(tape, store, x);
            x = tape.leaky_relu(x, LEAKY_SLOPE);
            feats.push(x);
        }
        let score = self.post.forward(tape, store, x);
        feats.push(score);
        (score, feats)
    }
}

pub struct Mrd {
    branches: Vec<ResolutionBranch>,
    cfg: DiscConfig,
}

impl Mrd {
    pub fn new<F: Scalar>(vb: &mut VarBuilder<'_, F>, cfg: &DiscConfig) -> Self {
        let branches = cfg
            .mrd_resolutions
            .iter()
            .map(|(fft, hop)| {
                let mut scope = vb.scoped(&format!("res{fft}"));
                ResolutionBranch::new(&mut scope, *fft, *hop, cfg.mrd_channels)
            })
            .collect();
        Self {
            branches,
            cfg: cfg.clone(),
        }
    }

    pub fn forward<F: Scalar>(
        &self,
        tape: &mut Tape<F>,
        store: &VarStore<F>,
        wav: T,
    ) -> Result<DiscriminatorOutput> {
        check_len(tape, wav, &self.cfg)?;
        let mut out = DiscriminatorOutput {
            scores: Vec::new(),
            features: Vec::new(),
        };
        for b in &self.branches {
            let (score, feats) = b.forward(tape, store, wav);
            out.scores.push(score);
            out.features.push(feats);
        }
        Ok(out)
    }
}

/// One band branch of the MBD: spectral mask isolates a third of the band,
/// the band waveform runs through strided 1-D convolutions.
struct BandBranch {
    band: usize,
    convs: Vec<Conv2dLayer>,
    post: Conv2dLayer,
}

impl BandBranch {
    fn new<F: Scalar>(vb: &mut VarBuilder<'_, F>, band: usize, channels: &[usize]) -> Self {
        let mut convs = Vec::new();
        let mut c_in = 1;
        for (i, c_out) in channels.iter().enumerate() {
            convs.push(Conv2dLayer::new(
                vb,
                &format!("conv{i}"),
                c_in,
                *c_out,
                (1, 15),
                (1, 4),
                (0, 7),
                Init::FanIn(c_in * 15),
            ));
            c_in = *c_out;
        }
        let post = Conv2dLayer::new(vb, "post", c_in, 1, (1, 3), (1, 1), (0, 1), Init::FanIn(c_in * 3));
        Self { band, convs, post }
    }

    /// `spec` is the shared (2, T, F) analysis of the input waveform.
    fn forward<F: Scalar>(
        &self,
        tape: &mut Tape<F>,
        store: &VarStore<F>,
        spec: T,
        win: usize,
        hop: usize,
        len: usize,
    ) -> (T, Vec<T>) {
        let f = tape.shape(spec)[2];
        let edge = |k: usize| (k * (f - 1)) / 3;
        let (lo, hi) = match self.band {
            0 => (0, edge(1)),
            1 => (edge(1), edge(2)),
            _ => (edge(2), f),
        };
        // zero out-of-band bins, then resynthesize the band waveform
        let t_dim = tape.shape(spec)[1];
        let band = tape.slice_axis(spec, 2, lo, hi);
        let mut parts = Vec::new();
        if lo > 0 {
            let zeros = tape.constant(ndarray::ArrayD::zeros(ndarray::IxDyn(&[2, t_dim, lo])));
            parts.push(zeros);
        }
        parts.push(band);
        if hi < f {
            let zeros =
                tape.constant(ndarray::ArrayD::zeros(ndarray::IxDyn(&[2, t_dim, f - hi])));
            parts.push(zeros);
        }
        let masked = tape.concat(&parts, 2);
        let bwav = tape.istft_sized_op(masked, win, hop, len);
        let mut x = tape.reshape(bwav, &[1, 1, len]);
        let mut feats = Vec::new();
        for conv in &self.convs {
            x = conv.forward(tape, store, x);
            x = tape.leaky_relu(x, LEAKY_SLOPE);
            feats.push(x);
        }
        let score = self.post.forward(tape, store, x);
        feats.push(score);
        (score, feats)
    }
}

pub struct Mbd {
    branches: Vec<BandBranch>,
    cfg: DiscConfig,
    /// Analysis geometry used for the band split, fixed at construction.
    win: usize,
    hop: usize,
}

impl Mbd {
    /// `fs` fixes the band-split STFT geometry (32 ms window); the bin count
    /// must split into thirds, which holds at every supported rate.
    pub fn new<F: Scalar>(vb: &mut VarBuilder<'_, F>, cfg: &DiscConfig, fs: u32) -> Self {
        let stft_cfg = trident_dsp::StftConfig::default();
        let branches = (0..3)
            .map(|b| {
                let mut scope = vb.scoped(&format!("band{b}"));
                BandBranch::new(&mut scope, b, &cfg.mbd_channels)
            })
            .collect();
        Self {
            branches,
            cfg: cfg.clone(),
            win: stft_cfg.win_len(fs),
            hop: stft_cfg.hop_len(fs),
        }
    }

    pub fn forward<F: Scalar>(
        &self,
        tape: &mut Tape<F>,
        store: &VarStore<F>,
        wav: T,
    ) -> Result<DiscriminatorOutput> {
        let len = check_len(tape, wav, &self.cfg)?;
        let spec = tape.stft_sized_op(wav, self.win, self.hop);
        let mut out = DiscriminatorOutput {
            scores: Vec::new(),
            features: Vec::new(),
        };
        for b in &self.branches {
            let (score, feats) = b.forward(tape, store, spec, self.win, self.hop, len);
            out.scores.push(score);
            out.features.push(feats);
        }
        Ok(out)
    }
}
