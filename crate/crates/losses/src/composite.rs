//! Weighted loss combinations: the base regression objective, the
//! metric-aware extension, the GAN terms, and the joint fine-tuning total.

use trident_autograd::{Scalar, Tape, T};
use trident_nets::DiscriminatorOutput;

use crate::scorer::ScorerSet;
use crate::terms::{
    lsd_loss, mag_loss, mcd_aware_loss, phase_imag_loss, phase_real_loss, sdr_loss,
    wavlm_distill_loss,
};
use crate::{LossError, LossReport, LossWeights, Result};

/// A composite evaluation: the differentiable total plus its breakdown.
pub struct CompositeOut {
    pub total: T,
    pub report: LossReport,
}

/// Base regression objective over waveform and spectrogram domains:
/// weights.sdr * SDR + weights.lsd * LSD + weights.mag * MAG
/// + weights.real * REAL + weights.imag * IMAG.
/// Spectrograms are computed internally with the given analysis config.
pub fn l1_composite<F: Scalar>(
    tape: &mut Tape<F>,
    s: T,
    s_hat: T,
    weights: &LossWeights,
    stft_cfg: &trident_dsp::StftConfig,
    fs: u32,
) -> Result<CompositeOut> {
    weights.validate()?;
    if tape.shape(s) != tape.shape(s_hat) {
        return Err(LossError::ShapeMismatch(format!(
            "l1_composite: {:?} vs {:?}",
            tape.shape(s),
            tape.shape(s_hat)
        )));
    }
    let s_spec = tape.stft_op(s, *stft_cfg, fs);
    let h_spec = tape.stft_op(s_hat, *stft_cfg, fs);

    let sdr = sdr_loss(tape, s, s_hat)?;
    let lsd = lsd_loss(tape, s_spec, h_spec)?;
    let mag = mag_loss(tape, s_spec, h_spec)?;
    let real = phase_real_loss(tape, s_spec, h_spec)?;
    let imag = phase_imag_loss(tape, s_spec, h_spec)?;

    let mut report = LossReport::new();
    report.push("sdr", tape.scalar(sdr).to64(), weights.sdr);
    report.push("lsd", tape.scalar(lsd).to64(), weights.lsd);
    report.push("mag", tape.scalar(mag).to64(), weights.mag);
    report.push("real", tape.scalar(real).to64(), weights.real);
    report.push("imag", tape.scalar(imag).to64(), weights.imag);

    let mut total = tape.scale(sdr, weights.sdr);
    for (t, w) in [
        (lsd, weights.lsd),
        (mag, weights.mag),
        (real, weights.real),
        (imag, weights.imag),
    ] {
        let wt = tape.scale(t, w);
        total = tape.add(total, wt);
    }
    Ok(CompositeOut { total, report })
}

/// Which metric-aware terms are enabled. The five published configurations
/// are progressive subsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaftTerms {
    pub mcd: bool,
    pub pesq: bool,
    pub utmos: bool,
    pub dnsmos: bool,
    pub wavlm: bool,
}

impl MaftTerms {
    pub fn none() -> Self {
        Self::default()
    }

    /// v1 = MCD; v2 = +PESQ; v3 = +UTMOS (the selected configuration);
    /// v4 = +DNSMOS; v5 = +WavLM.
    pub fn version(v: u8) -> Result<Self> {
        if !(1..=5).contains(&v) {
            return Err(LossError::InvalidArgument(format!(
                "metric-aware config version {v} out of 1..=5"
            )));
        }
        Ok(Self {
            mcd: v >= 1,
            pesq: v >= 2,
            utmos: v >= 3,
            dnsmos: v >= 4,
            wavlm: v >= 5,
        })
    }
}

/// Metric-aware objective: the base composite plus enabled scorer terms
/// with their published weights.
#[allow(clippy::too_many_arguments)]
pub fn l2_metric_aware<F: Scalar>(
    tape: &mut Tape<F>,
    s: T,
    s_hat: T,
    enabled: &MaftTerms,
    weights: &LossWeights,
    scorers: &ScorerSet<F>,
    stft_cfg: &trident_dsp::StftConfig,
    fs: u32,
) -> Result<CompositeOut> {
    let base = l1_composite(tape, s, s_hat, weights, stft_cfg, fs)?;
    let mut report = base.report;
    let mut total = base.total;

    if enabled.mcd {
        let mcd = mcd_aware_loss(tape, s, s_hat, &scorers.mfcc, stft_cfg, fs)?;
        report.push("mcd", tape.scalar(mcd).to64(), weights.mcd);
        let w = tape.scale(mcd, weights.mcd);
        total = tape.add(total, w);
    }
    if enabled.pesq {
        let l = scorers.pesq.loss(tape, s_hat, Some(s), fs)?;
        report.push("pesq", tape.scalar(l).to64(), weights.pesq);
        let w = tape.scale(l, weights.pesq);
        total = tape.add(total, w);
    }
    if enabled.utmos {
        let l = scorers.utmos.loss(tape, s_hat, None, fs)?;
        report.push("utmos", tape.scalar(l).to64(), weights.utmos);
        let w = tape.scale(l, weights.utmos);
        total = tape.add(total, w);
    }
    if enabled.dnsmos {
        let l = scorers.dnsmos.loss(tape, s_hat, None, fs)?;
        report.push("dnsmos", tape.scalar(l).to64(), weights.dnsmos);
        let w = tape.scale(l, weights.dnsmos);
        total = tape.add(total, w);
    }
    if enabled.wavlm {
        let r = scorers.wavlm.features(tape, s, fs)?;
        let r_hat = scorers.wavlm.features(tape, s_hat, fs)?;
        let l = wavlm_distill_loss(tape, r, r_hat)?;
        report.push("wavlm", tape.scalar(l).to64(), weights.wavlm);
        let w = tape.scale(l, weights.wavlm);
        total = tape.add(total, w);
    }
    report.total = report.weighted_sum();
    Ok(CompositeOut { total, report })
}

pub struct GanLosses {
    pub adv_g: T,
    pub adv_d: T,
    pub feat_match: T,
}

/// Least-squares GAN objectives plus feature matching. The generator pulls
/// fake scores toward 1; the discriminator pushes real scores toward 1 and
/// fake toward 0. Feature matching is the mean absolute difference over
/// corresponding feature maps, averaged across layers and
/// sub-discriminators.
pub fn gan_losses<F: Scalar>(
    tape: &mut Tape<F>,
    real: &[DiscriminatorOutput],
    fake: &[DiscriminatorOutput],
) -> Result<GanLosses> {
    if real.len() != fake.len() {
        return Err(LossError::ShapeMismatch(format!(
            "{} real vs {} fake discriminator outputs",
            real.len(),
            fake.len()
        )));
    }
    let mut adv_g: Option<T> = None;
    let mut adv_d: Option<T> = None;
    let mut feat_terms: Vec<T> = Vec::new();

    for (r, f) in real.iter().zip(fake) {
        if r.scores.len() != f.scores.len() || r.features.len() != f.features.len() {
            return Err(LossError::ShapeMismatch(
                "sub-discriminator counts differ between real and fake".into(),
            ));
        }
        for (rs, fs_) in r.scores.iter().zip(&f.scores) {
            let fm1 = tape.add_scalar(*fs_, -1.0);
            let g_term = tape.square(fm1);
            let g_term = tape.mean_all(g_term);
            adv_g = Some(match adv_g {
                Some(a) => tape.add(a, g_term),
                None => g_term,
            });

            let rm1 = tape.add_scalar(*rs, -1.0);
            let d_real = tape.square(rm1);
            let d_real = tape.mean_all(d_real);
            let d_fake = tape.square(*fs_);
            let d_fake = tape.mean_all(d_fake);
            let d_term = tape.add(d_real, d_fake);
            adv_d = Some(match adv_d {
                Some(a) => tape.add(a, d_term),
                None => d_term,
            });
        }
        for (rf, ff) in r.features.iter().zip(&f.features) {
            if rf.len() != ff.len() {
                return Err(LossError::ShapeMismatch(
                    "feature list lengths differ between real and fake".into(),
                ));
            }
            for (a, b) in rf.iter().zip(ff) {
                let d = tape.sub(*b, *a);
                let ad = tape.abs(d);
                feat_terms.push(tape.mean_all(ad));
            }
        }
    }
    let adv_g = adv_g.ok_or_else(|| {
        LossError::InvalidArgument("no discriminator outputs provided".into())
    })?;
    let adv_d = adv_d.unwrap();
    let feat_match = if feat_terms.is_empty() {
        tape.constant(ndarray::ArrayD::zeros(ndarray::IxDyn(&[])))
    } else {
        let mut sum = feat_terms[0];
        for t in &feat_terms[1..] {
            sum = tape.add(sum, *t);
        }
        tape.scale(sum, 1.0 / feat_terms.len() as f64)
    };
    Ok(GanLosses {
        adv_g,
        adv_d,
        feat_match,
    })
}

/// Joint fine-tuning total: jft_l2 * L2 + jft_adv * adv_g
/// + jft_feat * feat_match.
#[allow(clippy::too_many_arguments)]
pub fn l3_jft<F: Scalar>(
    tape: &mut Tape<F>,
    l2: CompositeOut,
    gan: &GanLosses,
    weights: &LossWeights,
) -> Result<CompositeOut> {
    weights.validate()?;
    let mut report = LossReport::new();
    report.absorb(&l2.report, weights.jft_l2);
    report.push("adv", tape.scalar(gan.adv_g).to64(), weights.jft_adv);
    report.push(
        "feat",
        tape.scalar(gan.feat_match).to64(),
        weights.jft_feat,
    );

    let l2w = tape.scale(l2.total, weights.jft_l2);
    let advw = tape.scale(gan.adv_g, weights.jft_adv);
    let featw = tape.scale(gan.feat_match, weights.jft_feat);
    let t1 = tape.add(l2w, advw);
    let total = tape.add(t1, featw);
    report.total = report.weighted_sum();
    Ok(CompositeOut { total, report })
}
