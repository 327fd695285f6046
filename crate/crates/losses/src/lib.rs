//! Training objectives: the composite regression loss, metric-aware terms,
//! feature distillation, GAN generator/discriminator objectives, and the
//! weighted combinations used by each training phase.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod composite;
pub mod scorer;
pub mod terms;

pub use composite::{gan_losses, l1_composite, l2_metric_aware, l3_jft, CompositeOut, GanLosses, MaftTerms};
pub use scorer::{
    MetricScorer, ScorerSet, SyntheticFeatureExtractor, SyntheticIntrusiveScorer,
    SyntheticReferenceFreeScorer,
};
pub use terms::{
    complex_mag_eps, lsd_loss, mag_loss, mcd_aware_loss, phase_imag_loss, phase_real_loss,
    sdr_loss, wavlm_distill_loss, MfccConfig,
};

/// Magnitude/power floor used across every term.
pub const EPS: f64 = 1e-8;

#[derive(Error, Debug)]
pub enum LossError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate reference: {0}")]
    DegenerateReference(String),
    #[error(transparent)]
    Net(#[from] trident_nets::NetError),
}

pub type Result<T> = std::result::Result<T, LossError>;

/// Weights for every term in the training objectives. Defaults are the
/// published coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub sdr: f64,
    pub lsd: f64,
    pub mag: f64,
    pub real: f64,
    pub imag: f64,
    pub mcd: f64,
    pub pesq: f64,
    pub utmos: f64,
    pub dnsmos: f64,
    pub wavlm: f64,
    pub recon: f64,
    pub adv: f64,
    pub feat: f64,
    pub jft_l2: f64,
    pub jft_adv: f64,
    pub jft_feat: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            sdr: 2.0,
            lsd: 1.5,
            mag: 70.0,
            real: 30.0,
            imag: 30.0,
            mcd: 0.004,
            pesq: 0.5,
            utmos: 0.5,
            dnsmos: 0.4,
            wavlm: 2.5,
            recon: 20.0,
            adv: 1.0,
            feat: 1.0,
            jft_l2: 10.0,
            jft_adv: 1.0,
            jft_feat: 0.2,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.sdr, self.lsd, self.mag, self.real, self.imag, self.mcd, self.pesq, self.utmos,
            self.dnsmos, self.wavlm, self.recon, self.adv, self.feat, self.jft_l2, self.jft_adv,
            self.jft_feat,
        ];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(LossError::InvalidArgument(
                "loss weights must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Per-term breakdown of a composite loss evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    /// (term name, raw value, weight), in evaluation order.
    pub terms: Vec<(String, f64, f64)>,
    pub total: f64,
}

impl LossReport {
    pub fn new() -> Self {
        Self {
            terms: Vec::new(),
            total: 0.0,
        }
    }

    pub fn push(&mut self, name: &str, value: f64, weight: f64) {
        self.terms.push((name.to_string(), value, weight));
        self.total += weight * value;
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.terms
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, v, _)| *v)
    }

    /// Recomputed weighted sum; equals `total` by construction and is
    /// asserted in tests.
    pub fn weighted_sum(&self) -> f64 {
        self.terms.iter().map(|(_, v, w)| v * w).sum()
    }

    /// Merge another report scaled by `scale` (for nested composites).
    pub fn absorb(&mut self, other: &LossReport, scale: f64) {
        for (n, v, w) in &other.terms {
            self.terms.push((n.clone(), *v, w * scale));
        }
        self.total += scale * other.total;
    }
}

impl Default for LossReport {
    fn default() -> Self {
        Self::new()
    }
}
