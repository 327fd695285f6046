//! On-the-fly distortion simulation: the seven degradation types and the
//! per-stage construction of (input, target) training pairs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod distort;
pub mod manifest;
pub mod pair;
pub mod synth;

pub use distort::{
    apply_bandwidth_limit, apply_clip, apply_codec, apply_noise, apply_packet_loss, apply_reverb,
    CodecPreset, PacketLossMask, PacketLossParams,
};
pub use manifest::{read_manifest, ManifestEntry};
pub use pair::{simulate_pair, DistortionPlan, PlannedDistortion, SimulatedPair};
pub use synth::{exp_decay_rir, pink_noise, synth_wind, white_noise};

#[derive(Error, Debug)]
pub enum SimError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("unsupported sampling rate: {0} Hz ({1})")]
    UnsupportedRate(u32, String),
    #[error("codec adapter failed: {stderr}")]
    CodecAdapter { stderr: String },
    #[error(transparent)]
    Dsp(#[from] trident_dsp::DspError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, SimError>;

/// The seven degradation categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistortionKind {
    Noise,
    Reverb,
    Clipping,
    BandwidthLimit,
    Codec,
    PacketLoss,
    Wind,
}

/// Parameter ranges for one distortion type. Concrete draws happen when a
/// plan is sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistortionSpec {
    Noise { snr_db: [f64; 2] },
    Reverb { t60_s: [f64; 2] },
    Clipping { clip_ratio: [f64; 2] },
    BandwidthLimit { cutoff_fs: Vec<u32> },
    Codec { presets: Vec<CodecPreset> },
    PacketLoss { rate: [f64; 2], segment_ms: [f64; 2] },
    Wind { intensity: [f64; 2] },
}

impl DistortionSpec {
    pub fn kind(&self) -> DistortionKind {
        match self {
            DistortionSpec::Noise { .. } => DistortionKind::Noise,
            DistortionSpec::Reverb { .. } => DistortionKind::Reverb,
            DistortionSpec::Clipping { .. } => DistortionKind::Clipping,
            DistortionSpec::BandwidthLimit { .. } => DistortionKind::BandwidthLimit,
            DistortionSpec::Codec { .. } => DistortionKind::Codec,
            DistortionSpec::PacketLoss { .. } => DistortionKind::PacketLoss,
            DistortionSpec::Wind { .. } => DistortionKind::Wind,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(SimError::InvalidArgument(msg.to_string()));
        match self {
            DistortionSpec::Noise { snr_db } => {
                if !snr_db.iter().all(|v| v.is_finite()) || snr_db[0] > snr_db[1] {
                    return bad("noise snr_db range must be finite and ordered");
                }
            }
            DistortionSpec::Reverb { t60_s } => {
                if t60_s[0] <= 0.0 || t60_s[0] > t60_s[1] {
                    return bad("reverb t60 range must be positive and ordered");
                }
            }
            DistortionSpec::Clipping { clip_ratio } => {
                if clip_ratio[0] <= 0.0 || clip_ratio[1] > 1.0 || clip_ratio[0] > clip_ratio[1] {
                    return bad("clip_ratio range must lie in (0, 1]");
                }
            }
            DistortionSpec::BandwidthLimit { cutoff_fs } => {
                if cutoff_fs.is_empty() {
                    return bad("bandwidth cutoff set must be non-empty");
                }
                if cutoff_fs.iter().any(|c| *c == 0) {
                    return bad("bandwidth cutoff must be positive");
                }
            }
            DistortionSpec::Codec { presets } => {
                if presets.is_empty() {
                    return bad("codec preset set must be non-empty");
                }
                for p in presets {
                    p.validate()?;
                }
            }
            DistortionSpec::PacketLoss { rate, segment_ms } => {
                if rate[0] <= 0.0 || rate[1] > 0.5 || rate[0] > rate[1] {
                    return bad("packet loss rate range must lie in (0, 0.5]");
                }
                if segment_ms[0] <= 0.0 || segment_ms[0] > segment_ms[1] {
                    return bad("segment_ms range must be positive and ordered");
                }
            }
            DistortionSpec::Wind { intensity } => {
                if intensity[0] < 0.0 || intensity[0] > intensity[1] {
                    return bad("wind intensity range must be non-negative and ordered");
                }
            }
        }
        Ok(())
    }
}

/// Pipeline stage a recipe belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Fill,
    Sep,
    Res,
}

impl Stage {
    /// Sampling rate the stage trains at.
    pub fn train_fs(&self) -> u32 {
        match self {
            Stage::Fill | Stage::Sep => 16000,
            Stage::Res => 48000,
        }
    }
}

/// An optional distortion carries its application probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionalSpec {
    pub spec: DistortionSpec,
    pub prob: f64,
}

/// Per-stage description of which degradations hit the input and which ones
/// the target retains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistortionRecipe {
    pub stage: Stage,
    pub mandatory: Vec<DistortionSpec>,
    #[serde(default)]
    pub optional: Vec<OptionalSpec>,
    pub target_keeps: Vec<DistortionKind>,
}

impl DistortionRecipe {
    pub fn validate(&self) -> Result<()> {
        for s in &self.mandatory {
            s.validate()?;
        }
        for o in &self.optional {
            o.spec.validate()?;
            if !(0.0..=1.0).contains(&o.prob) {
                return Err(SimError::InvalidArgument(format!(
                    "probability {} out of [0, 1]",
                    o.prob
                )));
            }
        }
        let mandatory_kinds: Vec<DistortionKind> =
            self.mandatory.iter().map(|s| s.kind()).collect();
        let all_kinds: Vec<DistortionKind> = self
            .mandatory
            .iter()
            .map(|s| s.kind())
            .chain(self.optional.iter().map(|o| o.spec.kind()))
            .collect();
        let bad = |msg: String| Err(SimError::InvalidArgument(msg));
        match self.stage {
            Stage::Fill => {
                if !mandatory_kinds.contains(&DistortionKind::PacketLoss) {
                    return bad("fill recipe requires mandatory packet loss".into());
                }
                for k in &all_kinds {
                    let expected = *k != DistortionKind::PacketLoss;
                    if self.target_keeps.contains(k) != expected {
                        return bad(format!(
                            "fill recipe target must keep every applied kind except packet loss (offending: {k:?})"
                        ));
                    }
                }
            }
            Stage::Sep => {
                if all_kinds.contains(&DistortionKind::PacketLoss) {
                    return bad("sep recipe excludes packet loss".into());
                }
                for k in &all_kinds {
                    let expected = matches!(
                        k,
                        DistortionKind::BandwidthLimit | DistortionKind::Codec
                    );
                    if self.target_keeps.contains(k) != expected {
                        return bad(format!(
                            "sep recipe target keeps exactly bandwidth/codec kinds (offending: {k:?})"
                        ));
                    }
                }
            }
            Stage::Res => {
                for k in &mandatory_kinds {
                    if !matches!(
                        k,
                        DistortionKind::BandwidthLimit
                            | DistortionKind::Codec
                            | DistortionKind::PacketLoss
                    ) {
                        return bad(format!("res mandatory kinds limited to bandwidth/codec/packet loss (offending: {k:?})"));
                    }
                }
                if !self.target_keeps.is_empty() {
                    return bad("res recipe target is clean (no kept distortions)".into());
                }
            }
        }
        Ok(())
    }

    /// Default fill recipe: mandatory packet loss, every other kind optional
    /// at probability 0.5, target keeps everything but the gaps.
    pub fn default_fill() -> Self {
        Self {
            stage: Stage::Fill,
            mandatory: vec![DistortionSpec::PacketLoss {
                rate: [0.05, 0.3],
                segment_ms: [20.0, 320.0],
            }],
            optional: vec![
                OptionalSpec { spec: DistortionSpec::Noise { snr_db: [-5.0, 20.0] }, prob: 0.5 },
                OptionalSpec { spec: DistortionSpec::Reverb { t60_s: [0.2, 1.0] }, prob: 0.5 },
                OptionalSpec {
                    spec: DistortionSpec::Clipping { clip_ratio: [0.1, 0.9] },
                    prob: 0.5,
                },
                OptionalSpec {
                    spec: DistortionSpec::BandwidthLimit { cutoff_fs: vec![4000, 8000] },
                    prob: 0.5,
                },
                OptionalSpec {
                    spec: DistortionSpec::Codec {
                        presets: vec![CodecPreset::MuLaw { bits: 8 }, CodecPreset::MuLaw { bits: 6 }],
                    },
                    prob: 0.5,
                },
                OptionalSpec { spec: DistortionSpec::Wind { intensity: [0.2, 0.8] }, prob: 0.5 },
            ],
            target_keeps: vec![
                DistortionKind::Noise,
                DistortionKind::Reverb,
                DistortionKind::Clipping,
                DistortionKind::BandwidthLimit,
                DistortionKind::Codec,
                DistortionKind::Wind,
            ],
        }
    }

    /// Default separation recipe: noise always, reverb/clip/wind and the
    /// restoration-stage kinds at probability 0.5, no packet loss.
    pub fn default_sep() -> Self {
        Self {
            stage: Stage::Sep,
            mandatory: vec![DistortionSpec::Noise { snr_db: [-5.0, 20.0] }],
            optional: vec![
                OptionalSpec { spec: DistortionSpec::Reverb { t60_s: [0.2, 1.0] }, prob: 0.5 },
                OptionalSpec {
                    spec: DistortionSpec::Clipping { clip_ratio: [0.1, 0.9] },
                    prob: 0.5,
                },
                OptionalSpec { spec: DistortionSpec::Wind { intensity: [0.2, 0.8] }, prob: 0.5 },
                OptionalSpec {
                    spec: DistortionSpec::BandwidthLimit { cutoff_fs: vec![4000, 8000] },
                    prob: 0.5,
                },
                OptionalSpec {
                    spec: DistortionSpec::Codec {
                        presets: vec![CodecPreset::MuLaw { bits: 8 }],
                    },
                    prob: 0.5,
                },
            ],
            target_keeps: vec![DistortionKind::BandwidthLimit, DistortionKind::Codec],
        }
    }

    /// Default restoration recipe: bandwidth limitation always, codec and
    /// packet loss at probability 0.5, clean target.
    pub fn default_res() -> Self {
        Self {
            stage: Stage::Res,
            mandatory: vec![DistortionSpec::BandwidthLimit {
                cutoff_fs: vec![8000, 16000, 22050, 24000],
            }],
            optional: vec![
                OptionalSpec {
                    spec: DistortionSpec::Codec {
                        presets: vec![CodecPreset::MuLaw { bits: 8 }],
                    },
                    prob: 0.5,
                },
                OptionalSpec {
                    spec: DistortionSpec::PacketLoss {
                        rate: [0.05, 0.3],
                        segment_ms: [20.0, 320.0],
                    },
                    prob: 0.5,
                },
            ],
            target_keeps: vec![],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_recipes_validate() {
        DistortionRecipe::default_fill().validate().unwrap();
        DistortionRecipe::default_sep().validate().unwrap();
        DistortionRecipe::default_res().validate().unwrap();
    }

    #[test]
    fn sep_recipe_rejects_packet_loss() {
        let mut r = DistortionRecipe::default_sep();
        r.optional.push(OptionalSpec {
            spec: DistortionSpec::PacketLoss {
                rate: [0.1, 0.2],
                segment_ms: [20.0, 40.0],
            },
            prob: 0.5,
        });
        assert!(r.validate().is_err());
    }

    #[test]
    fn fill_recipe_requires_packet_loss() {
        let mut r = DistortionRecipe::default_fill();
        r.mandatory.clear();
        assert!(r.validate().is_err());
    }

    #[test]
    fn spec_ranges_are_checked() {
        assert!(DistortionSpec::Clipping { clip_ratio: [0.0, 0.5] }.validate().is_err());
        assert!(DistortionSpec::PacketLoss { rate: [0.1, 0.6], segment_ms: [20.0, 40.0] }
            .validate()
            .is_err());
        assert!(DistortionSpec::Noise { snr_db: [f64::NAN, 1.0] }.validate().is_err());
    }

    #[test]
    fn recipe_round_trips_through_toml() {
        let r = DistortionRecipe::default_fill();
        let text = toml::to_string(&r).unwrap();
        let back: DistortionRecipe = toml::from_str(&text).unwrap();
        assert_eq!(r, back);
    }
}
