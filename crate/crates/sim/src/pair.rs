//! Distortion plans and per-stage (input, target) pair construction.
//!
//! A plan is the fully materialized set of draws for one utterance: which
//! kinds fire, their parameters, and the sub-seeds of every stochastic
//! component. Applying the same plan twice is bit-identical, and applying a
//! filtered plan yields the coupled target signal.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use trident_dsp::{resample, Waveform};

use crate::distort::{
    apply_bandwidth_limit, apply_clip, apply_codec, apply_noise, apply_packet_loss, apply_reverb,
    CodecPreset, PacketLossMask, PacketLossParams,
};
use crate::synth::{exp_decay_rir, pink_noise, stream, synth_wind, white_noise};
use crate::{DistortionKind, DistortionRecipe, DistortionSpec, Result, SimError, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseColor {
    White,
    Pink,
}

/// One fully-drawn distortion instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlannedDistortion {
    Reverb { t60_s: f64, seed: u64 },
    Wind { intensity: f64, seed: u64 },
    Noise { color: NoiseColor, snr_db: f64, seed: u64 },
    Clipping { clip_ratio: f64 },
    BandwidthLimit { cutoff_fs: u32 },
    Codec { preset: CodecPreset },
    PacketLoss { params: PacketLossParams, seed: u64 },
}

impl PlannedDistortion {
    pub fn kind(&self) -> DistortionKind {
        match self {
            PlannedDistortion::Reverb { .. } => DistortionKind::Reverb,
            PlannedDistortion::Wind { .. } => DistortionKind::Wind,
            PlannedDistortion::Noise { .. } => DistortionKind::Noise,
            PlannedDistortion::Clipping { .. } => DistortionKind::Clipping,
            PlannedDistortion::BandwidthLimit { .. } => DistortionKind::BandwidthLimit,
            PlannedDistortion::Codec { .. } => DistortionKind::Codec,
            PlannedDistortion::PacketLoss { .. } => DistortionKind::PacketLoss,
        }
    }

    /// Application order: convolutive room effect first, then additive
    /// interference, then waveform-local damage, then channel effects, and
    /// packet loss last (its gaps must survive everything else).
    fn order(&self) -> u8 {
        match self.kind() {
            DistortionKind::Reverb => 0,
            DistortionKind::Wind => 1,
            DistortionKind::Noise => 2,
            DistortionKind::Clipping => 3,
            DistortionKind::BandwidthLimit => 4,
            DistortionKind::Codec => 5,
            DistortionKind::PacketLoss => 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionPlan {
    pub stage: Stage,
    pub items: Vec<PlannedDistortion>,
}

impl DistortionPlan {
    /// Draws a plan from a recipe. The draw order is fixed (mandatory specs,
    /// then optional specs in recipe order) so a given rng stream always
    /// produces the same plan.
    pub fn sample(recipe: &DistortionRecipe, fs: u32, rng: &mut ChaCha8Rng) -> Result<Self> {
        recipe.validate()?;
        let mut items = Vec::new();
        for spec in &recipe.mandatory {
            if let Some(item) = draw_item(spec, fs, rng)? {
                items.push(item);
            }
        }
        for opt in &recipe.optional {
            let fire = rng.gen_range(0.0..1.0) < opt.prob;
            // burn the parameter draws even when the kind does not fire, so
            // optional outcomes do not shift later draws
            let item = draw_item(&opt.spec, fs, rng)?;
            if fire {
                if let Some(item) = item {
                    items.push(item);
                }
            }
        }
        items.sort_by_key(|i| i.order());
        Ok(Self {
            stage: recipe.stage,
            items,
        })
    }

    /// Draws a plan from raw spec lists without per-stage invariant checks.
    /// Used for full-system degradation feeds (stage-aware fine-tuning data)
    /// where every distortion kind may appear together.
    pub fn sample_free(
        stage: Stage,
        mandatory: &[DistortionSpec],
        optional: &[(DistortionSpec, f64)],
        fs: u32,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let mut items = Vec::new();
        for spec in mandatory {
            spec.validate()?;
            if let Some(item) = draw_item(spec, fs, rng)? {
                items.push(item);
            }
        }
        for (spec, prob) in optional {
            spec.validate()?;
            let fire = rng.gen_range(0.0..1.0) < *prob;
            let item = draw_item(spec, fs, rng)?;
            if fire {
                if let Some(item) = item {
                    items.push(item);
                }
            }
        }
        items.sort_by_key(|i| i.order());
        Ok(Self { stage, items })
    }

    pub fn kinds(&self) -> Vec<DistortionKind> {
        self.items.iter().map(|i| i.kind()).collect()
    }

    /// Applies the planned distortions in canonical order. When `keep` is
    /// given, only kinds in that set are applied (the target path).
    pub fn apply(
        &self,
        clean: &Waveform,
        keep: Option<&[DistortionKind]>,
    ) -> Result<(Waveform, Option<PacketLossMask>)> {
        let mut x = clean.clone();
        let mut mask = None;
        for item in &self.items {
            if let Some(keep) = keep {
                if !keep.contains(&item.kind()) {
                    continue;
                }
            }
            match item {
                PlannedDistortion::Reverb { t60_s, seed } => {
                    let rir = exp_decay_rir(*t60_s, x.fs(), &mut stream(*seed))?;
                    x = apply_reverb(&x, &rir)?;
                }
                PlannedDistortion::Wind { intensity, seed } => {
                    let wind = synth_wind(x.duration_s().max(0.001), x.fs(), &mut stream(*seed), 1.0)?;
                    let rms_x = x.power().sqrt();
                    let rms_w = wind.power().sqrt();
                    if rms_w > 0.0 && rms_x > 0.0 {
                        let scale = intensity * rms_x / rms_w;
                        let mixed: Vec<f64> = x
                            .samples()
                            .iter()
                            .zip(wind.samples().iter().chain(std::iter::repeat(&0.0)))
                            .map(|(a, w)| a + scale * w)
                            .collect();
                        x = Waveform::new(mixed, x.fs())?;
                    }
                }
                PlannedDistortion::Noise { color, snr_db, seed } => {
                    let mut nrng = stream(*seed);
                    let noise = match color {
                        NoiseColor::White => white_noise(x.len(), x.fs(), &mut nrng)?,
                        NoiseColor::Pink => pink_noise(x.len(), x.fs(), &mut nrng)?,
                    };
                    x = apply_noise(&x, &noise, *snr_db)?;
                }
                PlannedDistortion::Clipping { clip_ratio } => {
                    x = apply_clip(&x, *clip_ratio)?;
                }
                PlannedDistortion::BandwidthLimit { cutoff_fs } => {
                    x = apply_bandwidth_limit(&x, *cutoff_fs)?;
                }
                PlannedDistortion::Codec { preset } => {
                    x = apply_codec(&x, preset)?;
                }
                PlannedDistortion::PacketLoss { params, seed } => {
                    let (gapped, m) = apply_packet_loss(&x, &mut stream(*seed), params)?;
                    x = gapped;
                    mask = Some(m);
                }
            }
        }
        Ok((x, mask))
    }
}

fn draw_item(
    spec: &DistortionSpec,
    fs: u32,
    rng: &mut ChaCha8Rng,
) -> Result<Option<PlannedDistortion>> {
    let item = match spec {
        DistortionSpec::Noise { snr_db } => Some(PlannedDistortion::Noise {
            color: if rng.gen_range(0.0..1.0) < 0.5 {
                NoiseColor::White
            } else {
                NoiseColor::Pink
            },
            snr_db: draw_range(rng, *snr_db),
            seed: rng.gen(),
        }),
        DistortionSpec::Reverb { t60_s } => Some(PlannedDistortion::Reverb {
            t60_s: draw_range(rng, *t60_s),
            seed: rng.gen(),
        }),
        DistortionSpec::Clipping { clip_ratio } => Some(PlannedDistortion::Clipping {
            clip_ratio: draw_range(rng, *clip_ratio),
        }),
        DistortionSpec::BandwidthLimit { cutoff_fs } => {
            // only cutoffs strictly below the stage rate are applicable
            let valid: Vec<u32> = cutoff_fs.iter().copied().filter(|c| *c < fs).collect();
            let idx = rng.gen_range(0..cutoff_fs.len().max(1));
            if valid.is_empty() {
                None
            } else {
                Some(PlannedDistortion::BandwidthLimit {
                    cutoff_fs: valid[idx % valid.len()],
                })
            }
        }
        DistortionSpec::Codec { presets } => {
            let idx = rng.gen_range(0..presets.len());
            Some(PlannedDistortion::Codec {
                preset: presets[idx].clone(),
            })
        }
        DistortionSpec::PacketLoss { rate, segment_ms } => Some(PlannedDistortion::PacketLoss {
            params: PacketLossParams {
                rate: draw_range(rng, *rate),
                min_segment_ms: segment_ms[0],
                max_segment_ms: segment_ms[1],
            },
            seed: rng.gen(),
        }),
        DistortionSpec::Wind { intensity } => Some(PlannedDistortion::Wind {
            intensity: draw_range(rng, *intensity),
            seed: rng.gen(),
        }),
    };
    Ok(item)
}

fn draw_range(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.gen_range(range[0]..range[1])
    }
}

pub struct SimulatedPair {
    pub input: Waveform,
    pub target: Waveform,
    pub mask: Option<PacketLossMask>,
    pub plan: DistortionPlan,
}

/// Brings a clean signal to the stage's training rate, enforcing the rate
/// policy: fill/sep accept >= 16 kHz material (downsampled to 16 kHz),
/// restoration accepts 48 kHz only.
pub fn stage_rate_clean(clean: &Waveform, stage: Stage) -> Result<Waveform> {
    match stage {
        Stage::Fill | Stage::Sep => {
            if clean.fs() < 16000 {
                return Err(SimError::UnsupportedRate(
                    clean.fs(),
                    "fill/sep stages train on >= 16 kHz material".into(),
                ));
            }
            Ok(resample(clean, 16000)?)
        }
        Stage::Res => {
            if clean.fs() != 48000 {
                return Err(SimError::UnsupportedRate(
                    clean.fs(),
                    "restoration stage trains on 48 kHz material only".into(),
                ));
            }
            Ok(clean.clone())
        }
    }
}

/// Draws a plan and produces the coupled (input, target) pair. The input
/// carries every sampled distortion; the target carries exactly the
/// recipe's kept kinds, applied with identical draws.
pub fn simulate_pair(
    clean: &Waveform,
    recipe: &DistortionRecipe,
    rng: &mut ChaCha8Rng,
) -> Result<SimulatedPair> {
    let clean_stage = stage_rate_clean(clean, recipe.stage)?;
    let plan = DistortionPlan::sample(recipe, clean_stage.fs(), rng)?;
    let (input, mask) = plan.apply(&clean_stage, None)?;
    let kept: Vec<DistortionKind> = plan
        .kinds()
        .into_iter()
        .filter(|k| recipe.target_keeps.contains(k))
        .collect();
    let (target, _) = plan.apply(&clean_stage, Some(&kept))?;
    Ok(SimulatedPair {
        input,
        target,
        mask,
        plan,
    })
}
