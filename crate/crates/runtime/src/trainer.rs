//! Stage-wise training: plain regression, GAN training with the 20/1/1
//! weighting, metric-aware fine-tuning, and the stage-aware / joint
//! fine-tuning phases that train on frozen previous-stage outputs.
//!
//! Every random draw derives from (seed, step), so a resumed run walks the
//! identical trajectory and two runs with one seed are bit-identical.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use trident_autograd::optim::{AdamW, AdamWConfig};
use trident_autograd::{ckpt, Scalar, Tape, VarBuilder, VarStore, T};
use trident_dsp::Waveform;
use trident_losses::{
    gan_losses, l1_composite, l2_metric_aware, l3_jft, CompositeOut, LossWeights, MaftTerms,
    ScorerSet,
};
use trident_nets::{DiscConfig, DiscriminatorOutput, Mbd, ModelBundle, Mpd, Mrd};
use trident_sim::{DistortionPlan, DistortionRecipe, DistortionSpec, Stage};

use crate::pipeline::{run_fill, run_sep};
use crate::{Result, RuntimeError};

/// One row of the published training configuration table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSchedule {
    pub batch: usize,
    pub utt_len_s: f64,
    pub total_steps: u64,
    pub warmup_steps: u64,
    pub min_lr: f64,
    pub max_lr: f64,
}

impl TrainSchedule {
    pub fn fill() -> Self {
        Self { batch: 6, utt_len_s: 2.0, total_steps: 50_000, warmup_steps: 5_000, min_lr: 1e-6, max_lr: 1e-3 }
    }

    pub fn sep() -> Self {
        Self { batch: 1, utt_len_s: 4.0, total_steps: 200_000, warmup_steps: 20_000, min_lr: 1e-6, max_lr: 1e-3 }
    }

    pub fn maft() -> Self {
        Self { batch: 1, utt_len_s: 4.0, total_steps: 5_000, warmup_steps: 1_500, min_lr: 1e-6, max_lr: 1e-4 }
    }

    pub fn res() -> Self {
        Self { batch: 6, utt_len_s: 2.0, total_steps: 100_000, warmup_steps: 10_000, min_lr: 1e-6, max_lr: 5e-4 }
    }

    pub fn saft_jft() -> Self {
        Self { batch: 6, utt_len_s: 2.0, total_steps: 25_000, warmup_steps: 2_500, min_lr: 1e-6, max_lr: 1e-4 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.warmup_steps >= self.total_steps {
            return Err(RuntimeError::InvalidArgument(
                "warmup must be shorter than the total step count".into(),
            ));
        }
        if !(self.min_lr > 0.0 && self.min_lr <= self.max_lr) {
            return Err(RuntimeError::InvalidArgument(
                "learning rates must satisfy 0 < min <= max".into(),
            ));
        }
        if self.batch == 0 || self.utt_len_s <= 0.0 {
            return Err(RuntimeError::InvalidArgument(
                "batch and utterance length must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Desk-scale override: divide steps by `divisor`, keeping the shape.
    pub fn scaled(&self, divisor: u64) -> Self {
        let d = divisor.max(1);
        let total = (self.total_steps / d).max(2);
        let warmup = (self.warmup_steps / d).clamp(1, total - 1);
        Self {
            total_steps: total,
            warmup_steps: warmup,
            ..*self
        }
    }
}

/// Linear warmup from min to max over [0, warmup], cosine decay from max to
/// min over [warmup, total].
pub fn lr_at(step: u64, sched: &TrainSchedule) -> Result<f64> {
    sched.validate()?;
    if step > sched.total_steps {
        return Err(RuntimeError::InvalidArgument(format!(
            "step {step} beyond total {}",
            sched.total_steps
        )));
    }
    let (lo, hi) = (sched.min_lr, sched.max_lr);
    if step <= sched.warmup_steps {
        let frac = step as f64 / sched.warmup_steps as f64;
        Ok(lo + (hi - lo) * frac)
    } else {
        let frac =
            (step - sched.warmup_steps) as f64 / (sched.total_steps - sched.warmup_steps) as f64;
        Ok(lo + 0.5 * (hi - lo) * (1.0 + (std::f64::consts::PI * frac).cos()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainStage {
    Fill,
    Sep,
    Res,
}

impl TrainStage {
    pub fn sim_stage(&self) -> Stage {
        match self {
            TrainStage::Fill => Stage::Fill,
            TrainStage::Sep => Stage::Sep,
            TrainStage::Res => Stage::Res,
        }
    }

    pub fn fs(&self) -> u32 {
        self.sim_stage().train_fs()
    }
}

/// Training phase within a stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinetunePhase {
    /// Simulated data, stage-native loss.
    Base,
    /// Simulated data, metric-aware loss (separation stage).
    Maft(MaftTerms),
    /// Frozen previous-stage outputs, stage-native loss (restoration).
    Saft,
    /// Frozen previous-stage outputs, metric-aware + adversarial loss.
    Jft(MaftTerms),
}

impl FinetunePhase {
    fn uses_previous_stages(&self) -> bool {
        matches!(self, FinetunePhase::Saft | FinetunePhase::Jft(_))
    }
}

#[derive(Debug, Clone)]
pub struct TrainerConfig {
    pub stage: TrainStage,
    pub phase: FinetunePhase,
    pub schedule: TrainSchedule,
    pub recipe: DistortionRecipe,
    pub weights: LossWeights,
    pub disc: DiscConfig,
    pub optimizer: AdamWConfig,
    pub seed: u64,
    /// Steps between checkpoints; 0 writes only the final one.
    pub ckpt_interval: u64,
    /// Validation utterance count (0 disables validation).
    pub val_utts: usize,
}

impl TrainerConfig {
    pub fn new(stage: TrainStage, phase: FinetunePhase, schedule: TrainSchedule) -> Self {
        let recipe = match stage {
            TrainStage::Fill => DistortionRecipe::default_fill(),
            TrainStage::Sep => DistortionRecipe::default_sep(),
            TrainStage::Res => DistortionRecipe::default_res(),
        };
        Self {
            stage,
            phase,
            schedule,
            recipe,
            weights: LossWeights::default(),
            disc: DiscConfig::tiny(),
            optimizer: AdamWConfig::default(),
            seed: 17,
            ckpt_interval: 0,
            val_utts: 0,
        }
    }

    fn uses_gan(&self) -> bool {
        match (self.stage, &self.phase) {
            (TrainStage::Sep, _) => false,
            (_, FinetunePhase::Maft(_)) => false,
            _ => true,
        }
    }

    fn trained_prefix(&self) -> &'static str {
        match (self.stage, &self.phase) {
            (TrainStage::Fill, _) => "fill.",
            (TrainStage::Sep, _) => "sep.",
            (TrainStage::Res, FinetunePhase::Saft | FinetunePhase::Jft(_)) => "res_ft.",
            (TrainStage::Res, _) => "res.",
        }
    }
}

/// Per-step metrics, serialized into the training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub lr: f64,
    pub terms: Vec<(String, f64)>,
    pub total: f64,
    pub disc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_l1: Option<f64>,
}

pub struct TrainOutcome {
    pub steps_run: u64,
    pub log: Vec<String>,
}

pub struct Trainer<F: Scalar> {
    pub cfg: TrainerConfig,
    pub bundle: ModelBundle<F>,
    pool: Vec<Waveform>,
    disc_store: VarStore<F>,
    mpd: Option<Mpd>,
    mrd: Option<Mrd>,
    mbd: Option<Mbd>,
    opt_g: AdamW<F>,
    opt_d: Option<AdamW<F>>,
    scorers: ScorerSet<F>,
    step: u64,
    log: Vec<String>,
}

fn derive_seed(seed: u64, step: u64, lane: u64) -> u64 {
    // splitmix-style mixing keeps per-step draws independent of rng state
    let mut z = seed
        .wrapping_add(step.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(lane.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl<F: Scalar> Trainer<F> {
    pub fn new(cfg: TrainerConfig, bundle: ModelBundle<F>, pool: Vec<Waveform>) -> Result<Self> {
        cfg.schedule.validate()?;
        cfg.recipe.validate()?;
        cfg.weights.validate()?;
        if pool.is_empty() {
            return Err(RuntimeError::InvalidArgument(
                "training pool is empty".into(),
            ));
        }
        if cfg.phase.uses_previous_stages() && cfg.stage != TrainStage::Res {
            return Err(RuntimeError::Configuration(
                "stage-aware fine-tuning applies to the restoration stage".into(),
            ));
        }
        if cfg.trained_prefix() == "res_ft." && bundle.res_ft.is_none() {
            return Err(RuntimeError::Configuration(
                "fine-tuning requires a bundle with the fine-tuned restoration network".into(),
            ));
        }

        let mut disc_store = VarStore::new();
        let (mut mpd, mut mrd, mut mbd) = (None, None, None);
        if cfg.uses_gan() {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0, 999));
            let mut vb = VarBuilder::new(&mut disc_store, &mut rng);
            match cfg.stage {
                TrainStage::Fill => {
                    mpd = Some(Mpd::new(&mut vb.scoped("mpd"), &cfg.disc));
                    mrd = Some(Mrd::new(&mut vb.scoped("mrd"), &cfg.disc));
                }
                TrainStage::Res => {
                    mrd = Some(Mrd::new(&mut vb.scoped("mrd"), &cfg.disc));
                    mbd = Some(Mbd::new(&mut vb.scoped("mbd"), &cfg.disc, cfg.stage.fs()));
                }
                TrainStage::Sep => {}
            }
        }

        let g_vars = bundle.store.ids_with_prefix(cfg.trained_prefix());
        if g_vars.is_empty() {
            return Err(RuntimeError::Configuration(format!(
                "no trainable variables under prefix {}",
                cfg.trained_prefix()
            )));
        }
        let opt_g = AdamW::new(&bundle.store, g_vars, cfg.optimizer);
        let opt_d = if cfg.uses_gan() {
            let ids: Vec<_> = disc_store.ids().collect();
            Some(AdamW::new(&disc_store, ids, cfg.optimizer))
        } else {
            None
        };

        Ok(Self {
            cfg,
            bundle,
            pool,
            disc_store,
            mpd,
            mrd,
            mbd,
            opt_g,
            opt_d,
            scorers: ScorerSet::synthetic(),
            step: 0,
            log: Vec::new(),
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn log_lines(&self) -> &[String] {
        &self.log
    }

    /// Draws one training example for `step`/`lane`.
    fn draw_pair(&self, step: u64, lane: u64) -> Result<(Waveform, Waveform)> {
        let fs = self.cfg.stage.fs();
        let want = (self.cfg.schedule.utt_len_s * fs as f64).round() as usize;
        for attempt in 0..8 {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(self.cfg.seed, step, lane * 16 + attempt));
            let idx = rng.gen_range(0..self.pool.len());
            let clip = crop_or_tile(&self.pool[idx], &mut rng, fs, want)?;
            if clip.power() == 0.0 {
                continue;
            }
            if self.cfg.phase.uses_previous_stages() {
                // full-system degradation through the frozen earlier stages
                let input = saft_input(&self.bundle, &clip, derive_seed(self.cfg.seed, step, lane * 16 + 8 + attempt))?;
                return Ok((input, clip));
            }
            match trident_sim::simulate_pair(&clip, &self.cfg.recipe, &mut rng) {
                Ok(pair) => return Ok((pair.input, pair.target)),
                Err(trident_sim::SimError::DegenerateInput(_)) => continue,
                Err(e) => return Err(e.into()),
            }
        }
        Err(RuntimeError::TrainingAborted(format!(
            "could not draw a usable example at step {step}"
        )))
    }

    /// Generator forward for one example: returns the estimate node.
    fn generator_forward(&self, tape: &mut Tape<F>, input: &Waveform) -> Result<T> {
        let fs = input.fs();
        let stft_cfg = self.bundle.config.stft;
        let peak = input.peak();
        let gain = if peak > 1e-12 { 0.9 / peak } else { 1.0 };
        let x = input.map(|s| s * gain)?;
        let len = x.len();
        let xt = tape.constant(wave_to_tensor::<F>(&x));
        let spec = tape.stft_op(xt, stft_cfg, fs);
        let out_spec = match (self.cfg.stage, &self.cfg.phase) {
            (TrainStage::Fill, _) => self.bundle.fill.forward(tape, &self.bundle.store, spec),
            (TrainStage::Sep, _) => self.bundle.sep.forward(tape, &self.bundle.store, spec),
            (TrainStage::Res, FinetunePhase::Saft | FinetunePhase::Jft(_)) => self
                .bundle
                .res_ft
                .as_ref()
                .expect("checked at construction")
                .forward(tape, &self.bundle.store, spec, fs)?,
            (TrainStage::Res, _) => self.bundle.res.forward(tape, &self.bundle.store, spec, fs)?,
        };
        let contrib = tape.istft_op(out_spec, stft_cfg, fs, len);
        let contrib = tape.scale(contrib, 1.0 / gain);
        // fill and res are residual/skip stages; sep is a full regression
        Ok(match self.cfg.stage {
            TrainStage::Sep => contrib,
            _ => {
                let orig = tape.constant(wave_to_tensor::<F>(input));
                tape.add(orig, contrib)
            }
        })
    }

    fn disc_forward(
        &self,
        tape: &mut Tape<F>,
        wav: T,
    ) -> Result<Vec<DiscriminatorOutput>> {
        let mut outs = Vec::new();
        if let Some(mpd) = &self.mpd {
            outs.push(mpd.forward(tape, &self.disc_store, wav)?);
        }
        if let Some(mrd) = &self.mrd {
            outs.push(mrd.forward(tape, &self.disc_store, wav)?);
        }
        if let Some(mbd) = &self.mbd {
            outs.push(mbd.forward(tape, &self.disc_store, wav)?);
        }
        Ok(outs)
    }

    fn reconstruction(
        &self,
        tape: &mut Tape<F>,
        target: T,
        estimate: T,
        fs: u32,
    ) -> Result<CompositeOut> {
        let stft_cfg = self.bundle.config.stft;
        match &self.cfg.phase {
            FinetunePhase::Maft(terms) | FinetunePhase::Jft(terms) => Ok(l2_metric_aware(
                tape,
                target,
                estimate,
                terms,
                &self.cfg.weights,
                &self.scorers,
                &stft_cfg,
                fs,
            )?),
            _ => Ok(l1_composite(
                tape,
                target,
                estimate,
                &self.cfg.weights,
                &stft_cfg,
                fs,
            )?),
        }
    }

    /// Runs one optimization step (a discriminator update followed by a
    /// generator update when adversarial training is active).
    pub fn step_once(&mut self) -> Result<StepRecord> {
        let step = self.step;
        let lr = lr_at(step.min(self.cfg.schedule.total_steps), &self.cfg.schedule)?;
        let fs = self.cfg.stage.fs();
        let batch = self.cfg.schedule.batch;

        let pairs: Vec<(Waveform, Waveform)> = (0..batch)
            .map(|lane| self.draw_pair(step, lane as u64))
            .collect::<Result<_>>()?;

        let mut tape = Tape::<F>::new();
        let mut estimates = Vec::with_capacity(batch);
        let mut targets = Vec::with_capacity(batch);
        for (input, target) in &pairs {
            let est = self.generator_forward(&mut tape, input)?;
            let tgt = tape.constant(wave_to_tensor::<F>(target));
            estimates.push(est);
            targets.push(tgt);
        }

        // discriminator phase: detached fakes, real targets
        let mut disc_loss_val = None;
        if self.cfg.uses_gan() {
            let mut d_total: Option<T> = None;
            for (est, tgt) in estimates.iter().zip(&targets) {
                let fake_det = tape.detach(*est);
                let real_outs = self.disc_forward(&mut tape, *tgt)?;
                let fake_outs = self.disc_forward(&mut tape, fake_det)?;
                let gan = gan_losses(&mut tape, &real_outs, &fake_outs)?;
                d_total = Some(match d_total {
                    Some(acc) => tape.add(acc, gan.adv_d),
                    None => gan.adv_d,
                });
            }
            let d_loss = tape.scale(d_total.unwrap(), 1.0 / batch as f64);
            let v = tape.scalar(d_loss).to64();
            if !v.is_finite() {
                return Err(self.abort_nan(step, &pairs, "discriminator loss"));
            }
            self.disc_store.zero_grads();
            self.bundle.store.zero_grads();
            let grads = tape.backward(d_loss);
            grads.apply_to_store(&tape, &mut self.disc_store);
            self.opt_d
                .as_mut()
                .expect("gan stages own a discriminator optimizer")
                .step(&mut self.disc_store, lr);
            disc_loss_val = Some(v);
        }

        // generator phase
        let mut g_total: Option<T> = None;
        let mut report_acc: Vec<(String, f64)> = Vec::new();
        let mut report_total = 0.0;
        for (bi, (est, tgt)) in estimates.iter().zip(&targets).enumerate() {
            let recon = self.reconstruction(&mut tape, *tgt, *est, fs)?;
            let sample_loss = if self.cfg.uses_gan() {
                let real_outs = self.disc_forward(&mut tape, *tgt)?;
                let fake_outs = self.disc_forward(&mut tape, *est)?;
                let gan = gan_losses(&mut tape, &real_outs, &fake_outs)?;
                match &self.cfg.phase {
                    FinetunePhase::Jft(_) => {
                        let out = l3_jft(&mut tape, recon, &gan, &self.cfg.weights)?;
                        if bi == 0 {
                            report_acc = out
                                .report
                                .terms
                                .iter()
                                .map(|(n, v, _)| (n.clone(), *v))
                                .collect();
                            report_total = out.report.total;
                        }
                        out.total
                    }
                    _ => {
                        // reconstruction / adversarial / feature matching
                        let w = &self.cfg.weights;
                        if bi == 0 {
                            report_acc = recon
                                .report
                                .terms
                                .iter()
                                .map(|(n, v, _)| (n.clone(), *v))
                                .collect();
                            report_acc.push((
                                "adv".into(),
                                tape.scalar(gan.adv_g).to64(),
                            ));
                            report_acc.push((
                                "feat".into(),
                                tape.scalar(gan.feat_match).to64(),
                            ));
                            report_total = w.recon * recon.report.total
                                + w.adv * tape.scalar(gan.adv_g).to64()
                                + w.feat * tape.scalar(gan.feat_match).to64();
                        }
                        let r = tape.scale(recon.total, w.recon);
                        let a = tape.scale(gan.adv_g, w.adv);
                        let f = tape.scale(gan.feat_match, w.feat);
                        let ra = tape.add(r, a);
                        tape.add(ra, f)
                    }
                }
            } else {
                if bi == 0 {
                    report_acc = recon
                        .report
                        .terms
                        .iter()
                        .map(|(n, v, _)| (n.clone(), *v))
                        .collect();
                    report_total = recon.report.total;
                }
                recon.total
            };
            g_total = Some(match g_total {
                Some(acc) => tape.add(acc, sample_loss),
                None => sample_loss,
            });
        }
        let g_loss = tape.scale(g_total.unwrap(), 1.0 / batch as f64);
        let g_val = tape.scalar(g_loss).to64();
        if !g_val.is_finite() {
            return Err(self.abort_nan(step, &pairs, "generator loss"));
        }
        self.bundle.store.zero_grads();
        self.disc_store.zero_grads();
        let grads = tape.backward(g_loss);
        grads.apply_to_store(&tape, &mut self.bundle.store);
        self.opt_g.step(&mut self.bundle.store, lr);

        self.step += 1;
        let val_l1 = self.maybe_validate(step)?;
        let rec = StepRecord {
            step,
            lr,
            terms: report_acc,
            total: report_total,
            disc: disc_loss_val,
            val_l1,
        };
        self.log.push(
            serde_json::to_string(&rec)
                .map_err(|e| RuntimeError::TrainingAborted(format!("log encode: {e}")))?,
        );
        Ok(rec)
    }

    fn maybe_validate(&mut self, step: u64) -> Result<Option<f64>> {
        if self.cfg.val_utts == 0 {
            return Ok(None);
        }
        let every = (self.cfg.schedule.total_steps / 20).max(1);
        if (step + 1) % every != 0 {
            return Ok(None);
        }
        let fs = self.cfg.stage.fs();
        let mut total = 0.0;
        for v in 0..self.cfg.val_utts {
            let (input, target) = self.draw_pair(u64::MAX - 1, v as u64)?;
            let mut tape = Tape::<F>::new();
            let est = self.generator_forward(&mut tape, &input)?;
            let tgt = tape.constant(wave_to_tensor::<F>(&target));
            let l1 = l1_composite(
                &mut tape,
                tgt,
                est,
                &self.cfg.weights,
                &self.bundle.config.stft,
                fs,
            )?;
            total += l1.report.total;
        }
        Ok(Some(total / self.cfg.val_utts as f64))
    }

    fn abort_nan(
        &self,
        step: u64,
        pairs: &[(Waveform, Waveform)],
        what: &str,
    ) -> RuntimeError {
        let dump = std::env::temp_dir().join(format!("trident_nan_step{step}"));
        let _ = std::fs::create_dir_all(&dump);
        for (i, (input, target)) in pairs.iter().enumerate() {
            let _ = trident_dsp::write_wav(
                dump.join(format!("input{i}.wav")),
                input,
                trident_dsp::SampleFormat::Float32,
            );
            let _ = trident_dsp::write_wav(
                dump.join(format!("target{i}.wav")),
                target,
                trident_dsp::SampleFormat::Float32,
            );
        }
        RuntimeError::TrainingAborted(format!(
            "non-finite {what} at step {step}; offending batch dumped to {}",
            dump.display()
        ))
    }

    /// Runs until the schedule's total step count, checkpointing as
    /// configured.
    pub fn run(&mut self, ckpt_dir: Option<&std::path::Path>) -> Result<TrainOutcome> {
        while self.step < self.cfg.schedule.total_steps {
            self.step_once()?;
            if let (Some(dir), true) = (
                ckpt_dir,
                self.cfg.ckpt_interval > 0 && self.step % self.cfg.ckpt_interval == 0,
            ) {
                self.save_checkpoint(&dir.join(format!("step{:07}.ckpt", self.step)))?;
            }
        }
        if let Some(dir) = ckpt_dir {
            self.save_checkpoint(&dir.join("final.ckpt"))?;
        }
        Ok(TrainOutcome {
            steps_run: self.step,
            log: self.log.clone(),
        })
    }

    pub fn save_checkpoint(&self, path: &std::path::Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut tensors = self.bundle.store.export_tensors();
        for (name, t) in self.disc_store.export_tensors() {
            tensors.push((format!("disc.{name}"), t));
        }
        for (name, t) in self.opt_g.export_state(&self.bundle.store) {
            tensors.push((format!("g.{name}"), t));
        }
        if let Some(opt_d) = &self.opt_d {
            for (name, t) in opt_d.export_state(&self.disc_store) {
                tensors.push((format!("d.{name}"), t));
            }
        }
        let meta = serde_json::json!({
            "format": "trident-train",
            "step": self.step,
            "opt_g_steps": self.opt_g.step_count(),
            "bundle_config": self.bundle.config,
            "log": self.log,
        });
        ckpt::save(path, &meta, &tensors)?;
        Ok(())
    }

    /// Restores weights, optimizer state, step counter, and the log from a
    /// checkpoint produced by the same configuration.
    pub fn resume_from(&mut self, path: &std::path::Path) -> Result<()> {
        let archive = ckpt::load(path)?;
        if archive.meta["format"] != "trident-train" {
            return Err(RuntimeError::Configuration(
                "not a training checkpoint".into(),
            ));
        }
        let tensors = archive.tensor_map::<F>();
        for id in self.bundle.store.ids() {
            let name = self.bundle.store.name(id).to_string();
            if let Some(t) = tensors.get(&name) {
                self.bundle.store.set_value(id, t.clone());
            }
        }
        for id in self.disc_store.ids() {
            let name = format!("disc.{}", self.disc_store.name(id));
            if let Some(t) = tensors.get(&name) {
                self.disc_store.set_value(id, t.clone());
            }
        }
        let step = archive.meta["step"].as_u64().unwrap_or(0);
        let g_state: std::collections::HashMap<String, ndarray::ArrayD<F>> = tensors
            .iter()
            .filter(|(k, _)| k.starts_with("g.opt."))
            .map(|(k, v)| (k["g.".len()..].to_string(), v.clone()))
            .collect();
        self.opt_g.import_state(
            &self.bundle.store,
            &g_state,
            archive.meta["opt_g_steps"].as_u64().unwrap_or(step),
        )?;
        if let Some(opt_d) = &mut self.opt_d {
            let d_state: std::collections::HashMap<String, ndarray::ArrayD<F>> = tensors
                .iter()
                .filter(|(k, _)| k.starts_with("d.opt."))
                .map(|(k, v)| (k["d.".len()..].to_string(), v.clone()))
                .collect();
            opt_d.import_state(&self.disc_store, &d_state, step)?;
        }
        self.step = step;
        self.log = archive.meta["log"]
            .as_array()
            .map(|a| {
                a.iter()
                    .filter_map(|v| v.as_str().map(|s| s.to_string()))
                    .collect()
            })
            .unwrap_or_default();
        Ok(())
    }
}

fn wave_to_tensor<F: Scalar>(wav: &Waveform) -> ndarray::ArrayD<F> {
    ndarray::ArrayD::from_shape_vec(
        ndarray::IxDyn(&[wav.len()]),
        wav.samples().iter().map(|v| F::f(*v)).collect(),
    )
    .unwrap()
}

fn crop_or_tile(
    wav: &Waveform,
    rng: &mut ChaCha8Rng,
    fs: u32,
    want: usize,
) -> Result<Waveform> {
    let at_rate = if wav.fs() == fs {
        wav.clone()
    } else {
        trident_dsp::resample(wav, fs)?
    };
    let n = at_rate.len();
    let samples = if n >= want {
        let off = if n == want { 0 } else { rng.gen_range(0..(n - want)) };
        at_rate.samples()[off..off + want].to_vec()
    } else {
        (0..want).map(|i| at_rate.samples()[i % n]).collect()
    };
    Ok(Waveform::new(samples, fs)?)
}

/// The full-system degradation list used to feed stage-aware fine-tuning:
/// every distortion kind, packet loss mandatory, the rest at probability 0.5.
fn full_degradation_specs() -> (Vec<DistortionSpec>, Vec<(DistortionSpec, f64)>) {
    let fill = DistortionRecipe::default_fill();
    let mandatory = fill.mandatory;
    let optional = fill.optional.into_iter().map(|o| (o.spec, o.prob)).collect();
    (mandatory, optional)
}

/// Simulates a fully-degraded 48 kHz input and runs it through the frozen
/// filling and separation stages. This is the restoration stage's training
/// input under stage-aware and joint fine-tuning.
pub fn saft_input<F: Scalar>(
    bundle: &ModelBundle<F>,
    clean48: &Waveform,
    seed: u64,
) -> Result<Waveform> {
    let (mandatory, optional) = full_degradation_specs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plan = DistortionPlan::sample_free(
        Stage::Res,
        &mandatory,
        &optional,
        clean48.fs(),
        &mut rng,
    )?;
    let (degraded, _) = plan.apply(clean48, None)?;
    let x = run_fill(bundle, &degraded)?;
    run_sep(bundle, &x)
}
