//! Objective evaluation: intrusive metrics computed from the loss kernels
//! (sign/units adjusted), optional external scorer adapters, and corpus
//! report generation.

use std::path::Path;

use serde::{Deserialize, Serialize};
use trident_autograd::Tape;
use trident_dsp::{StftConfig, Waveform};
use trident_losses::{lsd_loss, mcd_aware_loss, sdr_loss, MfccConfig};

use crate::{Result, RuntimeError};

fn to_node(tape: &mut Tape<f64>, wav: &Waveform) -> trident_autograd::T {
    tape.constant(
        ndarray::ArrayD::from_shape_vec(
            ndarray::IxDyn(&[wav.len()]),
            wav.samples().to_vec(),
        )
        .unwrap(),
    )
}

fn check_aligned(reference: &Waveform, estimate: &Waveform) -> Result<()> {
    if reference.len() != estimate.len() || reference.fs() != estimate.fs() {
        return Err(RuntimeError::InvalidArgument(format!(
            "misaligned pair: {} samples @ {} Hz vs {} samples @ {} Hz",
            reference.len(),
            reference.fs(),
            estimate.len(),
            estimate.fs()
        )));
    }
    Ok(())
}

/// Signal-to-distortion ratio in dB (sign-flipped, decibel-scaled loss
/// kernel).
pub fn eval_sdr(reference: &Waveform, estimate: &Waveform) -> Result<f64> {
    check_aligned(reference, estimate)?;
    let mut tape = Tape::<f64>::new();
    let r = to_node(&mut tape, reference);
    let e = to_node(&mut tape, estimate);
    let loss = sdr_loss(&mut tape, r, e)?;
    Ok(-10.0 * tape.scalar(loss))
}

/// Log-spectral distance (the loss kernel evaluated as a metric).
pub fn eval_lsd(reference: &Waveform, estimate: &Waveform, cfg: &StftConfig) -> Result<f64> {
    check_aligned(reference, estimate)?;
    let mut tape = Tape::<f64>::new();
    let r = to_node(&mut tape, reference);
    let e = to_node(&mut tape, estimate);
    let rs = tape.stft_op(r, *cfg, reference.fs());
    let es = tape.stft_op(e, *cfg, estimate.fs());
    let loss = lsd_loss(&mut tape, rs, es)?;
    Ok(tape.scalar(loss))
}

/// Mel cepstral distortion: mean squared MFCC difference (the loss kernel).
pub fn eval_mcd(
    reference: &Waveform,
    estimate: &Waveform,
    mfcc: &MfccConfig,
    cfg: &StftConfig,
) -> Result<f64> {
    check_aligned(reference, estimate)?;
    let mut tape = Tape::<f64>::new();
    let r = to_node(&mut tape, reference);
    let e = to_node(&mut tape, estimate);
    let loss = mcd_aware_loss(&mut tape, r, e, mfcc, cfg, reference.fs())?;
    Ok(tape.scalar(loss))
}

/// External scorer adapter: a command receiving `estimate.wav` (and
/// `reference.wav` when intrusive) as arguments, printing one float.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalScorer {
    pub name: String,
    pub command: Vec<String>,
    pub intrusive: bool,
}

impl ExternalScorer {
    fn run(&self, reference: &Path, estimate: &Path) -> Result<f64> {
        let mut cmd = std::process::Command::new(&self.command[0]);
        cmd.args(&self.command[1..]);
        cmd.arg(estimate);
        if self.intrusive {
            cmd.arg(reference);
        }
        let out = cmd.output()?;
        if !out.status.success() {
            return Err(RuntimeError::InvalidArgument(format!(
                "scorer {} failed: {}",
                self.name,
                String::from_utf8_lossy(&out.stderr)
            )));
        }
        String::from_utf8_lossy(&out.stdout)
            .trim()
            .parse::<f64>()
            .map_err(|e| {
                RuntimeError::InvalidArgument(format!("scorer {} output: {e}", self.name))
            })
    }
}

/// Which metrics a report computes. Built-in intrusive metrics always run;
/// externals run when an adapter is configured, otherwise they report "n/a".
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MetricSet {
    #[serde(default)]
    pub external: Vec<ExternalScorer>,
    /// Names reported as "n/a" when no adapter is configured.
    #[serde(default)]
    pub declared_external: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRecord {
    pub utt_id: String,
    /// (metric, value); None renders as "n/a".
    pub metrics: Vec<(String, Option<f64>)>,
    pub condition: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusReport {
    pub stft_ms: (f64, f64),
    pub mfcc: (usize, usize),
    pub records: Vec<EvalRecord>,
    pub missing: Vec<String>,
    /// metric -> (mean, median) over available values.
    pub aggregates: Vec<(String, f64, f64)>,
}

impl CorpusReport {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let header = serde_json::json!({
            "stft_ms": self.stft_ms,
            "mfcc": self.mfcc,
            "missing": self.missing,
        });
        out.push_str(&header.to_string());
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).unwrap());
            out.push('\n');
        }
        for (name, mean, median) in &self.aggregates {
            let agg = serde_json::json!({"metric": name, "mean": mean, "median": median});
            out.push_str(&agg.to_string());
            out.push('\n');
        }
        out
    }

    /// Aligned-column table, metrics across, one row per utterance plus
    /// mean/median rows.
    pub fn to_table(&self) -> String {
        let metric_names: Vec<String> = self
            .records
            .first()
            .map(|r| r.metrics.iter().map(|(n, _)| n.clone()).collect())
            .unwrap_or_default();
        let mut s = String::new();
        s.push_str(&format!(
            "# stft {}/{} ms, mfcc {} mels {} coeffs\n",
            self.stft_ms.0, self.stft_ms.1, self.mfcc.0, self.mfcc.1
        ));
        s.push_str(&format!("{:<20}", "utt_id"));
        for n in &metric_names {
            s.push_str(&format!("{n:>12}"));
        }
        s.push('\n');
        for r in &self.records {
            s.push_str(&format!("{:<20}", r.utt_id));
            for (_, v) in &r.metrics {
                match v {
                    Some(v) => s.push_str(&format!("{v:>12.4}")),
                    None => s.push_str(&format!("{:>12}", "n/a")),
                }
            }
            s.push('\n');
        }
        for stat in ["mean", "median"] {
            s.push_str(&format!("{stat:<20}"));
            for n in &metric_names {
                match self.aggregates.iter().find(|(an, _, _)| an == n) {
                    Some((_, mean, median)) => {
                        let v = if stat == "mean" { *mean } else { *median };
                        s.push_str(&format!("{v:>12.4}"));
                    }
                    None => s.push_str(&format!("{:>12}", "n/a")),
                }
            }
            s.push('\n');
        }
        if !self.missing.is_empty() {
            s.push_str(&format!("# missing outputs: {}\n", self.missing.join(", ")));
        }
        s
    }
}

/// Evaluates a system output directory against a reference manifest. Every
/// manifest entry must have `<out_dir>/<utt_id>.wav`; missing outputs are
/// listed and excluded from aggregates.
pub fn eval_corpus(
    manifest: &[trident_sim::ManifestEntry],
    out_dir: &Path,
    metrics: &MetricSet,
    stft_cfg: &StftConfig,
    mfcc: &MfccConfig,
) -> Result<CorpusReport> {
    let mut records = Vec::new();
    let mut missing = Vec::new();
    let mut entries: Vec<_> = manifest.to_vec();
    entries.sort_by(|a, b| a.utt_id.cmp(&b.utt_id));

    for entry in &entries {
        let est_path = out_dir.join(format!("{}.wav", entry.utt_id));
        if !est_path.exists() {
            missing.push(entry.utt_id.clone());
            continue;
        }
        let reference = trident_dsp::read_wav(&entry.path)?;
        let mut estimate = trident_dsp::read_wav(&est_path)?;
        if estimate.len() != reference.len() && estimate.fs() == reference.fs() {
            // tolerate one-sample trims from resampling chains
            if estimate.len().abs_diff(reference.len()) <= 2 {
                let mut v = estimate.into_samples();
                v.resize(reference.len(), 0.0);
                estimate = Waveform::new(v, reference.fs())?;
            }
        }
        let mut m: Vec<(String, Option<f64>)> = vec![
            ("sdr_db".into(), Some(eval_sdr(&reference, &estimate)?)),
            ("lsd".into(), Some(eval_lsd(&reference, &estimate, stft_cfg)?)),
            (
                "mcd".into(),
                Some(eval_mcd(&reference, &estimate, mfcc, stft_cfg)?),
            ),
        ];
        for ext in &metrics.external {
            let v = ext.run(&entry.path, &est_path)?;
            m.push((ext.name.clone(), Some(v)));
        }
        for name in &metrics.declared_external {
            if !metrics.external.iter().any(|e| &e.name == name) {
                m.push((name.clone(), None));
            }
        }
        records.push(EvalRecord {
            utt_id: entry.utt_id.clone(),
            metrics: m,
            condition: format!("fs={}", reference.fs()),
        });
    }

    let metric_names: Vec<String> = records
        .first()
        .map(|r| r.metrics.iter().map(|(n, _)| n.clone()).collect())
        .unwrap_or_default();
    let mut aggregates = Vec::new();
    for name in &metric_names {
        let mut vals: Vec<f64> = records
            .iter()
            .filter_map(|r| {
                r.metrics
                    .iter()
                    .find(|(n, _)| n == name)
                    .and_then(|(_, v)| *v)
            })
            .collect();
        if vals.is_empty() {
            continue;
        }
        vals.sort_by(|a, b| a.total_cmp(b));
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let median = if vals.len() % 2 == 1 {
            vals[vals.len() / 2]
        } else {
            0.5 * (vals[vals.len() / 2 - 1] + vals[vals.len() / 2])
        };
        aggregates.push((name.clone(), mean, median));
    }

    Ok(CorpusReport {
        stft_ms: (stft_cfg.win_ms, stft_cfg.hop_ms),
        mfcc: (mfcc.n_mels, mfcc.n_coeffs),
        records,
        missing,
        aggregates,
    })
}
