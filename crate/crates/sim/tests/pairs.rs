//! Pair-construction semantics: determinism, target coupling, rate policy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trident_dsp::Waveform;
use trident_sim::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn clean(len: usize, fs: u32, seed: u64) -> Waveform {
    let mut r = rng(seed);
    let f0 = r.gen_range(100.0..200.0);
    Waveform::new(
        (0..len)
            .map(|i| {
                let t = i as f64 / fs as f64;
                0.4 * (std::f64::consts::TAU * f0 * t).sin()
                    + 0.2 * (std::f64::consts::TAU * 2.3 * f0 * t).sin()
            })
            .collect(),
        fs,
    )
    .unwrap()
}

#[test]
fn fill_pair_with_only_packet_loss_has_clean_target() {
    let recipe = DistortionRecipe {
        stage: Stage::Fill,
        mandatory: vec![DistortionSpec::PacketLoss {
            rate: [0.1, 0.3],
            segment_ms: [20.0, 160.0],
        }],
        optional: vec![],
        target_keeps: vec![],
    };
    // target_keeps empty is valid here because no other kind is configured
    let x = clean(32000, 16000, 1);
    let pair = simulate_pair(&x, &recipe, &mut rng(2)).unwrap();
    assert_eq!(pair.target, x); // 16 kHz in, 16 kHz stage: resample is identity
    let mask = pair.mask.expect("packet loss applied");
    assert!(!mask.lost_segments.is_empty());
    for i in 0..x.len() {
        if mask.covers(i) {
            assert_eq!(pair.input.samples()[i], 0.0);
        } else {
            assert_eq!(pair.input.samples()[i], x.samples()[i]);
        }
    }
}

#[test]
fn sep_pair_target_keeps_bandwidth_with_identical_draw() {
    let recipe = DistortionRecipe {
        stage: Stage::Sep,
        mandatory: vec![
            DistortionSpec::Noise { snr_db: [5.0, 15.0] },
            DistortionSpec::BandwidthLimit { cutoff_fs: vec![4000, 8000] },
        ],
        optional: vec![],
        target_keeps: vec![DistortionKind::BandwidthLimit],
    };
    let x = clean(32000, 16000, 3);
    let pair = simulate_pair(&x, &recipe, &mut rng(4)).unwrap();

    // the target must equal the bandwidth-limited clean signal with the very
    // cutoff the input path drew
    let cutoff = pair
        .plan
        .items
        .iter()
        .find_map(|i| match i {
            trident_sim::PlannedDistortion::BandwidthLimit { cutoff_fs } => Some(*cutoff_fs),
            _ => None,
        })
        .unwrap();
    let expect = apply_bandwidth_limit(&x, cutoff).unwrap();
    assert_eq!(pair.target, expect);
    // input additionally carries noise
    assert_ne!(pair.input, pair.target);
}

#[test]
fn res_pair_target_is_the_clean_signal() {
    let recipe = DistortionRecipe::default_res();
    let x = clean(96000, 48000, 5);
    let pair = simulate_pair(&x, &recipe, &mut rng(6)).unwrap();
    assert_eq!(pair.target, x);
    assert_eq!(pair.input.len(), x.len());
    assert_eq!(pair.input.fs(), 48000);
}

#[test]
fn res_stage_rejects_non_48k_material() {
    let recipe = DistortionRecipe::default_res();
    let x = clean(32000, 16000, 7);
    assert!(matches!(
        simulate_pair(&x, &recipe, &mut rng(8)),
        Err(SimError::UnsupportedRate(16000, _))
    ));
}

#[test]
fn fill_stage_rejects_8k_and_downsamples_441() {
    let recipe = DistortionRecipe::default_fill();
    let x8 = clean(8000, 8000, 9);
    assert!(matches!(
        simulate_pair(&x8, &recipe, &mut rng(10)),
        Err(SimError::UnsupportedRate(8000, _))
    ));
    let x44 = clean(44100, 44100, 11);
    let pair = simulate_pair(&x44, &recipe, &mut rng(12)).unwrap();
    assert_eq!(pair.input.fs(), 16000);
    assert_eq!(pair.target.fs(), 16000);
    assert_eq!(pair.input.len(), 16000);
}

#[test]
fn identical_seeds_give_bit_identical_pairs() {
    let recipe = DistortionRecipe::default_fill();
    let x = clean(48000, 16000, 13);
    let a = simulate_pair(&x, &recipe, &mut rng(14)).unwrap();
    let b = simulate_pair(&x, &recipe, &mut rng(14)).unwrap();
    assert_eq!(a.input, b.input);
    assert_eq!(a.target, b.target);
    assert_eq!(a.plan, b.plan);
    let c = simulate_pair(&x, &recipe, &mut rng(15)).unwrap();
    assert!(c.plan != a.plan || c.input != a.input);
}

#[test]
fn replaying_a_stored_plan_reconstructs_the_input() {
    let recipe = DistortionRecipe::default_sep();
    let x = clean(48000, 16000, 16);
    let pair = simulate_pair(&x, &recipe, &mut rng(17)).unwrap();
    // serialize the plan (as the provenance sidecar does) and replay it
    let json = serde_json::to_string(&pair.plan).unwrap();
    let plan: DistortionPlan = serde_json::from_str(&json).unwrap();
    let (replayed, _) = plan.apply(&x, None).unwrap();
    assert_eq!(replayed, pair.input);
}

#[test]
fn target_equals_input_path_with_extras_skipped() {
    // instrumented replay of the coupling invariant: running the plan with
    // only the kept kinds must reproduce the target bit-exactly
    let recipe = DistortionRecipe::default_fill();
    let x = clean(48000, 16000, 18);
    for seed in 20..30 {
        let pair = simulate_pair(&x, &recipe, &mut rng(seed)).unwrap();
        let kept: Vec<DistortionKind> = pair
            .plan
            .kinds()
            .into_iter()
            .filter(|k| recipe.target_keeps.contains(k))
            .collect();
        let (target2, _) = pair.plan.apply(&x, Some(&kept)).unwrap();
        assert_eq!(target2, pair.target, "seed {seed}");
        // every simulator preserved length and rate
        assert_eq!(pair.input.len(), x.len());
        assert_eq!(pair.target.len(), x.len());
        assert_eq!(pair.input.fs(), 16000);
    }
}
