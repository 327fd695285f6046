//! Architecture contracts: SFI shapes, parameter audit against the published
//! budget, identity initialization, gradient flow, and discriminator basics.

use ndarray::{ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trident_autograd::{Tape, VarBuilder, VarStore};
use trident_nets::audit::{cws_tfgridnet_macs_per_second, tfgridnet_params};
use trident_nets::gridnet::NetInit;
use trident_nets::*;

fn rand_spec(ch: usize, t: usize, f: usize, seed: u64, scale: f64) -> ArrayD<f32> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    ArrayD::from_shape_simple_fn(IxDyn(&[ch, t, f]), || (r.gen_range(-1.0..1.0) * scale) as f32)
}

fn build_net(cfg: GridNetConfig, init: NetInit, seed: u64) -> (VarStore<f32>, TfGridNet) {
    let mut store = VarStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vb = VarBuilder::new(&mut store, &mut rng);
    let net = TfGridNet::new(&mut vb, cfg, 2, 2, init).unwrap();
    (store, net)
}

#[test]
fn output_shape_tracks_input_shape_at_any_bin_count() {
    let (store, net) = build_net(GridNetConfig::tiny(), NetInit::Random, 1);
    for f in [129usize, 257, 769] {
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(rand_spec(2, 5, f, 2, 1.0));
        let y = net.forward(&mut tape, &store, x);
        assert_eq!(tape.shape(y), &[2, 5, f]);
    }
}

#[test]
fn large_preset_block_weight_count_is_about_four_times_small() {
    let per_block = |cfg: &GridNetConfig| {
        (tfgridnet_params(cfg, 2, 2)
            - tfgridnet_params(&GridNetConfig { blocks: 0, ..*cfg }, 2, 2)) as f64
            / cfg.blocks as f64
    };
    let s = per_block(&GridNetConfig::preset_s());
    let l = per_block(&GridNetConfig::preset_l());
    let ratio = l / s;
    assert!((3.5..=4.5).contains(&ratio), "block scaling ratio {ratio}");
}

#[test]
fn bundle_parameter_budget_matches_published_total_within_ten_percent() {
    let config = bundle::BundleConfig::paper();
    let analytic = bundle_param_count(&config);
    let target = 30.40e6;
    let rel = (analytic.total as f64 - target).abs() / target;
    assert!(
        rel <= 0.10,
        "total {} vs 30.40M ({:+.2}%)",
        analytic.total,
        100.0 * (analytic.total as f64 - target) / target
    );

    // constructed counts must equal the analytic formulas exactly
    let bundle = ModelBundle::<f32>::new(config, 7, bundle::BundleInit::Train).unwrap();
    let (fill, sep, res, res_ft) = bundle.param_counts();
    assert_eq!(fill, analytic.fill);
    assert_eq!(sep, analytic.sep);
    assert_eq!(res, analytic.res);
    assert_eq!(res_ft, analytic.res_ft);
    assert_eq!(fill + sep + res + res_ft, analytic.total);
}

#[test]
fn published_macs_rates_are_reproduced_within_fifteen_percent() {
    let config = bundle::BundleConfig::paper();
    let m16 = bundle_macs_per_second(&config, 16000);
    let m48 = bundle_macs_per_second(&config, 48000);
    let rel16 = (m16 - 493.0e9).abs() / 493.0e9;
    let rel48 = (m48 - 1360.5e9).abs() / 1360.5e9;
    assert!(rel16 <= 0.15, "16 kHz: {:.1} G ({:+.1}%)", m16 / 1e9, 100.0 * (m16 - 493.0e9) / 493.0e9);
    assert!(rel48 <= 0.15, "48 kHz: {:.1} G ({:+.1}%)", m48 / 1e9, 100.0 * (m48 - 1360.5e9) / 1360.5e9);
}

#[test]
fn identity_init_reproduces_the_input_exactly() {
    let mut store = VarStore::<f32>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut vb = VarBuilder::new(&mut store, &mut rng);
    let net = TfGridNet::new(&mut vb, GridNetConfig::tiny(), 2, 2, NetInit::Identity).unwrap();
    net.set_passthrough_projections(&mut store);
    let x = rand_spec(2, 6, 65, 4, 1.0);
    let mut tape = Tape::<f32>::new();
    let xt = tape.constant(x.clone());
    let y = net.forward(&mut tape, &store, xt);
    for (a, b) in tape.value(y).iter().zip(x.iter()) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn zero_output_init_produces_zero_spectrogram() {
    let (store, net) = build_net(GridNetConfig::tiny(), NetInit::ZeroOutput, 5);
    let mut tape = Tape::<f32>::new();
    let x = tape.constant(rand_spec(2, 4, 33, 6, 1.0));
    let y = net.forward(&mut tape, &store, x);
    assert!(tape.value(y).iter().all(|v| *v == 0.0));
}

#[test]
fn forward_is_finite_for_ten_times_nominal_inputs() {
    let (store, net) = build_net(GridNetConfig::tiny(), NetInit::Random, 7);
    let mut tape = Tape::<f32>::new();
    let x = tape.constant(rand_spec(2, 6, 65, 8, 10.0));
    let y = net.forward(&mut tape, &store, x);
    assert!(tape.value(y).iter().all(|v| v.is_finite()));
}

#[test]
fn every_parameter_receives_gradient_on_a_random_batch() {
    let (mut store, net) = build_net(GridNetConfig::tiny(), NetInit::Random, 9);
    let mut tape = Tape::<f32>::new();
    let x = tape.constant(rand_spec(2, 6, 33, 10, 1.0));
    let target = tape.constant(rand_spec(2, 6, 33, 11, 1.0));
    let y = net.forward(&mut tape, &store, x);
    let d = tape.sub(y, target);
    let sq = tape.square(d);
    let loss = tape.mean_all(sq);
    store.zero_grads();
    tape.backward_into(loss, &mut store);
    for id in store.ids() {
        let gnorm: f32 = store.grad(id).iter().map(|g| g * g).sum();
        assert!(
            gnorm > 0.0,
            "dead parameter: {} (no gradient)",
            store.name(id)
        );
    }
}

#[test]
fn cws_net_round_trips_shape_and_routes_gradients_to_all_bands() {
    let mut store = VarStore::<f32>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut vb = VarBuilder::new(&mut store, &mut rng);
    let net = CwsTfGridNet::new(&mut vb, GridNetConfig::tiny(), NetInit::Random).unwrap();

    let f = 769usize;
    let mut tape = Tape::<f32>::new();
    let x = tape.input(rand_spec(2, 4, f, 13, 1.0));
    let y = net.forward(&mut tape, &store, x, 48000).unwrap();
    assert_eq!(tape.shape(y), &[2, 4, f]);

    let sq = tape.square(y);
    let loss = tape.mean_all(sq);
    store.zero_grads();
    let grads = tape.backward_into(loss, &mut store);

    // every input frequency band must receive gradient
    let gx = grads.wrt(x).unwrap();
    for (lo, hi) in [(0, 256), (256, 512), (512, 769)] {
        let e: f32 = (lo..hi)
            .map(|k| (0..4).map(|t| gx[[0, t, k]].powi(2) + gx[[1, t, k]].powi(2)).sum::<f32>())
            .sum();
        assert!(e > 0.0, "band {lo}..{hi} got no gradient");
    }
    // and the in-projection weight slices for all three channel groups
    let w_id = store.find("in_conv.w").unwrap();
    let gw = store.grad(w_id);
    for group in 0..3 {
        let e: f32 = (2 * group..2 * group + 2)
            .map(|c| {
                (0..store.value(w_id).shape()[0])
                    .map(|o| {
                        (0..3)
                            .map(|a| (0..3).map(|b| gw[[o, c, a, b]].powi(2)).sum::<f32>())
                            .sum::<f32>()
                    })
                    .sum::<f32>()
            })
            .sum();
        assert!(e > 0.0, "channel group {group} got no gradient");
    }
}

#[test]
fn cws_net_rejects_non_48k() {
    let mut store = VarStore::<f32>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut vb = VarBuilder::new(&mut store, &mut rng);
    let net = CwsTfGridNet::new(&mut vb, GridNetConfig::tiny(), NetInit::Random).unwrap();
    let mut tape = Tape::<f32>::new();
    let x = tape.constant(rand_spec(2, 4, 257, 15, 1.0));
    assert!(matches!(
        net.forward(&mut tape, &store, x, 16000),
        Err(NetError::UnsupportedRate(16000, _))
    ));
}

#[test]
fn cws_macs_account_for_band_width_reduction() {
    let cfg = GridNetConfig::preset_s();
    let stft = trident_dsp::StftConfig::default();
    let cws = cws_tfgridnet_macs_per_second(&cfg, &stft);
    let full = trident_nets::audit::tfgridnet_macs_per_second(&cfg, 6, 6, &stft, 48000);
    assert!(cws < full / 2.0, "cws {cws} vs fullband {full}");
}

fn wave(len: usize, seed: u64) -> ArrayD<f32> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    ArrayD::from_shape_simple_fn(IxDyn(&[len]), || r.gen_range(-0.5f32..0.5))
}

#[test]
fn discriminators_return_scores_and_nonempty_features() {
    let cfg = DiscConfig::tiny();
    let mut store = VarStore::<f32>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let mut vb = VarBuilder::new(&mut store, &mut rng);
    let mpd = Mpd::new(&mut vb.scoped("mpd"), &cfg);
    let mrd = Mrd::new(&mut vb.scoped("mrd"), &cfg);
    let mbd = Mbd::new(&mut vb.scoped("mbd"), &cfg, 16000);

    let mut tape = Tape::<f32>::new();
    let x = tape.constant(wave(4000, 17));
    for out in [
        mpd.forward(&mut tape, &store, x).unwrap(),
        mrd.forward(&mut tape, &store, x).unwrap(),
        mbd.forward(&mut tape, &store, x).unwrap(),
    ] {
        assert!(!out.scores.is_empty());
        assert_eq!(out.scores.len(), out.features.len());
        for feats in &out.features {
            assert!(!feats.is_empty());
        }
    }
}

#[test]
fn discriminator_rejects_too_short_input() {
    let cfg = DiscConfig::tiny();
    let mut store = VarStore::<f32>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let mut vb = VarBuilder::new(&mut store, &mut rng);
    let mrd = Mrd::new(&mut vb.scoped("mrd"), &cfg);
    let mut tape = Tape::<f32>::new();
    let x = tape.constant(wave(100, 19));
    assert!(matches!(
        mrd.forward(&mut tape, &store, x),
        Err(NetError::InvalidArgument(_))
    ));
}

#[test]
fn discriminator_outputs_are_deterministic_under_fixed_weights() {
    let cfg = DiscConfig::tiny();
    let mut store = VarStore::<f32>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut vb = VarBuilder::new(&mut store, &mut rng);
    let mpd = Mpd::new(&mut vb.scoped("mpd"), &cfg);
    let x = wave(3000, 21);
    let run = |store: &VarStore<f32>| -> Vec<f32> {
        let mut tape = Tape::<f32>::new();
        let xt = tape.constant(x.clone());
        let out = mpd.forward(&mut tape, store, xt).unwrap();
        out.scores
            .iter()
            .flat_map(|s| tape.value(*s).iter().copied().collect::<Vec<f32>>())
            .collect()
    };
    assert_eq!(run(&store), run(&store));
}

#[test]
fn bundle_save_load_round_trips_weights() {
    let dir = std::env::temp_dir().join("trident_nets_bundle");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("tiny.ckpt");
    let config = bundle::BundleConfig::tiny();
    let bundle = ModelBundle::<f32>::new(config, 23, bundle::BundleInit::Train).unwrap();
    bundle.save(&path, serde_json::json!({"step": 5})).unwrap();
    let loaded = ModelBundle::<f32>::load(&path).unwrap();
    assert_eq!(loaded.config, bundle.config);
    for id in bundle.store.ids() {
        let name = bundle.store.name(id);
        let lid = loaded.store.find(name).unwrap();
        assert_eq!(bundle.store.value(id), loaded.store.value(lid), "{name}");
    }
}

#[test]
fn finetuned_res_starts_as_a_copy_of_res() {
    let mut config = bundle::BundleConfig::tiny();
    config.with_finetuned = true;
    let bundle = ModelBundle::<f32>::new(config, 29, bundle::BundleInit::Train).unwrap();
    for id in bundle.store.ids_with_prefix("res.") {
        let name = bundle.store.name(id).to_string();
        let ft = bundle
            .store
            .find(&format!("res_ft.{}", &name["res.".len()..]))
            .unwrap();
        assert_eq!(bundle.store.value(id), bundle.store.value(ft), "{name}");
    }
}
