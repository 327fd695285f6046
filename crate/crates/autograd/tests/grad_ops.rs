//! Finite-difference validation of every tape op, plus optimizer and
//! checkpoint behavior.

use ndarray::{ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trident_autograd::check::{check_input_gradient, check_var_gradient};
use trident_autograd::{ckpt, Init, Tape, VarBuilder, VarStore};

const H: f64 = 1e-5;
const TOL: f64 = 1e-6;

fn randn(shape: &[usize], seed: u64) -> ArrayD<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ArrayD::from_shape_simple_fn(IxDyn(shape), || rng.gen_range(-1.0..1.0))
}

fn randn_pos(shape: &[usize], seed: u64) -> ArrayD<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ArrayD::from_shape_simple_fn(IxDyn(shape), || rng.gen_range(0.2..2.0))
}

#[test]
fn elementwise_ops_match_finite_differences() {
    let x = randn(&[3, 4], 1);
    let cases: Vec<(&str, Box<dyn Fn(&mut Tape<f64>, trident_autograd::T) -> trident_autograd::T>)> = vec![
        ("neg+mean", Box::new(|t, x| { let y = t.neg(x); t.mean_all(y) })),
        ("affine", Box::new(|t, x| { let y = t.affine(x, 2.5, -0.3); t.mean_all(y) })),
        ("square", Box::new(|t, x| { let y = t.square(x); t.mean_all(y) })),
        ("exp", Box::new(|t, x| { let y = t.exp(x); t.mean_all(y) })),
        ("sigmoid", Box::new(|t, x| { let y = t.sigmoid(x); t.mean_all(y) })),
        ("tanh", Box::new(|t, x| { let y = t.tanh(x); t.mean_all(y) })),
        ("leaky", Box::new(|t, x| { let y = t.leaky_relu(x, 0.1); t.sum_all(y) })),
        (
            "mul-self",
            Box::new(|t, x| {
                let y = t.mul(x, x);
                t.mean_all(y)
            }),
        ),
        (
            "add-sub-combo",
            Box::new(|t, x| {
                let a = t.affine(x, 0.5, 1.0);
                let b = t.sub(x, a);
                let c = t.add(b, x);
                t.mean_all(c)
            }),
        ),
    ];
    for (name, build) in cases {
        let err = check_input_gradient(&x, H, build);
        assert!(err < TOL, "{name}: rel err {err}");
    }
}

#[test]
fn positive_domain_ops_match_finite_differences() {
    let x = randn_pos(&[2, 5], 2);
    let cases: Vec<(&str, Box<dyn Fn(&mut Tape<f64>, trident_autograd::T) -> trident_autograd::T>)> = vec![
        ("ln", Box::new(|t, x| { let y = t.ln(x); t.mean_all(y) })),
        ("log10", Box::new(|t, x| { let y = t.log10(x); t.mean_all(y) })),
        ("sqrt", Box::new(|t, x| { let y = t.sqrt(x); t.mean_all(y) })),
        ("pow03", Box::new(|t, x| { let y = t.powf(x, 0.3); t.mean_all(y) })),
        ("pow07", Box::new(|t, x| { let y = t.powf(x, 0.7); t.mean_all(y) })),
        ("div", Box::new(|t, x| { let c = t.affine(x, 1.0, 2.0); let y = t.div(x, c); t.mean_all(y) })),
        ("clamp-above", Box::new(|t, x| { let y = t.clamp_min(x, 0.05); t.mean_all(y) })),
    ];
    for (name, build) in cases {
        let err = check_input_gradient(&x, H, build);
        assert!(err < TOL, "{name}: rel err {err}");
    }
}

#[test]
fn shape_ops_match_finite_differences() {
    let x = randn(&[2, 3, 4], 3);
    let cases: Vec<(&str, Box<dyn Fn(&mut Tape<f64>, trident_autograd::T) -> trident_autograd::T>)> = vec![
        (
            "reshape",
            Box::new(|t, x| {
                let y = t.reshape(x, &[6, 4]);
                let z = t.square(y);
                t.mean_all(z)
            }),
        ),
        (
            "permute",
            Box::new(|t, x| {
                let y = t.permute(x, &[2, 0, 1]);
                let z = t.mul(y, y);
                t.sum_all(z)
            }),
        ),
        (
            "slice",
            Box::new(|t, x| {
                let y = t.slice_axis(x, 1, 1, 3);
                let z = t.square(y);
                t.sum_all(z)
            }),
        ),
        (
            "concat-with-self",
            Box::new(|t, x| {
                let y = t.concat(&[x, x], 2);
                let z = t.square(y);
                t.mean_all(z)
            }),
        ),
        (
            "pad",
            Box::new(|t, x| {
                let y = t.pad_end(x, 2, 3);
                let z = t.square(y);
                t.sum_all(z)
            }),
        ),
        (
            "reverse",
            Box::new(|t, x| {
                let y = t.reverse_axis(x, 0);
                let w = t.mul(y, x);
                t.sum_all(w)
            }),
        ),
        (
            "sum-axis",
            Box::new(|t, x| {
                let y = t.sum_axis(x, 1);
                let z = t.square(y);
                t.mean_all(z)
            }),
        ),
        (
            "mean-axis",
            Box::new(|t, x| {
                let y = t.mean_axis(x, 2);
                let z = t.exp(y);
                t.sum_all(z)
            }),
        ),
    ];
    for (name, build) in cases {
        let err = check_input_gradient(&x, H, build);
        assert!(err < TOL, "{name}: rel err {err}");
    }
}

#[test]
fn matmul_and_bias_match_finite_differences() {
    let x = randn(&[3, 4], 4);
    let err = check_input_gradient(&x, H, |t, x| {
        let w = t.constant(randn(&[4, 5], 5));
        let y = t.matmul(x, w);
        let z = t.square(y);
        t.mean_all(z)
    });
    assert!(err < TOL, "matmul lhs: {err}");

    let w = randn(&[4, 5], 6);
    let err = check_input_gradient(&w, H, |t, w| {
        let x = t.constant(randn(&[3, 4], 7));
        let y = t.matmul(x, w);
        let z = t.square(y);
        t.mean_all(z)
    });
    assert!(err < TOL, "matmul rhs: {err}");

    let b = randn(&[3], 8);
    let err = check_input_gradient(&b, H, |t, b| {
        let x = t.constant(randn(&[3, 5], 9));
        let y = t.add_bias_rows(x, b);
        let z = t.square(y);
        t.sum_all(z)
    });
    assert!(err < TOL, "bias rows: {err}");

    let b = randn(&[4], 10);
    let err = check_input_gradient(&b, H, |t, b| {
        let x = t.constant(randn(&[2, 3, 4], 11));
        let y = t.add_bias_last(x, b);
        let z = t.square(y);
        t.sum_all(z)
    });
    assert!(err < TOL, "bias last: {err}");
}

#[test]
fn unfold_fold_are_adjoint_and_differentiable() {
    let x = randn(&[2, 7, 3], 12); // (B, S, D), kernel 3 stride 2 -> P = 3
    let err = check_input_gradient(&x, H, |t, x| {
        let u = t.unfold_seq(x, 3, 2);
        let z = t.square(u);
        t.sum_all(z)
    });
    assert!(err < TOL, "unfold: {err}");

    let y = randn(&[2, 3, 9], 13); // (B, P, I*D)
    let err = check_input_gradient(&y, H, |t, y| {
        let f = t.fold_seq(y, 3, 2, 3);
        let z = t.square(f);
        t.sum_all(z)
    });
    assert!(err < TOL, "fold: {err}");

    // adjoint identity <unfold(x), y> == <x, fold(y)>
    let mut tape = Tape::<f64>::new();
    let xt = tape.constant(x.clone());
    let yt = tape.constant(y.clone());
    let ux = tape.unfold_seq(xt, 3, 2);
    let fy = tape.fold_seq(yt, 3, 2, 3);
    let lhs: f64 = tape
        .value(ux)
        .iter()
        .zip(y.iter())
        .map(|(a, b)| a * b)
        .sum();
    let rhs: f64 = tape
        .value(fy)
        .iter()
        .zip(x.iter())
        .map(|(a, b)| a * b)
        .sum();
    assert!((lhs - rhs).abs() < 1e-10);
}

#[test]
fn lstm_matches_finite_differences() {
    let (s, b, input, hidden) = (4, 2, 3, 3);
    let x = randn(&[s, b, input], 14);
    let err = check_input_gradient(&x, H, move |t, x| {
        let wih = t.constant(randn(&[4 * hidden, input], 15));
        let whh = t.constant(randn(&[4 * hidden, hidden], 16));
        let bias = t.constant(randn(&[4 * hidden], 17));
        let h = t.lstm(x, wih, whh, bias);
        let z = t.square(h);
        t.sum_all(z)
    });
    assert!(err < TOL * 10.0, "lstm input: {err}");

    // weight gradients via the var path
    let mut store = VarStore::<f64>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let mut vb = VarBuilder::new(&mut store, &mut rng);
    let wih = vb.get(&[4 * hidden, input], "wih", Init::Uniform(0.5));
    let whh = vb.get(&[4 * hidden, hidden], "whh", Init::Uniform(0.5));
    let bias = vb.get(&[4 * hidden], "b", Init::Uniform(0.5));
    for var in [wih, whh, bias] {
        let x = x.clone();
        let err = check_var_gradient(&mut store, var, H, &[], move |t, st| {
            let xt = t.constant(x.clone());
            let wih_t = t.var(st, wih);
            let whh_t = t.var(st, whh);
            let b_t = t.var(st, bias);
            let h = t.lstm(xt, wih_t, whh_t, b_t);
            let z = t.square(h);
            t.sum_all(z)
        });
        assert!(err < TOL * 10.0, "lstm weight {var:?}: {err}");
    }
}

#[test]
fn bilstm_output_shape_and_gradient() {
    let x = randn(&[3, 2, 4], 19);
    let err = check_input_gradient(&x, H, |t, x| {
        let mk = |t: &mut Tape<f64>, seed| {
            (
                t.constant(randn(&[8, 4], seed)),
                t.constant(randn(&[8, 2], seed + 1)),
                t.constant(randn(&[8], seed + 2)),
            )
        };
        let (wf, hf, bf) = mk(t, 20);
        let (wb, hb, bb) = mk(t, 30);
        let h = t.bilstm(x, wf, hf, bf, wb, hb, bb);
        assert_eq!(t.shape(h), &[3, 2, 4]); // 2 * hidden(2)
        let z = t.square(h);
        t.sum_all(z)
    });
    assert!(err < TOL * 10.0, "bilstm: {err}");
}

#[test]
fn conv2d_matches_finite_differences() {
    let x = randn(&[2, 5, 6], 21);
    let err = check_input_gradient(&x, H, |t, x| {
        let w = t.constant(randn(&[3, 2, 3, 3], 22));
        let b = t.constant(randn(&[3], 23));
        let y = t.conv2d(x, w, b, (2, 1), (1, 1));
        let z = t.square(y);
        t.sum_all(z)
    });
    assert!(err < TOL, "conv2d input: {err}");

    let w = randn(&[3, 2, 3, 3], 24);
    let err = check_input_gradient(&w, H, |t, w| {
        let x = t.constant(randn(&[2, 5, 6], 25));
        let b = t.constant(randn(&[3], 26));
        let y = t.conv2d(x, w, b, (1, 2), (0, 1));
        let z = t.square(y);
        t.sum_all(z)
    });
    assert!(err < TOL, "conv2d weight: {err}");
}

#[test]
fn layer_norm_matches_finite_differences() {
    let x = randn(&[4, 3, 2], 27);
    let err = check_input_gradient(&x, H, |t, x| {
        let g = t.constant(randn_pos(&[4], 28));
        let b = t.constant(randn(&[4], 29));
        let y = t.layer_norm_ch(x, g, b, 1e-5);
        let z = t.square(y);
        t.sum_all(z)
    });
    assert!(err < TOL * 10.0, "layer_norm input: {err}");

    let g0 = randn_pos(&[4], 30);
    let err = check_input_gradient(&g0, H, |t, g| {
        let x = t.constant(randn(&[4, 5], 31));
        let b = t.constant(randn(&[4], 32));
        let y = t.layer_norm_ch(x, g, b, 1e-5);
        let z = t.square(y);
        t.sum_all(z)
    });
    assert!(err < TOL * 10.0, "layer_norm gamma: {err}");
}

#[test]
fn softmax_and_prelu_match_finite_differences() {
    let x = randn(&[3, 5], 33);
    let err = check_input_gradient(&x, H, |t, x| {
        let y = t.softmax_last(x);
        let w = t.constant(randn(&[3, 5], 34));
        let z = t.mul(y, w);
        t.sum_all(z)
    });
    assert!(err < TOL, "softmax: {err}");

    let err = check_input_gradient(&x, H, |t, x| {
        let a = t.constant(ArrayD::from_elem(IxDyn(&[1]), 0.25));
        let y = t.prelu(x, a);
        let z = t.square(y);
        t.sum_all(z)
    });
    assert!(err < TOL, "prelu input: {err}");

    let a0 = ArrayD::from_elem(IxDyn(&[1]), 0.25);
    let err = check_input_gradient(&a0, H, |t, a| {
        let x = t.constant(randn(&[4, 4], 35));
        let y = t.prelu(x, a);
        let z = t.square(y);
        t.sum_all(z)
    });
    assert!(err < TOL, "prelu alpha: {err}");
}

#[test]
fn stft_istft_ops_match_finite_differences() {
    let cfg = trident_dsp::StftConfig::default();
    let fs = 8000u32;
    let x = randn(&[300], 36);
    let err = check_input_gradient(&x, H, move |t, x| {
        let s = t.stft_op(x, cfg, fs);
        let z = t.square(s);
        t.sum_all(z)
    });
    assert!(err < TOL, "stft_op: {err}");

    // restrict the loss to the doubly-covered overlap-add region; the final
    // partial hop divides by a vanishing window power, which is exact for
    // the adjoint (see the dsp adjoint identity test) but ill-conditioned
    // for finite differences
    let hop = cfg.hop_len(fs);
    let spec = randn(&[2, 3, cfg.num_bins(fs)], 37);
    let err = check_input_gradient(&spec, H, move |t, s| {
        let y = t.istft_op(s, cfg, fs, 2 * hop);
        let z = t.square(y);
        t.sum_all(z)
    });
    assert!(err < TOL, "istft_op: {err}");
}

#[test]
fn detach_blocks_gradient() {
    let x = randn(&[4], 38);
    let mut tape = Tape::<f64>::new();
    let xt = tape.input(x);
    let d = tape.detach(xt);
    let z = tape.square(d);
    let loss = tape.sum_all(z);
    let grads = tape.backward(loss);
    assert!(grads.wrt(xt).is_none());
}

#[test]
fn two_backward_passes_are_independent() {
    let x = randn(&[4], 39);
    let mut tape = Tape::<f64>::new();
    let xt = tape.input(x);
    let a = tape.square(xt);
    let la = tape.sum_all(a);
    let b = tape.exp(xt);
    let lb = tape.sum_all(b);
    let ga = tape.backward(la);
    let gb = tape.backward(lb);
    let va = ga.wrt(xt).unwrap();
    let vb = gb.wrt(xt).unwrap();
    for (ga_i, (vb_i, x_i)) in va.iter().zip(vb.iter().zip(tape.value(xt).iter())) {
        assert!((ga_i - 2.0 * x_i).abs() < 1e-12);
        assert!((vb_i - x_i.exp()).abs() < 1e-12);
    }
}

#[test]
fn adamw_descends_a_quadratic() {
    use trident_autograd::optim::{AdamW, AdamWConfig};
    let mut store = VarStore::<f64>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let mut vb = VarBuilder::new(&mut store, &mut rng);
    let w = vb.get(&[8], "w", Init::Uniform(2.0));
    let target = randn(&[8], 41);
    let mut opt = AdamW::new(
        &store,
        vec![w],
        AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        },
    );
    let loss_at = |store: &VarStore<f64>, target: &ArrayD<f64>| -> f64 {
        store
            .value(w)
            .iter()
            .zip(target.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    };
    let initial = loss_at(&store, &target);
    for _ in 0..300 {
        store.zero_grads();
        let mut tape = Tape::<f64>::new();
        let wt = tape.var(&store, w);
        let tt = tape.constant(target.clone());
        let d = tape.sub(wt, tt);
        let sq = tape.square(d);
        let loss = tape.sum_all(sq);
        tape.backward_into(loss, &mut store);
        opt.step(&mut store, 0.05);
    }
    let fin = loss_at(&store, &target);
    assert!(fin < initial * 1e-3, "initial {initial} final {fin}");
}

#[test]
fn checkpoint_round_trips_bit_exact() {
    let dir = std::env::temp_dir().join("trident_autograd_ckpt");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("test.ckpt");
    let tensors = vec![
        ("a.w".to_string(), randn(&[3, 4], 42)),
        ("b".to_string(), randn(&[7], 43)),
    ];
    let meta = serde_json::json!({"step": 12, "note": "x"});
    ckpt::save(&path, &meta, &tensors).unwrap();
    let arch = ckpt::load(&path).unwrap();
    assert_eq!(arch.meta["step"], 12);
    assert_eq!(arch.tensors.len(), 2);
    for ((n0, t0), (n1, t1)) in tensors.iter().zip(&arch.tensors) {
        assert_eq!(n0, n1);
        assert_eq!(t0, t1);
    }
}

#[test]
fn var_builder_is_deterministic_per_seed() {
    let build = |seed: u64| {
        let mut store = VarStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut vb = VarBuilder::new(&mut store, &mut rng);
        let mut scope = vb.scoped("block");
        scope.get(&[4, 4], "w", Init::FanIn(4));
        vb.get(&[3], "b", Init::Uniform(1.0));
        store
    };
    let a = build(7);
    let b = build(7);
    let c = build(8);
    assert_eq!(a.value(trident_autograd::VarId(0)), b.value(trident_autograd::VarId(0)));
    assert_ne!(a.value(trident_autograd::VarId(0)), c.value(trident_autograd::VarId(0)));
    assert_eq!(a.name(trident_autograd::VarId(0)), "block.w");
}
