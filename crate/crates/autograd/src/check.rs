//! Central finite-difference gradient verification.

use ndarray::ArrayD;

use crate::tape::{Tape, T};
use crate::var::{VarId, VarStore};

/// Compares the analytic gradient of a scalar-valued graph against central
/// finite differences, coordinate by coordinate. Returns the worst relative
/// error. `build` must construct the same graph for every call.
pub fn check_input_gradient(
    x0: &ArrayD<f64>,
    h: f64,
    build: impl Fn(&mut Tape<f64>, T) -> T,
) -> f64 {
    let eval = |x: &ArrayD<f64>| -> f64 {
        let mut tape = Tape::<f64>::new();
        let xt = tape.input(x.clone());
        let loss = build(&mut tape, xt);
        tape.scalar(loss)
    };

    let mut tape = Tape::<f64>::new();
    let xt = tape.input(x0.clone());
    let loss = build(&mut tape, xt);
    let grads = tape.backward(loss);
    let analytic = grads
        .wrt(xt)
        .expect("input did not receive a gradient")
        .as_standard_layout()
        .to_owned();

    let mut worst = 0.0f64;
    let mut x = x0.clone();
    for idx in 0..x0.len() {
        let orig = x.as_slice_mut().unwrap()[idx];
        let step = h * orig.abs().max(1.0);
        x.as_slice_mut().unwrap()[idx] = orig + step;
        let fp = eval(&x);
        x.as_slice_mut().unwrap()[idx] = orig - step;
        let fm = eval(&x);
        x.as_slice_mut().unwrap()[idx] = orig;
        let fd = (fp - fm) / (2.0 * step);
        let an = analytic.as_slice().unwrap()[idx];
        let denom = an.abs().max(fd.abs());
        let err = if denom < 1e-7 {
            (an - fd).abs()
        } else {
            (an - fd).abs() / denom
        };
        worst = worst.max(err);
    }
    worst
}

/// Same check against a trainable variable in a store. Verifies the subset
/// of coordinates given by `sample` (all when empty).
pub fn check_var_gradient(
    store: &mut VarStore<f64>,
    var: VarId,
    h: f64,
    sample: &[usize],
    build: impl Fn(&mut Tape<f64>, &VarStore<f64>) -> T,
) -> f64 {
    let eval = |store: &VarStore<f64>| -> f64 {
        let mut tape = Tape::<f64>::new();
        let loss = build(&mut tape, store);
        tape.scalar(loss)
    };

    store.zero_grads();
    let mut tape = Tape::<f64>::new();
    let loss = build(&mut tape, store);
    let grads = tape.backward(loss);
    grads.apply_to_store(&tape, store);
    let analytic = store.grad(var).as_standard_layout().to_owned();

    let all: Vec<usize>;
    let coords: &[usize] = if sample.is_empty() {
        all = (0..analytic.len()).collect();
        &all
    } else {
        sample
    };

    let mut worst = 0.0f64;
    for &idx in coords {
        let orig = store.value(var).as_slice().unwrap()[idx];
        let step = h * orig.abs().max(1.0);
        store.value_mut(var).as_slice_mut().unwrap()[idx] = orig + step;
        let fp = eval(store);
        store.value_mut(var).as_slice_mut().unwrap()[idx] = orig - step;
        let fm = eval(store);
        store.value_mut(var).as_slice_mut().unwrap()[idx] = orig;
        let fd = (fp - fm) / (2.0 * step);
        let an = analytic.as_slice().unwrap()[idx];
        let denom = an.abs().max(fd.abs());
        let err = if denom < 1e-7 {
            (an - fd).abs()
        } else {
            (an - fd).abs() / denom
        };
        worst = worst.max(err);
    }
    worst
}
