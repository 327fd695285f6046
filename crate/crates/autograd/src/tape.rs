//! The tape: forward value storage plus reverse-mode closures.

use ndarray::{ArrayD, Axis, Ix2, IxDyn, Slice};

use crate::var::{VarId, VarStore};
use crate::Scalar;

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct T(pub usize);

type BackFn<F> = Box<dyn Fn(&[ArrayD<F>], &ArrayD<F>) -> Vec<(usize, ArrayD<F>)>>;

fn standardize<F: Scalar>(a: ArrayD<F>) -> ArrayD<F> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().to_owned()
    }
}

struct Meta<F: Scalar> {
    needs_grad: bool,
    back: Option<BackFn<F>>,
    /// (owning store uid, variable id) for trainable leaves.
    var: Option<(u64, VarId)>,
}

pub struct Tape<F: Scalar> {
    values: Vec<ArrayD<F>>,
    metas: Vec<Meta<F>>,
}

/// Cotangents produced by [`Tape::backward`].
pub struct Gradients<F: Scalar> {
    by_node: Vec<Option<ArrayD<F>>>,
}

impl<F: Scalar> Gradients<F> {
    /// Gradient w.r.t. an arbitrary node, if any path reached it.
    pub fn wrt(&self, t: T) -> Option<&ArrayD<F>> {
        self.by_node.get(t.0).and_then(|g| g.as_ref())
    }

    /// Accumulates variable gradients into the store's grad buffers,
    /// skipping variables owned by other stores.
    pub fn apply_to_store(&self, tape: &Tape<F>, store: &mut VarStore<F>) {
        for (id, meta) in tape.metas.iter().enumerate() {
            if let (Some((uid, var)), Some(g)) = (meta.var, self.by_node[id].as_ref()) {
                if uid == store.uid() {
                    store.accumulate_grad(var, g);
                }
            }
        }
    }
}

impl<F: Scalar> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Tape<F> {
    pub fn new() -> Self {
        Self {
            values: Vec::new(),
            metas: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, t: T) -> &ArrayD<F> {
        &self.values[t.0]
    }

    pub fn shape(&self, t: T) -> &[usize] {
        self.values[t.0].shape()
    }

    /// Scalar value of a 1-element node.
    pub fn scalar(&self, t: T) -> F {
        debug_assert_eq!(self.values[t.0].len(), 1);
        *self.values[t.0].iter().next().unwrap()
    }

    pub(crate) fn push(
        &mut self,
        value: ArrayD<F>,
        parents: Vec<usize>,
        back: Option<BackFn<F>>,
        var: Option<(u64, VarId)>,
        leaf_grad: bool,
    ) -> T {
        let needs_grad = leaf_grad
            || var.is_some()
            || parents.iter().any(|p| self.metas[*p].needs_grad);
        let back = if needs_grad { back } else { None };
        // every node value is kept in standard layout so shape ops stay cheap
        let value = standardize(value);
        self.values.push(value);
        self.metas.push(Meta {
            needs_grad,
            back,
            var,
        });
        T(self.values.len() - 1)
    }

    pub(crate) fn unary(
        &mut self,
        value: ArrayD<F>,
        parent: T,
        back: impl Fn(&[ArrayD<F>], &ArrayD<F>) -> ArrayD<F> + 'static,
    ) -> T {
        let p = parent.0;
        self.push(
            value,
            vec![p],
            Some(Box::new(move |vals, g| vec![(p, back(vals, g))])),
            None,
            false,
        )
    }

    // ---- leaves ----

    /// Constant leaf: no gradient tracked through it.
    pub fn constant(&mut self, value: ArrayD<F>) -> T {
        self.push(value, vec![], None, None, false)
    }

    /// Input leaf: gradient is tracked and retrievable via [`Gradients::wrt`].
    pub fn input(&mut self, value: ArrayD<F>) -> T {
        self.push(value, vec![], None, None, true)
    }

    /// Trainable variable leaf; its cotangent lands in the store on
    /// [`Gradients::apply_to_store`].
    pub fn var(&mut self, store: &VarStore<F>, id: VarId) -> T {
        self.push(
            store.value(id).clone(),
            vec![],
            None,
            Some((store.uid(), id)),
            false,
        )
    }

    /// Cuts the gradient path: same value, no parents.
    pub fn detach(&mut self, t: T) -> T {
        let v = self.values[t.0].clone();
        self.constant(v)
    }

    // ---- elementwise binary ----

    fn assert_same_shape(&self, a: T, b: T, what: &str) {
        assert_eq!(
            self.values[a.0].shape(),
            self.values[b.0].shape(),
            "{what}: shape mismatch"
        );
    }

    pub fn add(&mut self, a: T, b: T) -> T {
        self.assert_same_shape(a, b, "add");
        let v = &self.values[a.0] + &self.values[b.0];
        let (pa, pb) = (a.0, b.0);
        self.push(
            v,
            vec![pa, pb],
            Some(Box::new(move |_, g| {
                vec![(pa, g.clone()), (pb, g.clone())]
            })),
            None,
            false,
        )
    }

    pub fn sub(&mut self, a: T, b: T) -> T {
        self.assert_same_shape(a, b, "sub");
        let v = &self.values[a.0] - &self.values[b.0];
        let (pa, pb) = (a.0, b.0);
        self.push(
            v,
            vec![pa, pb],
            Some(Box::new(move |_, g| {
                vec![(pa, g.clone()), (pb, g.mapv(|x| -x))]
            })),
            None,
            false,
        )
    }

    pub fn mul(&mut self, a: T, b: T) -> T {
        self.assert_same_shape(a, b, "mul");
        let v = &self.values[a.0] * &self.values[b.0];
        let (pa, pb) = (a.0, b.0);
        self.push(
            v,
            vec![pa, pb],
            Some(Box::new(move |vals, g| {
                vec![(pa, g * &vals[pb]), (pb, g * &vals[pa])]
            })),
            None,
            false,
        )
    }

    pub fn div(&mut self, a: T, b: T) -> T {
        self.assert_same_shape(a, b, "div");
        let v = &self.values[a.0] / &self.values[b.0];
        let (pa, pb) = (a.0, b.0);
        self.push(
            v,
            vec![pa, pb],
            Some(Box::new(move |vals, g| {
                let gb = g * &vals[pa] / (&vals[pb] * &vals[pb]);
                vec![(pa, g / &vals[pb]), (pb, gb.mapv(|x| -x))]
            })),
            None,
            false,
        )
    }

    // ---- elementwise unary ----

    pub fn neg(&mut self, a: T) -> T {
        let v = self.values[a.0].mapv(|x| -x);
        self.unary(v, a, |_, g| g.mapv(|x| -x))
    }

    /// y = a * x + b with constant scalars.
    pub fn affine(&mut self, x: T, a: f64, b: f64) -> T {
        let (fa, fb) = (F::f(a), F::f(b));
        let v = self.values[x.0].mapv(|t| fa * t + fb);
        self.unary(v, x, move |_, g| g.mapv(|t| fa * t))
    }

    pub fn scale(&mut self, x: T, a: f64) -> T {
        self.affine(x, a, 0.0)
    }

    pub fn square(&mut self, a: T) -> T {
        let v = self.values[a.0].mapv(|x| x * x);
        let pa = a.0;
        self.unary(v, a, move |vals, g| {
            g * &vals[pa].mapv(|x| F::f(2.0) * x)
        })
    }

    /// sqrt with the cached output used for the backward pass; the derivative
    /// is clamped near zero to stay finite on exactly-zero inputs.
    pub fn sqrt(&mut self, a: T) -> T {
        let v = self.values[a.0].mapv(|x| x.sqrt());
        let out = v.clone();
        self.unary(v, a, move |_, g| {
            let floor = F::f(1e-30);
            let mut gx = g.clone();
            gx.zip_mut_with(&out, |gv, sv| {
                *gv = *gv / (F::f(2.0) * (*sv).max(floor));
            });
            gx
        })
    }

    pub fn exp(&mut self, a: T) -> T {
        let v = self.values[a.0].mapv(|x| x.exp());
        let out = v.clone();
        self.unary(v, a, move |_, g| g * &out)
    }

    pub fn ln(&mut self, a: T) -> T {
        let v = self.values[a.0].mapv(|x| x.ln());
        let pa = a.0;
        self.unary(v, a, move |vals, g| g / &vals[pa])
    }

    pub fn log10(&mut self, a: T) -> T {
        let ln10 = F::f(std::f64::consts::LN_10);
        let v = self.values[a.0].mapv(|x| x.ln() / ln10);
        let pa = a.0;
        self.unary(v, a, move |vals, g| g / &vals[pa].mapv(|x| x * ln10))
    }

    /// x^p for constant p; input must be positive.
    pub fn powf(&mut self, a: T, p: f64) -> T {
        let fp = F::f(p);
        let v = self.values[a.0].mapv(|x| x.powf(fp));
        let pa = a.0;
        self.unary(v, a, move |vals, g| {
            g * &vals[pa].mapv(|x| fp * x.powf(fp - F::one()))
        })
    }

    pub fn sigmoid(&mut self, a: T) -> T {
        let v = self.values[a.0].mapv(|x| F::one() / (F::one() + (-x).exp()));
        let out = v.clone();
        self.unary(v, a, move |_, g| {
            g * &out.mapv(|s| s * (F::one() - s))
        })
    }

    pub fn tanh(&mut self, a: T) -> T {
        let v = self.values[a.0].mapv(|x| x.tanh());
        let out = v.clone();
        self.unary(v, a, move |_, g| {
            g * &out.mapv(|t| F::one() - t * t)
        })
    }

    pub fn abs(&mut self, a: T) -> T {
        let v = self.values[a.0].mapv(|x| x.abs());
        let pa = a.0;
        self.unary(v, a, move |vals, g| {
            g * &vals[pa].mapv(|x| {
                if x > F::zero() {
                    F::one()
                } else if x < F::zero() {
                    -F::one()
                } else {
                    F::zero()
                }
            })
        })
    }

    pub fn leaky_relu(&mut self, a: T, slope: f64) -> T {
        let s = F::f(slope);
        let v = self.values[a.0].mapv(|x| if x >= F::zero() { x } else { s * x });
        let pa = a.0;
        self.unary(v, a, move |vals, g| {
            g * &vals[pa].mapv(|x| if x >= F::zero() { F::one() } else { s })
        })
    }

    /// max(x, floor) with a constant floor; gradient passes only where
    /// x > floor.
    pub fn clamp_min(&mut self, a: T, floor: f64) -> T {
        let fl = F::f(floor);
        let v = self.values[a.0].mapv(|x| x.max(fl));
        let pa = a.0;
        self.unary(v, a, move |vals, g| {
            g * &vals[pa].mapv(|x| if x > fl { F::one() } else { F::zero() })
        })
    }

    pub fn add_scalar(&mut self, a: T, c: f64) -> T {
        self.affine(a, 1.0, c)
    }

    // ---- reductions ----

    pub fn sum_all(&mut self, a: T) -> T {
        let s = self.values[a.0].sum();
        let pa = a.0;
        let v = ArrayD::from_elem(IxDyn(&[]), s);
        self.unary(v, a, move |vals, g| {
            let gv = *g.iter().next().unwrap();
            ArrayD::from_elem(vals[pa].raw_dim(), gv)
        })
    }

    pub fn mean_all(&mut self, a: T) -> T {
        let n = self.values[a.0].len();
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n as f64)
    }

    /// Sum over one axis.
    pub fn sum_axis(&mut self, a: T, axis: usize) -> T {
        let v = self.values[a.0].sum_axis(Axis(axis));
        let dim = self.values[a.0].raw_dim();
        self.unary(v, a, move |_, g| {
            let expanded = g.clone().insert_axis(Axis(axis));
            expanded.broadcast(dim.clone()).unwrap().to_owned()
        })
    }

    pub fn mean_axis(&mut self, a: T, axis: usize) -> T {
        let n = self.values[a.0].shape()[axis];
        let s = self.sum_axis(a, axis);
        self.scale(s, 1.0 / n as f64)
    }

    // ---- shape ----

    pub fn reshape(&mut self, a: T, shape: &[usize]) -> T {
        let v = self.values[a.0]
            .clone()
            .into_shape_with_order(IxDyn(shape))
            .expect("reshape: incompatible size");
        let pa = a.0;
        self.unary(v, a, move |vals, g| {
            g.clone()
                .into_shape_with_order(vals[pa].raw_dim())
                .expect("reshape backward")
        })
    }

    pub fn permute(&mut self, a: T, axes: &[usize]) -> T {
        let v = self.values[a.0]
            .clone()
            .permuted_axes(IxDyn(axes))
            .as_standard_layout()
            .to_owned();
        // inverse permutation for the backward pass
        let mut inv = vec![0usize; axes.len()];
        for (i, ax) in axes.iter().enumerate() {
            inv[*ax] = i;
        }
        self.unary(v, a, move |_, g| {
            g.clone()
                .permuted_axes(IxDyn(&inv))
                .as_standard_layout()
                .to_owned()
        })
    }

    /// Contiguous range along one axis.
    pub fn slice_axis(&mut self, a: T, axis: usize, start: usize, end: usize) -> T {
        let v = self.values[a.0]
            .slice_axis(Axis(axis), Slice::from(start..end))
            .to_owned();
        let pa = a.0;
        self.unary(v, a, move |vals, g| {
            let mut out: ArrayD<F> = ArrayD::zeros(vals[pa].raw_dim());
            out.slice_axis_mut(Axis(axis), Slice::from(start..end))
                .assign(g);
            out
        })
    }

    /// Concatenate along an axis.
    pub fn concat(&mut self, parts: &[T], axis: usize) -> T {
        assert!(!parts.is_empty());
        let views: Vec<_> = parts.iter().map(|t| self.values[t.0].view()).collect();
        let v = ndarray::concatenate(Axis(axis), &views).expect("concat shapes");
        let ids: Vec<usize> = parts.iter().map(|t| t.0).collect();
        let sizes: Vec<usize> = parts
            .iter()
            .map(|t| self.values[t.0].shape()[axis])
            .collect();
        self.push(
            v,
            ids.clone(),
            Some(Box::new(move |_, g| {
                let mut out = Vec::with_capacity(ids.len());
                let mut off = 0;
                for (pid, sz) in ids.iter().zip(&sizes) {
                    out.push((
                        *pid,
                        g.slice_axis(Axis(axis), Slice::from(off..off + sz)).to_owned(),
                    ));
                    off += sz;
                }
                out
            })),
            None,
            false,
        )
    }

    /// Zero-pad at the end of one axis.
    pub fn pad_end(&mut self, a: T, axis: usize, count: usize) -> T {
        if count == 0 {
            return a;
        }
        let mut shape = self.values[a.0].shape().to_vec();
        let orig = shape[axis];
        shape[axis] += count;
        let mut v: ArrayD<F> = ArrayD::zeros(IxDyn(&shape));
        v.slice_axis_mut(Axis(axis), Slice::from(0..orig))
            .assign(&self.values[a.0]);
        self.unary(v, a, move |_, g| {
            g.slice_axis(Axis(axis), Slice::from(0..orig)).to_owned()
        })
    }

    pub fn reverse_axis(&mut self, a: T, axis: usize) -> T {
        let v = self.values[a.0]
            .slice_axis(Axis(axis), Slice::new(0, None, -1))
            .to_owned();
        self.unary(v, a, move |_, g| {
            g.slice_axis(Axis(axis), Slice::new(0, None, -1)).to_owned()
        })
    }

    // ---- linear algebra ----

    /// 2-D matrix product.
    pub fn matmul(&mut self, a: T, b: T) -> T {
        let av = self.values[a.0]
            .view()
            .into_dimensionality::<Ix2>()
            .expect("matmul lhs must be 2-D");
        let bv = self.values[b.0]
            .view()
            .into_dimensionality::<Ix2>()
            .expect("matmul rhs must be 2-D");
        assert_eq!(av.ncols(), bv.nrows(), "matmul inner dims");
        let v = av.dot(&bv).into_dyn();
        let (pa, pb) = (a.0, b.0);
        self.push(
            v,
            vec![pa, pb],
            Some(Box::new(move |vals, g| {
                let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
                let av = vals[pa].view().into_dimensionality::<Ix2>().unwrap();
                let bv = vals[pb].view().into_dimensionality::<Ix2>().unwrap();
                vec![
                    (pa, g2.dot(&bv.t()).into_dyn()),
                    (pb, av.t().dot(&g2).into_dyn()),
                ]
            })),
            None,
            false,
        )
    }

    /// Adds a bias vector along axis 0 of a 2-D tensor: out[c, j] = x[c, j] + b[c].
    pub fn add_bias_rows(&mut self, x: T, b: T) -> T {
        let xv = self.values[x.0].view().into_dimensionality::<Ix2>().unwrap();
        let bv = &self.values[b.0];
        assert_eq!(bv.len(), xv.nrows(), "bias length");
        let mut v = xv.to_owned();
        for (mut row, bc) in v.rows_mut().into_iter().zip(bv.iter()) {
            row.mapv_inplace(|t| t + *bc);
        }
        let (px, pb) = (x.0, b.0);
        self.push(
            v.into_dyn(),
            vec![px, pb],
            Some(Box::new(move |_, g| {
                let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
                let gb = g2.sum_axis(Axis(1)).into_dyn();
                vec![(px, g.clone()), (pb, gb)]
            })),
            None,
            false,
        )
    }

    /// Adds a bias vector along the last axis: out[..., c] = x[..., c] + b[c].
    pub fn add_bias_last(&mut self, x: T, b: T) -> T {
        let last = *self.values[x.0].shape().last().unwrap();
        assert_eq!(self.values[b.0].len(), last, "bias length");
        let bv = self.values[b.0].clone();
        let mut v = self.values[x.0].clone();
        let b1 = bv.view().into_shape_with_order(last).unwrap();
        let last_axis = Axis(v.ndim() - 1);
        for mut lane in v.lanes_mut(last_axis) {
            lane.zip_mut_with(&b1, |t, bc| *t = *t + *bc);
        }
        let (px, pb) = (x.0, b.0);
        self.push(
            v,
            vec![px, pb],
            Some(Box::new(move |_, g| {
                let n_last = *g.shape().last().unwrap();
                let flat = g
                    .view()
                    .into_shape_with_order((g.len() / n_last, n_last))
                    .unwrap();
                let gb = flat.sum_axis(Axis(0)).into_dyn();
                vec![(px, g.clone()), (pb, gb)]
            })),
            None,
            false,
        )
    }

    // ---- backward ----

    /// Reverse pass from a scalar root. Returns per-node cotangents.
    pub fn backward(&self, root: T) -> Gradients<F> {
        assert_eq!(
            self.values[root.0].len(),
            1,
            "backward root must be scalar"
        );
        let mut by_node: Vec<Option<ArrayD<F>>> = vec![None; self.values.len()];
        by_node[root.0] = Some(ArrayD::from_elem(self.values[root.0].raw_dim(), F::one()));
        for id in (0..=root.0).rev() {
            if by_node[id].is_none() || !self.metas[id].needs_grad {
                continue;
            }
            if let Some(back) = &self.metas[id].back {
                let g = by_node[id].take().unwrap();
                for (pid, contrib) in back(&self.values, &g) {
                    debug_assert!(pid < id, "backward edge must point backwards");
                    if !self.metas[pid].needs_grad {
                        continue;
                    }
                    let contrib = standardize(contrib);
                    match &mut by_node[pid] {
                        Some(acc) => *acc += &contrib,
                        slot @ None => *slot = Some(contrib),
                    }
                }
                by_node[id] = Some(g);
            }
        }
        Gradients { by_node }
    }

    /// Convenience: backward + scatter variable grads into the store.
    pub fn backward_into(&self, root: T, store: &mut VarStore<F>) -> Gradients<F> {
        let grads = self.backward(root);
        grads.apply_to_store(self, store);
        grads
    }
}
