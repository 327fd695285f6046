//! Named trainable variables and their initializers.

use ndarray::{ArrayD, IxDyn};
use rand_chacha::ChaCha8Rng;

use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarId(pub usize);

pub struct Variable<F: Scalar> {
    pub name: String,
    pub value: ArrayD<F>,
    pub grad: ArrayD<F>,
    pub trainable: bool,
}

static STORE_COUNTER: std::sync::atomic::AtomicU64 = std::sync::atomic::AtomicU64::new(1);

/// Ordered collection of named variables. Iteration order is creation order,
/// which keeps initialization and optimizer traversal deterministic. Each
/// store carries a unique id so a tape holding variables from several stores
/// scatters gradients only into the right one.
pub struct VarStore<F: Scalar> {
    vars: Vec<Variable<F>>,
    uid: u64,
}

impl<F: Scalar> Default for VarStore<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> VarStore<F> {
    pub fn new() -> Self {
        Self {
            vars: Vec::new(),
            uid: STORE_COUNTER.fetch_add(1, std::sync::atomic::Ordering::Relaxed),
        }
    }

    pub fn uid(&self) -> u64 {
        self.uid
    }

    pub fn add(&mut self, name: impl Into<String>, value: ArrayD<F>) -> VarId {
        let name = name.into();
        assert!(
            self.find(&name).is_none(),
            "duplicate variable name: {name}"
        );
        let grad = ArrayD::zeros(value.raw_dim());
        self.vars.push(Variable {
            name,
            value,
            grad,
            trainable: true,
        });
        VarId(self.vars.len() - 1)
    }

    pub fn find(&self, name: &str) -> Option<VarId> {
        self.vars.iter().position(|v| v.name == name).map(VarId)
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    /// Total element count over all variables.
    pub fn num_params(&self) -> usize {
        self.vars.iter().map(|v| v.value.len()).sum()
    }

    pub fn value(&self, id: VarId) -> &ArrayD<F> {
        &self.vars[id.0].value
    }

    pub fn value_mut(&mut self, id: VarId) -> &mut ArrayD<F> {
        &mut self.vars[id.0].value
    }

    pub fn grad(&self, id: VarId) -> &ArrayD<F> {
        &self.vars[id.0].grad
    }

    pub fn name(&self, id: VarId) -> &str {
        &self.vars[id.0].name
    }

    pub fn ids(&self) -> impl Iterator<Item = VarId> {
        (0..self.vars.len()).map(VarId)
    }

    pub fn accumulate_grad(&mut self, id: VarId, g: &ArrayD<F>) {
        self.vars[id.0].grad += g;
    }

    pub fn zero_grads(&mut self) {
        for v in &mut self.vars {
            v.grad.fill(F::zero());
        }
    }

    /// Replaces a variable's value in place (shape must match).
    pub fn set_value(&mut self, id: VarId, value: ArrayD<F>) {
        assert_eq!(self.vars[id.0].value.shape(), value.shape());
        self.vars[id.0].value = value;
    }

    /// Total element count over variables whose name starts with `prefix`.
    pub fn num_params_with_prefix(&self, prefix: &str) -> usize {
        self.vars
            .iter()
            .filter(|v| v.name.starts_with(prefix))
            .map(|v| v.value.len())
            .sum()
    }

    /// Ids of variables whose name starts with `prefix`, in creation order.
    pub fn ids_with_prefix(&self, prefix: &str) -> Vec<VarId> {
        self.vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.name.starts_with(prefix))
            .map(|(i, _)| VarId(i))
            .collect()
    }

    /// Snapshot of all (name, value) pairs, in creation order.
    pub fn export_tensors(&self) -> Vec<(String, ArrayD<F>)> {
        self.vars
            .iter()
            .map(|v| (v.name.clone(), v.value.clone()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    Ones,
    Const(f64),
    /// U(-bound, bound)
    Uniform(f64),
    /// U(±1/sqrt(fan_in)), the torch default for linear/conv layers.
    FanIn(usize),
}

/// Scoped builder that names variables `prefix.leaf` and draws initial
/// values from a seeded stream.
pub struct VarBuilder<'a, F: Scalar> {
    store: &'a mut VarStore<F>,
    rng: &'a mut ChaCha8Rng,
    prefix: String,
}

impl<'a, F: Scalar> VarBuilder<'a, F> {
    pub fn new(store: &'a mut VarStore<F>, rng: &'a mut ChaCha8Rng) -> Self {
        Self {
            store,
            rng,
            prefix: String::new(),
        }
    }

    pub fn scoped(&mut self, name: &str) -> VarBuilder<'_, F> {
        let prefix = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        };
        VarBuilder {
            store: self.store,
            rng: self.rng,
            prefix,
        }
    }

    pub fn get(&mut self, shape: &[usize], leaf: &str, init: Init) -> VarId {
        let name = if self.prefix.is_empty() {
            leaf.to_string()
        } else {
            format!("{}.{leaf}", self.prefix)
        };
        let value = match init {
            Init::Zeros => ArrayD::zeros(IxDyn(shape)),
            Init::Ones => ArrayD::from_elem(IxDyn(shape), F::one()),
            Init::Const(c) => ArrayD::from_elem(IxDyn(shape), F::f(c)),
            Init::Uniform(b) => {
                ArrayD::from_shape_simple_fn(IxDyn(shape), || F::sample_uniform(self.rng, -b, b))
            }
            Init::FanIn(fan) => {
                let b = 1.0 / (fan.max(1) as f64).sqrt();
                ArrayD::from_shape_simple_fn(IxDyn(shape), || F::sample_uniform(self.rng, -b, b))
            }
        };
        self.store.add(name, value)
    }
}
