//! AdamW with decoupled weight decay and global-norm gradient clipping.

use ndarray::ArrayD;

use crate::var::{VarId, VarStore};
use crate::Scalar;

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub clip_norm: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
            weight_decay: 1e-2,
            clip_norm: 5.0,
        }
    }
}

pub struct AdamW<F: Scalar> {
    cfg: AdamWConfig,
    /// Variables this optimizer owns, in a fixed order.
    vars: Vec<VarId>,
    m: Vec<ArrayD<F>>,
    v: Vec<ArrayD<F>>,
    step: u64,
}

impl<F: Scalar> AdamW<F> {
    pub fn new(store: &VarStore<F>, vars: Vec<VarId>, cfg: AdamWConfig) -> Self {
        let m = vars
            .iter()
            .map(|id| ArrayD::zeros(store.value(*id).raw_dim()))
            .collect();
        let v = vars
            .iter()
            .map(|id| ArrayD::zeros(store.value(*id).raw_dim()))
            .collect();
        Self {
            cfg,
            vars,
            m,
            v,
            step: 0,
        }
    }

    pub fn vars(&self) -> &[VarId] {
        &self.vars
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update using the gradients currently stored for the owned
    /// variables. Gradients of other variables are ignored.
    pub fn step(&mut self, store: &mut VarStore<F>, lr: f64) {
        self.step += 1;

        // global-norm clip over the owned set
        let mut scale = 1.0;
        if self.cfg.clip_norm > 0.0 {
            let mut sq = 0.0f64;
            for id in &self.vars {
                sq += store
                    .grad(*id)
                    .iter()
                    .map(|g| g.to64() * g.to64())
                    .sum::<f64>();
            }
            let norm = sq.sqrt();
            if norm > self.cfg.clip_norm {
                scale = self.cfg.clip_norm / norm;
            }
        }

        let b1 = F::f(self.cfg.beta1);
        let b2 = F::f(self.cfg.beta2);
        let eps = F::f(self.cfg.eps);
        let bc1 = 1.0 - self.cfg.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.cfg.beta2.powi(self.step as i32);
        let lr_f = F::f(lr);
        let inv_bc1 = F::f(1.0 / bc1);
        let inv_bc2 = F::f(1.0 / bc2);
        let wd = F::f(lr * self.cfg.weight_decay);
        let s = F::f(scale);

        for (i, id) in self.vars.iter().enumerate() {
            let g = store.grad(*id).mapv(|x| x * s);
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            m.zip_mut_with(&g, |mm, gg| *mm = b1 * *mm + (F::one() - b1) * *gg);
            v.zip_mut_with(&g, |vv, gg| *vv = b2 * *vv + (F::one() - b2) * *gg * *gg);
            let mi = m.view();
            let vi = v.view();
            let value = store.value_mut(*id);
            ndarray::Zip::from(value)
                .and(&mi)
                .and(&vi)
                .for_each(|p, mm, vv| {
                    let mhat = *mm * inv_bc1;
                    let vhat = *vv * inv_bc2;
                    *p = *p - lr_f * mhat / (vhat.sqrt() + eps) - wd * *p;
                });
        }
    }

    /// Optimizer state as named tensors (for checkpointing).
    pub fn export_state(&self, store: &VarStore<F>) -> Vec<(String, ArrayD<F>)> {
        let mut out = Vec::new();
        for (i, id) in self.vars.iter().enumerate() {
            out.push((format!("opt.m.{}", store.name(*id)), self.m[i].clone()));
            out.push((format!("opt.v.{}", store.name(*id)), self.v[i].clone()));
        }
        out
    }

    pub fn import_state(
        &mut self,
        store: &VarStore<F>,
        tensors: &std::collections::HashMap<String, ArrayD<F>>,
        step: u64,
    ) -> crate::Result<()> {
        for (i, id) in self.vars.iter().enumerate() {
            let name = store.name(*id);
            let m = tensors.get(&format!("opt.m.{name}")).ok_or_else(|| {
                crate::GradError::Checkpoint(format!("missing optimizer moment for {name}"))
            })?;
            let v = tensors.get(&format!("opt.v.{name}")).ok_or_else(|| {
                crate::GradError::Checkpoint(format!("missing optimizer variance for {name}"))
            })?;
            self.m[i] = m.clone();
            self.v[i] = v.clone();
        }
        self.step = step;
        Ok(())
    }
}
