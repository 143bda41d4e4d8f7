use candle_core::backprop::GradStore;
use candle_core::{Tensor, Var};

use crate::error::{invalid, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// Adam with bias correction over a fixed list of named parameters. Moment
/// estimates are exposed so they can be checkpointed.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    step: u64,
    slots: Vec<Slot>,
}

#[derive(Debug, Clone)]
struct Slot {
    name: String,
    var: Var,
    m: Tensor,
    v: Tensor,
}

impl Adam {
    pub fn new<'a>(params: impl IntoIterator<Item = (String, &'a Var)>, lr: f64) -> Result<Self> {
        let slots = params
            .into_iter()
            .map(|(name, var)| {
                Ok(Slot { name, var: var.clone(), m: var.zeros_like()?, v: var.zeros_like()? })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { lr, step: 0, slots })
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update to every parameter that has a gradient in `grads`.
    pub fn step(&mut self, grads: &GradStore) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        for slot in &mut self.slots {
            let Some(g) = grads.get(slot.var.as_tensor()) else {
                continue;
            };
            slot.m = (slot.m.affine(BETA1, 0.0)? + g.affine(1.0 - BETA1, 0.0)?)?;
            slot.v = (slot.v.affine(BETA2, 0.0)? + g.sqr()?.affine(1.0 - BETA2, 0.0)?)?;
            let m_hat = slot.m.affine(1.0 / c1, 0.0)?;
            let v_hat = slot.v.affine(1.0 / c2, 0.0)?;
            let update = (m_hat / v_hat.sqrt()?.affine(1.0, EPS)?)?.affine(self.lr, 0.0)?;
            slot.var.set(&(slot.var.as_tensor() - update)?)?;
        }
        Ok(())
    }

    /// `(name, first moment, second moment)` per parameter.
    pub fn moments(&self) -> impl Iterator<Item = (&str, &Tensor, &Tensor)> {
        self.slots.iter().map(|s| (s.name.as_str(), &s.m, &s.v))
    }

    pub fn restore<'a>(&mut self, step: u64, mut named: impl FnMut(&str) -> Option<(&'a Tensor, &'a Tensor)>) -> Result<()> {
        for slot in &mut self.slots {
            let (m, v) = named(&slot.name).ok_or_else(|| invalid(format!("missing optimizer state for {}", slot.name)))?;
            if m.dims() != slot.var.dims() || v.dims() != slot.var.dims() {
                return Err(invalid(format!("optimizer state for {} has the wrong shape", slot.name)));
            }
            slot.m = m.clone();
            slot.v = v.clone();
        }
        self.step = step;
        Ok(())
    }
}
