use serde::{Deserialize, Serialize};

use super::{Grads, LrGroup, NumericsError, ParamStore};

/// RMSProp with per-group learning rates.
///
/// `s ← α·s + (1−α)·g²`, `p ← p − lr·g / (√s + ε)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmsProp {
    pub alpha: f64,
    pub eps: f64,
    pub lr_policy: f64,
    pub lr_flow: f64,
    /// Optional global-norm clip applied before the update.
    pub clip_norm: Option<f64>,
}

impl Default for RmsProp {
    fn default() -> Self {
        Self {
            alpha: 0.99,
            eps: 1e-8,
            lr_policy: 1e-3,
            lr_flow: 1e-2,
            clip_norm: None,
        }
    }
}

impl RmsProp {
    pub fn lr(&self, group: LrGroup) -> f64 {
        match group {
            LrGroup::Policy => self.lr_policy,
            LrGroup::Flow => self.lr_flow,
        }
    }

    /// Applies one update to every parameter in `store`. Nothing is modified when
    /// any gradient is non-finite.
    pub fn step(&self, store: &mut ParamStore, grads: &Grads) -> Result<(), NumericsError> {
        if grads.len() != store.len() {
            return Err(NumericsError::Shape {
                op: "rmsprop_step",
                expected: format!("{} gradient tensors", store.len()),
                got: format!("{}", grads.len()),
            });
        }
        for lr in [self.lr_policy, self.lr_flow] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(NumericsError::InvalidLearningRate(lr));
            }
        }
        for (id, g) in grads.iter() {
            if !g.is_finite() {
                return Err(NumericsError::NonFinite {
                    param: store.param(id).name.clone(),
                });
            }
        }
        let scale = match self.clip_norm {
            Some(max) => {
                let norm = grads.global_norm();
                if norm > max {
                    max / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        for (param, (_, g)) in store.iter_mut().zip(grads.iter()) {
            let lr = self.lr(param.group);
            let accum = param.accum.data_mut();
            let value = param.value.data_mut();
            for ((p, s), &gi) in value.iter_mut().zip(accum.iter_mut()).zip(g.data()) {
                let gi = gi * scale;
                *s = self.alpha * *s + (1.0 - self.alpha) * gi * gi;
                *p -= lr * gi / (s.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
