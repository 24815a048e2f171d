//! Training configuration and the Adam optimizer with per-epoch
//! learning-rate decay `lr / (1 + po * epoch)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::params::{Grads, ParamSet};
use crate::tensor::Scalar;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Decay coefficient `po`.
    pub decay_po: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout_rate: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// Document classifier: lr 0.0003, batch 8, dropout 0.2, 30 epochs.
    pub fn classifier_defaults() -> Self {
        Self {
            learning_rate: 0.0003,
            decay_po: 0.005,
            batch_size: 8,
            epochs: 30,
            dropout_rate: 0.2,
            seed: 42,
        }
    }

    /// Entity tagger: lr 0.001, batch 8, dropout 0.5, 35 epochs.
    pub fn ner_defaults() -> Self {
        Self {
            learning_rate: 0.001,
            decay_po: 0.005,
            batch_size: 8,
            epochs: 35,
            dropout_rate: 0.5,
            seed: 42,
        }
    }

    /// Relation classifier: lr 0.0001, batch 8, dropout 0.5, 50 epochs.
    pub fn re_defaults() -> Self {
        Self {
            learning_rate: 0.0001,
            decay_po: 0.005,
            batch_size: 8,
            epochs: 50,
            dropout_rate: 0.5,
            seed: 42,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(NnError::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.decay_po.is_finite() && self.decay_po >= 0.0) {
            return Err(NnError::Config(format!(
                "decay_po must be non-negative, got {}",
                self.decay_po
            )));
        }
        if self.batch_size == 0 {
            return Err(NnError::Config("batch_size must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(NnError::Config("epochs must be positive".into()));
        }
        check_dropout_rate(self.dropout_rate)
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn effective_lr(&self, epoch: usize) -> f64 {
        self.learning_rate / (1.0 + self.decay_po * epoch as f64)
    }
}

pub(crate) fn check_dropout_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(NnError::Config(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
struct Moments<T> {
    m: Vec<T>,
    v: Vec<T>,
}

/// Adam state: first/second moments per parameter and the step count
/// used for bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T = f32> {
    state: BTreeMap<String, Moments<T>>,
    step: u64,
}

impl<T: Scalar> Default for Adam<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Adam<T> {
    pub fn new() -> Self {
        Self {
            state: BTreeMap::new(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update with the decayed learning rate for `epoch`.
    ///
    /// Every gradient is checked before any parameter is touched, so a
    /// non-finite gradient leaves `params` unchanged.
    pub fn step(
        &mut self,
        params: &mut ParamSet<T>,
        grads: &Grads<T>,
        config: &TrainConfig,
        epoch: usize,
    ) -> Result<()> {
        for (name, g) in grads {
            let Some(p) = params.get(name) else {
                return Err(NnError::Config(format!("gradient for unknown parameter {name}")));
            };
            if p.len() != g.len() {
                return Err(NnError::Shape {
                    op: "adam",
                    left: p.shape().to_vec(),
                    right: vec![g.len()],
                });
            }
            if let Some(state) = self.state.get(name) {
                if state.m.len() != g.len() {
                    return Err(NnError::Shape {
                        op: "adam state",
                        left: vec![state.m.len()],
                        right: vec![g.len()],
                    });
                }
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFinite(format!("gradient of {name}")));
            }
        }

        self.step += 1;
        let lr = T::from_f64_lossy(config.effective_lr(epoch));
        let b1 = T::from_f64_lossy(ADAM_BETA1);
        let b2 = T::from_f64_lossy(ADAM_BETA2);
        let eps = T::from_f64_lossy(ADAM_EPSILON);
        let t = self.step as i32;
        let c1 = T::one() - b1.powi(t);
        let c2 = T::one() - b2.powi(t);

        for (name, g) in grads {
            let state = self.state.entry(name.clone()).or_insert_with(|| Moments {
                m: vec![T::zero(); g.len()],
                v: vec![T::zero(); g.len()],
            });
            let p = params.get_mut(name).expect("checked above").data_mut();
            for i in 0..g.len() {
                state.m[i] = b1 * state.m[i] + (T::one() - b1) * g[i];
                state.v[i] = b2 * state.v[i] + (T::one() - b2) * g[i] * g[i];
                let m_hat = state.m[i] / c1;
                let v_hat = state.v[i] / c2;
                p[i] = p[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
