//! AdamW steps with global gradient-norm clipping and non-finite abort.

use candle_core::{Tensor, Var};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub eps: f64,
    /// Global L2 gradient-norm limit; `None` disables clipping.
    pub grad_clip: Option<f64>,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.99,
            weight_decay: 0.01,
            eps: 1e-8,
            grad_clip: Some(1.0),
        }
    }
}

pub struct Trainer {
    opt: AdamW,
    vars: Vec<Var>,
    clip: Option<f64>,
    step: usize,
}

impl Trainer {
    pub fn new(vars: Vec<Var>, cfg: &OptimConfig) -> Result<Self> {
        let params = ParamsAdamW {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            weight_decay: cfg.weight_decay,
        };
        Ok(Self {
            opt: AdamW::new(vars.clone(), params)?,
            vars,
            clip: cfg.grad_clip,
            step: 0,
        })
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.opt.set_learning_rate(lr);
    }

    /// Backpropagates `loss`, applies one update and returns the loss value.
    /// A non-finite loss aborts before any parameter changes.
    pub fn step(&mut self, loss: &Tensor) -> Result<f64> {
        let value = loss.to_scalar::<f64>()?;
        if !value.is_finite() {
            return Err(Error::NonFinite { step: self.step });
        }
        let mut grads = loss.backward()?;
        if let Some(limit) = self.clip {
            let mut sq = 0.0;
            for v in &self.vars {
                if let Some(g) = grads.get(v.as_tensor()) {
                    sq += g.sqr()?.sum_all()?.to_scalar::<f64>()?;
                }
            }
            if !sq.is_finite() {
                return Err(Error::NonFinite { step: self.step });
            }
            let norm = sq.sqrt();
            if norm > limit {
                let scale = limit / norm;
                for v in &self.vars {
                    if let Some(g) = grads.remove(v.as_tensor()) {
                        grads.insert(v.as_tensor(), (g * scale)?);
                    }
                }
            }
        }
        self.opt.step(&grads)?;
        self.step += 1;
        Ok(value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::tensor_from;

    #[test]
    fn quadratic_descends_and_nan_aborts() {
        let w = Var::from_tensor(&tensor_from(vec![2.0, -3.0], &[2]).unwrap()).unwrap();
        let cfg = OptimConfig {
            learning_rate: 0.1,
            weight_decay: 0.0,
            ..OptimConfig::default()
        };
        let mut t = Trainer::new(vec![w.clone()], &cfg).unwrap();
        let first = t.step(&w.as_tensor().sqr().unwrap().sum_all().unwrap()).unwrap();
        for _ in 0..50 {
            t.step(&w.as_tensor().sqr().unwrap().sum_all().unwrap()).unwrap();
        }
        let last = w.as_tensor().sqr().unwrap().sum_all().unwrap().to_scalar::<f64>().unwrap();
        assert!(last < first);
        let before = w.as_tensor().to_vec1::<f64>().unwrap();
        let nan = (w.as_tensor().sum_all().unwrap() * f64::NAN).unwrap();
        match t.step(&nan) {
            Err(Error::NonFinite { step }) => assert_eq!(step, 51),
            other => panic!("expected abort, got {other:?}"),
        }
        assert_eq!(w.as_tensor().to_vec1::<f64>().unwrap(), before);
    }
}
