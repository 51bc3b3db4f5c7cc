//! Named trainable parameters with seeded initialization.

use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Error, Result};
use crate::layers::{LayerNorm, Linear};

/// All models compute in double precision on the CPU.
pub const DTYPE: DType = DType::F64;

pub fn device() -> Device {
    Device::Cpu
}

pub fn tensor_from(values: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
    Ok(Tensor::from_vec(values, shape, &device())?)
}

/// Parameters keyed by dotted path; iteration order is lexicographic.
#[derive(Debug, Default, Clone)]
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
}

#[derive(Debug, Clone, Copy)]
pub enum Dist {
    Zeros,
    Ones,
    Uniform(f64),
    Normal(f64),
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn init<'a>(&'a mut self, rng: &'a mut ChaCha8Rng) -> Init<'a> {
        Init {
            store: self,
            rng,
            prefix: String::new(),
        }
    }

    pub fn vars(&self) -> Vec<Var> {
        self.vars.values().cloned().collect()
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.keys().map(String::as_str)
    }

    pub fn num_params(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    /// `(name, shape, values)` in storage order.
    pub fn export(&self) -> Result<Vec<(String, Vec<usize>, Vec<f64>)>> {
        self.vars
            .iter()
            .map(|(k, v)| {
                let t = v.as_tensor();
                let values = t.flatten_all()?.to_vec1::<f64>()?;
                Ok((k.clone(), t.dims().to_vec(), values))
            })
            .collect()
    }

    /// Overwrites every parameter; names and shapes must match exactly.
    pub fn import(&self, entries: &[(String, Vec<usize>, Vec<f64>)]) -> Result<()> {
        if entries.len() != self.vars.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                self.vars.len(),
                entries.len()
            )));
        }
        for (name, shape, values) in entries {
            let var = self
                .vars
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown parameter {name}")))?;
            if var.dims() != shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name}: shape {shape:?}, model expects {:?}",
                    var.dims()
                )));
            }
            var.set(&tensor_from(values.clone(), shape)?)?;
        }
        Ok(())
    }
}

/// Creates parameters under a name prefix, drawing from a seeded RNG.
pub struct Init<'a> {
    store: &'a mut ParamStore,
    rng: &'a mut ChaCha8Rng,
    prefix: String,
}

impl Init<'_> {
    pub fn sub(&mut self, name: impl AsRef<str>) -> Init<'_> {
        let prefix = self.path(name.as_ref());
        Init {
            store: self.store,
            rng: self.rng,
            prefix,
        }
    }

    fn path(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        }
    }

    pub fn tensor(&mut self, name: &str, shape: &[usize], dist: Dist) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let values: Vec<f64> = match dist {
            Dist::Zeros => vec![0.0; n],
            Dist::Ones => vec![1.0; n],
            Dist::Uniform(b) => (0..n).map(|_| self.rng.random_range(-b..=b)).collect(),
            Dist::Normal(std) => {
                let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
                (0..n).map(|_| normal.sample(self.rng)).collect()
            }
        };
        self.tensor_values(name, shape, values)
    }

    pub fn tensor_values(&mut self, name: &str, shape: &[usize], values: Vec<f64>) -> Result<Tensor> {
        let path = self.path(name);
        if self.store.vars.contains_key(&path) {
            return invalid(format!("parameter {path} declared twice"));
        }
        let var = Var::from_tensor(&tensor_from(values, shape)?)?;
        let t = var.as_tensor().clone();
        self.store.vars.insert(path, var);
        Ok(t)
    }

    /// Weight `out × in` and bias, uniform in `±1/sqrt(in)`.
    pub fn linear(&mut self, name: &str, input: usize, output: usize) -> Result<Linear> {
        let bound = 1.0 / (input as f64).sqrt();
        let mut s = self.sub(name);
        let w = s.tensor("weight", &[output, input], Dist::Uniform(bound))?;
        let b = s.tensor("bias", &[output], Dist::Uniform(bound))?;
        Ok(Linear::new(w, Some(b)))
    }

    pub fn layer_norm(&mut self, name: &str, dim: usize) -> Result<LayerNorm> {
        let mut s = self.sub(name);
        let g = s.tensor("gain", &[dim], Dist::Ones)?;
        let b = s.tensor("bias", &[dim], Dist::Zeros)?;
        Ok(LayerNorm::new(g, b))
    }
}
