use std::cell::RefCell;

use candle_core::{DType, Device, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl Precision {
    pub fn dtype(self) -> DType {
        match self {
            Precision::F32 => DType::F32,
            Precision::F64 => DType::F64,
        }
    }
}

/// Named trainable tensors in creation order.
pub struct ParamStore {
    vars: Vec<(String, Var)>,
    dtype: DType,
    device: Device,
    rng: ChaCha8Rng,
}

impl ParamStore {
    pub fn new(seed: u64, precision: Precision) -> Self {
        Self {
            vars: Vec::new(),
            dtype: precision.dtype(),
            device: Device::Cpu,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    fn add(&mut self, name: &str, data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        if self.vars.iter().any(|(n, _)| n == name) {
            return Err(Error::Precondition(format!("duplicate parameter `{name}`")));
        }
        let t = Tensor::from_vec(data, shape, &self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        let out = var.as_tensor().clone();
        self.vars.push((name.to_string(), var));
        Ok(out)
    }

    pub fn uniform(&mut self, name: &str, shape: &[usize], bound: f64) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.rng.random_range(-bound..=bound)).collect();
        self.add(name, data, shape)
    }

    pub fn normal(&mut self, name: &str, shape: &[usize], std: f64) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let dist = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
        let data = (0..n).map(|_| dist.sample(&mut self.rng)).collect();
        self.add(name, data, shape)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        self.add(name, vec![value; n], shape)
    }

    pub fn vars(&self) -> Vec<Var> {
        self.vars.iter().map(|(_, v)| v.clone()).collect()
    }

    pub fn named(&self) -> &[(String, Var)] {
        &self.vars
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn num_parameters(&self) -> usize {
        self.vars.iter().map(|(_, v)| v.elem_count()).sum()
    }

    /// Deep copy of every parameter, in creation order.
    pub fn snapshot(&self) -> Result<Vec<Tensor>> {
        Ok(self
            .vars
            .iter()
            .map(|(_, v)| v.as_tensor().copy())
            .collect::<candle_core::Result<_>>()?)
    }

    pub fn restore(&self, snapshot: &[Tensor]) -> Result<()> {
        if snapshot.len() != self.vars.len() {
            return Err(Error::Precondition("snapshot does not match parameter list".into()));
        }
        for ((_, v), t) in self.vars.iter().zip(snapshot) {
            v.set(t)?;
        }
        Ok(())
    }
}

/// Training-time state threaded through forward passes: the dropout RNG.
/// Passing `None` instead of a context means evaluation mode.
pub struct TrainCtx {
    rng: RefCell<ChaCha8Rng>,
}

impl TrainCtx {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: RefCell::new(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    /// Inverted-dropout keep mask scaled by `1 / (1 - p)`.
    pub(crate) fn dropout_mask(&self, dims: &[usize], p: f64, dtype: DType, device: &Device) -> Result<Tensor> {
        let n: usize = dims.iter().product();
        let scale = 1.0 / (1.0 - p);
        let mut rng = self.rng.borrow_mut();
        let data: Vec<f64> = (0..n)
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { scale })
            .collect();
        Ok(Tensor::from_vec(data, dims, device)?.to_dtype(dtype)?)
    }
}
