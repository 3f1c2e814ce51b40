//! Named parameter tensors and their per-forward tracked views.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::Var;
use crate::diffconv::Conv;
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Uniform in `±sqrt(6 / fan_in)`.
    Uniform { fan_in: usize },
    Zeros,
    Ones,
    /// Non-trainable buffer (e.g. running statistics) with a constant fill.
    Buffer(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub path: String,
    pub shape: Shape,
    pub init: Init,
}

impl ParamSpec {
    pub fn new(path: impl Into<String>, shape: Shape, init: Init) -> Self {
        Self {
            path: path.into(),
            shape,
            init,
        }
    }

    /// Weight and optional zero bias of a `c_out×c_in×k×k` convolution under `prefix`.
    pub fn conv(prefix: &str, c_in: usize, c_out: usize, k: usize, bias: bool) -> Vec<Self> {
        let mut v = vec![Self::new(
            format!("{prefix}.weight"),
            Shape::new(c_out, c_in, k, k),
            Init::Uniform { fan_in: c_in * k * k },
        )];
        if bias {
            v.push(Self::new(format!("{prefix}.bias"), Shape::new(1, c_out, 1, 1), Init::Zeros));
        }
        v
    }

    /// Affine parameters and running statistics of a batch norm over `c` channels.
    pub fn batch_norm(prefix: &str, c: usize) -> Vec<Self> {
        let s = Shape::new(1, c, 1, 1);
        vec![
            Self::new(format!("{prefix}.gamma"), s, Init::Ones),
            Self::new(format!("{prefix}.beta"), s, Init::Zeros),
            Self::new(format!("{prefix}.running_mean"), s, Init::Buffer(0.0)),
            Self::new(format!("{prefix}.running_var"), s, Init::Buffer(1.0)),
        ]
    }

    pub fn trainable(&self) -> bool {
        !matches!(self.init, Init::Buffer(_))
    }
}

/// Parameter and buffer tensors keyed by path. Iteration order is the sorted
/// path order, which fixes checkpoint layout and optimizer traversal.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
    trainable: BTreeMap<String, bool>,
}

impl ParamStore {
    /// Draws every parameter from one seeded stream, in the order of `specs`.
    pub fn init(specs: &[ParamSpec], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = Self::default();
        for spec in specs {
            let t = match spec.init {
                Init::Uniform { fan_in } => {
                    let limit = (6.0 / fan_in as f64).sqrt();
                    let data = (0..spec.shape.numel()).map(|_| rng.random_range(-limit..limit)).collect();
                    Tensor::from_vec(spec.shape, data)?
                }
                Init::Zeros => Tensor::zeros(spec.shape),
                Init::Ones => Tensor::ones(spec.shape),
                Init::Buffer(v) => Tensor::full(spec.shape, v),
            };
            store.insert(&spec.path, t, spec.trainable())?;
        }
        Ok(store)
    }

    pub fn insert(&mut self, path: &str, t: Tensor, trainable: bool) -> Result<()> {
        if self.tensors.insert(path.to_string(), t).is_some() {
            return Err(Error::Config(format!("duplicate parameter path {path:?}")));
        }
        self.trainable.insert(path.to_string(), trainable);
        Ok(())
    }

    pub fn get(&self, path: &str) -> Result<&Tensor> {
        self.tensors
            .get(path)
            .ok_or_else(|| Error::Config(format!("missing parameter {path:?}")))
    }

    pub fn get_mut(&mut self, path: &str) -> Result<&mut Tensor> {
        self.tensors
            .get_mut(path)
            .ok_or_else(|| Error::Config(format!("missing parameter {path:?}")))
    }

    pub fn is_trainable(&self, path: &str) -> bool {
        self.trainable.get(path).copied().unwrap_or(false)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn trainable_paths(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys().filter(|p| self.is_trainable(p))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.trainable_paths().map(|p| self.tensors[p].numel()).sum()
    }

    /// Fresh vars for one forward pass. Trainable tensors become gradient
    /// leaves when `track` is set; buffers are always constants.
    pub fn vars(&self, track: bool) -> ParamVars {
        let vars = self
            .tensors
            .iter()
            .map(|(p, t)| {
                let v = if track && self.is_trainable(p) {
                    Var::parameter(t.clone())
                } else {
                    Var::constant(t.clone())
                };
                (p.clone(), v)
            })
            .collect();
        ParamVars { vars }
    }
}

/// Vars built from a [`ParamStore`] for one forward pass.
#[derive(Clone, Debug)]
pub struct ParamVars {
    vars: BTreeMap<String, Var>,
}

impl ParamVars {
    pub fn get(&self, path: &str) -> Result<&Var> {
        self.vars
            .get(path)
            .ok_or_else(|| Error::Config(format!("missing parameter {path:?}")))
    }

    /// `prefix.weight` and, when present, `prefix.bias`.
    pub fn conv(&self, prefix: &str) -> Result<Conv> {
        let weight = self.get(&format!("{prefix}.weight"))?.clone();
        let bias = self.vars.get(&format!("{prefix}.bias")).cloned();
        Conv::new(weight, bias)
    }

    /// Gradients of all tracked leaves, keyed by path. Leaves that received no
    /// gradient report zeros.
    pub fn grads(&self) -> BTreeMap<String, Tensor> {
        self.vars
            .iter()
            .filter(|(_, v)| v.requires_grad())
            .map(|(p, v)| {
                let g = v.grad().map(|g| g.clone()).unwrap_or_else(|| Tensor::zeros(v.shape()));
                (p.clone(), g)
            })
            .collect()
    }
}
