//! Named parameter and buffer storage with deterministic per-name initialization.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::NnError;
use crate::graph::BufferUpdate;
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BufferId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Constant(f32),
    Normal {
        std: f32,
    },
    /// He-normal over the fan-out (`out_channels · k · k`) of a conv weight.
    KaimingNormalFanOut,
}

#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    /// Whether the optimizer applies weight decay to this parameter.
    pub decay: bool,
}

#[derive(Clone, Debug)]
pub struct Buffer {
    pub name: String,
    pub value: Tensor,
}

/// 64-bit FNV-1a, used to derive a stable per-parameter RNG stream.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Owns every trainable tensor of a model plus non-trainable buffers
/// (running statistics). Each parameter draws its initial values from an RNG
/// keyed by `(seed, name)`, so two models that share a layer name share its
/// initial weights regardless of construction order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    seed: u64,
    params: Vec<Param>,
    buffers: Vec<Buffer>,
    param_names: BTreeMap<String, usize>,
    buffer_names: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            ..Default::default()
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn add_param(
        &mut self,
        name: impl Into<String>,
        shape: Shape,
        init: Init,
        decay: bool,
    ) -> Result<ParamId, NnError> {
        let name = name.into();
        if self.param_names.contains_key(&name) || self.buffer_names.contains_key(&name) {
            return Err(NnError::DuplicateName(name));
        }
        let value = match init {
            Init::Constant(v) => Tensor::full(shape, v),
            Init::Normal { std } => self.sample_normal(&name, shape, std),
            Init::KaimingNormalFanOut => {
                let fan_out = (shape.n * shape.h * shape.w).max(1);
                self.sample_normal(&name, shape, (2.0 / fan_out as f32).sqrt())
            }
        };
        let id = self.params.len();
        self.param_names.insert(name.clone(), id);
        self.params.push(Param { name, value, decay });
        Ok(ParamId(id))
    }

    pub fn add_buffer(
        &mut self,
        name: impl Into<String>,
        value: Tensor,
    ) -> Result<BufferId, NnError> {
        let name = name.into();
        if self.param_names.contains_key(&name) || self.buffer_names.contains_key(&name) {
            return Err(NnError::DuplicateName(name));
        }
        let id = self.buffers.len();
        self.buffer_names.insert(name.clone(), id);
        self.buffers.push(Buffer { name, value });
        Ok(BufferId(id))
    }

    fn sample_normal(&self, name: &str, shape: Shape, std: f32) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(name.as_bytes()));
        let dist = Normal::new(0.0f32, std).expect("finite std");
        let data = (0..shape.numel()).map(|_| dist.sample(&mut rng)).collect();
        Tensor::from_vec(shape, data).expect("length matches shape")
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn buffer(&self, id: BufferId) -> &Tensor {
        &self.buffers[id.0].value
    }

    pub fn buffer_mut(&mut self, id: BufferId) -> &mut Tensor {
        &mut self.buffers[id.0].value
    }

    pub fn param_id(&self, name: &str) -> Option<ParamId> {
        self.param_names.get(name).map(|&i| ParamId(i))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of trainable scalars.
    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn buffers(&self) -> impl Iterator<Item = (BufferId, &Buffer)> {
        self.buffers
            .iter()
            .enumerate()
            .map(|(i, b)| (BufferId(i), b))
    }

    /// Overwrites a parameter or buffer by name, checking the shape.
    pub fn assign(&mut self, name: &str, value: Tensor) -> Result<(), NnError> {
        let slot = if let Some(&i) = self.param_names.get(name) {
            &mut self.params[i].value
        } else if let Some(&i) = self.buffer_names.get(name) {
            &mut self.buffers[i].value
        } else {
            return Err(NnError::UnknownParameter(name.to_owned()));
        };
        if slot.shape() != value.shape() {
            return Err(NnError::ShapeMismatch {
                op: "assign",
                detail: format!("`{name}` is {}, got {}", slot.shape(), value.shape()),
            });
        }
        *slot = value;
        Ok(())
    }

    /// Commits running-statistic updates recorded by a training graph.
    pub fn apply_updates(&mut self, updates: Vec<BufferUpdate>) {
        for u in updates {
            *self.buffer_mut(u.buffer) = u.value;
        }
    }

    pub fn weight_sq_norm(&self) -> f64 {
        self.params.iter().map(|p| p.value.sq_norm()).sum()
    }
}
