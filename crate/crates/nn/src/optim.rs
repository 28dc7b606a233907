//! Stochastic gradient descent with heavy-ball momentum and L2 weight decay.
//!
//! Update rule per parameter `p` with gradient `g`:
//!
//! ```text
//! d = g + weight_decay · p        (decay only where the parameter opts in)
//! v = d                           (first step)
//! v = momentum · v + d            (later steps)
//! p = p − lr · v
//! ```

use crate::graph::Gradients;
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct Sgd {
    pub momentum: f32,
    pub weight_decay: f32,
    velocity: Vec<Option<Tensor>>,
}

impl Sgd {
    pub fn new(momentum: f32, weight_decay: f32) -> Self {
        Self {
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }

    /// Parameters without a gradient are left untouched.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients, lr: f32) {
        if self.velocity.len() < store.len() {
            self.velocity.resize(store.len(), None);
        }
        for i in 0..store.len() {
            let id = ParamId(i);
            let Some(g) = grads.param(id) else { continue };
            let decay = store.param(id).decay;
            let p = store.value_mut(id);
            let mut d = g.clone();
            if decay && self.weight_decay != 0.0 {
                for (dv, &pv) in d.data_mut().iter_mut().zip(p.data()) {
                    *dv += self.weight_decay * pv;
                }
            }
            let v = match &mut self.velocity[i] {
                Some(v) => {
                    for (vv, &dv) in v.data_mut().iter_mut().zip(d.data()) {
                        *vv = self.momentum * *vv + dv;
                    }
                    v
                }
                slot => slot.insert(d),
            };
            for (pv, &vv) in p.data_mut().iter_mut().zip(v.data()) {
                *pv -= lr * vv;
            }
        }
    }

    pub fn velocity(&self, id: ParamId) -> Option<&Tensor> {
        self.velocity.get(id.0).and_then(Option::as_ref)
    }

    pub fn set_velocity(&mut self, id: ParamId, v: Tensor) {
        if self.velocity.len() <= id.0 {
            self.velocity.resize(id.0 + 1, None);
        }
        self.velocity[id.0] = Some(v);
    }
}
