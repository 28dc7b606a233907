use crate::error::NnError;
use crate::graph::{Graph, Var};
use crate::kernels::conv::ConvGeometry;
use crate::params::{BufferId, Init, ParamId, ParamStore};
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub geom: ConvGeometry,
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Conv2d {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        geom: ConvGeometry,
        init: Init,
        with_bias: bool,
    ) -> Result<Self, NnError> {
        geom.validate()?;
        let weight = store.add_param(format!("{name}.weight"), geom.weight_shape(), init, true)?;
        let bias = with_bias
            .then(|| {
                store.add_param(
                    format!("{name}.bias"),
                    Shape::new(1, geom.out_channels, 1, 1),
                    Init::Constant(0.0),
                    true,
                )
            })
            .transpose()?;
        Ok(Self { geom, weight, bias })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var, NnError> {
        let w = g.param(self.weight);
        let b = self.bias.map(|b| g.param(b));
        g.conv2d(x, w, b, self.geom)
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: BufferId,
    pub running_var: BufferId,
    pub momentum: f32,
    pub eps: f32,
}

impl BatchNorm2d {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Result<Self, NnError> {
        let shape = Shape::new(1, channels, 1, 1);
        Ok(Self {
            gamma: store.add_param(format!("{name}.weight"), shape, Init::Constant(1.0), true)?,
            beta: store.add_param(format!("{name}.bias"), shape, Init::Constant(0.0), true)?,
            running_mean: store.add_buffer(format!("{name}.running_mean"), Tensor::zeros(shape))?,
            running_var: store
                .add_buffer(format!("{name}.running_var"), Tensor::full(shape, 1.0))?,
            momentum: 0.1,
            eps: 1e-5,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var, NnError> {
        let gamma = g.param(self.gamma);
        let beta = g.param(self.beta);
        g.batch_norm(
            x,
            gamma,
            beta,
            (self.running_mean, self.running_var),
            self.momentum,
            self.eps,
        )
    }
}

/// Conv (no bias) → BatchNorm → optional ReLU.
#[derive(Clone, Debug)]
pub struct ConvBn {
    pub conv: Conv2d,
    pub bn: BatchNorm2d,
    pub relu: bool,
}

impl ConvBn {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        geom: ConvGeometry,
        init: Init,
        relu: bool,
    ) -> Result<Self, NnError> {
        Ok(Self {
            conv: Conv2d::new(store, &format!("{name}.conv"), geom, init, false)?,
            bn: BatchNorm2d::new(store, &format!("{name}.bn"), geom.out_channels)?,
            relu,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var, NnError> {
        let y = self.conv.forward(g, x)?;
        let y = self.bn.forward(g, y)?;
        Ok(if self.relu { g.relu(y) } else { y })
    }
}
