//! Residual encoder with grouped bottlenecks. Parameter names follow the
//! common `conv1 / bn1 / layerN.M.*` layout so pretrained weights map by name.

use matting_nn::{BatchNorm2d, Conv2d, ConvGeometry, Graph, Init, ParamStore, Var};

use super::config::BackboneProfile;
use crate::error::{MattingError, Result};

/// Input sides must be multiples of this.
pub const INPUT_MULTIPLE: usize = 32;
pub const BLOCK1_STRIDE: usize = 4;
pub const DEEP_STRIDE: usize = 16;

#[derive(Clone, Copy, Debug)]
struct StageSpec {
    blocks: usize,
    mid: usize,
    out: usize,
    stride: usize,
    dilation: usize,
}

#[derive(Clone, Copy, Debug)]
struct Layout {
    stem: usize,
    cardinality: usize,
    stages: [StageSpec; 4],
}

fn layout(profile: BackboneProfile) -> Layout {
    let stage = |blocks, mid, out, stride, dilation| StageSpec {
        blocks,
        mid,
        out,
        stride,
        dilation,
    };
    match profile {
        BackboneProfile::Toy => Layout {
            stem: 64,
            cardinality: 8,
            stages: [
                stage(1, 32, 64, 1, 1),
                stage(1, 64, 128, 2, 1),
                stage(1, 128, 256, 2, 1),
                stage(1, 256, 512, 1, 2),
            ],
        },
        BackboneProfile::Full => Layout {
            stem: 64,
            cardinality: 32,
            stages: [
                stage(3, 256, 256, 1, 1),
                stage(4, 512, 512, 2, 1),
                stage(23, 1024, 1024, 2, 1),
                stage(3, 2048, 2048, 1, 2),
            ],
        },
    }
}

#[derive(Clone, Debug)]
struct Bottleneck {
    conv1: Conv2d,
    bn1: BatchNorm2d,
    conv2: Conv2d,
    bn2: BatchNorm2d,
    conv3: Conv2d,
    bn3: BatchNorm2d,
    downsample: Option<(Conv2d, BatchNorm2d)>,
}

impl Bottleneck {
    fn new(
        store: &mut ParamStore,
        name: &str,
        in_ch: usize,
        spec: &StageSpec,
        stride: usize,
        cardinality: usize,
    ) -> Result<Self> {
        let init = Init::KaimingNormalFanOut;
        let conv = |store: &mut ParamStore, n: &str, g: ConvGeometry| {
            Conv2d::new(store, &format!("{name}.{n}"), g, init, false)
        };
        let bn = |store: &mut ParamStore, n: &str, c: usize| {
            BatchNorm2d::new(store, &format!("{name}.{n}"), c)
        };
        let conv1 = conv(store, "conv1", ConvGeometry::new(in_ch, spec.mid, 1))?;
        let bn1 = bn(store, "bn1", spec.mid)?;
        let conv2 = conv(
            store,
            "conv2",
            ConvGeometry::new(spec.mid, spec.mid, 3)
                .stride(stride)
                .dilation(spec.dilation)
                .groups(cardinality),
        )?;
        let bn2 = bn(store, "bn2", spec.mid)?;
        let conv3 = conv(store, "conv3", ConvGeometry::new(spec.mid, spec.out, 1))?;
        let bn3 = bn(store, "bn3", spec.out)?;
        let downsample = if stride != 1 || in_ch != spec.out {
            Some((
                conv(
                    store,
                    "downsample.0",
                    ConvGeometry::new(in_ch, spec.out, 1).stride(stride),
                )?,
                bn(store, "downsample.1", spec.out)?,
            ))
        } else {
            None
        };
        Ok(Self {
            conv1,
            bn1,
            conv2,
            bn2,
            conv3,
            bn3,
            downsample,
        })
    }

    fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let y = self.conv1.forward(g, x)?;
        let y = self.bn1.forward(g, y)?;
        let y = g.relu(y);
        let y = self.conv2.forward(g, y)?;
        let y = self.bn2.forward(g, y)?;
        let y = g.relu(y);
        let y = self.conv3.forward(g, y)?;
        let y = self.bn3.forward(g, y)?;
        let identity = match &self.downsample {
            Some((conv, bn)) => {
                let s = conv.forward(g, x)?;
                bn.forward(g, s)?
            }
            None => x,
        };
        let y = g.add(y, identity)?;
        Ok(g.relu(y))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BackboneFeatures {
    /// Shallow tap after the first residual stage, stride 4.
    pub block1: Var,
    /// Output of the last stage, stride 16.
    pub deep: Var,
}

#[derive(Clone, Debug)]
pub struct Backbone {
    conv1: Conv2d,
    bn1: BatchNorm2d,
    layers: Vec<Vec<Bottleneck>>,
    block1_channels: usize,
    deep_channels: usize,
}

impl Backbone {
    pub fn new(store: &mut ParamStore, prefix: &str, profile: BackboneProfile) -> Result<Self> {
        let l = layout(profile);
        let conv1 = Conv2d::new(
            store,
            &format!("{prefix}.conv1"),
            ConvGeometry::new(3, l.stem, 7).stride(2),
            Init::KaimingNormalFanOut,
            false,
        )?;
        let bn1 = BatchNorm2d::new(store, &format!("{prefix}.bn1"), l.stem)?;
        let mut in_ch = l.stem;
        let mut layers = Vec::with_capacity(4);
        for (i, spec) in l.stages.iter().enumerate() {
            let mut blocks = Vec::with_capacity(spec.blocks);
            for j in 0..spec.blocks {
                let stride = if j == 0 { spec.stride } else { 1 };
                let name = format!("{prefix}.layer{}.{j}", i + 1);
                blocks.push(Bottleneck::new(
                    store,
                    &name,
                    in_ch,
                    spec,
                    stride,
                    l.cardinality,
                )?);
                in_ch = spec.out;
            }
            layers.push(blocks);
        }
        Ok(Self {
            conv1,
            bn1,
            layers,
            block1_channels: l.stages[0].out,
            deep_channels: l.stages[3].out,
        })
    }

    pub fn block1_channels(&self) -> usize {
        self.block1_channels
    }

    pub fn deep_channels(&self) -> usize {
        self.deep_channels
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<BackboneFeatures> {
        let s = g.shape(x);
        if s.c != 3 || !s.h.is_multiple_of(INPUT_MULTIPLE) || !s.w.is_multiple_of(INPUT_MULTIPLE) {
            return Err(MattingError::shape(
                "backbone input",
                format!("3 channels with sides divisible by {INPUT_MULTIPLE}"),
                format!("{} channels at {}x{}", s.c, s.w, s.h),
            ));
        }
        let y = self.conv1.forward(g, x)?;
        let y = self.bn1.forward(g, y)?;
        let y = g.relu(y);
        let mut y = g.max_pool(y, 3, 2, 1);
        let mut block1 = y;
        for (i, stage) in self.layers.iter().enumerate() {
            for block in stage {
                y = block.forward(g, y)?;
            }
            if i == 0 {
                block1 = y;
            }
        }
        Ok(BackboneFeatures { block1, deep: y })
    }
}
