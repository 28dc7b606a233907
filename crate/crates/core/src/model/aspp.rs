use matting_nn::{ConvBn, ConvGeometry, Graph, Init, ParamStore, Var};

use crate::error::Result;

/// Atrous spatial pyramid pooling: a 1×1 branch, three dilated 3×3
/// branches, and an image-pooling branch, fused by a 1×1 projection.
#[derive(Clone, Debug)]
pub struct Aspp {
    branches: Vec<ConvBn>,
    pooling: ConvBn,
    project: ConvBn,
    out_channels: usize,
}

impl Aspp {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        in_channels: usize,
        out_channels: usize,
        rates: [usize; 3],
        init: Init,
    ) -> Result<Self> {
        let mut branches = vec![ConvBn::new(
            store,
            &format!("{prefix}.branch0"),
            ConvGeometry::new(in_channels, out_channels, 1),
            init,
            true,
        )?];
        for (i, &rate) in rates.iter().enumerate() {
            branches.push(ConvBn::new(
                store,
                &format!("{prefix}.branch{}", i + 1),
                ConvGeometry::new(in_channels, out_channels, 3).dilation(rate),
                init,
                true,
            )?);
        }
        let pooling = ConvBn::new(
            store,
            &format!("{prefix}.pooling"),
            ConvGeometry::new(in_channels, out_channels, 1),
            init,
            true,
        )?;
        let project = ConvBn::new(
            store,
            &format!("{prefix}.project"),
            ConvGeometry::new(out_channels * (branches.len() + 1), out_channels, 1),
            init,
            true,
        )?;
        Ok(Self {
            branches,
            pooling,
            project,
            out_channels,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    /// Output keeps the spatial size of `deep`.
    pub fn forward(&self, g: &mut Graph, deep: Var) -> Result<Var> {
        let s = g.shape(deep);
        let mut parts = Vec::with_capacity(self.branches.len() + 1);
        for b in &self.branches {
            parts.push(b.forward(g, deep)?);
        }
        let pooled = g.global_avg_pool(deep);
        let pooled = self.pooling.forward(g, pooled)?;
        parts.push(g.broadcast(pooled, s.h, s.w)?);
        let cat = g.concat(&parts)?;
        Ok(self.project.forward(g, cat)?)
    }
}
