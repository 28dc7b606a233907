//! The superficial-traces branch: IniST refines the shallow backbone tap at
//! stride 4, SedST condenses it to stride 8.

use matting_nn::{ConvBn, ConvGeometry, Graph, Init, ParamStore, Var};

use crate::error::{MattingError, Result};

#[derive(Clone, Debug)]
pub struct IniSt {
    convs: [ConvBn; 2],
    out_channels: usize,
}

impl IniSt {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        in_channels: usize,
        channels: usize,
        init: Init,
    ) -> Result<Self> {
        let c0 = ConvBn::new(
            store,
            &format!("{prefix}.0"),
            ConvGeometry::new(in_channels, channels, 3),
            init,
            true,
        )?;
        let c1 = ConvBn::new(
            store,
            &format!("{prefix}.1"),
            ConvGeometry::new(channels, channels, 3),
            init,
            true,
        )?;
        Ok(Self {
            convs: [c0, c1],
            out_channels: channels,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn forward(&self, g: &mut Graph, block1: Var) -> Result<Var> {
        let y = self.convs[0].forward(g, block1)?;
        Ok(self.convs[1].forward(g, y)?)
    }
}

#[derive(Clone, Debug)]
pub struct SedSt {
    convs: Vec<ConvBn>,
    in_channels: usize,
    out_channels: usize,
}

impl SedSt {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        in_channels: usize,
        channels: usize,
        init: Init,
    ) -> Result<Self> {
        let mut convs = vec![ConvBn::new(
            store,
            &format!("{prefix}.0"),
            ConvGeometry::new(in_channels, channels, 3).stride(2),
            init,
            true,
        )?];
        for i in 1..4 {
            convs.push(ConvBn::new(
                store,
                &format!("{prefix}.{i}"),
                ConvGeometry::new(channels, channels, 3),
                init,
                true,
            )?);
        }
        Ok(Self {
            convs,
            in_channels,
            out_channels: channels,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn forward(&self, g: &mut Graph, f_ini: Var) -> Result<Var> {
        let c = g.shape(f_ini).c;
        if c != self.in_channels {
            return Err(MattingError::shape(
                "SedST input channels",
                self.in_channels,
                c,
            ));
        }
        let mut y = f_ini;
        for conv in &self.convs {
            y = conv.forward(g, y)?;
        }
        Ok(y)
    }
}
