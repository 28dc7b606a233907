use matting_nn::{Conv2d, ConvGeometry, Graph, Init, ParamStore, Var};

use crate::error::{MattingError, Result};

/// Two 3×3 convolutions refining the assembled stride-8 features.
#[derive(Clone, Debug)]
pub struct AssemblyConvs {
    convs: [Conv2d; 2],
}

impl AssemblyConvs {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        in_channels: usize,
        channels: usize,
        init: Init,
    ) -> Result<Self> {
        Ok(Self {
            convs: [
                Conv2d::new(
                    store,
                    &format!("{prefix}.0"),
                    ConvGeometry::new(in_channels, channels, 3),
                    init,
                    true,
                )?,
                Conv2d::new(
                    store,
                    &format!("{prefix}.1"),
                    ConvGeometry::new(channels, channels, 3),
                    init,
                    true,
                )?,
            ],
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let mut y = x;
        for conv in &self.convs {
            y = conv.forward(g, y)?;
            y = g.relu(y);
        }
        Ok(y)
    }
}

/// Final stage: a 3×3 conv with ReLU, a 3×3 conv to one logit channel,
/// sigmoid, and bilinear upsampling to the input resolution.
#[derive(Clone, Debug)]
pub struct AlphaHead {
    hidden: Conv2d,
    logits: Conv2d,
}

#[derive(Clone, Copy, Debug)]
pub struct HeadOutput {
    /// Pre-sigmoid logits at stride 4.
    pub logits: Var,
    /// Alpha at full resolution.
    pub alpha: Var,
}

impl AlphaHead {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        in_channels: usize,
        hidden: usize,
        init: Init,
    ) -> Result<Self> {
        Ok(Self {
            hidden: Conv2d::new(
                store,
                &format!("{prefix}.0"),
                ConvGeometry::new(in_channels, hidden, 3),
                init,
                true,
            )?,
            logits: Conv2d::new(
                store,
                &format!("{prefix}.1"),
                ConvGeometry::new(hidden, 1, 3),
                init,
                true,
            )?,
        })
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        f_cat: Var,
        out_h: usize,
        out_w: usize,
    ) -> Result<HeadOutput> {
        let y = self.hidden.forward(g, f_cat)?;
        let y = g.relu(y);
        let logits = self.logits.forward(g, y)?;
        let a = g.sigmoid(logits);
        Ok(HeadOutput {
            logits,
            alpha: g.resize_bilinear(a, out_h, out_w),
        })
    }
}

/// Upsamples `f_ia` onto `f_ini`, concatenates, and runs the alpha head.
pub fn decode(
    g: &mut Graph,
    ia: &AssemblyConvs,
    head: &AlphaHead,
    f_ia: Var,
    f_ini: Var,
    out_h: usize,
    out_w: usize,
) -> Result<HeadOutput> {
    let (a, b) = (g.shape(f_ia), g.shape(f_ini));
    if a.n != b.n || a.h != b.h.div_ceil(2) || a.w != b.w.div_ceil(2) {
        return Err(MattingError::shape(
            "decoder inputs",
            format!("f_ini at twice the resolution of f_ia ({a})"),
            b,
        ));
    }
    let y = ia.forward(g, f_ia)?;
    let y = g.resize_bilinear(y, b.h, b.w);
    let f_cat = g.concat(&[y, f_ini])?;
    head.forward(g, f_cat, out_h, out_w)
}
