//! The MSIA-matte network: backbone, ASPP head, superficial-traces branch,
//! information assembly and decoder.

mod aspp;
mod assembly;
mod backbone;
pub mod checkpoint;
mod config;
mod decoder;
mod traces;

pub use aspp::Aspp;
pub use assembly::{softplus_inverse_of_one, Assembly, AssemblyWeights};
pub use backbone::{Backbone, BackboneFeatures, BLOCK1_STRIDE, DEEP_STRIDE, INPUT_MULTIPLE};
pub use checkpoint::Checkpoint;
pub use config::{AblationVariant, BackboneProfile, ModelConfig};
pub use decoder::{decode, AlphaHead, AssemblyConvs, HeadOutput};
pub use traces::{IniSt, SedSt};

use matting_nn::{Graph, Init, Mode, ParamStore, Shape, Tensor, Var};

use crate::compositor::{AlphaMatte, ImageRgb};
use crate::error::{MattingError, Result};

/// Per-channel statistics used to standardize RGB input.
pub const INPUT_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
pub const INPUT_STD: [f32; 3] = [0.229, 0.224, 0.225];

/// Anything that maps an image to an alpha matte of the same size.
pub trait AlphaPredictor {
    fn predict(&self, image: &ImageRgb) -> Result<AlphaMatte>;
}

/// A named activation with its declared output stride.
#[derive(Clone, Copy, Debug)]
pub struct FeatureTap {
    pub name: &'static str,
    pub stride: usize,
    pub var: Var,
}

#[derive(Clone, Debug)]
pub struct FeatureMap {
    pub name: &'static str,
    pub stride: usize,
    pub tensor: Tensor,
}

impl FeatureMap {
    /// Checks `h = ceil(H/stride)` and `w = ceil(W/stride)`.
    pub fn check(&self, input_h: usize, input_w: usize) -> Result<()> {
        let s = self.tensor.shape();
        let expected = (input_h.div_ceil(self.stride), input_w.div_ceil(self.stride));
        if (s.h, s.w) != expected {
            return Err(MattingError::shape(
                "feature map stride",
                format!("{} at {}x{}", self.name, expected.1, expected.0),
                format!("{}x{}", s.w, s.h),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// Alpha at input resolution, `[N, 1, H, W]`.
    pub alpha: Var,
    /// Pre-sigmoid logits at stride 4.
    pub logits: Var,
    pub taps: Vec<FeatureTap>,
}

#[derive(Clone, Debug)]
pub struct MsiaMatte {
    config: ModelConfig,
    store: ParamStore,
    backbone: Backbone,
    aspp: Aspp,
    inist: Option<IniSt>,
    sedst: Option<SedSt>,
    assembly: Option<Assembly>,
    ia_convs: Option<AssemblyConvs>,
    head: AlphaHead,
}

impl MsiaMatte {
    /// Builds the network for `config`. Layers that two variants share get
    /// identical initial weights for the same `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let variant = config.ablation_variant;
        let init = Init::Normal {
            std: config.init_std as f32,
        };
        let mut store = ParamStore::new(seed);
        let backbone = Backbone::new(&mut store, "backbone", config.backbone_profile)?;
        let aspp = Aspp::new(
            &mut store,
            "aspp",
            backbone.deep_channels(),
            config.aspp_channels,
            config.aspp_rates,
            init,
        )?;
        let inist = variant
            .uses_inist()
            .then(|| {
                IniSt::new(
                    &mut store,
                    "traces.inist",
                    backbone.block1_channels(),
                    config.ini_channels,
                    init,
                )
            })
            .transpose()?;
        let sedst = variant
            .uses_sedst()
            .then(|| {
                SedSt::new(
                    &mut store,
                    "traces.sedst",
                    config.ini_channels,
                    config.sed_channels,
                    init,
                )
            })
            .transpose()?;
        let assembly = variant
            .uses_assembly()
            .then(|| Assembly::new(&mut store, "assembly", config.epsilon))
            .transpose()?;
        let (ia_convs, head_in) = if variant.uses_inist() {
            let secondary = if variant.uses_sedst() {
                config.sed_channels
            } else {
                config.ini_channels
            };
            let ia = AssemblyConvs::new(
                &mut store,
                "decoder.ia",
                config.aspp_channels + secondary,
                config.ia_channels,
                init,
            )?;
            (Some(ia), config.ia_channels + config.ini_channels)
        } else {
            (None, config.aspp_channels + backbone.block1_channels())
        };
        let head = AlphaHead::new(
            &mut store,
            "decoder.head",
            head_in,
            config.fuse_channels,
            init,
        )?;
        Ok(Self {
            config,
            store,
            backbone,
            aspp,
            inist,
            sedst,
            assembly,
            ia_convs,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> AblationVariant {
        self.config.ablation_variant
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn num_parameters(&self) -> usize {
        self.store.num_parameters()
    }

    pub fn backbone(&self) -> &Backbone {
        &self.backbone
    }

    pub fn aspp(&self) -> &Aspp {
        &self.aspp
    }

    pub fn inist(&self) -> Option<&IniSt> {
        self.inist.as_ref()
    }

    pub fn sedst(&self) -> Option<&SedSt> {
        self.sedst.as_ref()
    }

    /// Current effective assembly weights (full variant only).
    pub fn assembly_weights(&self) -> Option<AssemblyWeights> {
        self.assembly.as_ref().map(|a| a.weights(&self.store))
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<ForwardOutput> {
        let input = g.shape(x);
        let BackboneFeatures { block1, deep } = self.backbone.forward(g, x)?;
        let mut taps = vec![
            FeatureTap {
                name: "block1",
                stride: BLOCK1_STRIDE,
                var: block1,
            },
            FeatureTap {
                name: "deep",
                stride: DEEP_STRIDE,
                var: deep,
            },
        ];
        let f_aspp = self.aspp.forward(g, deep)?;
        taps.push(FeatureTap {
            name: "aspp",
            stride: DEEP_STRIDE,
            var: f_aspp,
        });

        let (Some(inist), Some(ia)) = (&self.inist, &self.ia_convs) else {
            let b = g.shape(block1);
            let up = g.resize_bilinear(f_aspp, b.h, b.w);
            let f_cat = g.concat(&[up, block1])?;
            let out = self.head.forward(g, f_cat, input.h, input.w)?;
            taps.push(FeatureTap {
                name: "alpha",
                stride: 1,
                var: out.alpha,
            });
            return Ok(ForwardOutput {
                alpha: out.alpha,
                logits: out.logits,
                taps,
            });
        };

        let f_ini = inist.forward(g, block1)?;
        taps.push(FeatureTap {
            name: "f_ini",
            stride: BLOCK1_STRIDE,
            var: f_ini,
        });
        let ini = g.shape(f_ini);
        let (h8, w8) = (ini.h.div_ceil(2), ini.w.div_ceil(2));
        let secondary = match &self.sedst {
            Some(sedst) => {
                let f_sed = sedst.forward(g, f_ini)?;
                taps.push(FeatureTap {
                    name: "f_sed",
                    stride: 8,
                    var: f_sed,
                });
                f_sed
            }
            None => g.resize_bilinear(f_ini, h8, w8),
        };
        let aspp_up = g.resize_bilinear(f_aspp, h8, w8);
        let f_ia = match &self.assembly {
            Some(assembly) => assembly.forward(g, aspp_up, secondary)?,
            None => g.concat(&[aspp_up, secondary])?,
        };
        taps.push(FeatureTap {
            name: "f_ia",
            stride: 8,
            var: f_ia,
        });
        let out = decode(g, ia, &self.head, f_ia, f_ini, input.h, input.w)?;
        taps.push(FeatureTap {
            name: "alpha",
            stride: 1,
            var: out.alpha,
        });
        Ok(ForwardOutput {
            alpha: out.alpha,
            logits: out.logits,
            taps,
        })
    }

    /// Runs inference on an input whose sides are multiples of 32 and
    /// returns every tapped activation with its declared stride.
    pub fn feature_maps(&self, image: &ImageRgb) -> Result<Vec<FeatureMap>> {
        let mut g = Graph::new(&self.store, Mode::Eval);
        let x = g.input(images_to_tensor(&[image])?);
        let out = self.forward(&mut g, x)?;
        Ok(out
            .taps
            .iter()
            .map(|t| FeatureMap {
                name: t.name,
                stride: t.stride,
                tensor: g.value(t.var).clone(),
            })
            .collect())
    }

    /// Loads backbone weights from a safetensors file whose keys follow the
    /// `conv1 / bn1 / layerN.M.*` convention. Returns the number of tensors
    /// assigned.
    pub fn load_backbone_weights(&mut self, path: &std::path::Path) -> Result<usize> {
        let tensors = checkpoint::read_safetensors(path)?;
        let names: Vec<String> = self
            .store
            .params()
            .map(|(_, p)| p.name.clone())
            .chain(self.store.buffers().map(|(_, b)| b.name.clone()))
            .filter(|n| n.starts_with("backbone."))
            .collect();
        let mut assigned = 0;
        for name in names {
            let key = &name["backbone.".len()..];
            let Some((dims, data)) = tensors.get(key) else {
                return Err(MattingError::Checkpoint(format!(
                    "{} has no tensor `{key}`",
                    path.display()
                )));
            };
            let target = self.store_tensor_shape(&name);
            let fits =
                data.len() == target.numel() && (dims.len() != 4 || dims[..] == target.dims()[..]);
            if !fits {
                return Err(MattingError::Checkpoint(format!(
                    "tensor `{key}` has shape {dims:?}, expected {target}"
                )));
            }
            let t = Tensor::from_vec(target, data.clone())?;
            self.store.assign(&name, t)?;
            assigned += 1;
        }
        Ok(assigned)
    }

    fn store_tensor_shape(&self, name: &str) -> Shape {
        match self.store.param_id(name) {
            Some(id) => self.store.value(id).shape(),
            None => self
                .store
                .buffers()
                .find(|(_, b)| b.name == name)
                .map(|(_, b)| b.value.shape())
                .expect("name taken from the store"),
        }
    }
}

impl AlphaPredictor for MsiaMatte {
    /// Pads to a multiple of 32 by edge replication, runs inference, and
    /// crops the alpha back to the input size.
    fn predict(&self, image: &ImageRgb) -> Result<AlphaMatte> {
        let (w, h) = image.dims();
        let padded = pad_to_multiple(image, INPUT_MULTIPLE);
        let mut g = Graph::new(&self.store, Mode::Eval);
        let x = g.input(images_to_tensor(&[&padded])?);
        let out = self.forward(&mut g, x)?;
        let alpha = g.value(out.alpha);
        let pw = alpha.shape().w;
        let plane = alpha.plane(0, 0);
        let data = (0..h)
            .flat_map(|y| (0..w).map(move |x| (y, x)))
            .map(|(y, x)| (plane[y * pw + x] as f64).clamp(0.0, 1.0))
            .collect();
        AlphaMatte::new(w, h, data)
    }
}

/// Replicates the right and bottom edges up to the next multiple.
pub fn pad_to_multiple(image: &ImageRgb, multiple: usize) -> ImageRgb {
    let (w, h) = image.dims();
    let (pw, ph) = (w.next_multiple_of(multiple), h.next_multiple_of(multiple));
    if (pw, ph) == (w, h) {
        return image.clone();
    }
    ImageRgb::from_fn(pw, ph, |x, y| image.pixel(x.min(w - 1), y.min(h - 1)))
        .expect("values copied from a valid image")
}

/// Stacks equally sized images into a standardized `[N, 3, H, W]` tensor.
pub fn images_to_tensor(images: &[&ImageRgb]) -> Result<Tensor> {
    let first = images.first().ok_or_else(|| {
        MattingError::InvalidArgument("cannot build a tensor from zero images".into())
    })?;
    let (w, h) = first.dims();
    let mut t = Tensor::zeros(Shape::new(images.len(), 3, h, w));
    for (n, img) in images.iter().enumerate() {
        if img.dims() != (w, h) {
            return Err(MattingError::shape(
                "image batch",
                format!("{w}x{h}"),
                format!("{:?}", img.dims()),
            ));
        }
        for c in 0..3 {
            let plane = t.plane_mut(n, c);
            for (i, px) in img.data().chunks_exact(3).enumerate() {
                plane[i] = (px[c] - INPUT_MEAN[c]) / INPUT_STD[c];
            }
        }
    }
    Ok(t)
}

/// Stacks equally sized mattes into a `[N, 1, H, W]` tensor.
pub fn mattes_to_tensor(mattes: &[&AlphaMatte]) -> Result<Tensor> {
    let first = mattes.first().ok_or_else(|| {
        MattingError::InvalidArgument("cannot build a tensor from zero mattes".into())
    })?;
    let (w, h) = first.dims();
    let mut data = Vec::with_capacity(mattes.len() * w * h);
    for m in mattes {
        if m.dims() != (w, h) {
            return Err(MattingError::shape(
                "matte batch",
                format!("{w}x{h}"),
                format!("{:?}", m.dims()),
            ));
        }
        data.extend(m.data().iter().map(|&v| v as f32));
    }
    Ok(Tensor::from_vec(Shape::new(mattes.len(), 1, h, w), data)?)
}
