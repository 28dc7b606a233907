//! Raster types, alpha compositing `I = αF + (1−α)B`, PNG I/O and
//! dataset synthesis.

mod manifest;
pub mod shapes;
mod synth;

use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};

use crate::error::{MattingError, Result};

pub use manifest::{DatasetManifest, ManifestRecord, Split};
pub use synth::{
    fit_background, plan_split, synthesize_from_dirs, synthesize_split, AssetFailure,
    BackgroundAsset, ForegroundAsset, PlannedRecord, SynthOutcome,
};

/// H×W×3 raster with channel values in `[0, 1]`, stored interleaved.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageRgb {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

pub type ForegroundLayer = ImageRgb;
pub type BackgroundLayer = ImageRgb;

/// H×W opacity map with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaMatte {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(MattingError::InvalidArgument(format!(
            "raster dimensions must be positive, got {width}x{height}"
        )));
    }
    Ok(())
}

impl ImageRgb {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height * 3 {
            return Err(MattingError::shape(
                "image buffer",
                width * height * 3,
                data.len(),
            ));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(MattingError::InvalidArgument(format!(
                "image channel value {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Result<Self> {
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(width * height * 3)
            .collect();
        Self::new(width, height, data)
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        f: impl Fn(usize, usize) -> [f32; 3],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend(f(x, y).map(|v| v.clamp(0.0, 1.0)));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn to_rgb8(&self) -> RgbImage {
        let bytes = self.data.iter().map(|&v| quantize(v as f64)).collect();
        RgbImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer length matches dimensions")
    }

    pub fn from_rgb8(img: &RgbImage) -> Self {
        Self {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img.as_raw().iter().map(|&v| v as f32 / 255.0).collect(),
        }
    }

    pub(crate) fn to_rgb32f(&self) -> ImageBuffer<Rgb<f32>, Vec<f32>> {
        ImageBuffer::from_raw(self.width as u32, self.height as u32, self.data.clone())
            .expect("buffer length matches dimensions")
    }

    /// Clamps resampling overshoot back into `[0, 1]`.
    pub(crate) fn from_rgb32f(img: ImageBuffer<Rgb<f32>, Vec<f32>>) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        Self {
            width: w,
            height: h,
            data: img
                .into_raw()
                .into_iter()
                .map(|v| v.clamp(0.0, 1.0))
                .collect(),
        }
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(MattingError::shape(
                "crop window",
                format!("inside {}x{}", self.width, self.height),
                format!("{width}x{height} at ({x0},{y0})"),
            ));
        }
        let mut data = Vec::with_capacity(width * height * 3);
        for y in y0..y0 + height {
            let row = (y * self.width + x0) * 3;
            data.extend_from_slice(&self.data[row..row + width * 3]);
        }
        Self::new(width, height, data)
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for y in 0..self.height {
            for x in (0..self.width).rev() {
                data.extend(self.pixel(x, y));
            }
        }
        Self { data, ..*self }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_rgb8()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(MattingError::image(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(MattingError::image(path))?;
        Ok(Self::from_rgb8(&img.to_rgb8()))
    }
}

impl AlphaMatte {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(MattingError::shape(
                "alpha buffer",
                width * height,
                data.len(),
            ));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(MattingError::InvalidArgument(format!(
                "alpha value {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn to_luma8(&self) -> GrayImage {
        let bytes = self.data.iter().map(|&v| quantize(v)).collect();
        GrayImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer length matches dimensions")
    }

    /// 8-bit value `v` maps to `v / 255`.
    pub fn from_luma8(img: &GrayImage) -> Self {
        Self {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img.as_raw().iter().map(|&v| v as f64 / 255.0).collect(),
        }
    }

    pub(crate) fn to_luma32f(&self) -> ImageBuffer<Luma<f32>, Vec<f32>> {
        let data = self.data.iter().map(|&v| v as f32).collect();
        ImageBuffer::from_raw(self.width as u32, self.height as u32, data)
            .expect("buffer length matches dimensions")
    }

    pub(crate) fn from_luma32f(img: ImageBuffer<Luma<f32>, Vec<f32>>) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        Self {
            width: w,
            height: h,
            data: img
                .into_raw()
                .into_iter()
                .map(|v| (v as f64).clamp(0.0, 1.0))
                .collect(),
        }
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(MattingError::shape(
                "crop window",
                format!("inside {}x{}", self.width, self.height),
                format!("{width}x{height} at ({x0},{y0})"),
            ));
        }
        let mut data = Vec::with_capacity(width * height);
        for y in y0..y0 + height {
            let row = y * self.width + x0;
            data.extend_from_slice(&self.data[row..row + width]);
        }
        Self::new(width, height, data)
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for y in 0..self.height {
            for x in (0..self.width).rev() {
                data.push(self.get(x, y));
            }
        }
        Self { data, ..*self }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_luma8()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(MattingError::image(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(MattingError::image(path))?;
        Ok(Self::from_luma8(&img.to_luma8()))
    }
}

/// Round-half-up quantization of a `[0, 1]` value to 8 bits.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Per-pixel, per-channel `α·fg + (1−α)·bg`.
pub fn composite(
    fg: &ForegroundLayer,
    bg: &BackgroundLayer,
    alpha: &AlphaMatte,
) -> Result<ImageRgb> {
    if fg.dims() != bg.dims() || fg.dims() != alpha.dims() {
        return Err(MattingError::shape(
            "composite",
            format!("fg, bg and alpha sharing {:?}", fg.dims()),
            format!("bg {:?}, alpha {:?}", bg.dims(), alpha.dims()),
        ));
    }
    let mut data = Vec::with_capacity(fg.data.len());
    for (i, &a) in alpha.data.iter().enumerate() {
        for c in 0..3 {
            let f = fg.data[i * 3 + c] as f64;
            let b = bg.data[i * 3 + c] as f64;
            data.push((a * f + (1.0 - a) * b).clamp(0.0, 1.0) as f32);
        }
    }
    ImageRgb::new(fg.width, fg.height, data)
}

/// Loads an RGB image and its alpha matte, both scaled to `[0, 1]`.
pub fn load_pair(image_path: &Path, alpha_path: &Path) -> Result<(ImageRgb, AlphaMatte)> {
    let image = ImageRgb::load(image_path)?;
    let alpha = AlphaMatte::load(alpha_path)?;
    if image.dims() != alpha.dims() {
        return Err(MattingError::shape(
            "image/alpha pair",
            format!("{:?}", image.dims()),
            format!("{:?}", alpha.dims()),
        ));
    }
    Ok((image, alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut impl Rng, w: usize, h: usize) -> ImageRgb {
        ImageRgb::new(w, h, (0..w * h * 3).map(|_| rng.random::<f32>()).collect()).unwrap()
    }

    fn random_alpha(rng: &mut impl Rng, w: usize, h: usize) -> AlphaMatte {
        AlphaMatte::new(w, h, (0..w * h).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    #[test]
    fn opaque_and_transparent_alpha_reproduce_layers() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let fg = random_image(&mut rng, 7, 5);
        let bg = random_image(&mut rng, 7, 5);
        let ones = AlphaMatte::filled(7, 5, 1.0).unwrap();
        let zeros = AlphaMatte::filled(7, 5, 0.0).unwrap();
        assert_eq!(composite(&fg, &bg, &ones).unwrap(), fg);
        assert_eq!(composite(&fg, &bg, &zeros).unwrap(), bg);
    }

    #[test]
    fn midpoint_blend() {
        let fg = ImageRgb::filled(4, 4, [1.0; 3]).unwrap();
        let bg = ImageRgb::filled(4, 4, [0.0; 3]).unwrap();
        let half = AlphaMatte::filled(4, 4, 0.5).unwrap();
        let out = composite(&fg, &bg, &half).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let fg = ImageRgb::filled(4, 4, [1.0; 3]).unwrap();
        let bg = ImageRgb::filled(4, 3, [0.0; 3]).unwrap();
        let a = AlphaMatte::filled(4, 4, 0.5).unwrap();
        assert!(matches!(
            composite(&fg, &bg, &a),
            Err(MattingError::Shape { .. })
        ));
    }

    #[test]
    fn constructors_validate_range_and_dims() {
        assert!(ImageRgb::new(1, 1, vec![0.0, 1.5, 0.0]).is_err());
        assert!(ImageRgb::new(0, 1, vec![]).is_err());
        assert!(AlphaMatte::new(2, 1, vec![0.0, -0.1]).is_err());
        assert!(AlphaMatte::new(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn quantization_rounds_half_up() {
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(1.0), 255);
        assert_eq!(quantize(0.5), 128);
        assert_eq!(quantize(127.5 / 255.0 - 1e-9), 127);
    }

    #[test]
    fn load_pair_scales_eight_bit_values() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, ap) = (dir.path().join("i.png"), dir.path().join("a.png"));
        ImageRgb::filled(3, 1, [1.0, 0.0, 0.5])
            .unwrap()
            .save_png(&ip)
            .unwrap();
        GrayImage::from_raw(3, 1, vec![255, 0, 128])
            .unwrap()
            .save(&ap)
            .unwrap();
        let (img, alpha) = load_pair(&ip, &ap).unwrap();
        assert_eq!(alpha.data(), &[1.0, 0.0, 128.0 / 255.0]);
        assert_eq!(img.pixel(0, 0), [1.0, 0.0, 128.0 / 255.0]);

        let bad = dir.path().join("b.png");
        GrayImage::from_raw(2, 1, vec![0, 0])
            .unwrap()
            .save(&bad)
            .unwrap();
        assert!(matches!(
            load_pair(&ip, &bad),
            Err(MattingError::Shape { .. })
        ));
        assert!(matches!(
            load_pair(&ip, &dir.path().join("missing.png")),
            Err(MattingError::Image { .. })
        ));
    }

    proptest! {
        #[test]
        fn monotone_in_alpha_when_fg_brighter(f in 0.5f32..=1.0, b in 0.0f32..0.5, a1 in 0.0f64..=1.0, a2 in 0.0f64..=1.0) {
            let fg = ImageRgb::filled(1, 1, [f; 3]).unwrap();
            let bg = ImageRgb::filled(1, 1, [b; 3]).unwrap();
            let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
            let c_lo = composite(&fg, &bg, &AlphaMatte::filled(1, 1, lo).unwrap()).unwrap();
            let c_hi = composite(&fg, &bg, &AlphaMatte::filled(1, 1, hi).unwrap()).unwrap();
            prop_assert!(c_lo.data()[0] <= c_hi.data()[0]);
        }

        #[test]
        fn swapping_layers_sums_to_layer_sum(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let fg = random_image(&mut rng, 5, 4);
            let bg = random_image(&mut rng, 5, 4);
            let a = random_alpha(&mut rng, 5, 4);
            let x = composite(&fg, &bg, &a).unwrap();
            let y = composite(&bg, &fg, &a).unwrap();
            for i in 0..x.data().len() {
                let lhs = x.data()[i] + y.data()[i];
                let rhs = fg.data()[i] + bg.data()[i];
                prop_assert!((lhs - rhs).abs() < 1e-6);
            }
        }
    }
}
