use image::imageops::{self, FilterType};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::compositor::{AlphaMatte, ImageRgb};
use crate::error::{MattingError, Result};

/// Retries allowed when a crop's alpha is uniformly 0 or 1.
pub const CROP_RETRIES: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentParams {
    pub crop_sizes: Vec<usize>,
    pub target_size: usize,
    pub flip_prob: f64,
}

/// Index into `0..n` under mirror reflection without edge repetition.
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m >= n as isize { period - m } else { m }) as usize
}

/// Reflect-pads both layers so each side is at least `size`, split evenly
/// around the original content.
fn pad_reflect(image: &ImageRgb, alpha: &AlphaMatte, size: usize) -> (ImageRgb, AlphaMatte) {
    let (w, h) = image.dims();
    if w >= size && h >= size {
        return (image.clone(), alpha.clone());
    }
    let (pw, ph) = (w.max(size), h.max(size));
    let (ox, oy) = (((pw - w) / 2) as isize, ((ph - h) / 2) as isize);
    let src = |x: usize, y: usize| (reflect(x as isize - ox, w), reflect(y as isize - oy, h));
    let img = ImageRgb::from_fn(pw, ph, |x, y| {
        let (sx, sy) = src(x, y);
        image.pixel(sx, sy)
    })
    .expect("copied pixels");
    let a = AlphaMatte::from_fn(pw, ph, |x, y| {
        let (sx, sy) = src(x, y);
        alpha.get(sx, sy)
    })
    .expect("copied alpha");
    (img, a)
}

fn is_uniform(alpha: &AlphaMatte) -> bool {
    alpha.data().iter().all(|&v| v == 0.0) || alpha.data().iter().all(|&v| v == 1.0)
}

/// Random crop from `crop_sizes`, resize to `target_size` (bicubic for the
/// image, bilinear then clamped for the alpha), then a horizontal flip with
/// probability `flip_prob`. The same transform is applied to both layers
/// and the result depends only on the inputs and `seed`.
pub fn augment(
    image: &ImageRgb,
    alpha: &AlphaMatte,
    params: &AugmentParams,
    seed: u64,
) -> Result<(ImageRgb, AlphaMatte)> {
    if image.dims() != alpha.dims() {
        return Err(MattingError::shape(
            "augment sample",
            format!("{:?}", image.dims()),
            format!("{:?}", alpha.dims()),
        ));
    }
    if params.crop_sizes.is_empty() {
        return Err(MattingError::InvalidArgument("no crop sizes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = params.crop_sizes[rng.random_range(0..params.crop_sizes.len())];
    let (image, alpha) = pad_reflect(image, alpha, size);
    let (w, h) = image.dims();
    let mut crop = None;
    for _ in 0..=CROP_RETRIES {
        let x0 = rng.random_range(0..=w - size);
        let y0 = rng.random_range(0..=h - size);
        let a = alpha.crop(x0, y0, size, size)?;
        let accept = !is_uniform(&a);
        crop = Some((x0, y0, a));
        if accept {
            break;
        }
    }
    let (x0, y0, a) = crop.expect("at least one attempt");
    let mut img = image.crop(x0, y0, size, size)?;
    let mut a = a;
    let t = params.target_size;
    if size != t {
        let t32 = t as u32;
        img = ImageRgb::from_rgb32f(imageops::resize(
            &img.to_rgb32f(),
            t32,
            t32,
            FilterType::CatmullRom,
        ));
        a = AlphaMatte::from_luma32f(imageops::resize(
            &a.to_luma32f(),
            t32,
            t32,
            FilterType::Triangle,
        ));
    }
    if rng.random_bool(params.flip_prob) {
        img = img.flip_horizontal();
        a = a.flip_horizontal();
    }
    Ok((img, a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compositor::shapes::synthetic_foregrounds;

    fn params(flip: f64) -> AugmentParams {
        AugmentParams {
            crop_sizes: vec![48, 64, 80],
            target_size: 32,
            flip_prob: flip,
        }
    }

    #[test]
    fn reflection_indices() {
        let idx: Vec<usize> = (-3..8).map(|i| reflect(i, 4)).collect();
        assert_eq!(idx, [3, 2, 1, 0, 1, 2, 3, 2, 1, 0, 1]);
        assert_eq!(reflect(5, 1), 0);
    }

    #[test]
    fn output_is_deterministic_and_target_sized() {
        let fg = &synthetic_foregrounds(1, 70, 60, 2)[0];
        for seed in 0..10 {
            let (i1, a1) = augment(&fg.foreground, &fg.alpha, &params(0.5), seed).unwrap();
            let (i2, a2) = augment(&fg.foreground, &fg.alpha, &params(0.5), seed).unwrap();
            assert_eq!((&i1, &a1), (&i2, &a2));
            assert_eq!(i1.dims(), (32, 32));
            assert_eq!(a1.dims(), (32, 32));
            assert!(a1.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn small_inputs_are_padded_up() {
        let fg = &synthetic_foregrounds(1, 20, 30, 3)[0];
        let (i, a) = augment(&fg.foreground, &fg.alpha, &params(0.0), 1).unwrap();
        assert_eq!((i.dims(), a.dims()), ((32, 32), (32, 32)));
    }

    #[test]
    fn flip_differs_from_no_flip_by_a_mirror() {
        let fg = &synthetic_foregrounds(1, 64, 64, 5)[0];
        let (i0, a0) = augment(&fg.foreground, &fg.alpha, &params(0.0), 9).unwrap();
        let (i1, a1) = augment(&fg.foreground, &fg.alpha, &params(1.0), 9).unwrap();
        assert_eq!(i1.flip_horizontal(), i0);
        assert_eq!(a1.flip_horizontal(), a0);
    }
}
