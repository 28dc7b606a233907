//! Procedural stand-ins for matting assets: anti-aliased discs, rings and
//! hair-like strands with fractional-alpha borders over smooth color fields.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AlphaMatte, BackgroundAsset, ForegroundAsset, ImageRgb};

/// Pixel coverage of a shape from its signed distance (negative inside).
fn coverage(signed_distance: f64) -> f64 {
    (0.5 - signed_distance).clamp(0.0, 1.0)
}

fn segment_distance(px: f64, py: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((px - cx).powi(2) + (py - cy).powi(2)).sqrt()
}

/// Segment endpoints and half-width.
type Strand = ((f64, f64), (f64, f64), f64);

#[derive(Clone, Copy, Debug)]
enum Kind {
    Disc,
    Ring,
    Strands,
}

fn shape_alpha(kind: Kind, w: usize, h: usize, rng: &mut impl Rng) -> AlphaMatte {
    let s = w.min(h) as f64;
    let cx = w as f64 * rng.random_range(0.35..0.65);
    let cy = h as f64 * rng.random_range(0.35..0.65);
    let r = s * rng.random_range(0.18..0.3);
    match kind {
        Kind::Disc => {
            // Opaque core with a feathered, semi-transparent halo.
            let feather = s * rng.random_range(0.03..0.08);
            AlphaMatte::from_fn(w, h, |x, y| {
                let d = ((x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2)).sqrt();
                let core = coverage(d - r);
                let halo = 0.6 * (-(d - r).max(0.0) / feather).exp();
                core.max(halo)
            })
            .expect("coverage in range")
        }
        Kind::Ring => {
            let thickness = s * rng.random_range(0.05..0.12);
            let opacity = rng.random_range(0.55..1.0);
            AlphaMatte::from_fn(w, h, |x, y| {
                let d = ((x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2)).sqrt();
                opacity * coverage((d - r).abs() - thickness / 2.0)
            })
            .expect("coverage in range")
        }
        Kind::Strands => {
            let body = r * 0.6;
            let strands: Vec<Strand> = (0..rng.random_range(6..12))
                .map(|_| {
                    let angle = rng.random_range(0.0..TAU);
                    let len = body + s * rng.random_range(0.1..0.35);
                    let end = (cx + len * angle.cos(), cy + len * angle.sin());
                    ((cx, cy), end, rng.random_range(0.25..0.9))
                })
                .collect();
            AlphaMatte::from_fn(w, h, |x, y| {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let d = ((px - cx).powi(2) + (py - cy).powi(2)).sqrt();
                let mut a = coverage(d - body);
                for (a0, a1, half_width) in &strands {
                    a = a.max(coverage(segment_distance(px, py, *a0, *a1) - half_width));
                }
                a
            })
            .expect("coverage in range")
        }
    }
}

/// Smooth random color field built from a gradient plus two sinusoids.
fn color_field(w: usize, h: usize, rng: &mut impl Rng) -> ImageRgb {
    let base: [f32; 3] = [rng.random(), rng.random(), rng.random()];
    let grad: [f32; 3] = [
        rng.random_range(-0.4..0.4),
        rng.random_range(-0.4..0.4),
        rng.random_range(-0.4..0.4),
    ];
    let freq = (
        rng.random_range(0.05..0.4f32),
        rng.random_range(0.05..0.4f32),
    );
    let phase: f32 = rng.random_range(0.0..std::f32::consts::TAU);
    let amp: f32 = rng.random_range(0.05..0.25);
    ImageRgb::from_fn(w, h, |x, y| {
        let (u, v) = (x as f32 / w as f32, y as f32 / h as f32);
        let wave = amp * ((x as f32 * freq.0 + phase).sin() * (y as f32 * freq.1).cos());
        std::array::from_fn(|c| base[c] + grad[c] * (u - v) + wave * (c as f32 - 1.0))
    })
    .expect("clamped field")
}

pub fn synthetic_foregrounds(
    count: usize,
    width: usize,
    height: usize,
    seed: u64,
) -> Vec<ForegroundAsset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let kind = [Kind::Disc, Kind::Ring, Kind::Strands][i % 3];
            ForegroundAsset {
                id: format!("shape{i:04}"),
                alpha: shape_alpha(kind, width, height, &mut rng),
                foreground: color_field(width, height, &mut rng),
            }
        })
        .collect()
}

/// Backgrounds are generated wider than the requested size so that
/// compositing exercises the fit-and-crop path.
pub fn synthetic_backgrounds(
    count: usize,
    width: usize,
    height: usize,
    seed: u64,
) -> Vec<BackgroundAsset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    (0..count)
        .map(|i| BackgroundAsset {
            id: format!("bg{i:04}"),
            image: color_field(width + width / 2, height, &mut rng),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_have_fractional_borders_and_both_phases() {
        for fg in synthetic_foregrounds(6, 64, 64, 1) {
            let a = fg.alpha.data();
            let frac = a.iter().filter(|&&v| v > 0.02 && v < 0.98).count();
            assert!(frac > 0, "{} has no transition region", fg.id);
            assert!(a.iter().any(|&v| v < 0.02), "{} has no background", fg.id);
            assert!(a.iter().any(|&v| v > 0.5), "{} has no body", fg.id);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = synthetic_foregrounds(3, 16, 16, 4);
        let b = synthetic_foregrounds(3, 16, 16, 4);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.alpha, y.alpha);
            assert_eq!(x.foreground, y.foreground);
        }
        assert_eq!(
            synthetic_backgrounds(2, 16, 16, 4)[1].image.dims(),
            (24, 16)
        );
    }
}
