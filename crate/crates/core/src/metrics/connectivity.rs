//! Connectivity error over 0.1-spaced thresholds with 4-connected regions.

use crate::compositor::AlphaMatte;

pub const CONNECTIVITY_THETA: f64 = 0.15;
pub const CONNECTIVITY_STEP: f64 = 0.1;
pub const CONNECTIVITY_LEVELS: usize = 10;

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Mask of the largest 4-connected component of `mask`. Ties go to the
/// component whose first pixel comes earliest in raster order.
pub(crate) fn largest_component(mask: &[bool], w: usize, h: usize) -> Vec<bool> {
    let mut parent: Vec<usize> = (0..mask.len()).collect();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !mask[i] {
                continue;
            }
            for j in [(x > 0).then(|| i - 1), (y > 0).then(|| i - w)]
                .into_iter()
                .flatten()
            {
                if mask[j] {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    if a != b {
                        // Keep the raster-earliest pixel as root.
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
    }
    let mut size = vec![0usize; mask.len()];
    for (i, &on) in mask.iter().enumerate() {
        if on {
            let r = find(&mut parent, i);
            size[r] += 1;
        }
    }
    let best = (0..mask.len())
        .filter(|&i| size[i] > 0)
        .fold(None, |best: Option<usize>, i| match best {
            Some(b) if size[b] >= size[i] => Some(b),
            _ => Some(i),
        });
    match best {
        None => vec![false; mask.len()],
        Some(root) => (0..mask.len())
            .map(|i| mask[i] && find(&mut parent, i) == root)
            .collect(),
    }
}

pub(crate) fn connectivity_error(pred: &AlphaMatte, gt: &AlphaMatte) -> f64 {
    let (w, h) = pred.dims();
    let (p, g) = (pred.data(), gt.data());
    let mut level: Vec<Option<f64>> = vec![None; p.len()];
    for i in 1..=CONNECTIVITY_LEVELS {
        let t = i as f64 * CONNECTIVITY_STEP;
        let mask: Vec<bool> = p.iter().zip(g).map(|(&a, &b)| a >= t && b >= t).collect();
        let omega = largest_component(&mask, w, h);
        let previous = (i - 1) as f64 * CONNECTIVITY_STEP;
        for (l, in_omega) in level.iter_mut().zip(&omega) {
            if l.is_none() && !in_omega {
                *l = Some(previous);
            }
        }
    }
    let phi = |v: f64, l: f64| {
        let d = v - l;
        if d >= CONNECTIVITY_THETA {
            1.0 - d
        } else {
            1.0
        }
    };
    let total: f64 = (0..p.len())
        .map(|i| {
            let l = level[i].unwrap_or(1.0);
            (phi(p[i], l) - phi(g[i], l)).abs()
        })
        .sum();
    total / 1000.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn largest_component_prefers_size_then_raster_order() {
        #[rustfmt::skip]
        let mask = [
            true,  false, true,
            false, false, true,
            true,  false, false,
        ];
        let cc = largest_component(&mask, 3, 3);
        assert_eq!(
            cc,
            [false, false, true, false, false, true, false, false, false]
        );
        let tie = [true, false, true];
        assert_eq!(largest_component(&tie, 3, 1), [true, false, false]);
        assert_eq!(largest_component(&[false; 4], 2, 2), [false; 4]);
    }

    #[test]
    fn diagonal_neighbors_are_not_connected() {
        let mask = [true, false, false, true];
        assert_eq!(largest_component(&mask, 2, 2), [true, false, false, false]);
    }
}
