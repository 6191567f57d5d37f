//! Independent oracles and fixtures shared by the integration tests. Every
//! oracle here is a deliberately naive loop, written without reference to
//! the library's implementation.
#![allow(dead_code)]

use ndarray::{Array2, Array3, ArrayView2, ArrayView4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stackrefine_core::RefineConfig;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Configuration for experiments on synthetic stacks. The default
/// `gamma = 1` barely separates the synthetic intensity classes, so the
/// scribble likelihood leaks across the target boundary.
pub fn benchmark_config() -> RefineConfig {
    RefineConfig {
        gamma: 5.0,
        ..Default::default()
    }
}

/// Per-pixel mean and population variance over predictors.
pub fn naive_fusion(probs: ArrayView4<'_, f32>) -> (Array3<f64>, Array3<f64>) {
    let (n, m, h, w) = probs.dim();
    let mut mean = Array3::zeros((m, h, w));
    let mut var = Array3::zeros((m, h, w));
    for k in 0..m {
        for r in 0..h {
            for c in 0..w {
                let mut s = 0.0;
                for i in 0..n {
                    s += probs[[i, k, r, c]] as f64;
                }
                let mu = s / n as f64;
                let mut ss = 0.0;
                for i in 0..n {
                    let d = probs[[i, k, r, c]] as f64 - mu;
                    ss += d * d;
                }
                mean[[k, r, c]] = mu;
                var[[k, r, c]] = ss / n as f64;
            }
        }
    }
    (mean, var)
}

/// Shortest paths by repeated full sweeps over every 8-neighbor edge until
/// nothing changes.
pub fn relaxation_oracle(intensity: ArrayView2<'_, f64>, seeds: &[(usize, usize)], gamma: f64) -> Array2<f64> {
    let (h, w) = intensity.dim();
    let mut d = Array2::from_elem((h, w), f64::INFINITY);
    for &s in seeds {
        d[s] = 0.0;
    }
    loop {
        let mut changed = false;
        for r in 0..h as isize {
            for c in 0..w as isize {
                for dr in -1..=1isize {
                    for dc in -1..=1isize {
                        if dr == 0 && dc == 0 {
                            continue;
                        }
                        let (nr, nc) = (r + dr, c + dc);
                        if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                            continue;
                        }
                        let a = (r as usize, c as usize);
                        let b = (nr as usize, nc as usize);
                        let di = intensity[a] - intensity[b];
                        let cost = ((dr * dr + dc * dc) as f64 + gamma * gamma * di * di).sqrt();
                        if d[a] + cost < d[b] {
                            d[b] = d[a] + cost;
                            changed = true;
                        }
                    }
                }
            }
        }
        if !changed {
            return d;
        }
    }
}

/// 8-connected chamfer distance between two pixels on a constant image.
pub fn chamfer(a: (usize, usize), b: (usize, usize)) -> f64 {
    let dr = a.0.abs_diff(b.0);
    let dc = a.1.abs_diff(b.1);
    let (lo, hi) = (dr.min(dc), dr.max(dc));
    lo as f64 * std::f64::consts::SQRT_2 + (hi - lo) as f64
}

/// Foreground pixels with a background or out-of-image 4-neighbor.
pub fn boundary_pixels(mask: ArrayView2<'_, u8>) -> Vec<(usize, usize)> {
    let (h, w) = mask.dim();
    let mut out = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if mask[[r, c]] == 0 {
                continue;
            }
            let edge = r == 0
                || c == 0
                || r + 1 == h
                || c + 1 == w
                || mask[[r - 1, c]] == 0
                || mask[[r + 1, c]] == 0
                || mask[[r, c - 1]] == 0
                || mask[[r, c + 1]] == 0;
            if edge {
                out.push((r, c));
            }
        }
    }
    out
}

/// All-pairs average symmetric surface distance.
pub fn assd_oracle(a: ArrayView2<'_, u8>, b: ArrayView2<'_, u8>, spacing: (f64, f64)) -> f64 {
    let ba = boundary_pixels(a);
    let bb = boundary_pixels(b);
    let nearest = |p: (usize, usize), set: &[(usize, usize)]| {
        set.iter()
            .map(|q| {
                let dy = (p.0 as f64 - q.0 as f64) * spacing.0;
                let dx = (p.1 as f64 - q.1 as f64) * spacing.1;
                (dy * dy + dx * dx).sqrt()
            })
            .fold(f64::INFINITY, f64::min)
    };
    let total: f64 = ba.iter().map(|&p| nearest(p, &bb)).sum::<f64>() + bb.iter().map(|&p| nearest(p, &ba)).sum::<f64>();
    total / (ba.len() + bb.len()) as f64
}

pub fn count_dice(a: ArrayView2<'_, u8>, b: ArrayView2<'_, u8>) -> f64 {
    let (mut inter, mut sa, mut sb) = (0usize, 0usize, 0usize);
    for (x, y) in a.iter().zip(b.iter()) {
        inter += (*x == 1 && *y == 1) as usize;
        sa += (*x == 1) as usize;
        sb += (*y == 1) as usize;
    }
    if sa + sb == 0 {
        1.0
    } else {
        2.0 * inter as f64 / (sa + sb) as f64
    }
}

pub fn disk(dim: (usize, usize), center: (f64, f64), radius: f64) -> Array2<u8> {
    Array2::from_shape_fn(dim, |(r, c)| {
        ((r as f64 - center.0).powi(2) + (c as f64 - center.1).powi(2) <= radius * radius) as u8
    })
}

/// Union of a few random disks and rectangles, never empty.
pub fn random_shape(rng: &mut ChaCha8Rng, dim: (usize, usize)) -> Array2<u8> {
    let (h, w) = dim;
    let mut mask = Array2::<u8>::zeros(dim);
    for _ in 0..rng.random_range(1..=3) {
        if rng.random_bool(0.5) {
            let r = rng.random_range(2.0..(h.min(w) as f64 / 3.0));
            let center = (rng.random_range(0.0..h as f64), rng.random_range(0.0..w as f64));
            mask = &mask | &disk(dim, center, r);
        } else {
            let r0 = rng.random_range(0..h - 2);
            let c0 = rng.random_range(0..w - 2);
            let r1 = rng.random_range(r0 + 1..h);
            let c1 = rng.random_range(c0 + 1..w);
            mask.slice_mut(ndarray::s![r0..r1, c0..c1]).fill(1);
        }
    }
    if mask.iter().all(|&v| v == 0) {
        mask[[h / 2, w / 2]] = 1;
    }
    mask
}

pub fn random_image(rng: &mut ChaCha8Rng, dim: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_fn(dim, |_| rng.random_range(0.0..1.0))
}

/// Logistic soft probability map of a mask.
pub fn soft_probability(mask: ArrayView2<'_, u8>) -> Array2<f64> {
    stackrefine_core::edt::signed_distance(mask).mapv(|d| 1.0 / (1.0 + (-d).exp()))
}
