//! Geodesic distances from scribbled pixels and the interaction likelihood
//! derived from them.
//!
//! Distances are shortest paths on the 8-connected pixel graph where the
//! step from `a` to `b` costs `sqrt(|a - b|^2 + gamma^2 (I(a) - I(b))^2)`,
//! i.e. intensity acts as an extra coordinate scaled by `gamma`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::scribble::{Pixel, Rasterized};

pub(crate) const NEIGHBORS_8: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// Geodesic distance from a seed set, zero on the seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMap {
    pub values: Array2<f64>,
}

/// Per-pixel foreground likelihood `eta` derived from user interactions.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodMap {
    pub eta: Array2<f64>,
}

/// Cost of the graph edge between two 8-neighbors.
#[inline]
pub fn edge_cost(dr: isize, dc: isize, intensity_a: f64, intensity_b: f64, gamma: f64) -> f64 {
    let di = gamma * (intensity_a - intensity_b);
    ((dr * dr + dc * dc) as f64 + di * di).sqrt()
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    dist: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, index for a total order
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Exact geodesic distance from `seeds` over `intensity` (expected in
/// `[0, 1]`), by Dijkstra's algorithm.
pub fn geodesic_distance(intensity: ArrayView2<'_, f64>, seeds: &[Pixel], gamma: f64) -> Result<DistanceMap> {
    if seeds.is_empty() {
        return Err(Error::EmptySeeds);
    }
    let (h, w) = intensity.dim();
    if let Some(&(r, c)) = seeds.iter().find(|&&(r, c)| r >= h || c >= w) {
        return Err(Error::Shape(format!("seed ({r}, {c}) outside {h}x{w}")));
    }
    let img: Vec<f64> = intensity.iter().copied().collect();
    let mut dist = vec![f64::INFINITY; h * w];
    let mut done = vec![false; h * w];
    let mut heap = BinaryHeap::with_capacity(seeds.len() * 4);
    for &(r, c) in seeds {
        let i = r * w + c;
        dist[i] = 0.0;
        heap.push(Candidate { dist: 0.0, index: i });
    }

    while let Some(Candidate { dist: d, index }) = heap.pop() {
        if done[index] {
            continue;
        }
        done[index] = true;
        let (r, c) = ((index / w) as isize, (index % w) as isize);
        for (dr, dc) in NEIGHBORS_8 {
            let (nr, nc) = (r + dr, c + dc);
            if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                continue;
            }
            let j = nr as usize * w + nc as usize;
            if done[j] {
                continue;
            }
            let nd = d + edge_cost(dr, dc, img[index], img[j], gamma);
            if nd < dist[j] {
                dist[j] = nd;
                heap.push(Candidate { dist: nd, index: j });
            }
        }
    }

    let values = Array2::from_shape_vec((h, w), dist).expect("shape preserved");
    Ok(DistanceMap { values })
}

/// `eta = exp(-G_F) / (exp(-G_F) + exp(-G_B))` with `G = min(g, D)`; an
/// absent seed set contributes the constant `D`.
pub fn interaction_likelihood(
    foreground: Option<&DistanceMap>,
    background: Option<&DistanceMap>,
    dim: (usize, usize),
    clamp: f64,
) -> Result<LikelihoodMap> {
    if !(clamp > 0.0) {
        return Err(Error::Config(format!("D must be positive, got {clamp}")));
    }
    for map in [foreground, background].into_iter().flatten() {
        if map.values.dim() != dim {
            return Err(Error::Shape(format!(
                "distance map {:?} does not match {:?}",
                map.values.dim(),
                dim
            )));
        }
    }
    let clamped = |m: Option<&DistanceMap>, r: usize, c: usize| match m {
        Some(m) => m.values[[r, c]].min(clamp),
        None => clamp,
    };
    let eta = Array2::from_shape_fn(dim, |(r, c)| {
        let gf = clamped(foreground, r, c);
        let gb = clamped(background, r, c);
        // algebraically equal to the softmax form, and exactly 0.5 when gf == gb
        1.0 / (1.0 + (gf - gb).exp())
    });
    Ok(LikelihoodMap { eta })
}

/// Likelihood map for a rasterized scribble set on a normalized slice. The
/// two distance maps are computed concurrently.
pub fn likelihood_from_scribbles(
    intensity: ArrayView2<'_, f64>,
    scribbles: &Rasterized,
    gamma: f64,
    clamp: f64,
) -> Result<LikelihoodMap> {
    let distances = |seeds: &[Pixel]| -> Result<Option<DistanceMap>> {
        if seeds.is_empty() {
            Ok(None)
        } else {
            geodesic_distance(intensity, seeds, gamma).map(Some)
        }
    };
    let (gf, gb) = rayon::join(|| distances(&scribbles.foreground), || distances(&scribbles.background));
    let (gf, gb) = (gf?, gb?);
    interaction_likelihood(gf.as_ref(), gb.as_ref(), intensity.dim(), clamp)
}
