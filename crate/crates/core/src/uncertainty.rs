//! Fusion of `N` predictions into a probability map and a pixel uncertainty
//! map, slice-level uncertainty scores, and the review schedule built on them.

use std::collections::HashSet;

use ndarray::{Array3, ArrayView2, Axis, Zip};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RefineConfig;
use crate::error::{Error, Result};
use crate::volume::{BinaryMask, ProbabilityGroup};

/// Mean map `P`, variance map `U` and the binarized mask `Y = [P >= threshold]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedResult {
    pub mean: Array3<f64>,
    pub variance: Array3<f64>,
    pub mask: BinaryMask,
}

impl FusedResult {
    pub fn num_slices(&self) -> usize {
        self.mean.dim().0
    }
}

/// Per-pixel mean and population variance across the predictors.
pub fn fuse_predictions(pg: &ProbabilityGroup, threshold: f64) -> Result<FusedResult> {
    let n = pg.num_predictors();
    if n == 0 {
        return Err(Error::Empty("no predictions to fuse"));
    }
    let data = pg.data();
    let dim = pg.spatial_dim();
    let mut mean = Array3::<f64>::zeros(dim);
    let mut variance = Array3::<f64>::zeros(dim);
    let inv_n = 1.0 / n as f64;

    mean.axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(variance.axis_iter_mut(Axis(0)).into_par_iter())
        .enumerate()
        .for_each(|(k, (mut mean_k, mut var_k))| {
            for i in 0..n {
                let pred = data.index_axis(Axis(0), i);
                Zip::from(&mut mean_k)
                    .and(&pred.index_axis(Axis(0), k))
                    .for_each(|m, &p| *m += p as f64);
            }
            mean_k.mapv_inplace(|s| s * inv_n);
            for i in 0..n {
                let pred = data.index_axis(Axis(0), i);
                Zip::from(&mut var_k)
                    .and(&mean_k)
                    .and(&pred.index_axis(Axis(0), k))
                    .for_each(|v, &m, &p| {
                        let d = p as f64 - m;
                        *v += d * d;
                    });
            }
            var_k.mapv_inplace(|s| s * inv_n);
        });

    let mask = BinaryMask::new(mean.mapv(|p| (p >= threshold) as u8))?;
    Ok(FusedResult {
        mean,
        variance,
        mask,
    })
}

/// `sum(U) / (sum(Y) + zeta)`: uncertainty normalized by the segmented area.
pub fn slice_uncertainty(uncertainty: ArrayView2<'_, f64>, mask: ArrayView2<'_, u8>, zeta: f64) -> f64 {
    assert_eq!(uncertainty.dim(), mask.dim(), "uncertainty and mask shapes differ");
    let area: f64 = mask.iter().map(|&v| v as f64).sum();
    uncertainty.sum() / (area + zeta)
}

/// `sum(U)`, without area normalization.
pub fn naive_slice_uncertainty(uncertainty: ArrayView2<'_, f64>) -> f64 {
    uncertainty.sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    #[default]
    Normalized,
    Naive,
}

impl std::str::FromStr for ScoreMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normalized" => Ok(ScoreMode::Normalized),
            "naive" => Ok(ScoreMode::Naive),
            other => Err(Error::Config(format!("unknown score mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub slice: usize,
    pub score: f64,
}

/// Slices in review order (descending score) and the review cutoff `M'`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceQueue {
    pub entries: Vec<QueueEntry>,
    pub cutoff: usize,
}

impl SliceQueue {
    pub fn order(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.slice).collect()
    }

    pub fn score_of(&self, slice: usize) -> Option<f64> {
        self.entries.iter().find(|e| e.slice == slice).map(|e| e.score)
    }
}

/// Score every slice of `fused` and order them for review. Ties go to the
/// lower slice index.
pub fn rank_slices(fused: &FusedResult, cfg: &RefineConfig, mode: ScoreMode) -> SliceQueue {
    let m = fused.num_slices();
    let mut entries: Vec<QueueEntry> = (0..m)
        .into_par_iter()
        .map(|k| {
            let u = fused.variance.index_axis(Axis(0), k);
            let score = match mode {
                ScoreMode::Normalized => slice_uncertainty(u, fused.mask.slice(k), cfg.zeta),
                ScoreMode::Naive => naive_slice_uncertainty(u),
            };
            QueueEntry { slice: k, score }
        })
        .collect();
    entries.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.slice.cmp(&b.slice)));
    SliceQueue {
        entries,
        cutoff: cfg.m_prime(m),
    }
}

/// One fetched slice and whether the user edited it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Visit {
    pub slice: usize,
    pub edited: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Next {
    Slice(usize),
    Done,
}

/// The next slice to review, or `Done` once `M'` slices were fetched or the
/// last `early_stop_count` fetched slices all went unedited.
pub fn next_slice(queue: &SliceQueue, history: &[Visit], early_stop_count: usize) -> Next {
    if history.len() >= queue.cutoff {
        return Next::Done;
    }
    if early_stop_count > 0
        && history.len() >= early_stop_count
        && history[history.len() - early_stop_count..].iter().all(|v| !v.edited)
    {
        return Next::Done;
    }
    let seen: HashSet<usize> = history.iter().map(|v| v.slice).collect();
    queue
        .entries
        .iter()
        .find(|e| !seen.contains(&e.slice))
        .map_or(Next::Done, |e| Next::Slice(e.slice))
}
