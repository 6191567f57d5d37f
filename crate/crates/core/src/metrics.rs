//! Segmentation and uncertainty-quality metrics.

use ndarray::{Array2, ArrayView, ArrayView2, Axis, Dimension};
use serde::{Deserialize, Serialize};

use crate::edt::distance_transform;
use crate::error::{Error, Result};

/// Description attached to reported RVE values.
pub const RVE_DEFINITION: &str =
    "| |uncertain region| - |error region| | / |error region| (definition: ours)";

fn same_shape(a: &[usize], b: &[usize], what: &str) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::Shape(format!("{what}: {a:?} vs {b:?}")))
    }
}

/// `2 |a & b| / (|a| + |b|)`; two empty masks score 1.
pub fn dice<D: Dimension>(a: ArrayView<'_, u8, D>, b: ArrayView<'_, u8, D>) -> Result<f64> {
    same_shape(a.shape(), b.shape(), "dice")?;
    let (mut inter, mut na, mut nb) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.iter().zip(b.iter()) {
        let (x, y) = (x != 0, y != 0);
        inter += (x && y) as usize;
        na += x as usize;
        nb += y as usize;
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (na + nb) as f64)
}

/// Foreground pixels with at least one background 4-neighbor. Pixels
/// outside the image count as background.
pub fn boundary(mask: ArrayView2<'_, u8>) -> Array2<bool> {
    let (h, w) = mask.dim();
    Array2::from_shape_fn((h, w), |(r, c)| {
        if mask[[r, c]] == 0 {
            return false;
        }
        r == 0
            || c == 0
            || r + 1 == h
            || c + 1 == w
            || mask[[r - 1, c]] == 0
            || mask[[r + 1, c]] == 0
            || mask[[r, c - 1]] == 0
            || mask[[r, c + 1]] == 0
    })
}

/// Average symmetric surface distance in mm: the mean, over the boundary
/// pixels of both masks, of the distance to the other mask's boundary.
/// `spacing` is `(row mm, col mm)`.
pub fn assd(a: ArrayView2<'_, u8>, b: ArrayView2<'_, u8>, spacing: (f64, f64)) -> Result<f64> {
    same_shape(a.shape(), b.shape(), "assd")?;
    if !a.iter().any(|&v| v != 0) || !b.iter().any(|&v| v != 0) {
        return Err(Error::UndefinedSurfaceDistance("empty mask"));
    }
    let (ba, bb) = (boundary(a), boundary(b));
    let to_a = distance_transform(ba.view(), spacing);
    let to_b = distance_transform(bb.view(), spacing);
    let mut total = 0.0;
    let mut count = 0usize;
    for ((&on_a, &on_b), (&da, &db)) in ba.iter().zip(bb.iter()).zip(to_a.iter().zip(to_b.iter())) {
        if on_a {
            total += db;
            count += 1;
        }
        if on_b {
            total += da;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

fn error_region<D: Dimension>(pred: ArrayView<'_, u8, D>, gt: ArrayView<'_, u8, D>) -> ndarray::Array<u8, D> {
    ndarray::Zip::from(&pred)
        .and(&gt)
        .map_collect(|&p, &g| ((p != 0) != (g != 0)) as u8)
}

fn uncertain_region<D: Dimension>(u: ArrayView<'_, f64, D>, threshold: f64) -> ndarray::Array<u8, D> {
    u.mapv(|v| (v >= threshold) as u8)
}

/// Dice between the thresholded uncertainty `[U >= t]` and the error region `pred xor gt`.
pub fn ueo<D: Dimension>(
    u: ArrayView<'_, f64, D>,
    pred: ArrayView<'_, u8, D>,
    gt: ArrayView<'_, u8, D>,
    threshold: f64,
) -> Result<f64> {
    same_shape(pred.shape(), gt.shape(), "ueo")?;
    same_shape(u.shape(), pred.shape(), "ueo")?;
    let err = error_region(pred, gt);
    let unc = uncertain_region(u, threshold);
    dice(unc.view(), err.view())
}

/// Relative size error between the thresholded uncertainty and the error region.
pub fn rve<D: Dimension>(
    u: ArrayView<'_, f64, D>,
    pred: ArrayView<'_, u8, D>,
    gt: ArrayView<'_, u8, D>,
    threshold: f64,
) -> Result<f64> {
    same_shape(pred.shape(), gt.shape(), "rve")?;
    same_shape(u.shape(), pred.shape(), "rve")?;
    let err = error_region(pred, gt).iter().filter(|&&v| v != 0).count();
    if err == 0 {
        return Err(Error::EmptyErrorRegion);
    }
    let unc = u.iter().filter(|&&v| v >= threshold).count();
    Ok((unc as f64 - err as f64).abs() / err as f64)
}

/// One case of a threshold sweep: uncertainty, prediction and ground truth.
#[derive(Debug, Clone, Copy)]
pub struct UeoCase<'a> {
    pub uncertainty: ArrayView2<'a, f64>,
    pub pred: ArrayView2<'a, u8>,
    pub gt: ArrayView2<'a, u8>,
}

/// The grid threshold with the highest mean UEO across cases; ties go to
/// the smaller threshold. Returns `(threshold, mean UEO)`.
pub fn sweep_ueo_threshold(cases: &[UeoCase<'_>], grid: &[f64]) -> Result<(f64, f64)> {
    if cases.is_empty() {
        return Err(Error::Empty("no cases for the threshold sweep"));
    }
    if grid.is_empty() {
        return Err(Error::Empty("empty threshold grid"));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best: Option<(f64, f64)> = None;
    for &t in &sorted {
        let mut total = 0.0;
        for case in cases {
            total += ueo(case.uncertainty, case.pred, case.gt, t)?;
        }
        let mean = total / cases.len() as f64;
        if best.is_none_or(|(_, m)| mean > m) {
            best = Some((t, mean));
        }
    }
    Ok(best.expect("grid is non-empty"))
}

/// Metrics for one slice. Surface distance and the uncertainty metrics are
/// `None` where undefined (empty masks, no error region, no uncertainty map).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub dice: f64,
    pub assd: Option<f64>,
    pub ueo: Option<f64>,
    pub rve: Option<f64>,
    pub ueo_threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl MeanStd {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return None;
        }
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
        Some(Self {
            mean,
            std: var.sqrt(),
            count: v.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceReport {
    pub slice: usize,
    #[serde(flatten)]
    pub metrics: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackReport {
    pub slices: Vec<SliceReport>,
    /// Dice over the whole volume.
    pub volume_dice: f64,
    pub dice: Option<MeanStd>,
    pub assd: Option<MeanStd>,
    pub ueo: Option<MeanStd>,
    pub rve: Option<MeanStd>,
    pub rve_definition: String,
}

/// Per-slice reports and their mean and standard deviation.
pub fn evaluate_stack(
    pred: ndarray::ArrayView3<'_, u8>,
    gt: ndarray::ArrayView3<'_, u8>,
    uncertainty: Option<(ndarray::ArrayView3<'_, f64>, f64)>,
    spacing: (f64, f64),
) -> Result<StackReport> {
    same_shape(pred.shape(), gt.shape(), "evaluate")?;
    if let Some((u, _)) = uncertainty {
        same_shape(u.shape(), pred.shape(), "evaluate")?;
    }
    let mut slices = Vec::with_capacity(pred.dim().0);
    for k in 0..pred.dim().0 {
        let (p, g) = (pred.index_axis(Axis(0), k), gt.index_axis(Axis(0), k));
        let assd = match assd(p, g, spacing) {
            Ok(v) => Some(v),
            Err(Error::UndefinedSurfaceDistance(_)) => None,
            Err(e) => return Err(e),
        };
        let (ueo_v, rve_v, t) = match uncertainty {
            Some((u, t)) => {
                let u = u.index_axis(Axis(0), k);
                let r = match rve(u, p, g, t) {
                    Ok(v) => Some(v),
                    Err(Error::EmptyErrorRegion) => None,
                    Err(e) => return Err(e),
                };
                (Some(ueo(u, p, g, t)?), r, Some(t))
            }
            None => (None, None, None),
        };
        slices.push(SliceReport {
            slice: k,
            metrics: MetricReport {
                dice: dice(p, g)?,
                assd,
                ueo: ueo_v,
                rve: rve_v,
                ueo_threshold: t,
            },
        });
    }
    Ok(StackReport {
        volume_dice: dice(pred, gt)?,
        dice: MeanStd::of(slices.iter().map(|s| s.metrics.dice)),
        assd: MeanStd::of(slices.iter().filter_map(|s| s.metrics.assd)),
        ueo: MeanStd::of(slices.iter().filter_map(|s| s.metrics.ueo)),
        rve: MeanStd::of(slices.iter().filter_map(|s| s.metrics.rve)),
        rve_definition: RVE_DEFINITION.to_string(),
        slices,
    })
}
