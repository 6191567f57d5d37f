//! Volume containers: intensity stacks, probability groups and binary masks.
//!
//! All arrays are indexed `[slice, row, col]` (with a leading predictor axis
//! for [`ProbabilityGroup`]). Containers validate their contents on
//! construction and are immutable afterwards, apart from the explicit
//! per-slice replacement on [`BinaryMask`].

use ndarray::{Array2, Array3, Array4, ArrayView2, ArrayView3, Axis};

use crate::error::{Error, Result};

/// A stack of 2D intensity slices with spacing metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Stack {
    data: Array3<f32>,
    /// (row mm, col mm)
    pixel_spacing: (f64, f64),
    slice_spacing: f64,
}

impl Stack {
    pub fn new(data: Array3<f32>, pixel_spacing: (f64, f64), slice_spacing: f64) -> Result<Self> {
        let (m, h, w) = data.dim();
        if m == 0 || h == 0 || w == 0 {
            return Err(Error::Shape(format!("stack must be non-empty, got {m}x{h}x{w}")));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite intensity {v}")));
        }
        check_spacing(&[pixel_spacing.0, pixel_spacing.1, slice_spacing])?;
        Ok(Self {
            data,
            pixel_spacing,
            slice_spacing,
        })
    }

    /// Stack with unit spacing.
    pub fn from_array(data: Array3<f32>) -> Result<Self> {
        Self::new(data, (1.0, 1.0), 1.0)
    }

    pub fn data(&self) -> ArrayView3<'_, f32> {
        self.data.view()
    }

    pub fn num_slices(&self) -> usize {
        self.data.dim().0
    }

    pub fn height(&self) -> usize {
        self.data.dim().1
    }

    pub fn width(&self) -> usize {
        self.data.dim().2
    }

    pub fn dim(&self) -> (usize, usize, usize) {
        self.data.dim()
    }

    pub fn pixel_spacing(&self) -> (f64, f64) {
        self.pixel_spacing
    }

    pub fn slice_spacing(&self) -> f64 {
        self.slice_spacing
    }

    pub fn slice(&self, k: usize) -> ArrayView2<'_, f32> {
        self.data.index_axis(Axis(0), k)
    }

    /// Slice `k` min-max normalized to `[0, 1]`. A constant slice maps to zeros.
    pub fn normalized_slice(&self, k: usize) -> Array2<f64> {
        normalize_min_max(self.slice(k))
    }

    pub fn into_data(self) -> Array3<f32> {
        self.data
    }
}

/// Min-max normalization of one slice to `[0, 1]`.
pub fn normalize_min_max(slice: ArrayView2<'_, f32>) -> Array2<f64> {
    let (lo, hi) = slice
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v as f64), hi.max(v as f64))
        });
    let range = hi - lo;
    if !(range > 0.0) {
        return Array2::zeros(slice.dim());
    }
    slice.mapv(|v| (v as f64 - lo) / range)
}

/// `N` per-pixel foreground probability maps, indexed `[predictor, slice, row, col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityGroup {
    data: Array4<f32>,
}

impl ProbabilityGroup {
    pub fn new(data: Array4<f32>) -> Result<Self> {
        let (n, m, h, w) = data.dim();
        if n == 0 {
            return Err(Error::Empty("probability group has no predictors"));
        }
        if m == 0 || h == 0 || w == 0 {
            return Err(Error::Shape(format!(
                "probability group must be non-empty, got {n}x{m}x{h}x{w}"
            )));
        }
        if let Some(v) = data.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
            return Err(Error::InvalidData(format!("probability {v} outside [0, 1]")));
        }
        Ok(Self { data })
    }

    pub fn data(&self) -> ndarray::ArrayView4<'_, f32> {
        self.data.view()
    }

    pub fn num_predictors(&self) -> usize {
        self.data.dim().0
    }

    /// Spatial dimensions `(slices, rows, cols)`.
    pub fn spatial_dim(&self) -> (usize, usize, usize) {
        let (_, m, h, w) = self.data.dim();
        (m, h, w)
    }

    pub fn into_data(self) -> Array4<f32> {
        self.data
    }
}

/// A binary segmentation volume with values exactly 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    data: Array3<u8>,
}

impl BinaryMask {
    pub fn new(data: Array3<u8>) -> Result<Self> {
        if let Some(v) = data.iter().find(|v| **v > 1) {
            return Err(Error::InvalidData(format!("mask value {v} is not 0 or 1")));
        }
        Ok(Self { data })
    }

    pub fn zeros(dim: (usize, usize, usize)) -> Self {
        Self {
            data: Array3::zeros(dim),
        }
    }

    pub fn data(&self) -> ArrayView3<'_, u8> {
        self.data.view()
    }

    pub fn dim(&self) -> (usize, usize, usize) {
        self.data.dim()
    }

    pub fn num_slices(&self) -> usize {
        self.data.dim().0
    }

    pub fn slice(&self, k: usize) -> ArrayView2<'_, u8> {
        self.data.index_axis(Axis(0), k)
    }

    /// Replace slice `k` with `mask`, which must be binary and of matching shape.
    pub fn set_slice(&mut self, k: usize, mask: ArrayView2<'_, u8>) -> Result<()> {
        let (m, h, w) = self.data.dim();
        if k >= m {
            return Err(Error::Shape(format!("slice {k} out of range for {m} slices")));
        }
        if mask.dim() != (h, w) {
            return Err(Error::Shape(format!(
                "slice mask {:?} does not match {h}x{w}",
                mask.dim()
            )));
        }
        if mask.iter().any(|v| *v > 1) {
            return Err(Error::InvalidData("slice mask is not binary".into()));
        }
        self.data.index_axis_mut(Axis(0), k).assign(&mask);
        Ok(())
    }

    pub fn into_data(self) -> Array3<u8> {
        self.data
    }
}

pub(crate) fn check_spacing(spacing: &[f64]) -> Result<()> {
    if spacing.iter().all(|s| s.is_finite() && *s > 0.0) {
        Ok(())
    } else {
        Err(Error::InvalidData(format!("spacing must be positive, got {spacing:?}")))
    }
}
