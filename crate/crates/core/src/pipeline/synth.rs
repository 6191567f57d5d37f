//! Deterministic synthetic stacks: elliptical targets with speckle noise and
//! an ensemble of noisy predictors, some slices deliberately corrupted.

use std::f64::consts::PI;

use ndarray::{Array2, Array3, Array4, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::edt::signed_distance;
use crate::error::{Error, Result};
use crate::volume::{BinaryMask, ProbabilityGroup, Stack};

/// Shape and noise parameters of a synthetic stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub num_slices: usize,
    pub height: usize,
    pub width: usize,
    pub num_predictors: usize,
    /// Number of corrupted slices, chosen at random when `hard_slices` is unset.
    pub num_hard: usize,
    pub hard_slices: Option<Vec<usize>>,
    /// Scales the predictor disagreement on corrupted slices; 0 disables it.
    pub corruption: f64,
    /// Radius range of the corrupted patch, in pixels.
    pub corruption_radius: (f64, f64),
    /// Standard deviation of each predictor's boundary jitter, in pixels.
    pub boundary_noise: f64,
    /// Multiplicative speckle strength on the intensities.
    pub speckle: f64,
    /// Semi-axis range of the targets, in pixels.
    pub semi_axis: (f64, f64),
    /// Slices that get a small target instead.
    pub small_slices: Vec<usize>,
    pub small_semi_axis: (f64, f64),
    /// `(row mm, col mm)`
    pub pixel_spacing: (f64, f64),
    pub slice_spacing: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_slices: 10,
            height: 64,
            width: 64,
            num_predictors: 4,
            num_hard: 2,
            hard_slices: None,
            corruption: 1.0,
            corruption_radius: (5.0, 8.0),
            boundary_noise: 0.2,
            speckle: 0.05,
            semi_axis: (11.0, 20.0),
            small_slices: Vec::new(),
            small_semi_axis: (4.5, 6.0),
            pixel_spacing: (1.0, 1.0),
            slice_spacing: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Corruption {
    /// Part of the target is missed.
    Under,
    /// A patch of background is claimed.
    Over,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCase {
    pub stack: Stack,
    pub gt: BinaryMask,
    pub probs: ProbabilityGroup,
    /// Corrupted slices and how they were corrupted, ascending by slice.
    pub hard_slices: Vec<(usize, Corruption)>,
}

impl SyntheticCase {
    pub fn is_hard(&self, slice: usize) -> bool {
        self.hard_slices.iter().any(|(s, _)| *s == slice)
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.num_slices == 0 || self.height < 8 || self.width < 8 || self.num_predictors == 0 {
            return Err(Error::Config(format!(
                "synthetic stack needs at least one slice, 8x8 pixels and one predictor, got {}x{}x{} with {} predictors",
                self.num_slices, self.height, self.width, self.num_predictors
            )));
        }
        let ranges = [self.semi_axis, self.small_semi_axis, self.corruption_radius];
        if ranges.iter().any(|(lo, hi)| !(*lo > 0.0 && lo <= hi)) {
            return Err(Error::Config("synthetic ranges must be positive and ordered".into()));
        }
        if !(self.corruption >= 0.0 && self.boundary_noise >= 0.0 && self.speckle >= 0.0) {
            return Err(Error::Config("noise levels must be nonnegative".into()));
        }
        if let Some(hard) = &self.hard_slices {
            if hard.iter().any(|&k| k >= self.num_slices) {
                return Err(Error::Config(format!("hard slice index out of range in {hard:?}")));
            }
        } else if self.num_hard > self.num_slices {
            return Err(Error::Config("more hard slices than slices".into()));
        }
        if self.small_slices.iter().any(|&k| k >= self.num_slices) {
            return Err(Error::Config("small slice index out of range".into()));
        }
        Ok(())
    }
}

fn sample(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Low-frequency random field: a sum of three plane waves scaled to
/// standard deviation `sigma`.
fn smooth_field(rng: &mut ChaCha8Rng, dim: (usize, usize), sigma: f64) -> Array2<f64> {
    let waves: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            let freq = rng.random_range(0.05..0.2);
            let dir = rng.random_range(0.0..PI);
            let phase = rng.random_range(0.0..2.0 * PI);
            (freq * dir.cos(), freq * dir.sin(), phase)
        })
        .collect();
    let scale = sigma / 1.5f64.sqrt();
    Array2::from_shape_fn(dim, |(r, c)| {
        scale
            * waves
                .iter()
                .map(|(fr, fc, ph)| (fr * r as f64 + fc * c as f64 + ph).sin())
                .sum::<f64>()
    })
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Generate a stack, its ground truth and an ensemble of predictions.
///
/// Every predictor is a logistic transform of the signed distance to the
/// true boundary plus a smooth per-predictor jitter. On corrupted slices the
/// predictors additionally disagree, by different amounts, over a patch
/// centered on the boundary, so that their mean is wrong there.
pub fn generate_synthetic_stack(spec: &SynthSpec, seed: u64) -> Result<SyntheticCase> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, h, w, n) = (spec.num_slices, spec.height, spec.width, spec.num_predictors);

    let mut hard: Vec<usize> = match &spec.hard_slices {
        Some(list) => list.clone(),
        None => {
            let mut all: Vec<usize> = (0..m).collect();
            all.shuffle(&mut rng);
            all.truncate(spec.num_hard);
            all
        }
    };
    hard.sort_unstable();
    hard.dedup();

    let mut intensity = Array3::<f32>::zeros((m, h, w));
    let mut gt = Array3::<u8>::zeros((m, h, w));
    let mut probs = Array4::<f32>::zeros((n, m, h, w));
    let mut hard_slices = Vec::new();
    let speckle = Normal::new(0.0, spec.speckle.max(1e-12)).expect("valid normal");
    let offsets = Normal::new(0.0, (spec.boundary_noise * 0.5).max(1e-12)).expect("valid normal");

    for k in 0..m {
        let axes = if spec.small_slices.contains(&k) {
            spec.small_semi_axis
        } else {
            spec.semi_axis
        };
        let a = sample(&mut rng, axes);
        let b = sample(&mut rng, axes);
        let max_axis = a.max(b);
        let jitter = |rng: &mut ChaCha8Rng, extent: usize| {
            let room = (extent as f64 / 2.0 - max_axis - 2.0).max(0.0);
            extent as f64 / 2.0 + if room > 0.0 { rng.random_range(-room..room) * 0.5 } else { 0.0 }
        };
        let cr = jitter(&mut rng, h);
        let cc = jitter(&mut rng, w);
        let theta: f64 = rng.random_range(0.0..PI);
        let (st, ct) = theta.sin_cos();

        let slice_gt = Array2::from_shape_fn((h, w), |(r, c)| {
            let (y, x) = (r as f64 - cr, c as f64 - cc);
            let u = ct * x + st * y;
            let v = -st * x + ct * y;
            ((u / a).powi(2) + (v / b).powi(2) < 1.0) as u8
        });
        let sdf = signed_distance(slice_gt.view());

        for ((r, c), &g) in slice_gt.indexed_iter() {
            let base = if g == 1 { 0.75 } else { 0.25 };
            let noisy = base * (1.0 + speckle.sample(&mut rng));
            intensity[[k, r, c]] = noisy as f32;
        }

        // corrupted patch: (weight map, sign, per-predictor strength)
        let patch = if hard.contains(&k) {
            let mode = if rng.random_bool(0.5) { Corruption::Under } else { Corruption::Over };
            let psi: f64 = rng.random_range(0.0..2.0 * PI);
            let (u, v) = (a * psi.cos(), b * psi.sin());
            let pr = cr + st * u + ct * v;
            let pc = cc + ct * u - st * v;
            let radius = sample(&mut rng, spec.corruption_radius).min(0.9 * a.min(b) + 2.0);
            let mut factors: Vec<f64> = (0..n).map(|i| 2.1 * i as f64 / (n.max(2) - 1) as f64).collect();
            factors.shuffle(&mut rng);
            let sign = match mode {
                Corruption::Under => -1.0,
                Corruption::Over => 1.0,
            };
            hard_slices.push((k, mode));
            let weight = Array2::from_shape_fn((h, w), |(r, c)| {
                let d2 = (r as f64 - pr).powi(2) + (c as f64 - pc).powi(2);
                (1.0 - d2 / (radius * radius)).max(0.0)
            });
            Some((weight, sign * spec.corruption * (radius + 1.0), factors))
        } else {
            None
        };

        for i in 0..n {
            let field = smooth_field(&mut rng, (h, w), spec.boundary_noise);
            let offset = offsets.sample(&mut rng);
            let mut pk = probs.index_axis_mut(Axis(0), i);
            let mut pk = pk.index_axis_mut(Axis(0), k);
            for ((r, c), p) in pk.indexed_iter_mut() {
                let mut logit = sdf[[r, c]] + field[[r, c]] + offset;
                if let Some((weight, amplitude, factors)) = &patch {
                    logit += amplitude * factors[i] * weight[[r, c]];
                }
                *p = sigmoid(logit) as f32;
            }
        }
        gt.index_axis_mut(Axis(0), k).assign(&slice_gt);
    }

    Ok(SyntheticCase {
        stack: Stack::new(intensity, spec.pixel_spacing, spec.slice_spacing)?,
        gt: BinaryMask::new(gt)?,
        probs: ProbabilityGroup::new(probs)?,
        hard_slices,
    })
}
