//! Single-slice refinement: scribbles -> geodesic likelihood -> level-set
//! evolution -> mask.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::config::RefineConfig;
use crate::error::{Error, Result};
use crate::geodesic::likelihood_from_scribbles;
use crate::levelset::{energy, evolve, extract_mask, init_phi, EnergyBreakdown, LevelSetField};
use crate::scribble::{rasterize_scribbles, ScribbleSet};

#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub mask: Array2<u8>,
    pub phi: LevelSetField,
    pub eta: Array2<f64>,
    pub stats: RefinementStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementStats {
    pub energy_before: EnergyBreakdown,
    pub energy_after: EnergyBreakdown,
    pub steps: usize,
    pub foreground_pixels: usize,
    pub background_pixels: usize,
}

/// Refine one slice from its current mask.
///
/// `intensity` is the slice normalized to `[0, 1]` and `prob` the fused
/// foreground probability. The level set starts from the signed distance of
/// the current mask with scribbled pixels already relabeled, so that
/// scribbles far from the current contour still seed a front.
pub fn refine_slice(
    intensity: ArrayView2<'_, f64>,
    prob: ArrayView2<'_, f64>,
    mask: ArrayView2<'_, u8>,
    scribbles: &ScribbleSet,
    cfg: &RefineConfig,
) -> Result<Refinement> {
    cfg.validate()?;
    let (h, w) = mask.dim();
    if intensity.dim() != (h, w) || prob.dim() != (h, w) {
        return Err(Error::Shape(format!(
            "intensity {:?}, probability {:?} and mask {:?} must match",
            intensity.dim(),
            prob.dim(),
            mask.dim()
        )));
    }
    let constraints = rasterize_scribbles(scribbles, h, w)?;
    let eta = likelihood_from_scribbles(intensity, &constraints, cfg.gamma, cfg.d)?.eta;

    let mut seeded = mask.to_owned();
    for &p in &constraints.foreground {
        seeded[p] = 1;
    }
    for &p in &constraints.background {
        seeded[p] = 0;
    }
    let phi0 = init_phi(seeded.view());
    let energy_before = energy(phi0.phi.view(), prob, eta.view(), cfg)?;
    let phi = evolve(&phi0, prob, eta.view(), &constraints, cfg)?;
    let energy_after = energy(phi.phi.view(), prob, eta.view(), cfg)?;

    Ok(Refinement {
        mask: extract_mask(&phi),
        phi,
        eta,
        stats: RefinementStats {
            energy_before,
            energy_after,
            steps: cfg.max_steps,
            foreground_pixels: constraints.foreground.len(),
            background_pixels: constraints.background.len(),
        },
    })
}
