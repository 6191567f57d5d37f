//! Interactive distance-regularized level-set evolution.
//!
//! The field `phi` is positive inside the segmented region. It evolves by
//! explicit gradient descent on
//!
//! ```text
//! E(phi) = alpha * E_region + beta * E_user + lambda * E_length + mu * E_distance
//! ```
//!
//! where the region term compares the fused probability map against its
//! inside/outside means, the user term is the log-likelihood of the
//! interaction map `eta`, the length term is `sum delta(phi) |grad phi|` and
//! the distance term is the double-well potential `sum p(|grad phi|)`.
//! Scribbled pixels are hard constraints, projected after every step.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::config::RefineConfig;
use crate::edt::signed_distance;
use crate::error::{Error, Result};
use crate::scribble::Rasterized;

/// Level-set function on one slice; `phi > 0` inside.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetField {
    pub phi: Array2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionStats {
    /// Mean probability where `phi > 0`.
    pub c1: f64,
    /// Mean probability where `phi <= 0`.
    pub c2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub e_region: f64,
    pub e_user: f64,
    pub e_length: f64,
    pub e_distance: f64,
    pub e_total: f64,
}

/// Smoothed Dirac delta: `(1 + cos(pi x / eps)) / (2 eps)` on `|x| <= eps`.
#[inline]
pub fn dirac(x: f64, eps: f64) -> f64 {
    if x.abs() <= eps {
        (1.0 + (PI * x / eps).cos()) / (2.0 * eps)
    } else {
        0.0
    }
}

/// Smoothed Heaviside, the integral of [`dirac`].
#[inline]
pub fn heaviside(x: f64, eps: f64) -> f64 {
    if x >= eps {
        1.0
    } else if x <= -eps {
        0.0
    } else {
        0.5 * (1.0 + x / eps + (PI * x / eps).sin() / PI)
    }
}

/// Double-well potential with minima at `s = 0` and `s = 1`.
#[inline]
pub fn double_well(s: f64) -> f64 {
    if s <= 1.0 {
        (1.0 - (2.0 * PI * s).cos()) / (4.0 * PI * PI)
    } else {
        0.5 * (s - 1.0) * (s - 1.0)
    }
}

/// Diffusion rate `p'(s) / s` of the double well, `1` at `s = 0`.
#[inline]
pub fn double_well_rate(s: f64) -> f64 {
    if s == 0.0 {
        1.0
    } else if s <= 1.0 {
        (2.0 * PI * s).sin() / (2.0 * PI * s)
    } else {
        (s - 1.0) / s
    }
}

/// Signed Euclidean distance to the mask boundary, positive inside.
///
/// The boundary is taken on the pixel edges, half a pixel from the centers
/// of the pixels on either side, so the field crosses zero with unit slope
/// instead of jumping from -1 to +1 between neighbors.
pub fn init_phi(mask: ArrayView2<'_, u8>) -> LevelSetField {
    LevelSetField {
        phi: signed_distance(mask).mapv(|d| d - 0.5 * d.signum()),
    }
}

/// `mask = [phi > 0]`
pub fn extract_mask(field: &LevelSetField) -> Array2<u8> {
    field.phi.mapv(|v| (v > 0.0) as u8)
}

/// Mean probability inside and outside the zero level. An empty inside
/// falls back to `c1 = 1`, an empty outside to `c2 = 0`.
pub fn region_stats(prob: ArrayView2<'_, f64>, phi: ArrayView2<'_, f64>) -> RegionStats {
    let (mut sin, mut nin, mut sout, mut nout) = (0.0, 0usize, 0.0, 0usize);
    for (&p, &f) in prob.iter().zip(phi.iter()) {
        if f > 0.0 {
            sin += p;
            nin += 1;
        } else {
            sout += p;
            nout += 1;
        }
    }
    RegionStats {
        c1: if nin > 0 { sin / nin as f64 } else { 1.0 },
        c2: if nout > 0 { sout / nout as f64 } else { 0.0 },
    }
}

/// Central-difference gradient with replicated borders, `(d/drow, d/dcol)`.
fn gradient(f: &[f64], h: usize, w: usize, gr: &mut [f64], gc: &mut [f64]) {
    for r in 0..h {
        let up = r.saturating_sub(1) * w;
        let down = (r + 1).min(h - 1) * w;
        let row = r * w;
        for c in 0..w {
            let left = c.saturating_sub(1);
            let right = (c + 1).min(w - 1);
            gr[row + c] = 0.5 * (f[down + c] - f[up + c]);
            gc[row + c] = 0.5 * (f[row + right] - f[row + left]);
        }
    }
}

fn check_dims(phi: ArrayView2<'_, f64>, prob: ArrayView2<'_, f64>, eta: ArrayView2<'_, f64>) -> Result<()> {
    if phi.dim() != prob.dim() || phi.dim() != eta.dim() {
        return Err(Error::Shape(format!(
            "phi {:?}, probability {:?} and likelihood {:?} must match",
            phi.dim(),
            prob.dim(),
            eta.dim()
        )));
    }
    Ok(())
}

fn check_likelihood(eta: ArrayView2<'_, f64>) -> Result<()> {
    if eta.iter().all(|&e| e > 0.0 && e < 1.0) {
        Ok(())
    } else {
        Err(Error::DegenerateLikelihood)
    }
}

/// Discrete energy of `phi` (unit pixel area, same gradient stencil as the
/// evolution).
pub fn energy(
    phi: ArrayView2<'_, f64>,
    prob: ArrayView2<'_, f64>,
    eta: ArrayView2<'_, f64>,
    cfg: &RefineConfig,
) -> Result<EnergyBreakdown> {
    check_dims(phi, prob, eta)?;
    check_likelihood(eta)?;
    let (h, w) = phi.dim();
    let eps = cfg.epsilon;
    let RegionStats { c1, c2 } = region_stats(prob, phi);

    let f: Vec<f64> = phi.iter().copied().collect();
    let mut gr = vec![0.0; h * w];
    let mut gc = vec![0.0; h * w];
    gradient(&f, h, w, &mut gr, &mut gc);

    let mut e = EnergyBreakdown {
        e_region: 0.0,
        e_user: 0.0,
        e_length: 0.0,
        e_distance: 0.0,
        e_total: 0.0,
    };
    for (i, (&p, &n)) in prob.iter().zip(eta.iter()).enumerate() {
        let x = f[i];
        let (hin, hout) = (heaviside(x, eps), heaviside(-x, eps));
        e.e_region += (p - c1).powi(2) * hin + (p - c2).powi(2) * hout;
        e.e_user -= hin * n.ln() + hout * (1.0 - n).ln();
        let s = gr[i].hypot(gc[i]);
        e.e_length += dirac(x, eps) * s;
        e.e_distance += double_well(s);
    }
    e.e_total = cfg.alpha * e.e_region + cfg.beta * e.e_user + cfg.lambda * e.e_length + cfg.mu * e.e_distance;
    Ok(e)
}

/// Pointwise derivative of `alpha * E_region + beta * E_user` with respect to
/// `phi`, holding `c1`, `c2` at their current values.
pub fn data_term_gradient(
    phi: ArrayView2<'_, f64>,
    prob: ArrayView2<'_, f64>,
    eta: ArrayView2<'_, f64>,
    cfg: &RefineConfig,
) -> Result<Array2<f64>> {
    check_dims(phi, prob, eta)?;
    check_likelihood(eta)?;
    let RegionStats { c1, c2 } = region_stats(prob, phi);
    let mut out = Array2::zeros(phi.dim());
    ndarray::Zip::from(&mut out)
        .and(phi)
        .and(prob)
        .and(eta)
        .for_each(|g, &x, &p, &n| {
            let d = dirac(x, cfg.epsilon);
            *g = cfg.alpha * d * ((p - c1).powi(2) - (p - c2).powi(2)) - cfg.beta * d * (n.ln() - (1.0 - n).ln());
        });
    Ok(out)
}

/// Explicit-Euler solver state. [`evolve`] runs it for `cfg.max_steps`.
pub struct LevelSetSolver<'a> {
    h: usize,
    w: usize,
    phi: Vec<f64>,
    next: Vec<f64>,
    prob: Vec<f64>,
    log_odds: Vec<f64>,
    foreground: Vec<usize>,
    background: Vec<usize>,
    cfg: &'a RefineConfig,
    steps: usize,
    // scratch
    gr: Vec<f64>,
    gc: Vec<f64>,
    nr: Vec<f64>,
    nc: Vec<f64>,
    dr: Vec<f64>,
    dc: Vec<f64>,
}

impl<'a> LevelSetSolver<'a> {
    pub fn new(
        phi0: &LevelSetField,
        prob: ArrayView2<'_, f64>,
        eta: ArrayView2<'_, f64>,
        constraints: &Rasterized,
        cfg: &'a RefineConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        check_dims(phi0.phi.view(), prob, eta)?;
        check_likelihood(eta)?;
        let (h, w) = phi0.phi.dim();
        let index = |&(r, c): &(usize, usize)| -> Result<usize> {
            if r < h && c < w {
                Ok(r * w + c)
            } else {
                Err(Error::Shape(format!("constraint pixel ({r}, {c}) outside {h}x{w}")))
            }
        };
        let n = h * w;
        let mut solver = Self {
            h,
            w,
            phi: phi0.phi.iter().copied().collect(),
            next: vec![0.0; n],
            prob: prob.iter().copied().collect(),
            log_odds: eta.iter().map(|&e| e.ln() - (1.0 - e).ln()).collect(),
            foreground: constraints.foreground.iter().map(index).collect::<Result<_>>()?,
            background: constraints.background.iter().map(index).collect::<Result<_>>()?,
            cfg,
            steps: 0,
            gr: vec![0.0; n],
            gc: vec![0.0; n],
            nr: vec![0.0; n],
            nc: vec![0.0; n],
            dr: vec![0.0; n],
            dc: vec![0.0; n],
        };
        if let Some(x) = solver.phi.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("initial level set contains {x}")));
        }
        solver.project();
        Ok(solver)
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn field(&self) -> LevelSetField {
        LevelSetField {
            phi: Array2::from_shape_vec((self.h, self.w), self.phi.clone()).expect("shape preserved"),
        }
    }

    pub fn into_field(self) -> LevelSetField {
        LevelSetField {
            phi: Array2::from_shape_vec((self.h, self.w), self.phi).expect("shape preserved"),
        }
    }

    fn project(&mut self) {
        let eps = self.cfg.epsilon;
        for &i in &self.foreground {
            self.phi[i] = self.phi[i].max(eps);
        }
        for &i in &self.background {
            self.phi[i] = self.phi[i].min(-eps);
        }
    }

    fn region_means(&self) -> (f64, f64) {
        let (mut sin, mut nin, mut sout, mut nout) = (0.0, 0usize, 0.0, 0usize);
        for (&p, &f) in self.prob.iter().zip(&self.phi) {
            if f > 0.0 {
                sin += p;
                nin += 1;
            } else {
                sout += p;
                nout += 1;
            }
        }
        (
            if nin > 0 { sin / nin as f64 } else { 1.0 },
            if nout > 0 { sout / nout as f64 } else { 0.0 },
        )
    }

    /// One explicit update followed by the scribble projection.
    pub fn step(&mut self) -> Result<()> {
        let (h, w) = (self.h, self.w);
        let cfg = self.cfg;
        let (c1, c2) = self.region_means();

        gradient(&self.phi, h, w, &mut self.gr, &mut self.gc);
        for i in 0..h * w {
            let (gr, gc) = (self.gr[i], self.gc[i]);
            let s = (gr * gr + gc * gc).sqrt();
            let inv = 1.0 / s.max(1e-8);
            self.nr[i] = gr * inv;
            self.nc[i] = gc * inv;
            // div(d_p grad) = div((d_p - 1) grad) + laplacian
            let k = double_well_rate(s) - 1.0;
            self.dr[i] = k * gr;
            self.dc[i] = k * gc;
        }

        let mut finite = true;
        for r in 0..h {
            let up = r.saturating_sub(1) * w;
            let down = (r + 1).min(h - 1) * w;
            let row = r * w;
            for c in 0..w {
                let i = row + c;
                let terms = self.terms(i, up + c, down + c, row + c.saturating_sub(1), row + (c + 1).min(w - 1), c1, c2);
                let v = self.phi[i] + cfg.dt * terms.iter().sum::<f64>();
                finite &= v.is_finite();
                self.next[i] = v;
            }
        }
        if !finite {
            return Err(self.divergence(c1, c2));
        }
        std::mem::swap(&mut self.phi, &mut self.next);
        self.project();
        self.steps += 1;
        Ok(())
    }

    /// `[region, user, length, distance]` update terms at pixel `i` given
    /// its four replicated-border neighbors.
    #[inline(always)]
    #[allow(clippy::too_many_arguments)]
    fn terms(&self, i: usize, up: usize, down: usize, left: usize, right: usize, c1: f64, c2: f64) -> [f64; 4] {
        let cfg = self.cfg;
        let x = self.phi[i];
        let laplacian = self.phi[down] + self.phi[up] + self.phi[right] + self.phi[left] - 4.0 * x;
        let regularizer = 0.5 * (self.dr[down] - self.dr[up]) + 0.5 * (self.dc[right] - self.dc[left]) + laplacian;
        let distance = cfg.mu * regularizer;
        if x.abs() > cfg.epsilon {
            // outside the band the Dirac kernel vanishes
            return [0.0, 0.0, 0.0, distance];
        }
        let d = dirac(x, cfg.epsilon);
        let curvature = 0.5 * (self.nr[down] - self.nr[up]) + 0.5 * (self.nc[right] - self.nc[left]);
        let p = self.prob[i];
        [
            cfg.alpha * d * ((p - c2) * (p - c2) - (p - c1) * (p - c1)),
            cfg.beta * d * self.log_odds[i],
            cfg.lambda * d * curvature,
            distance,
        ]
    }

    /// Largest magnitude of each update term, for the divergence report.
    fn divergence(&self, c1: f64, c2: f64) -> Error {
        let (h, w) = (self.h, self.w);
        let mut max_terms = [0.0f64; 4];
        for r in 0..h {
            let up = r.saturating_sub(1) * w;
            let down = (r + 1).min(h - 1) * w;
            let row = r * w;
            for c in 0..w {
                let t = self.terms(row + c, up + c, down + c, row + c.saturating_sub(1), row + (c + 1).min(w - 1), c1, c2);
                for (m, v) in max_terms.iter_mut().zip(t) {
                    // NaN wins so the offending term shows up in the report
                    *m = if v.is_nan() || m.is_nan() { f64::NAN } else { m.max(v.abs()) };
                }
            }
        }
        Error::Diverged {
            step: self.steps,
            region: max_terms[0],
            user: max_terms[1],
            length: max_terms[2],
            distance: max_terms[3],
        }
    }
}

/// Run `cfg.max_steps` updates from `phi0`.
pub fn evolve(
    phi0: &LevelSetField,
    prob: ArrayView2<'_, f64>,
    eta: ArrayView2<'_, f64>,
    constraints: &Rasterized,
    cfg: &RefineConfig,
) -> Result<LevelSetField> {
    let mut solver = LevelSetSolver::new(phi0, prob, eta, constraints, cfg)?;
    for _ in 0..cfg.max_steps {
        solver.step()?;
    }
    Ok(solver.into_field())
}

/// Mean `|grad phi|` over the band `|phi| < width`, or `None` if the band is empty.
pub fn band_gradient_mean(phi: ArrayView2<'_, f64>, width: f64) -> Option<f64> {
    let (h, w) = phi.dim();
    let f: Vec<f64> = phi.iter().copied().collect();
    let mut gr = vec![0.0; h * w];
    let mut gc = vec![0.0; h * w];
    gradient(&f, h, w, &mut gr, &mut gc);
    let (sum, n) = f
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() < width)
        .fold((0.0, 0usize), |(s, n), (i, _)| (s + gr[i].hypot(gc[i]), n + 1));
    (n > 0).then(|| sum / n as f64)
}
