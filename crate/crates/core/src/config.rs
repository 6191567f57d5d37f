use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the refinement engine.
///
/// The JSON form uses the field names below verbatim (`D` for the geodesic
/// clamp); missing fields take their defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    /// Weight of the probability-map region term.
    pub alpha: f64,
    /// Weight of the user-interaction term.
    pub beta: f64,
    /// Weight of the length term.
    pub lambda: f64,
    /// Weight of the distance-regularization term.
    pub mu: f64,
    /// Clamp on geodesic distances, in edge-cost units.
    #[serde(rename = "D")]
    pub d: f64,
    /// Width of the smoothed Heaviside and Dirac kernels, in pixels.
    pub epsilon: f64,
    /// Explicit Euler step.
    pub dt: f64,
    pub max_steps: usize,
    /// Stabilizer in the slice-uncertainty denominator.
    pub zeta: f64,
    /// Fraction of slices offered for review.
    pub m_prime_fraction: f64,
    /// Consecutive unedited fetches that end a session early.
    pub early_stop_count: usize,
    /// Intensity weight of the geodesic edge cost.
    pub gamma: f64,
    /// Binarization level of the fused probability map.
    pub threshold: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 0.5,
            lambda: 0.3,
            mu: 0.005,
            d: 4.0,
            epsilon: 1.5,
            dt: 1.0,
            max_steps: 200,
            zeta: 1e-6,
            m_prime_fraction: 0.6,
            early_stop_count: 3,
            gamma: 1.0,
            threshold: 0.5,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("lambda", self.lambda),
            ("mu", self.mu),
            ("gamma", self.gamma),
        ];
        for (name, value) in weights {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::Config(format!("{name} must be a nonnegative real, got {value}")));
            }
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.mu * self.dt < 0.25) {
            return Err(Error::Config(format!(
                "mu*dt = {} violates the stability bound mu*dt < 0.25",
                self.mu * self.dt
            )));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("threshold must lie in (0, 1), got {}", self.threshold)));
        }
        if !(self.d.is_finite() && self.d > 0.0) {
            return Err(Error::Config(format!("D must be positive, got {}", self.d)));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.zeta.is_finite() && self.zeta > 0.0) {
            return Err(Error::Config(format!("zeta must be positive, got {}", self.zeta)));
        }
        if !(self.m_prime_fraction > 0.0 && self.m_prime_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "m_prime_fraction must lie in (0, 1], got {}",
                self.m_prime_fraction
            )));
        }
        if self.early_stop_count == 0 {
            return Err(Error::Config("early_stop_count must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of slices offered for review out of `num_slices`: `ceil(fraction * M)`.
    pub fn m_prime(&self, num_slices: usize) -> usize {
        // guard against products like 0.6 * 5 landing one ulp above an integer
        let raw = (self.m_prime_fraction * num_slices as f64 - 1e-9).ceil() as usize;
        raw.clamp(1.min(num_slices), num_slices)
    }
}
