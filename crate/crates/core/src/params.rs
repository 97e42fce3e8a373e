use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-species constants of the two-species model.
///
/// `chi` are chemosensitivities, `theta` the weights of each species in the
/// attracting density, `psi` the natural tumbling rates (kinetic model only).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub chi1: f64,
    pub chi2: f64,
    #[serde(default = "one")]
    pub theta1: f64,
    #[serde(default = "one")]
    pub theta2: f64,
    #[serde(default = "one")]
    pub psi1: f64,
    #[serde(default = "one")]
    pub psi2: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            chi1: 1.0,
            chi2: 1.0,
            theta1: 1.0,
            theta2: 1.0,
            psi1: 1.0,
            psi2: 1.0,
        }
    }
}

impl ModelParams {
    pub fn new(chi1: f64, chi2: f64, theta1: f64, theta2: f64) -> Result<Self> {
        let p = ModelParams {
            chi1,
            chi2,
            theta1,
            theta2,
            ..Default::default()
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("chi1", self.chi1),
            ("chi2", self.chi2),
            ("theta1", self.theta1),
            ("theta2", self.theta2),
            ("psi1", self.psi1),
            ("psi2", self.psi2),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation {
                    key: format!("params.{key}"),
                    message: format!("must be finite and strictly positive, got {v}"),
                });
            }
        }
        Ok(())
    }

    pub fn chi(&self, species: Species) -> f64 {
        match species {
            Species::One => self.chi1,
            Species::Two => self.chi2,
        }
    }

    pub fn theta(&self, species: Species) -> f64 {
        match species {
            Species::One => self.theta1,
            Species::Two => self.theta2,
        }
    }

    pub fn psi(&self, species: Species) -> f64 {
        match species {
            Species::One => self.psi1,
            Species::Two => self.psi2,
        }
    }

    pub fn chi_max(&self) -> f64 {
        self.chi1.max(self.chi2)
    }

    pub fn theta_sum(&self) -> f64 {
        self.theta1 + self.theta2
    }

    /// Weight `χ₁θ₂ / (χ₂θ₁)` of the species-2 term in the coupled metric.
    pub fn metric_weight(&self) -> f64 {
        self.chi1 * self.theta2 / (self.chi2 * self.theta1)
    }

    /// True iff `χ_α(θ₁ + θ₂) < 1` for both species, which keeps the tumbling
    /// rate positive for unit total masses.
    pub fn check_positivity_condition(&self) -> bool {
        self.chi1 * self.theta_sum() < 1.0 && self.chi2 * self.theta_sum() < 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Species {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
}

impl Species {
    pub const BOTH: [Species; 2] = [Species::One, Species::Two];
}
