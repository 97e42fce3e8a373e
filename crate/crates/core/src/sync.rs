//! Synchronising condition for a colliding pair of opposite species and the
//! velocity selection that keeps a glued pair together.

use serde::{Deserialize, Serialize};

use crate::params::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncCheck {
    pub holds: bool,
    pub lhs: f64,
    pub rhs: f64,
}

/// `|(χ₁−χ₂)γ| ≤ ½(χ₁θ₂m₂ + χ₂θ₁m₁)`.
///
/// `gamma` is the external attraction on the pair and `m1`, `m2` the masses of
/// its species-1 and species-2 parts.
pub fn sync_condition(gamma: f64, m1: f64, m2: f64, p: &ModelParams) -> SyncCheck {
    let lhs = ((p.chi1 - p.chi2) * gamma).abs();
    let rhs = 0.5 * selection_denominator(m1, m2, p);
    SyncCheck {
        holds: lhs <= rhs,
        lhs,
        rhs,
    }
}

fn selection_denominator(m1: f64, m2: f64, p: &ModelParams) -> f64 {
    p.chi1 * p.theta2 * m2 + p.chi2 * p.theta1 * m1
}

/// Value `w` taken by the hatted kernel derivative at zero separation inside a
/// glued pair, `w = (χ₂−χ₁)γ / (χ₁θ₂m₂ + χ₂θ₁m₁)`.
pub fn glued_selection(gamma: f64, m1: f64, m2: f64, p: &ModelParams) -> f64 {
    (p.chi2 - p.chi1) * gamma / selection_denominator(m1, m2, p)
}

/// Common velocity `χ₁(γ + θ₂m₂w)` of a glued pair.
pub fn glued_velocity(gamma: f64, m1: f64, m2: f64, p: &ModelParams) -> f64 {
    let w = glued_selection(gamma, m1, m2, p);
    p.chi1 * (gamma + p.theta2 * m2 * w)
}

/// `+1` if species 1 runs ahead to the right of species 2 when a pair splits,
/// `-1` otherwise, from the sign of `(χ₁−χ₂)γ`.
pub fn overtaking_direction(gamma: f64, p: &ModelParams) -> f64 {
    if (p.chi1 - p.chi2) * gamma >= 0.0 {
        1.0
    } else {
        -1.0
    }
}
