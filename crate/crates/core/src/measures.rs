//! Discrete nonnegative measures on the line and the metrics used to compare them.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;

/// Atoms at strictly increasing positions carrying nonnegative masses.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    positions: Vec<f64>,
    masses: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(positions: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if positions.len() != masses.len() {
            return Err(Error::domain(format!(
                "{} positions but {} masses",
                positions.len(),
                masses.len()
            )));
        }
        if let Some(w) = positions.windows(2).find(|w| !(w[0] < w[1])) {
            return Err(Error::domain(format!(
                "positions must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        if let Some(p) = positions.iter().find(|p| !p.is_finite()) {
            return Err(Error::NonFinite(format!("position {p}")));
        }
        if let Some(m) = masses.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
            return Err(Error::domain(format!("mass {m} must be finite and nonnegative")));
        }
        Ok(DiscreteMeasure { positions, masses })
    }

    pub fn dirac(position: f64, mass: f64) -> Result<Self> {
        Self::new(vec![position], vec![mass])
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Copy rescaled to unit mass.
    pub fn normalized(&self) -> Result<Self> {
        let total = self.total_mass();
        if !(total > 0.0) {
            return Err(Error::domain("cannot normalize a measure with zero mass"));
        }
        Ok(DiscreteMeasure {
            positions: self.positions.clone(),
            masses: self.masses.iter().map(|m| m / total).collect(),
        })
    }

    /// Two-column CSV: `position,mass`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["position", "mass"])?;
        for (x, m) in self.positions.iter().zip(&self.masses) {
            out.write_record([fmt_f64(*x), fmt_f64(*m)])?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut positions = Vec::new();
        let mut masses = Vec::new();
        for row in rdr.deserialize() {
            let (x, m): (f64, f64) = row?;
            positions.push(x);
            masses.push(m);
        }
        Self::new(positions, masses)
    }
}

/// Both species of the two-species model.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpeciesPair {
    pub rho1: DiscreteMeasure,
    pub rho2: DiscreteMeasure,
}

impl SpeciesPair {
    pub fn new(rho1: DiscreteMeasure, rho2: DiscreteMeasure) -> Self {
        SpeciesPair { rho1, rho2 }
    }

    /// Three-column CSV on a shared grid: `position,mass1,mass2`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        if self.rho1.positions != self.rho2.positions {
            return Err(Error::domain("species must share a grid to be written as one table"));
        }
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["position", "mass1", "mass2"])?;
        for ((x, a), b) in self.rho1.positions.iter().zip(&self.rho1.masses).zip(&self.rho2.masses) {
            out.write_record([fmt_f64(*x), fmt_f64(*a), fmt_f64(*b)])?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let (mut xs, mut a, mut b) = (Vec::new(), Vec::new(), Vec::new());
        for row in rdr.deserialize() {
            let (x, m1, m2): (f64, f64, f64) = row?;
            xs.push(x);
            a.push(m1);
            b.push(m2);
        }
        Ok(SpeciesPair {
            rho1: DiscreteMeasure::new(xs.clone(), a)?,
            rho2: DiscreteMeasure::new(xs, b)?,
        })
    }
}

/// Shortest representation that round-trips exactly.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

const NORMALIZATION_TOL: f64 = 1e-12;

/// Generalized inverse of the cumulative distribution,
/// `inf{x : m((-∞, x)) > z}`, for a unit-mass measure.
pub fn quantile(m: &DiscreteMeasure, z: f64) -> Result<f64> {
    if !(z > 0.0 && z < 1.0) {
        return Err(Error::domain(format!("quantile level {z} outside (0, 1)")));
    }
    let total = m.total_mass();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::domain(format!("measure has mass {total}, expected 1")));
    }
    let mut cum = 0.0;
    for (x, w) in m.positions.iter().zip(&m.masses) {
        cum += w;
        if cum > z {
            return Ok(*x);
        }
    }
    // Only reachable through roundoff in the last atom.
    m.positions
        .iter()
        .zip(&m.masses)
        .rev()
        .find(|(_, w)| **w > 0.0)
        .map(|(x, _)| *x)
        .ok_or_else(|| Error::domain("empty measure"))
}

/// Atoms with positive mass and their cumulative distribution, the last
/// breakpoint pinned to exactly 1.
fn staircase(m: &DiscreteMeasure) -> Result<(Vec<f64>, Vec<f64>)> {
    let total = m.total_mass();
    if m.is_empty() || !(total > 0.0) {
        return Err(Error::domain("Wasserstein distance of an empty measure"));
    }
    let mut xs = Vec::with_capacity(m.len());
    let mut cum = Vec::with_capacity(m.len());
    let mut acc = 0.0;
    for (x, w) in m.positions.iter().zip(&m.masses) {
        if *w > 0.0 {
            acc += w / total;
            xs.push(*x);
            cum.push(acc);
        }
    }
    if let Some(last) = cum.last_mut() {
        *last = 1.0;
    }
    Ok((xs, cum))
}

/// Quadratic Wasserstein distance between the normalizations of `a` and `b`,
/// computed exactly by sweeping the merged breakpoints of both quantile
/// staircases.
pub fn wasserstein2(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<f64> {
    Ok(wasserstein2_squared(a, b)?.sqrt())
}

pub fn wasserstein2_squared(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<f64> {
    let (xa, ca) = staircase(a)?;
    let (xb, cb) = staircase(b)?;
    let (mut i, mut j) = (0, 0);
    let mut z = 0.0;
    let mut acc = 0.0;
    while i < xa.len() && j < xb.len() {
        let next = ca[i].min(cb[j]);
        let d = xa[i] - xb[j];
        acc += d * d * (next - z);
        z = next;
        if ca[i] <= next {
            i += 1;
        }
        if cb[j] <= next {
            j += 1;
        }
    }
    Ok(acc)
}

/// Product metric `sqrt(d_W(u₁,v₁)² + (χ₁θ₂)/(χ₂θ₁)·d_W(u₂,v₂)²)`.
pub fn coupled_w2(u: &SpeciesPair, v: &SpeciesPair, p: &ModelParams) -> Result<f64> {
    let d1 = wasserstein2_squared(&u.rho1, &v.rho1)?;
    let d2 = wasserstein2_squared(&u.rho2, &v.rho2)?;
    Ok((d1 + p.metric_weight() * d2).sqrt())
}

/// Mass, first and second moment.
pub fn moments(m: &DiscreteMeasure) -> (f64, f64, f64) {
    m.positions
        .iter()
        .zip(&m.masses)
        .fold((0.0, 0.0, 0.0), |(m0, m1, m2), (x, w)| (m0 + w, m1 + w * x, m2 + w * x * x))
}

/// `(θ₁/χ₁)∫x dρ₁ + (θ₂/χ₂)∫x dρ₂`, invariant under the dynamics.
pub fn weighted_center(u: &SpeciesPair, p: &ModelParams) -> f64 {
    p.theta1 / p.chi1 * moments(&u.rho1).1 + p.theta2 / p.chi2 * moments(&u.rho2).1
}

/// Uniform grid of cells `[xmin + jΔx, xmin + (j+1)Δx)`, values at cell centers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub xmin: f64,
    pub xmax: f64,
    pub dx: f64,
}

impl Grid {
    pub fn new(xmin: f64, xmax: f64, dx: f64) -> Result<Self> {
        let g = Grid { xmin, xmax, dx };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.xmin.is_finite() && self.xmax.is_finite() && self.xmax > self.xmin) {
            return Err(Error::Validation {
                key: "grid.xmax".into(),
                message: format!("need finite xmin < xmax, got [{}, {}]", self.xmin, self.xmax),
            });
        }
        if !(self.dx.is_finite() && self.dx > 0.0 && self.dx <= self.xmax - self.xmin) {
            return Err(Error::Validation {
                key: "grid.dx".into(),
                message: format!("spacing {} must be positive and below the domain width", self.dx),
            });
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        ((self.xmax - self.xmin) / self.dx).round() as usize
    }

    pub fn center(&self, j: usize) -> f64 {
        self.xmin + (j as f64 + 0.5) * self.dx
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.cells()).map(|j| self.center(j)).collect()
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }
}

/// Gaussian bump `amplitude·e^{-w(x - center)²}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub amplitude: f64,
    pub center: f64,
}

/// Default exponent `w` of the bumps `e^{-5000x²}`.
pub const DEFAULT_BUMP_WIDTH: f64 = 5000.0;

/// Mass of a unit-amplitude bump of exponent `w`: `√(π/w)`.
pub fn bump_mass_unit(width: f64) -> f64 {
    (std::f64::consts::PI / width).sqrt()
}

/// `m₀ = ∫e^{-5000x²}dx`.
pub fn m0() -> f64 {
    bump_mass_unit(DEFAULT_BUMP_WIDTH)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledBumps {
    pub measure: DiscreteMeasure,
    /// Set when the grid has fewer than 8 cells per bump standard deviation.
    pub coarse: bool,
}

/// Midpoint-rule cell masses of a sum of Gaussian bumps.
pub fn sample_gaussian_bumps(bumps: &[Bump], width: f64, grid: &Grid) -> Result<SampledBumps> {
    grid.validate()?;
    if !(width.is_finite() && width > 0.0) {
        return Err(Error::domain(format!("bump exponent {width} must be positive")));
    }
    // erfc(5) ≈ 1.5e-12: five "√w units" hold all but 1e-12 of the mass.
    let reach = 5.0 / width.sqrt();
    for b in bumps {
        if !(b.amplitude.is_finite() && b.amplitude >= 0.0) {
            return Err(Error::domain(format!("bump amplitude {} must be nonnegative", b.amplitude)));
        }
        if b.center - reach < grid.xmin || b.center + reach > grid.xmax {
            return Err(Error::domain(format!(
                "bump at {} is truncated by the grid [{}, {}]",
                b.center, grid.xmin, grid.xmax
            )));
        }
    }
    let sigma = 1.0 / (2.0 * width).sqrt();
    let positions = grid.centers();
    let masses = positions
        .iter()
        .map(|x| {
            bumps
                .iter()
                .map(|b| b.amplitude * (-width * (x - b.center).powi(2)).exp())
                .sum::<f64>()
                * grid.dx
        })
        .collect();
    Ok(SampledBumps {
        measure: DiscreteMeasure::new(positions, masses)?,
        coarse: grid.dx > sigma / 8.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_atoms() -> DiscreteMeasure {
        DiscreteMeasure::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap()
    }

    /// CDF scan on a fine z-grid, independent of the early-exit loop in `quantile`.
    fn brute_quantile(m: &DiscreteMeasure, z: f64) -> f64 {
        let mut best = f64::INFINITY;
        for (k, x) in m.positions().iter().enumerate() {
            let below: f64 = m.masses()[..=k].iter().sum();
            if below > z && *x < best {
                best = *x;
            }
        }
        best
    }

    #[test]
    fn quantile_examples() {
        let d = DiscreteMeasure::dirac(3.7, 1.0).unwrap();
        for z in [0.01, 0.5, 0.99] {
            assert_eq!(quantile(&d, z).unwrap(), 3.7);
        }
        let m = two_atoms();
        assert_eq!(quantile(&m, 0.25).unwrap(), 0.0);
        assert_eq!(quantile(&m, 0.75).unwrap(), 1.0);
        assert_eq!(quantile(&m, 0.5).unwrap(), 1.0);
        for z in [0.25, 0.5, 0.75] {
            assert_eq!(quantile(&m, z).unwrap(), brute_quantile(&m, z));
        }
    }

    #[test]
    fn quantile_errors() {
        let m = two_atoms();
        assert!(quantile(&m, 0.0).is_err());
        assert!(quantile(&m, 1.0).is_err());
        let heavy = DiscreteMeasure::new(vec![0.0], vec![2.0]).unwrap();
        assert!(quantile(&heavy, 0.5).is_err());
    }

    #[test]
    fn w2_examples() {
        let d0 = DiscreteMeasure::dirac(0.0, 1.0).unwrap();
        let d1 = DiscreteMeasure::dirac(1.0, 1.0).unwrap();
        assert_eq!(wasserstein2(&d0, &d1).unwrap(), 1.0);
        assert_eq!(wasserstein2(&d1, &d1).unwrap(), 0.0);
        let sym = DiscreteMeasure::new(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap();
        assert!((wasserstein2(&d0, &sym).unwrap() - 1.0).abs() < 1e-15);
        assert!(wasserstein2(&d0, &DiscreteMeasure::empty()).is_err());
        // non-unit inputs are normalized
        let d5 = DiscreteMeasure::dirac(1.0, 5.0).unwrap();
        assert_eq!(wasserstein2(&d0, &d5).unwrap(), 1.0);
    }

    #[test]
    fn coupled_examples() {
        let p_eq = ModelParams::new(1.0, 1.0, 1.0, 1.0).unwrap();
        let p_10 = ModelParams::new(10.0, 1.0, 1.0, 1.0).unwrap();
        let d = 0.3;
        let u = SpeciesPair::new(
            DiscreteMeasure::dirac(0.0, 1.0).unwrap(),
            DiscreteMeasure::dirac(0.5, 1.0).unwrap(),
        );
        let v = SpeciesPair::new(
            DiscreteMeasure::dirac(0.0, 1.0).unwrap(),
            DiscreteMeasure::dirac(0.5 + d, 1.0).unwrap(),
        );
        assert_eq!(coupled_w2(&u, &u, &p_10).unwrap(), 0.0);
        assert!((coupled_w2(&u, &v, &p_eq).unwrap() - d).abs() < 1e-15);
        assert!((coupled_w2(&u, &v, &p_10).unwrap() - d * 10f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn center_and_moments() {
        let p = ModelParams::new(10.0, 1.0, 1.0, 1.0).unwrap();
        let u = SpeciesPair::new(
            DiscreteMeasure::dirac(1.0, 1.0).unwrap(),
            DiscreteMeasure::dirac(2.0, 1.0).unwrap(),
        );
        assert!((weighted_center(&u, &p) - 2.1).abs() < 1e-15);
        let sym = SpeciesPair::new(
            DiscreteMeasure::new(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap(),
            DiscreteMeasure::new(vec![-2.0, 2.0], vec![0.3, 0.3]).unwrap(),
        );
        assert_eq!(weighted_center(&sym, &p), 0.0);
        let only1 = SpeciesPair::new(DiscreteMeasure::dirac(1.5, 2.0).unwrap(), DiscreteMeasure::empty());
        assert_eq!(weighted_center(&only1, &p), 0.1 * 3.0);

        assert_eq!(moments(&DiscreteMeasure::dirac(0.0, 1.0).unwrap()), (1.0, 0.0, 0.0));
        assert_eq!(
            moments(&DiscreteMeasure::new(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap()),
            (1.0, 0.0, 1.0)
        );
        let (m, a, b) = moments(&DiscreteMeasure::new(vec![-1.0, 2.0], vec![0.7, 0.3]).unwrap());
        assert!((m - 1.0).abs() < 1e-15 && (a + 0.1).abs() < 1e-15 && (b - 1.9).abs() < 1e-15);
    }

    #[test]
    fn gaussian_sampling() {
        let m0 = m0();
        assert!((m0 - 0.025_066_282_746_310_005).abs() < 1e-17);
        let grid = Grid::new(-1.0, 1.0, 1e-4).unwrap();
        let one = sample_gaussian_bumps(&[Bump { amplitude: 1.0, center: 0.0 }], DEFAULT_BUMP_WIDTH, &grid).unwrap();
        assert!((one.measure.total_mass() - m0).abs() < 1e-6);
        assert!(!one.coarse);
        let off = sample_gaussian_bumps(&[Bump { amplitude: 1.0, center: 0.123_456_7 }], DEFAULT_BUMP_WIDTH, &grid).unwrap();
        assert!((off.measure.total_mass() - m0).abs() < 1e-6);
        let two = sample_gaussian_bumps(
            &[Bump { amplitude: 1.0, center: -0.5 }, Bump { amplitude: 3.0, center: 0.5 }],
            DEFAULT_BUMP_WIDTH,
            &grid,
        )
        .unwrap();
        assert!((two.measure.total_mass() - 4.0 * m0).abs() < 1e-6);

        let coarse = Grid::new(-1.0, 1.0, 5e-3).unwrap();
        let c = sample_gaussian_bumps(&[Bump { amplitude: 1.0, center: 0.0 }], DEFAULT_BUMP_WIDTH, &coarse).unwrap();
        assert!(c.coarse);
        let truncated = sample_gaussian_bumps(&[Bump { amplitude: 1.0, center: 0.98 }], DEFAULT_BUMP_WIDTH, &grid);
        assert!(truncated.is_err());
    }

    #[test]
    fn csv_round_trip() {
        let m = DiscreteMeasure::new(vec![-0.1, 0.2, 1.0 / 3.0], vec![0.25, 0.0, 0.1]).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert_eq!(DiscreteMeasure::read_csv(buf.as_slice()).unwrap(), m);

        let pair = SpeciesPair::new(m.clone(), DiscreteMeasure::new(m.positions().to_vec(), vec![0.0, 1.0, 2.0]).unwrap());
        let mut buf = Vec::new();
        pair.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("position,mass1,mass2\n"));
        assert_eq!(SpeciesPair::read_csv(buf.as_slice()).unwrap(), pair);
    }

    #[test]
    fn rejects_bad_measures() {
        assert!(DiscreteMeasure::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(DiscreteMeasure::new(vec![0.0], vec![-1.0]).is_err());
        assert!(DiscreteMeasure::new(vec![0.0, 1.0], vec![1.0]).is_err());
    }
}
