//! Upwind finite-volume scheme for the two-species aggregation system.
//!
//! Cells carry masses. Each species lives on its own binary lattice: masses
//! are integer multiples of a power-of-two quantum chosen so the species total
//! stays below `2^52` quanta, and every transfer is rounded down to that
//! lattice. All sums are then exact, so per-species mass is conserved to the
//! last bit and positivity is never lost to roundoff.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expconv::{direct_hat_deriv, exp_hat_deriv_uniform, FAST_PATH_THRESHOLD};
use crate::kernel::PointyKernel;
use crate::measures::{fmt_f64, sample_gaussian_bumps, Bump, DiscreteMeasure, Grid, SpeciesPair};
use crate::params::{ModelParams, Species};

pub const DEFAULT_SAFETY: f64 = 0.9;
pub const DEFAULT_LEAK_FRACTION: f64 = 1e-9;

const LATTICE_BITS: i32 = 52;

/// Power-of-two quantum for a species of total mass `total`.
pub fn lattice_quantum(total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    let e = total.log2().ceil() as i32;
    2f64.powi(e - LATTICE_BITS)
}

fn quantize(masses: &mut [f64], q: f64) {
    if q > 0.0 {
        for m in masses.iter_mut() {
            *m = (*m / q).round() * q;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridState {
    grid: Grid,
    rho1: Vec<f64>,
    rho2: Vec<f64>,
    quanta: [f64; 2],
    pub time: f64,
}

impl GridState {
    /// Cell masses are snapped to each species' lattice, a relative change
    /// of at most `2^-52` of the species total per cell.
    pub fn new(grid: Grid, mut rho1: Vec<f64>, mut rho2: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        let n = grid.cells();
        if rho1.len() != n || rho2.len() != n {
            return Err(Error::domain(format!(
                "grid has {n} cells but got {} and {} cell masses",
                rho1.len(),
                rho2.len()
            )));
        }
        for m in rho1.iter().chain(&rho2) {
            if !m.is_finite() {
                return Err(Error::NonFinite(format!("cell mass {m}")));
            }
            if *m < 0.0 {
                return Err(Error::domain(format!("negative cell mass {m}")));
            }
        }
        let q1 = lattice_quantum(rho1.iter().sum());
        let q2 = lattice_quantum(rho2.iter().sum());
        quantize(&mut rho1, q1);
        quantize(&mut rho2, q2);
        Ok(GridState {
            grid,
            rho1,
            rho2,
            quanta: [q1, q2],
            time: 0.0,
        })
    }

    /// Midpoint-sampled Gaussian bumps; the flag reports an under-resolved grid.
    pub fn from_bumps(grid: Grid, bumps1: &[Bump], bumps2: &[Bump], width: f64) -> Result<(Self, bool)> {
        let s1 = sample_gaussian_bumps(bumps1, width, &grid)?;
        let s2 = sample_gaussian_bumps(bumps2, width, &grid)?;
        let coarse = s1.coarse || s2.coarse;
        let state = GridState::new(grid, s1.measure.masses().to_vec(), s2.measure.masses().to_vec())?;
        Ok((state, coarse))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn cells(&self) -> usize {
        self.rho1.len()
    }

    pub fn rho(&self, s: Species) -> &[f64] {
        match s {
            Species::One => &self.rho1,
            Species::Two => &self.rho2,
        }
    }

    pub fn rho1(&self) -> &[f64] {
        &self.rho1
    }

    pub fn rho2(&self) -> &[f64] {
        &self.rho2
    }

    pub fn quantum(&self, s: Species) -> f64 {
        self.quanta[s as usize]
    }

    pub fn mass(&self, s: Species) -> f64 {
        self.rho(s).iter().sum()
    }

    pub fn weighted_mass(&self, p: &ModelParams) -> f64 {
        p.theta1 * self.mass(Species::One) + p.theta2 * self.mass(Species::Two)
    }

    pub fn weighted_center(&self, p: &ModelParams) -> f64 {
        let mut c1 = 0.0;
        let mut c2 = 0.0;
        for j in 0..self.cells() {
            let x = self.grid.center(j);
            c1 += x * self.rho1[j];
            c2 += x * self.rho2[j];
        }
        p.theta1 / p.chi1 * c1 + p.theta2 / p.chi2 * c2
    }

    pub fn min_cell(&self) -> f64 {
        self.rho1.iter().chain(&self.rho2).fold(f64::INFINITY, |m, v| m.min(*v))
    }

    pub fn boundary_mass(&self) -> f64 {
        let last = self.cells() - 1;
        self.rho1[0] + self.rho2[0] + self.rho1[last] + self.rho2[last]
    }

    pub fn to_pair(&self) -> SpeciesPair {
        let xs = self.grid.centers();
        SpeciesPair::new(
            DiscreteMeasure::new(xs.clone(), self.rho1.clone()).expect("grid state is a valid measure"),
            DiscreteMeasure::new(xs, self.rho2.clone()).expect("grid state is a valid measure"),
        )
    }

    /// Snapshot CSV: `x,rho1_mass,rho2_mass`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["x", "rho1_mass", "rho2_mass"])?;
        for j in 0..self.cells() {
            out.write_record([fmt_f64(self.grid.center(j)), fmt_f64(self.rho1[j]), fmt_f64(self.rho2[j])])?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// `â_j = Σ_{i≠j} ∂ₓK(x_j − x_i)(θ₁ρ₁ᵢ + θ₂ρ₂ᵢ)`.
pub fn assemble_velocity(state: &GridState, kernel: &dyn PointyKernel, p: &ModelParams) -> Vec<f64> {
    let w = attracting_mass(state, p);
    if kernel.is_exponential() && w.len() > FAST_PATH_THRESHOLD {
        exp_hat_deriv_uniform(state.grid.dx, &w)
    } else {
        direct_hat_deriv(kernel, &state.grid.centers(), &w)
    }
}

/// [`assemble_velocity`] forced through the quadratic sum.
pub fn assemble_velocity_direct(state: &GridState, kernel: &dyn PointyKernel, p: &ModelParams) -> Vec<f64> {
    direct_hat_deriv(kernel, &state.grid.centers(), &attracting_mass(state, p))
}

fn attracting_mass(state: &GridState, p: &ModelParams) -> Vec<f64> {
    state
        .rho1
        .iter()
        .zip(&state.rho2)
        .map(|(a, b)| p.theta1 * a + p.theta2 * b)
        .collect()
}

/// Cell velocities and interface fluxes `F_{α,j−1/2}`, `j = 0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxField {
    pub a_hat: Vec<f64>,
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
}

impl FluxField {
    pub fn new(state: &GridState, kernel: &dyn PointyKernel, p: &ModelParams) -> Self {
        Self::from_velocity(state, p, assemble_velocity(state, kernel, p))
    }

    pub fn from_velocity(state: &GridState, p: &ModelParams, a_hat: Vec<f64>) -> Self {
        let f = |rho: &[f64], chi: f64| {
            let n = rho.len();
            let mut f = vec![0.0; n + 1];
            for j in 1..n {
                f[j] = chi * (a_hat[j - 1].max(0.0) * rho[j - 1] + a_hat[j].min(0.0) * rho[j]);
            }
            f
        };
        let f1 = f(&state.rho1, p.chi1);
        let f2 = f(&state.rho2, p.chi2);
        FluxField { a_hat, f1, f2 }
    }

    pub fn max_velocity(&self) -> f64 {
        self.a_hat.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `safety·Δx / (‖∂ₓK‖∞(θ₁+θ₂))`, the step bound for unit masses.
pub fn cfl_dt(dx: f64, kernel: &dyn PointyKernel, p: &ModelParams, safety: f64) -> Result<f64> {
    check_safety(safety)?;
    Ok(safety * dx / (kernel.lipschitz() * p.theta_sum()))
}

/// Step bound for the actual masses of `state`:
/// `safety·Δx / (max χ·‖∂ₓK‖∞(θ₁M₁ + θ₂M₂))`. Infinite for an empty state.
pub fn scaled_cfl_dt(state: &GridState, kernel: &dyn PointyKernel, p: &ModelParams, safety: f64) -> Result<f64> {
    check_safety(safety)?;
    let bound = p.chi_max() * kernel.lipschitz() * state.weighted_mass(p);
    Ok(if bound > 0.0 {
        safety * state.grid.dx / bound
    } else {
        f64::INFINITY
    })
}

fn check_safety(safety: f64) -> Result<()> {
    if safety > 0.0 && safety < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("CFL safety factor {safety} outside (0, 1)")))
    }
}

/// One upwind step of length `dt` with the velocities in `flux`.
pub fn step(state: &GridState, flux: &FluxField, p: &ModelParams, dt: f64) -> Result<GridState> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::domain(format!("time step {dt} must be positive and finite")));
    }
    let dx = state.grid.dx;
    let chi_active = Species::BOTH
        .iter()
        .filter(|s| state.quantum(**s) > 0.0)
        .fold(0.0f64, |m, s| m.max(p.chi(*s)));
    let courant = dt / dx * chi_active * flux.max_velocity();
    if !(courant < 1.0) {
        return Err(Error::Cfl { courant, dt, dx });
    }
    let mut next = state.clone();
    for s in Species::BOTH {
        let q = state.quantum(s);
        if q == 0.0 {
            continue;
        }
        let c = dt / dx * p.chi(s);
        let out = match s {
            Species::One => &mut next.rho1,
            Species::Two => &mut next.rho2,
        };
        transport_on_lattice(state.rho(s), &flux.a_hat, c, q, out);
    }
    next.time = state.time + dt;
    Ok(next)
}

/// Moves `floor(c|â_j|ρ_j / q)·q` out of every cell towards the sign of `â_j`;
/// the outermost interfaces are closed.
fn transport_on_lattice(rho: &[f64], a_hat: &[f64], c: f64, q: f64, out: &mut [f64]) {
    let n = rho.len();
    out.copy_from_slice(rho);
    for j in 0..n {
        let a = a_hat[j];
        let m = rho[j];
        if m == 0.0 || a == 0.0 {
            continue;
        }
        let target = if a > 0.0 {
            if j + 1 == n {
                continue;
            }
            j + 1
        } else {
            if j == 0 {
                continue;
            }
            j - 1
        };
        let moved = (c * a.abs() * m / q).floor() * q;
        if moved > 0.0 {
            out[j] -= moved;
            out[target] += moved;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub mass1: f64,
    pub mass2: f64,
    pub weighted_center: f64,
    pub max_velocity: f64,
    pub min_cell: f64,
}

impl DiagnosticsRow {
    fn of(state: &GridState, flux: &FluxField, p: &ModelParams) -> Self {
        DiagnosticsRow {
            t: state.time,
            mass1: state.mass(Species::One),
            mass2: state.mass(Species::Two),
            weighted_center: state.weighted_center(p),
            max_velocity: flux.max_velocity(),
            min_cell: state.min_cell(),
        }
    }
}

pub fn write_diagnostics_csv<W: Write>(rows: &[DiagnosticsRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "mass1", "mass2", "weighted_center", "max_velocity", "min_cell"])?;
    for r in rows {
        out.write_record([
            fmt_f64(r.t),
            fmt_f64(r.mass1),
            fmt_f64(r.mass2),
            fmt_f64(r.weighted_center),
            fmt_f64(r.max_velocity),
            fmt_f64(r.min_cell),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub safety: f64,
    pub snapshot_times: Vec<f64>,
    /// Abort once the two boundary cells hold more than this fraction of the total mass.
    pub leak_fraction: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            safety: DEFAULT_SAFETY,
            snapshot_times: Vec::new(),
            leak_fraction: DEFAULT_LEAK_FRACTION,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FvRun {
    pub snapshots: Vec<GridState>,
    pub diagnostics: Vec<DiagnosticsRow>,
    pub final_state: GridState,
    pub steps: usize,
    pub dt: f64,
}

pub fn run(
    initial: &GridState,
    kernel: &dyn PointyKernel,
    p: &ModelParams,
    t_final: f64,
    opts: &RunOptions,
) -> Result<FvRun> {
    run_observed(initial, kernel, p, t_final, opts, |_, _| Ok(()))
}

/// [`run`] calling `observe` on the initial state and after every step.
pub fn run_observed(
    initial: &GridState,
    kernel: &dyn PointyKernel,
    p: &ModelParams,
    t_final: f64,
    opts: &RunOptions,
    mut observe: impl FnMut(&GridState, &FluxField) -> Result<()>,
) -> Result<FvRun> {
    p.validate()?;
    if !(t_final.is_finite() && t_final >= initial.time) {
        return Err(Error::domain(format!(
            "final time {t_final} precedes the initial time {}",
            initial.time
        )));
    }
    let mut targets = opts.snapshot_times.clone();
    if let Some(t) = targets.iter().find(|t| !(**t >= initial.time && **t <= t_final)) {
        return Err(Error::domain(format!(
            "snapshot time {t} outside [{}, {t_final}]",
            initial.time
        )));
    }
    targets.sort_by(f64::total_cmp);
    targets.dedup();

    let dt_cfl = scaled_cfl_dt(initial, kernel, p, opts.safety)?;
    let total = initial.mass(Species::One) + initial.mass(Species::Two);
    let leak_limit = opts.leak_fraction * total;
    let eps = 1e-12 * t_final.abs().max(1.0);

    let mut state = initial.clone();
    let mut flux = FluxField::new(&state, kernel, p);
    observe(&state, &flux)?;
    let mut diagnostics = vec![DiagnosticsRow::of(&state, &flux, p)];
    let mut snapshots = Vec::with_capacity(targets.len());
    let mut pending = targets.iter().peekable();
    while let Some(t) = pending.peek() {
        if **t > state.time + eps {
            break;
        }
        snapshots.push(state.clone());
        pending.next();
    }

    let mut steps = 0;
    while state.time < t_final - eps {
        let next_target = pending.peek().map_or(t_final, |t| t.min(t_final));
        let remaining = next_target - state.time;
        let (dt, lands) = if remaining <= dt_cfl { (remaining, true) } else { (dt_cfl, false) };
        state = step(&state, &flux, p, dt)?;
        if lands {
            state.time = next_target;
        }
        steps += 1;
        if state.boundary_mass() > leak_limit {
            return Err(Error::BoundaryLeak {
                mass: state.boundary_mass(),
                limit: leak_limit,
            });
        }
        flux = FluxField::new(&state, kernel, p);
        observe(&state, &flux)?;
        diagnostics.push(DiagnosticsRow::of(&state, &flux, p));
        while let Some(t) = pending.peek() {
            if **t > state.time + eps {
                break;
            }
            snapshots.push(state.clone());
            pending.next();
        }
    }
    Ok(FvRun {
        snapshots,
        diagnostics,
        final_state: state,
        steps,
        dt: dt_cfl,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expconv::max_relative_deviation;
    use crate::kernel::Exponential;

    fn unit() -> ModelParams {
        ModelParams::new(1.0, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn two_cell_velocity() {
        let grid = Grid::new(-1.0, 1.0, 0.5).unwrap();
        let s = GridState::new(grid, vec![0.0, 1.0, 0.0, 1.0], vec![0.0; 4]).unwrap();
        // centers at -0.75, -0.25, 0.25, 0.75
        let a = assemble_velocity(&s, &Exponential, &unit());
        let e = 0.5 * (-1.0f64).exp();
        assert!((a[0] - 0.5 * ((-0.5f64).exp() + (-1.5f64).exp())).abs() < 1e-15);
        assert!((a[1] - e).abs() < 1e-15);
        assert!((a[3] + e).abs() < 1e-15);
    }

    #[test]
    fn single_cell_is_stationary() {
        let grid = Grid::new(0.0, 1.0, 0.1).unwrap();
        let mut rho = vec![0.0; 10];
        rho[4] = 0.3;
        let s = GridState::new(grid, vec![0.0; 10], rho).unwrap();
        let flux = FluxField::new(&s, &Exponential, &unit());
        assert_eq!(flux.a_hat[4], 0.0);
        let next = step(&s, &flux, &unit(), 0.05).unwrap();
        assert_eq!(next.rho2(), s.rho2());
    }

    #[test]
    fn cfl_formula() {
        let dt = cfl_dt(1e-3, &Exponential, &unit(), 0.9).unwrap();
        assert!((dt - 0.9e-3).abs() < 1e-18);
        let p2 = ModelParams::new(1.0, 1.0, 2.0, 2.0).unwrap();
        assert!((cfl_dt(1e-3, &Exponential, &p2, 0.9).unwrap() - 0.45e-3).abs() < 1e-18);
        assert!(cfl_dt(1e-3, &Exponential, &unit(), 1.0).is_err());
        assert!(cfl_dt(1e-3, &Exponential, &unit(), 0.0).is_err());
    }

    #[test]
    fn symmetric_pair_moves_inward() {
        let grid = Grid::new(0.0, 4.0, 1.0).unwrap();
        let s = GridState::new(grid, vec![1.0, 0.0, 0.0, 1.0], vec![0.0; 4]).unwrap();
        let p = unit();
        let flux = FluxField::new(&s, &Exponential, &p);
        let next = step(&s, &flux, &p, 0.5).unwrap();
        assert_eq!(next.rho1()[0], next.rho1()[3]);
        assert_eq!(next.rho1()[1], next.rho1()[2]);
        assert!(next.rho1()[1] > 0.0);
        assert_eq!(next.mass(Species::One), 2.0);
        assert!((next.weighted_center(&p) - s.weighted_center(&p)).abs() < 1e-15);
    }

    #[test]
    fn refuses_cfl_violation() {
        let grid = Grid::new(0.0, 4.0, 1.0).unwrap();
        let s = GridState::new(grid, vec![1.0, 0.0, 0.0, 1.0], vec![0.0; 4]).unwrap();
        let flux = FluxField::new(&s, &Exponential, &unit());
        let dt = 1.001 / flux.max_velocity();
        assert!(matches!(step(&s, &flux, &unit(), dt), Err(Error::Cfl { .. })));
    }

    #[test]
    fn fast_and_direct_agree() {
        let grid = Grid::new(-2.0, 2.0, 4.0 / 1024.0).unwrap();
        let n = grid.cells();
        let rho1: Vec<f64> = (0..n).map(|j| ((j * 37) % 101) as f64 * 1e-3).collect();
        let rho2: Vec<f64> = (0..n).map(|j| ((j * 53) % 89) as f64 * 1e-3).collect();
        let s = GridState::new(grid, rho1, rho2).unwrap();
        let p = ModelParams::new(2.0, 1.0, 0.7, 1.3).unwrap();
        let fast = assemble_velocity(&s, &Exponential, &p);
        let slow = assemble_velocity_direct(&s, &Exponential, &p);
        assert!(max_relative_deviation(&fast, &slow) < 1e-12);
    }

    #[test]
    fn run_echoes_at_zero() {
        let grid = Grid::new(-1.0, 1.0, 0.01).unwrap();
        let (s, _) = GridState::from_bumps(grid, &[Bump { amplitude: 1.0, center: 0.0 }], &[], 5000.0).unwrap();
        let out = run(&s, &Exponential, &unit(), 0.0, &RunOptions { snapshot_times: vec![0.0], ..Default::default() }).unwrap();
        assert_eq!(out.steps, 0);
        assert_eq!(out.diagnostics.len(), 1);
        assert_eq!(out.snapshots[0], s);
    }

    #[test]
    fn run_lands_on_snapshots() {
        let grid = Grid::new(-1.0, 1.0, 0.01).unwrap();
        let b = [Bump { amplitude: 1.0, center: -0.3 }, Bump { amplitude: 1.0, center: 0.3 }];
        let (s, _) = GridState::from_bumps(grid, &b, &b, 5000.0).unwrap();
        let opts = RunOptions { snapshot_times: vec![0.3, 0.1], ..Default::default() };
        let out = run(&s, &Exponential, &unit(), 0.5, &opts).unwrap();
        assert_eq!(out.diagnostics.len(), out.steps + 1);
        let times: Vec<f64> = out.snapshots.iter().map(|s| s.time).collect();
        assert_eq!(times, vec![0.1, 0.3]);
        assert_eq!(out.final_state.time, 0.5);
        assert_eq!(out.final_state.mass(Species::One), s.mass(Species::One));
    }

    #[test]
    fn leak_monitor_trips() {
        let grid = Grid::new(0.0, 1.0, 0.1).unwrap();
        let mut rho = vec![0.0; 10];
        rho[0] = 1.0;
        rho[5] = 1.0;
        let s = GridState::new(grid, rho, vec![0.0; 10]).unwrap();
        let err = run(&s, &Exponential, &unit(), 0.1, &RunOptions::default()).unwrap_err();
        assert_eq!(err.kind(), "boundary_leak");
    }

    #[test]
    fn csv_layout() {
        let grid = Grid::new(0.0, 1.0, 0.5).unwrap();
        let s = GridState::new(grid, vec![0.25, 0.0], vec![0.0, 0.5]).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x,rho1_mass,rho2_mass\n0.25,0.25,0.0\n0.75,0.0,0.5\n");
    }
}
