//! Two-velocity kinetic chemotaxis model in moment form `(ρ_α, J_α)`.
//!
//! Each step transports `f_α(±1) = (ρ_α ± J_α)/2` at unit speeds and then
//! relaxes `J_α` implicitly towards `χ_α∂ₓS ρ_α`, which keeps the scheme stable
//! uniformly in `ε`. The walls of the domain reflect, so mass stays inside.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expconv::{direct_hat_deriv, direct_potential, exp_potential_and_deriv_uniform, FAST_PATH_THRESHOLD};
use crate::fv::{self, GridState};
use crate::kernel::PointyKernel;
use crate::measures::{fmt_f64, wasserstein2, Grid};
use crate::params::{ModelParams, Species};

#[derive(Debug, Clone, PartialEq)]
pub struct KineticState {
    grid: Grid,
    rho: [Vec<f64>; 2],
    flux: [Vec<f64>; 2],
    quanta: [f64; 2],
    pub epsilon: f64,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChemoField {
    pub s: Vec<f64>,
    pub ds: Vec<f64>,
}

impl KineticState {
    /// Starts from cell masses with the equilibrium flux `J = χ∂ₓS ρ`.
    pub fn well_prepared(
        initial: &GridState,
        kernel: &dyn PointyKernel,
        p: &ModelParams,
        epsilon: f64,
    ) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::domain(format!("epsilon {epsilon} must be positive")));
        }
        let rho = [initial.rho1().to_vec(), initial.rho2().to_vec()];
        let mut state = KineticState {
            grid: *initial.grid(),
            flux: [vec![0.0; rho[0].len()], vec![0.0; rho[1].len()]],
            quanta: [initial.quantum(Species::One), initial.quantum(Species::Two)],
            rho,
            epsilon,
            time: initial.time,
        };
        let field = solve_s(&state, kernel, p);
        for s in Species::BOTH {
            let a = s as usize;
            let chi = p.chi(s);
            state.flux[a] = state.rho[a].iter().zip(&field.ds).map(|(r, d)| chi * d * r).collect();
        }
        Ok(state)
    }

    /// Arbitrary moments; `|J| ≤ ρ` is required cell by cell.
    pub fn new(grid: Grid, rho: [Vec<f64>; 2], flux: [Vec<f64>; 2], epsilon: f64) -> Result<Self> {
        let base = GridState::new(grid, rho[0].clone(), rho[1].clone())?;
        for (s, f) in Species::BOTH.into_iter().zip(&flux) {
            if f.len() != base.cells() {
                return Err(Error::domain("flux length differs from the grid"));
            }
            if let Some((r, j)) = base.rho(s).iter().zip(f).find(|(r, j)| !(j.abs() <= **r)) {
                return Err(Error::domain(format!("flux {j} exceeds density {r}")));
            }
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::domain(format!("epsilon {epsilon} must be positive")));
        }
        Ok(KineticState {
            grid,
            rho: [base.rho1().to_vec(), base.rho2().to_vec()],
            flux,
            quanta: [base.quantum(Species::One), base.quantum(Species::Two)],
            epsilon,
            time: 0.0,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn rho(&self, s: Species) -> &[f64] {
        &self.rho[s as usize]
    }

    pub fn flux(&self, s: Species) -> &[f64] {
        &self.flux[s as usize]
    }

    pub fn mass(&self, s: Species) -> f64 {
        self.rho(s).iter().sum()
    }

    pub fn to_grid_state(&self) -> GridState {
        let mut g = GridState::new(self.grid, self.rho[0].clone(), self.rho[1].clone())
            .expect("kinetic densities are valid cell masses");
        g.time = self.time;
        g
    }

    /// Snapshot CSV: `x,rho1,J1,rho2,J2,S,dS`.
    pub fn write_csv<W: Write>(&self, field: &ChemoField, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["x", "rho1", "J1", "rho2", "J2", "S", "dS"])?;
        for j in 0..self.rho[0].len() {
            out.write_record([
                fmt_f64(self.grid.center(j)),
                fmt_f64(self.rho[0][j]),
                fmt_f64(self.flux[0][j]),
                fmt_f64(self.rho[1][j]),
                fmt_f64(self.flux[1][j]),
                fmt_f64(field.s[j]),
                fmt_f64(field.ds[j]),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

fn attracting(state: &KineticState, p: &ModelParams) -> Vec<f64> {
    state.rho[0]
        .iter()
        .zip(&state.rho[1])
        .map(|(a, b)| p.theta1 * a + p.theta2 * b)
        .collect()
}

/// `S = K∗(θ₁ρ₁ + θ₂ρ₂)` and its hatted derivative at the cell centers.
pub fn solve_s(state: &KineticState, kernel: &dyn PointyKernel, p: &ModelParams) -> ChemoField {
    let w = attracting(state, p);
    if kernel.is_exponential() && w.len() > FAST_PATH_THRESHOLD {
        let (s, ds) = exp_potential_and_deriv_uniform(state.grid.dx, &w);
        ChemoField { s, ds }
    } else {
        solve_s_direct(state, kernel, p)
    }
}

/// [`solve_s`] through the quadratic sums.
pub fn solve_s_direct(state: &KineticState, kernel: &dyn PointyKernel, p: &ModelParams) -> ChemoField {
    let w = attracting(state, p);
    let xs = state.grid.centers();
    ChemoField {
        s: direct_potential(kernel, &xs, &w),
        ds: direct_hat_deriv(kernel, &xs, &w),
    }
}

pub fn check_positivity_condition(p: &ModelParams) -> bool {
    p.check_positivity_condition()
}

/// Transport of both half-densities over `dt`, then implicit relaxation of
/// the fluxes with the field `field`.
pub fn step(state: &KineticState, field: &ChemoField, p: &ModelParams, dt: f64) -> Result<KineticState> {
    let dx = state.grid.dx;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::domain(format!("time step {dt} must be positive and finite")));
    }
    if dt > dx * (1.0 + 1e-12) {
        return Err(Error::Cfl {
            courant: dt / dx,
            dt,
            dx,
        });
    }
    let exact = (dt - dx).abs() <= 1e-12 * dx;
    let mut next = state.clone();
    for s in Species::BOTH {
        let a = s as usize;
        let q = state.quanta[a];
        if q == 0.0 {
            continue;
        }
        let (rho, j) = transport(&state.rho[a], &state.flux[a], q, if exact { None } else { Some(dt / dx) });
        let beta = 2.0 * p.psi(s) * dt / state.epsilon;
        let chi = p.chi(s);
        next.flux[a] = j
            .iter()
            .zip(&rho)
            .zip(&field.ds)
            .map(|((j, r), d)| (j + beta * chi * d * r) / (1.0 + beta))
            .collect();
        next.rho[a] = rho;
    }
    next.time = state.time + dt;
    Ok(next)
}

/// Moves `f⁺` right and `f⁻` left, by one cell exactly when `courant` is
/// `None`, by upwinding otherwise. What leaves through a wall comes back with
/// the opposite velocity.
fn transport(rho: &[f64], flux: &[f64], q: f64, courant: Option<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = rho.len();
    let mut fp: Vec<f64> = rho
        .iter()
        .zip(flux)
        .map(|(r, j)| (((r + j) * 0.5 / q).round() * q).clamp(0.0, *r))
        .collect();
    let mut fm: Vec<f64> = rho.iter().zip(&fp).map(|(r, f)| r - f).collect();
    match courant {
        None => {
            let out_right = fp[n - 1];
            let out_left = fm[0];
            fp.rotate_right(1);
            fm.rotate_left(1);
            fp[0] = out_left;
            fm[n - 1] = out_right;
        }
        Some(c) => {
            let move_p: Vec<f64> = fp.iter().map(|f| (c * f / q).floor() * q).collect();
            let move_m: Vec<f64> = fm.iter().map(|f| (c * f / q).floor() * q).collect();
            for k in 0..n {
                fp[k] -= move_p[k];
                fm[k] -= move_m[k];
            }
            for k in 0..n {
                if k + 1 < n {
                    fp[k + 1] += move_p[k];
                } else {
                    fm[k] += move_p[k];
                }
                if k > 0 {
                    fm[k - 1] += move_m[k];
                } else {
                    fp[k] += move_m[k];
                }
            }
        }
    }
    let rho = fp.iter().zip(&fm).map(|(a, b)| a + b).collect();
    let j = fp.iter().zip(&fm).map(|(a, b)| a - b).collect();
    (rho, j)
}

/// Runs to `t_final` with steps of `Δx`, the last one shortened.
pub fn run(state: &KineticState, kernel: &dyn PointyKernel, p: &ModelParams, t_final: f64) -> Result<KineticState> {
    let dx = state.grid.dx;
    let mut s = state.clone();
    let eps = 1e-12 * t_final.abs().max(1.0);
    while s.time < t_final - eps {
        let remaining = t_final - s.time;
        let field = solve_s(&s, kernel, p);
        if remaining <= dx * (1.0 + 1e-12) {
            s = step(&s, &field, p, remaining.min(dx))?;
            s.time = t_final;
        } else {
            s = step(&s, &field, p, dx)?;
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitRow {
    pub epsilon: f64,
    pub w2_species1: f64,
    pub w2_species2: f64,
}

pub fn write_limit_csv<W: Write>(rows: &[LimitRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["epsilon", "w2_species1", "w2_species2"])?;
    for r in rows {
        out.write_record([fmt_f64(r.epsilon), fmt_f64(r.w2_species1), fmt_f64(r.w2_species2)])?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Distance between the kinetic densities at `t_final` for every `ε` and the
/// finite-volume solution of the aggregation system on the same grid.
pub fn limit_experiment(
    initial: &GridState,
    kernel: &dyn PointyKernel,
    p: &ModelParams,
    eps_list: &[f64],
    t_final: f64,
    safety: f64,
) -> Result<Vec<LimitRow>> {
    if !check_positivity_condition(p) {
        return Err(Error::Hypothesis(format!(
            "kinetic model needs χ_α(θ₁+θ₂) < 1, got χ₁ = {}, χ₂ = {}, θ₁+θ₂ = {}",
            p.chi1,
            p.chi2,
            p.theta_sum()
        )));
    }
    if eps_list.is_empty() || eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::domain("epsilon list must be nonempty and strictly decreasing"));
    }
    let reference = fv::run(
        initial,
        kernel,
        p,
        t_final,
        &fv::RunOptions {
            safety,
            ..Default::default()
        },
    )?
    .final_state
    .to_pair();
    eps_list
        .iter()
        .map(|&eps| {
            let k0 = KineticState::well_prepared(initial, kernel, p, eps)?;
            let kt = run(&k0, kernel, p, t_final)?.to_grid_state().to_pair();
            Ok(LimitRow {
                epsilon: eps,
                w2_species1: wasserstein2(&kt.rho1, &reference.rho1)?,
                w2_species2: wasserstein2(&kt.rho2, &reference.rho2)?,
            })
        })
        .collect()
}
