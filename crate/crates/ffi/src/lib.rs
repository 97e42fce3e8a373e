//! C ABI for the aggsync solvers.
//!
//! Every fallible function returns an [`AggStatus`]. On failure the message is
//! available from [`agg_last_error_message`] on the same thread. Solver state
//! lives behind opaque handles released with the matching `_free` function.
//! Only the exponential kernel `½e^{-|x|}` is exposed.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use aggsync::fv::{self, FluxField, GridState};
use aggsync::particles::{self, ClusterSet, EventKind, ParticleOptions};
use aggsync::{sync, DiscreteMeasure, Error, Exponential, Grid, ModelParams, Species};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggStatus {
    Ok = 0,
    Domain = 1,
    NonFinite = 2,
    Cfl = 3,
    KernelHypothesis = 4,
    Hypothesis = 5,
    BoundaryLeak = 6,
    Config = 7,
    Validation = 8,
    Io = 9,
    Format = 10,
    NullPointer = 11,
    Panic = 12,
}

fn status_of(err: &Error) -> AggStatus {
    match err.kind() {
        "domain" => AggStatus::Domain,
        "non_finite" => AggStatus::NonFinite,
        "cfl" => AggStatus::Cfl,
        "kernel_hypothesis" => AggStatus::KernelHypothesis,
        "hypothesis" => AggStatus::Hypothesis,
        "boundary_leak" => AggStatus::BoundaryLeak,
        "config" => AggStatus::Config,
        "validation" => AggStatus::Validation,
        "io" => AggStatus::Io,
        _ => AggStatus::Format,
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), (AggStatus, String)>) -> AggStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AggStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("panic inside aggsync".into());
            AggStatus::Panic
        }
    }
}

trait IntoFfi<T> {
    fn ffi(self) -> Result<T, (AggStatus, String)>;
}

impl<T> IntoFfi<T> for aggsync::Result<T> {
    fn ffi(self) -> Result<T, (AggStatus, String)> {
        self.map_err(|e| (status_of(&e), e.to_string()))
    }
}

fn null(what: &str) -> (AggStatus, String) {
    (AggStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `p` must be null or valid for `len` reads.
unsafe fn input<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], (AggStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

/// Message of the last failure on this thread, or null. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn agg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggParams {
    pub chi1: f64,
    pub chi2: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub psi1: f64,
    pub psi2: f64,
}

impl From<AggParams> for ModelParams {
    fn from(p: AggParams) -> Self {
        ModelParams {
            chi1: p.chi1,
            chi2: p.chi2,
            theta1: p.theta1,
            theta2: p.theta2,
            psi1: p.psi1,
            psi2: p.psi2,
        }
    }
}

/// Parameters with unit weights and tumbling rates.
#[no_mangle]
pub extern "C" fn agg_params_default(chi1: f64, chi2: f64) -> AggParams {
    AggParams {
        chi1,
        chi2,
        theta1: 1.0,
        theta2: 1.0,
        psi1: 1.0,
        psi2: 1.0,
    }
}

/// # Safety
/// `p` must be null or point to an `AggParams`.
unsafe fn params(p: *const AggParams) -> Result<ModelParams, (AggStatus, String)> {
    let p: ModelParams = p.as_ref().ok_or_else(|| null("params"))?.to_owned().into();
    p.validate().ffi()?;
    Ok(p)
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggSyncResult {
    pub holds: bool,
    pub lhs: f64,
    pub rhs: f64,
    /// Selection `w` of the glued velocity.
    pub w: f64,
}

/// Synchronising condition for a colliding pair of masses `m1`, `m2` under
/// external attraction `gamma`.
///
/// # Safety
/// `p` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn agg_sync_condition(
    p: *const AggParams,
    gamma: f64,
    m1: f64,
    m2: f64,
    out: *mut AggSyncResult,
) -> AggStatus {
    guard(|| {
        let p = params(p)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        for (what, v) in [("gamma", gamma), ("m1", m1), ("m2", m2)] {
            if !v.is_finite() {
                return Err((AggStatus::NonFinite, format!("{what} = {v}")));
            }
        }
        let s = sync::sync_condition(gamma, m1, m2, &p);
        *out = AggSyncResult {
            holds: s.holds,
            lhs: s.lhs,
            rhs: s.rhs,
            w: sync::glued_selection(gamma, m1, m2, &p),
        };
        Ok(())
    })
}

/// Quadratic Wasserstein distance between two discrete measures after
/// normalization. Positions must be strictly increasing.
///
/// # Safety
/// Each array must be valid for its length; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn agg_wasserstein2(
    pos_a: *const f64,
    mass_a: *const f64,
    len_a: usize,
    pos_b: *const f64,
    mass_b: *const f64,
    len_b: usize,
    out: *mut f64,
) -> AggStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let a = DiscreteMeasure::new(input(pos_a, len_a, "pos_a")?.to_vec(), input(mass_a, len_a, "mass_a")?.to_vec())
            .ffi()?
            .normalized()
            .ffi()?;
        let b = DiscreteMeasure::new(input(pos_b, len_b, "pos_b")?.to_vec(), input(mass_b, len_b, "mass_b")?.to_vec())
            .ffi()?
            .normalized()
            .ffi()?;
        *out = aggsync::wasserstein2(&a, &b).ffi()?;
        Ok(())
    })
}

/// Finite-volume solver state.
pub struct AggFv {
    state: GridState,
    params: ModelParams,
}

/// Creates a finite-volume state from cell masses on `[xmin, xmax]` with
/// spacing `dx`; `cells` must equal `round((xmax - xmin)/dx)`.
///
/// # Safety
/// `rho1`, `rho2` must be valid for `cells` reads; `p`, `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn agg_fv_new(
    p: *const AggParams,
    xmin: f64,
    xmax: f64,
    dx: f64,
    rho1: *const f64,
    rho2: *const f64,
    cells: usize,
    out: *mut *mut AggFv,
) -> AggStatus {
    guard(|| {
        let params = params(p)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let grid = Grid::new(xmin, xmax, dx).ffi()?;
        let state = GridState::new(grid, input(rho1, cells, "rho1")?.to_vec(), input(rho2, cells, "rho2")?.to_vec()).ffi()?;
        *out = Box::into_raw(Box::new(AggFv { state, params }));
        Ok(())
    })
}

/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn agg_fv_cells(h: *const AggFv) -> usize {
    h.as_ref().map_or(0, |h| h.state.cells())
}

/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn agg_fv_time(h: *const AggFv) -> f64 {
    h.as_ref().map_or(f64::NAN, |h| h.state.time)
}

/// Largest stable step for the current state with the given safety factor.
///
/// # Safety
/// `h`, `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn agg_fv_cfl_dt(h: *const AggFv, safety: f64, out: *mut f64) -> AggStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("handle"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = fv::scaled_cfl_dt(&h.state, &Exponential, &h.params, safety).ffi()?;
        Ok(())
    })
}

/// One upwind step of length `dt`; refused with `Cfl` when unstable.
///
/// # Safety
/// `h` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn agg_fv_step(h: *mut AggFv, dt: f64) -> AggStatus {
    guard(|| {
        let h = h.as_mut().ok_or_else(|| null("handle"))?;
        let flux = FluxField::new(&h.state, &Exponential, &h.params);
        h.state = fv::step(&h.state, &flux, &h.params, dt).ffi()?;
        Ok(())
    })
}

/// Advances to `t_final` with CFL steps, landing exactly on `t_final`.
///
/// # Safety
/// `h` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn agg_fv_advance(h: *mut AggFv, t_final: f64, safety: f64) -> AggStatus {
    guard(|| {
        let h = h.as_mut().ok_or_else(|| null("handle"))?;
        let opts = fv::RunOptions {
            safety,
            ..Default::default()
        };
        h.state = fv::run(&h.state, &Exponential, &h.params, t_final, &opts).ffi()?.final_state;
        Ok(())
    })
}

/// Copies the cell masses of `species` (1 or 2) into `out`, which holds `len`
/// values; `len` must equal the cell count.
///
/// # Safety
/// `h` must be a live handle and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn agg_fv_copy_density(h: *const AggFv, species: u32, out: *mut f64, len: usize) -> AggStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("handle"))?;
        let s = match species {
            1 => Species::One,
            2 => Species::Two,
            _ => return Err((AggStatus::Domain, format!("species {species} is not 1 or 2"))),
        };
        let rho = h.state.rho(s);
        if len != rho.len() {
            return Err((AggStatus::Domain, format!("buffer holds {len} values, grid has {}", rho.len())));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        slice::from_raw_parts_mut(out, len).copy_from_slice(rho);
        Ok(())
    })
}

/// # Safety
/// `h` must be null or a handle from [`agg_fv_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn agg_fv_free(h: *mut AggFv) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggEventKind {
    MergeSameSpecies = 0,
    Glue = 1,
    Cross = 2,
    Unglue = 3,
    FinalCollapse = 4,
}

/// Particle event; `gamma`, `lhs`, `rhs` are NaN for same-species events.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggEvent {
    pub time: f64,
    pub kind: AggEventKind,
    pub position: f64,
    pub m1: f64,
    pub m2: f64,
    pub gamma: f64,
    pub lhs: f64,
    pub rhs: f64,
}

/// Sticky-particle solver state and the events logged so far.
pub struct AggParticles {
    clusters: ClusterSet,
    params: ModelParams,
    events: Vec<AggEvent>,
}

/// Creates a particle state from `len` clusters with per-species masses.
///
/// # Safety
/// The arrays must be valid for `len` reads; `p`, `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn agg_particles_new(
    p: *const AggParams,
    positions: *const f64,
    m1: *const f64,
    m2: *const f64,
    len: usize,
    out: *mut *mut AggParticles,
) -> AggStatus {
    guard(|| {
        let params = params(p)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let (x, a, b) = (input(positions, len, "positions")?, input(m1, len, "m1")?, input(m2, len, "m2")?);
        let items = (0..len).map(|k| (x[k], a[k], b[k])).collect();
        let clusters = ClusterSet::new(items).ffi()?;
        *out = Box::into_raw(Box::new(AggParticles {
            clusters,
            params,
            events: Vec::new(),
        }));
        Ok(())
    })
}

/// Runs to `t_final` (or until one cluster remains), appending events.
///
/// # Safety
/// `h` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn agg_particles_run(h: *mut AggParticles, t_final: f64, dt_max: f64, gap_tol: f64) -> AggStatus {
    guard(|| {
        let h = h.as_mut().ok_or_else(|| null("handle"))?;
        let opts = ParticleOptions {
            dt_max,
            gap_tol,
            sample_interval: t_final,
        };
        let run = particles::run(&h.clusters, &Exponential, &h.params, t_final, &opts).ffi()?;
        h.events.extend(run.events.iter().map(|e| AggEvent {
            time: e.time,
            kind: match e.kind {
                EventKind::MergeSameSpecies => AggEventKind::MergeSameSpecies,
                EventKind::Glue => AggEventKind::Glue,
                EventKind::Cross => AggEventKind::Cross,
                EventKind::Unglue => AggEventKind::Unglue,
                EventKind::FinalCollapse => AggEventKind::FinalCollapse,
            },
            position: e.position,
            m1: e.m1,
            m2: e.m2,
            gamma: e.gamma.unwrap_or(f64::NAN),
            lhs: e.sync_lhs.unwrap_or(f64::NAN),
            rhs: e.sync_rhs.unwrap_or(f64::NAN),
        }));
        h.clusters = run.final_state;
        Ok(())
    })
}

/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn agg_particles_len(h: *const AggParticles) -> usize {
    h.as_ref().map_or(0, |h| h.clusters.len())
}

/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn agg_particles_time(h: *const AggParticles) -> f64 {
    h.as_ref().map_or(f64::NAN, |h| h.clusters.time)
}

/// Copies cluster positions and masses; `len` must equal the cluster count.
///
/// # Safety
/// `h` must be a live handle and each array valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn agg_particles_copy(
    h: *const AggParticles,
    positions: *mut f64,
    m1: *mut f64,
    m2: *mut f64,
    len: usize,
) -> AggStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("handle"))?;
        let cl = h.clusters.clusters();
        if len != cl.len() {
            return Err((AggStatus::Domain, format!("buffers hold {len} values, state has {} clusters", cl.len())));
        }
        if positions.is_null() || m1.is_null() || m2.is_null() {
            return Err(null("output buffer"));
        }
        let (x, a, b) = (
            slice::from_raw_parts_mut(positions, len),
            slice::from_raw_parts_mut(m1, len),
            slice::from_raw_parts_mut(m2, len),
        );
        for (k, c) in cl.iter().enumerate() {
            x[k] = c.position;
            a[k] = c.m1;
            b[k] = c.m2;
        }
        Ok(())
    })
}

/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn agg_particles_event_count(h: *const AggParticles) -> usize {
    h.as_ref().map_or(0, |h| h.events.len())
}

/// Copies up to `len` events into `out`; `written` receives the count.
///
/// # Safety
/// `h` must be a live handle, `out` valid for `len` writes, `written` valid.
#[no_mangle]
pub unsafe extern "C" fn agg_particles_copy_events(
    h: *const AggParticles,
    out: *mut AggEvent,
    len: usize,
    written: *mut usize,
) -> AggStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("handle"))?;
        let written = written.as_mut().ok_or_else(|| null("written"))?;
        let n = len.min(h.events.len());
        if n > 0 {
            if out.is_null() {
                return Err(null("out"));
            }
            slice::from_raw_parts_mut(out, n).copy_from_slice(&h.events[..n]);
        }
        *written = n;
        Ok(())
    })
}

/// # Safety
/// `h` must be null or a handle from [`agg_particles_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn agg_particles_free(h: *mut AggParticles) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}
