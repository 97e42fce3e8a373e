//! Sticky-particle dynamics of Dirac aggregates of the two species.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::PointyKernel;
use crate::measures::{fmt_f64, DiscreteMeasure, SpeciesPair};
use crate::params::ModelParams;
use crate::sync::{glued_velocity, overtaking_direction, sync_condition, SyncCheck};

pub const DEFAULT_DT_MAX: f64 = 1e-3;
pub const DEFAULT_GAP_TOL: f64 = 1e-9;
/// Width of the bracket around an unglue transition.
pub const TRANSITION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: usize,
    pub position: f64,
    pub m1: f64,
    pub m2: f64,
}

impl Cluster {
    pub fn glued(&self) -> bool {
        self.m1 > 0.0 && self.m2 > 0.0
    }

    fn attracting(&self, p: &ModelParams) -> f64 {
        p.theta1 * self.m1 + p.theta2 * self.m2
    }

    /// Weight of this cluster in the invariant center `(θ₁/χ₁)m₁ + (θ₂/χ₂)m₂`.
    fn center_weight(&self, p: &ModelParams) -> f64 {
        p.theta1 / p.chi1 * self.m1 + p.theta2 / p.chi2 * self.m2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSet {
    clusters: Vec<Cluster>,
    pub time: f64,
    next_id: usize,
}

impl ClusterSet {
    /// Builds a set from `(position, m1, m2)` triples, sorted by position.
    pub fn new(mut items: Vec<(f64, f64, f64)>) -> Result<Self> {
        for &(x, a, b) in &items {
            if !(x.is_finite() && a.is_finite() && b.is_finite()) {
                return Err(Error::NonFinite(format!("cluster ({x}, {a}, {b})")));
            }
            if a < 0.0 || b < 0.0 || a + b <= 0.0 {
                return Err(Error::domain(format!(
                    "cluster at {x} needs nonnegative masses with a positive sum, got ({a}, {b})"
                )));
            }
        }
        items.sort_by(|a, b| a.0.total_cmp(&b.0));
        if let Some(w) = items.windows(2).find(|w| !(w[0].0 < w[1].0)) {
            return Err(Error::domain(format!("two clusters share position {}", w[0].0)));
        }
        let clusters: Vec<Cluster> = items
            .into_iter()
            .enumerate()
            .map(|(id, (position, m1, m2))| Cluster { id, position, m1, m2 })
            .collect();
        let next_id = clusters.len();
        Ok(ClusterSet {
            clusters,
            time: 0.0,
            next_id,
        })
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn mass1(&self) -> f64 {
        self.clusters.iter().map(|c| c.m1).sum()
    }

    pub fn mass2(&self) -> f64 {
        self.clusters.iter().map(|c| c.m2).sum()
    }

    /// `(θ₁/χ₁)Σm₁x + (θ₂/χ₂)Σm₂x`.
    pub fn weighted_center(&self, p: &ModelParams) -> f64 {
        self.clusters.iter().map(|c| c.center_weight(p) * c.position).sum()
    }

    pub fn to_pair(&self) -> SpeciesPair {
        let part = |f: fn(&Cluster) -> f64| {
            let (xs, ms): (Vec<f64>, Vec<f64>) =
                self.clusters.iter().filter(|c| f(c) > 0.0).map(|c| (c.position, f(c))).unzip();
            DiscreteMeasure::new(xs, ms).expect("cluster positions are strictly increasing")
        };
        SpeciesPair::new(part(|c| c.m1), part(|c| c.m2))
    }

    fn fresh_id(&mut self) -> usize {
        self.next_id += 1;
        self.next_id - 1
    }
}

/// `γ_k = Σ_{ℓ≠k} (θ₁m₁ℓ + θ₂m₂ℓ)·∂ₓK̂(x_k − x_ℓ)`.
pub fn gamma(cs: &ClusterSet, k: usize, kernel: &dyn PointyKernel, p: &ModelParams) -> f64 {
    gamma_of(&cs.clusters, k, kernel, p)
}

fn gamma_of(cl: &[Cluster], k: usize, kernel: &dyn PointyKernel, p: &ModelParams) -> f64 {
    let x = cl[k].position;
    cl.iter()
        .enumerate()
        .filter(|(l, _)| *l != k)
        .map(|(_, c)| c.attracting(p) * kernel.hat_deriv(x - c.position))
        .sum()
}

pub fn velocities(cs: &ClusterSet, kernel: &dyn PointyKernel, p: &ModelParams) -> Vec<f64> {
    velocities_of(&cs.clusters, kernel, p)
}

fn velocities_of(cl: &[Cluster], kernel: &dyn PointyKernel, p: &ModelParams) -> Vec<f64> {
    (0..cl.len())
        .map(|k| {
            let g = gamma_of(cl, k, kernel, p);
            let c = &cl[k];
            if c.glued() {
                glued_velocity(g, c.m1, c.m2, p)
            } else if c.m1 > 0.0 {
                p.chi1 * g
            } else {
                p.chi2 * g
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    MergeSameSpecies,
    Glue,
    /// Opposite species meet, fail the synchronising condition and pass each other.
    Cross,
    Unglue,
    FinalCollapse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    /// Ids of the clusters that took part, before the event.
    pub participants: Vec<usize>,
    pub position: f64,
    pub m1: f64,
    pub m2: f64,
    pub gamma: Option<f64>,
    pub sync_lhs: Option<f64>,
    pub sync_rhs: Option<f64>,
    /// Every cluster position right after the event.
    pub positions: Vec<f64>,
}

pub fn write_event_log<W: Write>(events: &[Event], w: W) -> Result<()> {
    serde_json::to_writer_pretty(w, events)?;
    Ok(())
}

fn heun(cl: &[Cluster], v0: &[f64], dt: f64, kernel: &dyn PointyKernel, p: &ModelParams) -> Vec<Cluster> {
    let mid: Vec<Cluster> = cl
        .iter()
        .zip(v0)
        .map(|(c, v)| Cluster {
            position: c.position + dt * v,
            ..*c
        })
        .collect();
    let v1 = velocities_of(&mid, kernel, p);
    cl.iter()
        .zip(v0.iter().zip(&v1))
        .map(|(c, (a, b))| Cluster {
            position: c.position + 0.5 * dt * (a + b),
            ..*c
        })
        .collect()
}

fn ordered(cl: &[Cluster]) -> bool {
    cl.windows(2).all(|w| w[0].position < w[1].position)
}

/// First glued cluster that fails the synchronising condition.
fn failing_glue(cl: &[Cluster], kernel: &dyn PointyKernel, p: &ModelParams) -> Option<(usize, f64, SyncCheck)> {
    cl.iter().enumerate().filter(|(_, c)| c.glued()).find_map(|(k, c)| {
        let g = gamma_of(cl, k, kernel, p);
        let s = sync_condition(g, c.m1, c.m2, p);
        (!s.holds).then_some((k, g, s))
    })
}

/// Species-1 and species-2 parts placed `gap` apart around the pair's
/// weighted center, species 1 ahead in direction `dir`.
fn split(c: &Cluster, gap: f64, dir: f64, p: &ModelParams, ids: (usize, usize)) -> [Cluster; 2] {
    let a1 = p.theta1 / p.chi1 * c.m1;
    let a2 = p.theta2 / p.chi2 * c.m2;
    let d1 = gap * a2 / (a1 + a2);
    let d2 = gap - d1;
    let one = Cluster {
        id: ids.0,
        position: c.position + dir * d1,
        m1: c.m1,
        m2: 0.0,
    };
    let two = Cluster {
        id: ids.1,
        position: c.position - dir * d2,
        m1: 0.0,
        m2: c.m2,
    };
    if dir > 0.0 {
        [two, one]
    } else {
        [one, two]
    }
}

/// One integrator step, followed by the transitions it triggers.
///
/// The step is `min(dt_max, ¼·min gap/closing speed)`, halved while it would
/// reverse the order of two clusters. Glued clusters that stop satisfying the
/// synchronising condition during the step are split at the transition time,
/// located by bisection to [`TRANSITION_TOL`]. Clusters closer than `gap_tol`
/// and approaching each other are collapsed, one cluster per species, then
/// glued, crossed or merged.
pub fn advance(
    cs: &ClusterSet,
    kernel: &dyn PointyKernel,
    p: &ModelParams,
    dt_max: f64,
    gap_tol: f64,
) -> Result<(ClusterSet, Vec<Event>)> {
    if !(dt_max > 0.0 && gap_tol > 0.0) {
        return Err(Error::domain(format!(
            "need positive dt_max and gap_tol, got {dt_max} and {gap_tol}"
        )));
    }
    let cl = &cs.clusters;
    let v = velocities_of(cl, kernel, p);
    let mut dt = dt_max;
    for k in 0..cl.len().saturating_sub(1) {
        let closing = v[k] - v[k + 1];
        if closing > 0.0 {
            dt = dt.min(0.25 * (cl[k + 1].position - cl[k].position) / closing);
        }
    }
    let mut next = heun(cl, &v, dt, kernel, p);
    let mut halvings = 0;
    while !ordered(&next) {
        halvings += 1;
        if halvings > 200 {
            return Err(Error::domain(format!("cannot keep clusters ordered at t = {}", cs.time)));
        }
        dt *= 0.5;
        next = heun(cl, &v, dt, kernel, p);
    }
    if let Some(c) = next.iter().find(|c| !c.position.is_finite()) {
        return Err(Error::NonFinite(format!("cluster {} position at t = {}", c.id, cs.time + dt)));
    }

    let mut out = ClusterSet {
        clusters: next,
        time: cs.time + dt,
        next_id: cs.next_id,
    };
    let mut events = Vec::new();

    if failing_glue(&out.clusters, kernel, p).is_some() {
        let (mut lo, mut hi) = (0.0, dt);
        while hi - lo > TRANSITION_TOL {
            let mid = 0.5 * (lo + hi);
            if failing_glue(&heun(cl, &v, mid, kernel, p), kernel, p).is_some() {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        out.clusters = heun(cl, &v, hi, kernel, p);
        out.time = cs.time + hi;
        let (k, g, s) = failing_glue(&out.clusters, kernel, p).expect("bracket keeps the failing side");
        let c = out.clusters[k];
        let ids = (out.fresh_id(), out.fresh_id());
        let parts = split(&c, gap_tol, overtaking_direction(g, p), p, ids);
        out.clusters.splice(k..=k, parts);
        events.push(Event {
            time: out.time,
            kind: EventKind::Unglue,
            participants: vec![c.id],
            position: c.position,
            m1: c.m1,
            m2: c.m2,
            gamma: Some(g),
            sync_lhs: Some(s.lhs),
            sync_rhs: Some(s.rhs),
            positions: out.clusters.iter().map(|c| c.position).collect(),
        });
    }

    resolve_contacts(&mut out, kernel, p, gap_tol, &mut events);
    Ok((out, events))
}

/// Collapses every group of touching clusters that contains an approaching pair.
fn resolve_contacts(
    cs: &mut ClusterSet,
    kernel: &dyn PointyKernel,
    p: &ModelParams,
    gap_tol: f64,
    events: &mut Vec<Event>,
) {
    loop {
        let cl = &cs.clusters;
        let v = velocities_of(cl, kernel, p);
        let hit = (0..cl.len().saturating_sub(1))
            .find(|&k| cl[k + 1].position - cl[k].position < gap_tol && v[k] > v[k + 1]);
        let Some(first) = hit else { return };
        let mut lo = first;
        while lo > 0 && cl[lo].position - cl[lo - 1].position < gap_tol {
            lo -= 1;
        }
        let mut hi = first + 1;
        while hi + 1 < cl.len() && cl[hi + 1].position - cl[hi].position < gap_tol {
            hi += 1;
        }
        let group: Vec<Cluster> = cl[lo..=hi].to_vec();
        let m1: f64 = group.iter().map(|c| c.m1).sum();
        let m2: f64 = group.iter().map(|c| c.m2).sum();
        let w: f64 = group.iter().map(|c| c.center_weight(p)).sum();
        let x = group.iter().map(|c| c.center_weight(p) * c.position).sum::<f64>() / w;
        let merged = Cluster {
            id: cs.fresh_id(),
            position: x,
            m1,
            m2,
        };
        cs.clusters.splice(lo..=hi, [merged]);

        let participants = group.iter().map(|c| c.id).collect();
        let (kind, g, s) = if m1 > 0.0 && m2 > 0.0 {
            let g = gamma_of(&cs.clusters, lo, kernel, p);
            let s = sync_condition(g, m1, m2, p);
            if s.holds {
                (EventKind::Glue, Some(g), Some(s))
            } else {
                let ids = (cs.fresh_id(), cs.fresh_id());
                let parts = split(&merged, gap_tol, overtaking_direction(g, p), p, ids);
                cs.clusters.splice(lo..=lo, parts);
                (EventKind::Cross, Some(g), Some(s))
            }
        } else {
            (EventKind::MergeSameSpecies, None, None)
        };
        events.push(Event {
            time: cs.time,
            kind,
            participants,
            position: x,
            m1,
            m2,
            gamma: g,
            sync_lhs: s.map(|s| s.lhs),
            sync_rhs: s.map(|s| s.rhs),
            positions: cs.clusters.iter().map(|c| c.position).collect(),
        });
        if cs.clusters.len() == 1 {
            let c = cs.clusters[0];
            events.push(Event {
                time: cs.time,
                kind: EventKind::FinalCollapse,
                participants: vec![c.id],
                position: c.position,
                m1: c.m1,
                m2: c.m2,
                gamma: None,
                sync_lhs: None,
                sync_rhs: None,
                positions: vec![c.position],
            });
            return;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleOptions {
    pub dt_max: f64,
    pub gap_tol: f64,
    /// Trajectory sampling interval; every step when zero.
    pub sample_interval: f64,
}

impl Default for ParticleOptions {
    fn default() -> Self {
        ParticleOptions {
            dt_max: DEFAULT_DT_MAX,
            gap_tol: DEFAULT_GAP_TOL,
            sample_interval: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub cluster_id: usize,
    pub position: f64,
    pub m1: f64,
    pub m2: f64,
    pub glued: bool,
}

pub fn write_trajectory_csv<W: Write>(rows: &[TrajectoryRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "cluster_id", "position", "m1", "m2", "glued"])?;
    for r in rows {
        out.write_record([
            fmt_f64(r.t),
            r.cluster_id.to_string(),
            fmt_f64(r.position),
            fmt_f64(r.m1),
            fmt_f64(r.m2),
            r.glued.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ParticleRun {
    pub trajectory: Vec<TrajectoryRow>,
    pub events: Vec<Event>,
    pub final_state: ClusterSet,
    pub steps: usize,
}

fn sample(cs: &ClusterSet, rows: &mut Vec<TrajectoryRow>) {
    rows.extend(cs.clusters.iter().map(|c| TrajectoryRow {
        t: cs.time,
        cluster_id: c.id,
        position: c.position,
        m1: c.m1,
        m2: c.m2,
        glued: c.glued(),
    }));
}

/// Advances until `t_final` or until a single cluster remains.
pub fn run(
    initial: &ClusterSet,
    kernel: &dyn PointyKernel,
    p: &ModelParams,
    t_final: f64,
    opts: &ParticleOptions,
) -> Result<ParticleRun> {
    run_observed(initial, kernel, p, t_final, opts, |_| {})
}

/// [`run`] calling `observe` after every step.
pub fn run_observed(
    initial: &ClusterSet,
    kernel: &dyn PointyKernel,
    p: &ModelParams,
    t_final: f64,
    opts: &ParticleOptions,
    mut observe: impl FnMut(&ClusterSet),
) -> Result<ParticleRun> {
    p.validate()?;
    if !(t_final.is_finite() && t_final > initial.time) {
        return Err(Error::domain(format!(
            "final time {t_final} must exceed the initial time {}",
            initial.time
        )));
    }
    if !(opts.sample_interval >= 0.0) {
        return Err(Error::domain("sample interval must be nonnegative"));
    }
    let mut cs = initial.clone();
    let mut trajectory = Vec::new();
    let mut events = Vec::new();
    sample(&cs, &mut trajectory);
    let mut next_sample = cs.time + opts.sample_interval;
    let mut steps = 0;
    while cs.len() > 1 && cs.time < t_final {
        let (next, ev) = advance(&cs, kernel, p, opts.dt_max.min(t_final - cs.time), opts.gap_tol)?;
        cs = next;
        steps += 1;
        observe(&cs);
        let happened = !ev.is_empty();
        events.extend(ev);
        if happened || cs.time >= next_sample || cs.len() == 1 || cs.time >= t_final {
            sample(&cs, &mut trajectory);
            while next_sample <= cs.time {
                next_sample += opts.sample_interval.max(f64::MIN_POSITIVE);
            }
        }
    }
    Ok(ParticleRun {
        trajectory,
        events,
        final_state: cs,
        steps,
    })
}
