//! Peak extraction from grid states and detection of collision events in
//! finite-volume runs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fv::GridState;
use crate::kernel::PointyKernel;
use crate::params::{ModelParams, Species};
use crate::sync::sync_condition;

pub const DEFAULT_PEAK_THRESHOLD: f64 = 0.01;

/// Cells below this fraction of `threshold·total` do not extend a run.
const CELL_FLOOR_RATIO: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub position: f64,
    pub m1: f64,
    pub m2: f64,
}

/// Mass-weighted centroids of the contiguous runs of occupied cells.
///
/// A cell belongs to a run when its two-species mass exceeds
/// `1e-3·threshold·total`; a run is reported only when its mass is strictly
/// above `threshold·total`.
pub fn extract_peaks(state: &GridState, mass_threshold: f64) -> Result<Vec<Peak>> {
    if !(mass_threshold > 0.0 && mass_threshold < 1.0) {
        return Err(Error::domain(format!("peak threshold {mass_threshold} outside (0, 1)")));
    }
    let (r1, r2) = (state.rho1(), state.rho2());
    let total = state.mass(Species::One) + state.mass(Species::Two);
    let floor = CELL_FLOOR_RATIO * mass_threshold * total;
    let mut peaks = Vec::new();
    let mut j = 0;
    let n = state.cells();
    while j < n {
        if r1[j] + r2[j] <= floor {
            j += 1;
            continue;
        }
        let (mut a, mut b, mut moment) = (0.0, 0.0, 0.0);
        while j < n && r1[j] + r2[j] > floor {
            a += r1[j];
            b += r2[j];
            moment += state.grid().center(j) * (r1[j] + r2[j]);
            j += 1;
        }
        if a + b > mass_threshold * total {
            peaks.push(Peak {
                position: moment / (a + b),
                m1: a,
                m2: b,
            });
        }
    }
    Ok(peaks)
}

/// One concentration of a single species.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeciesPeak {
    pub position: f64,
    pub mass: f64,
}

/// Ratio below which a dip between two maxima separates them.
const VALLEY_RATIO: f64 = 0.1;

/// Peaks of one species: runs above `floor`, split at pronounced valleys,
/// keeping pieces heavier than `min_mass`.
pub fn species_peaks(state: &GridState, s: Species, floor: f64, min_mass: f64) -> Vec<SpeciesPeak> {
    let rho = state.rho(s);
    let n = rho.len();
    let mut segments = Vec::new();
    let mut j = 0;
    while j < n {
        if rho[j] <= floor {
            j += 1;
            continue;
        }
        let start = j;
        while j < n && rho[j] > floor {
            j += 1;
        }
        split_at_valleys(rho, start, j, &mut segments);
    }
    segments
        .into_iter()
        .filter_map(|(lo, hi)| {
            let mass: f64 = rho[lo..hi].iter().sum();
            if mass <= min_mass {
                return None;
            }
            let moment: f64 = (lo..hi).map(|k| state.grid().center(k) * rho[k]).sum();
            Some(SpeciesPeak {
                position: moment / mass,
                mass,
            })
        })
        .collect()
}

fn split_at_valleys(rho: &[f64], start: usize, end: usize, out: &mut Vec<(usize, usize)>) {
    let mut seg = start;
    let mut peak = rho[start];
    let mut valley = rho[start];
    let mut valley_at = start;
    for (j, &m) in rho.iter().enumerate().take(end).skip(start + 1) {
        if valley < VALLEY_RATIO * peak && valley < VALLEY_RATIO * m {
            out.push((seg, valley_at + 1));
            seg = valley_at + 1;
            peak = m;
            valley = m;
            valley_at = j;
        } else if m > peak {
            peak = m;
            valley = m;
            valley_at = j;
        } else if m < valley {
            valley = m;
            valley_at = j;
        }
    }
    out.push((seg, end));
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FvEventKind {
    /// Opposite-species peaks meet.
    Contact,
    /// A contacting pair moves apart again.
    Separation,
    /// The synchronising condition stops holding for a pair in contact.
    SyncLost,
    /// Two peaks of the same species become one.
    Merge,
    /// One peak per species left, and they touch.
    FinalCollapse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FvEvent {
    pub time: f64,
    pub kind: FvEventKind,
    pub species: Option<Species>,
    pub position: f64,
    pub gamma: Option<f64>,
    pub sync_lhs: Option<f64>,
    pub sync_rhs: Option<f64>,
    pub sync_holds: Option<bool>,
    pub peaks1: Vec<SpeciesPeak>,
    pub peaks2: Vec<SpeciesPeak>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerOptions {
    /// Cells below `floor_fraction·M_α` are empty for species α.
    pub floor_fraction: f64,
    /// Pieces lighter than `min_mass_fraction·M_α` are ignored.
    pub min_mass_fraction: f64,
    /// Centroid distance, in cells, at or below which opposite peaks touch.
    pub contact_cells: f64,
    /// Centroid distance, in cells, beyond which a touching pair has separated.
    pub separation_cells: f64,
}

impl Default for TrackerOptions {
    fn default() -> Self {
        TrackerOptions {
            floor_fraction: 1e-6,
            min_mass_fraction: 1e-3,
            contact_cells: 4.0,
            separation_cells: 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct ActiveContact {
    position: f64,
    holds: bool,
}

/// Reads collision events off a sequence of grid states.
pub struct FvEventTracker<'a> {
    kernel: &'a dyn PointyKernel,
    params: ModelParams,
    opts: TrackerOptions,
    active: Vec<ActiveContact>,
    fewest: [Option<usize>; 2],
    collapsed: bool,
    pub events: Vec<FvEvent>,
}

impl<'a> FvEventTracker<'a> {
    pub fn new(kernel: &'a dyn PointyKernel, params: ModelParams, opts: TrackerOptions) -> Self {
        FvEventTracker {
            kernel,
            params,
            opts,
            active: Vec::new(),
            fewest: [None, None],
            collapsed: false,
            events: Vec::new(),
        }
    }

    pub fn peaks(&self, state: &GridState, s: Species) -> Vec<SpeciesPeak> {
        let m = state.mass(s);
        species_peaks(state, s, self.opts.floor_fraction * m, self.opts.min_mass_fraction * m)
    }

    pub fn observe(&mut self, state: &GridState) {
        let dx = state.grid().dx;
        let p1 = self.peaks(state, Species::One);
        let p2 = self.peaks(state, Species::Two);
        let event = |kind, species, position, sync: Option<(f64, crate::sync::SyncCheck)>| FvEvent {
            time: state.time,
            kind,
            species,
            position,
            gamma: sync.map(|s| s.0),
            sync_lhs: sync.map(|s| s.1.lhs),
            sync_rhs: sync.map(|s| s.1.rhs),
            sync_holds: sync.map(|s| s.1.holds),
            peaks1: p1.clone(),
            peaks2: p2.clone(),
        };

        for (idx, peaks) in [&p1, &p2].into_iter().enumerate() {
            let count = peaks.len();
            match self.fewest[idx] {
                Some(prev) if count < prev => {
                    let species = if idx == 0 { Species::One } else { Species::Two };
                    let position = heaviest(peaks);
                    self.events.push(event(FvEventKind::Merge, Some(species), position, None));
                    self.fewest[idx] = Some(count);
                }
                None => self.fewest[idx] = Some(count),
                _ => {}
            }
        }

        let (kernel, params) = (self.kernel, self.params);
        let pair_sync = |i: usize, k: usize| {
            let x = (p1[i].position * p1[i].mass + p2[k].position * p2[k].mass) / (p1[i].mass + p2[k].mass);
            let g = gamma_excluding(kernel, &params, x, (&p1, i), (&p2, k));
            (x, g, sync_condition(g, p1[i].mass, p2[k].mass, &params))
        };

        let mut claimed = vec![false; p1.len() * p2.len()];
        let mut still = Vec::new();
        let mut lost = Vec::new();
        for c in std::mem::take(&mut self.active) {
            let best = (0..p1.len())
                .flat_map(|i| (0..p2.len()).map(move |k| (i, k)))
                .filter(|&(i, k)| !claimed[i * p2.len() + k])
                .map(|(i, k)| {
                    let d = (p1[i].position - p2[k].position).abs();
                    let mid = 0.5 * (p1[i].position + p2[k].position);
                    (i, k, d, (mid - c.position).abs())
                })
                .filter(|t| t.2 <= self.opts.separation_cells * dx)
                .min_by(|a, b| a.3.total_cmp(&b.3));
            match best {
                Some((i, k, _, _)) => {
                    claimed[i * p2.len() + k] = true;
                    let (x, g, s) = pair_sync(i, k);
                    if c.holds && !s.holds {
                        self.events.push(event(FvEventKind::SyncLost, None, x, Some((g, s))));
                    }
                    still.push(ActiveContact {
                        position: x,
                        holds: s.holds,
                    });
                }
                None => lost.push(c),
            }
        }
        // a contact whose pair merged into another tracked contact is absorbed
        for c in lost {
            if !still.iter().any(|s| (s.position - c.position).abs() <= self.opts.separation_cells * dx) {
                self.events.push(event(FvEventKind::Separation, None, c.position, None));
            }
        }
        for i in 0..p1.len() {
            for k in 0..p2.len() {
                let touching = (p1[i].position - p2[k].position).abs() <= self.opts.contact_cells * dx;
                if touching && !claimed[i * p2.len() + k] {
                    claimed[i * p2.len() + k] = true;
                    let (x, g, s) = pair_sync(i, k);
                    self.events.push(event(FvEventKind::Contact, None, x, Some((g, s))));
                    still.push(ActiveContact {
                        position: x,
                        holds: s.holds,
                    });
                }
            }
        }
        self.active = still;

        if !self.collapsed {
            let single = match (p1.len(), p2.len()) {
                (1, 1) => !self.active.is_empty(),
                (1, 0) | (0, 1) => true,
                _ => false,
            };
            if single {
                self.collapsed = true;
                let position = self.active.first().map_or_else(
                    || p1.first().or(p2.first()).map_or(0.0, |pk| pk.position),
                    |c| c.position,
                );
                self.events.push(event(FvEventKind::FinalCollapse, None, position, None));
            }
        }
    }

    /// Whether any opposite-species pair is currently in contact.
    pub fn in_contact(&self) -> bool {
        !self.active.is_empty()
    }
}

/// `γ` at `x` from every peak except the pair `(i, k)`.
fn gamma_excluding(
    kernel: &dyn PointyKernel,
    params: &ModelParams,
    x: f64,
    (p1, i): (&[SpeciesPeak], usize),
    (p2, k): (&[SpeciesPeak], usize),
) -> f64 {
    let sum = |peaks: &[SpeciesPeak], skip: usize, theta: f64| -> f64 {
        peaks
            .iter()
            .enumerate()
            .filter(|(idx, _)| *idx != skip)
            .map(|(_, pk)| theta * pk.mass * kernel.hat_deriv(x - pk.position))
            .sum()
    };
    sum(p1, i, params.theta1) + sum(p2, k, params.theta2)
}

/// Position of the heaviest peak, the one that absorbed the others in a merge.
fn heaviest(peaks: &[SpeciesPeak]) -> f64 {
    peaks
        .iter()
        .max_by(|a, b| a.mass.total_cmp(&b.mass))
        .map_or(f64::NAN, |pk| pk.position)
}
