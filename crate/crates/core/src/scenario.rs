//! Scenario files, built-in presets, run orchestration and reports.
//!
//! A scenario is a TOML document. With `preset` set, every other key is
//! optional and overrides the preset; without it `params` and `initial` are
//! required. Tables other than `initial` may be given partially.
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `name` | preset name, file stem | label used in reports |
//! | `preset` | none | `example1` … `example4`, `hydro_limit` |
//! | `solver` | `fv` | `fv`, `particles`, `kinetic` or `compare` |
//! | `t_final` | 1.0 (preset value) | final time |
//! | `snapshot_interval` | 0.25 | spacing of snapshot times, 0 for initial and final only |
//! | `output_dir` | `runs/<name>` | relative paths resolve against `$AGGSYNC_OUTPUT_ROOT` |
//! | `params.{chi1,chi2}` | required | chemosensitivities |
//! | `params.{theta1,theta2,psi1,psi2}` | 1 | weights and tumbling rates |
//! | `kernel.type` | `exponential` | or `regularized` with `n` |
//! | `grid.{xmin,xmax,dx}` | −2, 2, 5e-4 | finite-volume and kinetic grid |
//! | `fv.safety` | 0.9 | CFL safety factor, in (0, 1) |
//! | `fv.leak_fraction` | 1e-9 | boundary mass that aborts a run |
//! | `particles.{dt_max,gap_tol,sample_interval}` | 1e-3, 1e-9, 0.01 | particle integrator |
//! | `kinetic.epsilon` | [0.5, 0.1, 0.02] | relaxation times, strictly decreasing |
//! | `initial.width` | 5000 | exponent `w` of the bumps `A·e^{-w(x-c)²}` |
//! | `initial.bumps1`, `initial.bumps2` | [] | `{ amplitude, center }` per species |
//! | `initial.clusters` | [] | `{ position, m1, m2 }`, exclusive with bumps |

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fv::{self, GridState};
use crate::kernel::{KernelSpec, PointyKernel};
use crate::kinetic::{self, KineticState, LimitRow};
use crate::measures::{bump_mass_unit, m0, Bump, Grid, DEFAULT_BUMP_WIDTH};
use crate::params::{ModelParams, Species};
use crate::particles::{self, ClusterSet, EventKind, ParticleOptions};
use crate::peaks::{self, FvEvent, FvEventKind, FvEventTracker, Peak, SpeciesPeak, TrackerOptions};

/// Environment variable overriding the root of relative output directories.
pub const OUTPUT_ROOT_ENV: &str = "AGGSYNC_OUTPUT_ROOT";

pub const PRESETS: [&str; 5] = ["example1", "example2", "example3", "example4", "hydro_limit"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Fv,
    Particles,
    Kinetic,
    Compare,
}

impl Solver {
    pub const ALL: [Solver; 4] = [Solver::Fv, Solver::Particles, Solver::Kinetic, Solver::Compare];

    pub fn name(self) -> &'static str {
        match self {
            Solver::Fv => "fv",
            Solver::Particles => "particles",
            Solver::Kinetic => "kinetic",
            Solver::Compare => "compare",
        }
    }
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Solver::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| Error::Config {
            key: "solver".into(),
            message: format!("unknown solver `{s}`, expected one of fv, particles, kinetic, compare"),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FvSettings {
    pub safety: f64,
    pub leak_fraction: f64,
}

impl Default for FvSettings {
    fn default() -> Self {
        FvSettings {
            safety: fv::DEFAULT_SAFETY,
            leak_fraction: fv::DEFAULT_LEAK_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KineticSettings {
    pub epsilon: Vec<f64>,
}

impl Default for KineticSettings {
    fn default() -> Self {
        KineticSettings {
            epsilon: vec![0.5, 0.1, 0.02],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    pub position: f64,
    pub m1: f64,
    pub m2: f64,
}

/// Gaussian bumps per species, or an explicit list of point clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialData {
    #[serde(default = "default_width")]
    pub width: f64,
    #[serde(default)]
    pub bumps1: Vec<Bump>,
    #[serde(default)]
    pub bumps2: Vec<Bump>,
    #[serde(default)]
    pub clusters: Vec<ClusterSpec>,
}

fn default_width() -> f64 {
    DEFAULT_BUMP_WIDTH
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub solver: Solver,
    pub t_final: f64,
    pub snapshot_interval: f64,
    pub output_dir: String,
    pub params: ModelParams,
    pub kernel: KernelSpec,
    pub grid: Grid,
    pub fv: FvSettings,
    pub particles: ParticleOptions,
    pub kinetic: KineticSettings,
    pub initial: InitialData,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: Option<String>,
    preset: Option<String>,
    solver: Option<Solver>,
    t_final: Option<f64>,
    snapshot_interval: Option<f64>,
    output_dir: Option<String>,
    params: Option<PartialParams>,
    kernel: Option<KernelSpec>,
    grid: Option<PartialGrid>,
    fv: Option<PartialFv>,
    particles: Option<PartialParticles>,
    kinetic: Option<KineticSettings>,
    initial: Option<InitialData>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialParams {
    chi1: Option<f64>,
    chi2: Option<f64>,
    theta1: Option<f64>,
    theta2: Option<f64>,
    psi1: Option<f64>,
    psi2: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialGrid {
    xmin: Option<f64>,
    xmax: Option<f64>,
    dx: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialFv {
    safety: Option<f64>,
    leak_fraction: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialParticles {
    dt_max: Option<f64>,
    gap_tol: Option<f64>,
    sample_interval: Option<f64>,
}

macro_rules! overlay {
    ($base:expr, $part:expr; $($f:ident),+) => {
        $(if let Some(v) = $part.$f { $base.$f = v; })+
    };
}

fn missing(key: &str) -> Error {
    Error::Config {
        key: key.into(),
        message: "required when no preset is given".into(),
    }
}

fn preset_bumps(list: &[(f64, f64)]) -> Vec<Bump> {
    list.iter().map(|&(amplitude, center)| Bump { amplitude, center }).collect()
}

/// Built-in scenario by name.
pub fn preset(name: &str) -> Result<Scenario> {
    let example = |t_final: f64, b1: &[(f64, f64)], b2: &[(f64, f64)]| Scenario {
        name: name.into(),
        preset: Some(name.into()),
        solver: Solver::Fv,
        t_final,
        snapshot_interval: 0.25,
        output_dir: format!("runs/{name}"),
        params: ModelParams {
            chi1: 10.0,
            chi2: 1.0,
            ..Default::default()
        },
        kernel: KernelSpec::Exponential,
        grid: Grid {
            xmin: -2.0,
            xmax: 2.0,
            dx: 5e-4,
        },
        fv: FvSettings::default(),
        particles: ParticleOptions::default(),
        kinetic: KineticSettings::default(),
        initial: InitialData {
            width: DEFAULT_BUMP_WIDTH,
            bumps1: preset_bumps(b1),
            bumps2: preset_bumps(b2),
            clusters: Vec::new(),
        },
    };
    match name {
        "example1" => Ok(example(2.5, &[(4.0, -0.5), (2.0, 0.5)], &[(2.0, -0.15)])),
        "example2" => Ok(example(2.5, &[(2.0, -0.5), (4.0, 0.5)], &[(2.0, -0.15)])),
        "example3" => Ok(example(3.0, &[(2.0, -0.5), (4.0, 0.5)], &[(2.0, -0.3)])),
        "example4" => Ok(example(3.5, &[(3.0, -0.8), (1.5, -0.02)], &[(3.5, 0.02), (8.5, 0.5)])),
        "hydro_limit" => {
            let width = 100.0;
            let unit = 1.0 / bump_mass_unit(width);
            let mut s = example(0.5, &[(unit, -0.25)], &[(unit, 0.25)]);
            s.solver = Solver::Kinetic;
            s.snapshot_interval = 0.1;
            s.params.chi1 = 0.45;
            s.params.chi2 = 0.3;
            s.grid.dx = 2e-3;
            s.initial.width = width;
            Ok(s)
        }
        _ => Err(Error::Config {
            key: "preset".into(),
            message: format!("unknown preset `{name}`, expected one of {}", PRESETS.join(", ")),
        }),
    }
}

fn config_error(err: serde_path_to_error::Error<toml::de::Error>) -> Error {
    let path = err.path().to_string();
    let inner = err.into_inner();
    let message = inner.message().to_string();
    let key = match path.as_str() {
        "." => message
            .strip_prefix("unknown field `")
            .and_then(|rest| rest.split('`').next())
            .unwrap_or(".")
            .to_string(),
        _ => path,
    };
    Error::Config { key, message }
}

/// Parses and validates a scenario document. `default_name` labels scenarios
/// that set neither `name` nor `preset`.
pub fn parse_scenario(text: &str, default_name: &str) -> Result<Scenario> {
    let de = toml::Deserializer::new(text);
    let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(config_error)?;
    let base = file.preset.as_deref().map(preset).transpose()?;
    let has_preset = base.is_some();

    let name = file
        .name
        .or_else(|| base.as_ref().map(|b| b.name.clone()))
        .unwrap_or_else(|| default_name.to_string());
    let mut s = base.unwrap_or_else(|| Scenario {
        name: name.clone(),
        preset: None,
        solver: Solver::Fv,
        t_final: 1.0,
        snapshot_interval: 0.25,
        output_dir: format!("runs/{name}"),
        params: ModelParams::default(),
        kernel: KernelSpec::Exponential,
        grid: Grid {
            xmin: -2.0,
            xmax: 2.0,
            dx: 5e-4,
        },
        fv: FvSettings::default(),
        particles: ParticleOptions::default(),
        kinetic: KineticSettings::default(),
        initial: InitialData {
            width: DEFAULT_BUMP_WIDTH,
            bumps1: Vec::new(),
            bumps2: Vec::new(),
            clusters: Vec::new(),
        },
    });
    if s.name != name {
        s.output_dir = format!("runs/{name}");
        s.name = name;
    }
    if !has_preset && file.initial.is_none() {
        if file.params.is_none() {
            return Err(missing("params"));
        }
        return Err(missing("initial"));
    }
    overlay!(s, file; solver, t_final, snapshot_interval, output_dir, kernel, kinetic, initial);

    match file.params {
        Some(pp) => {
            if !has_preset {
                s.params.chi1 = pp.chi1.ok_or_else(|| missing("params.chi1"))?;
                s.params.chi2 = pp.chi2.ok_or_else(|| missing("params.chi2"))?;
            }
            overlay!(s.params, pp; chi1, chi2, theta1, theta2, psi1, psi2);
        }
        None if !has_preset => return Err(missing("params")),
        None => {}
    }
    if let Some(g) = file.grid {
        overlay!(s.grid, g; xmin, xmax, dx);
    }
    if let Some(f) = file.fv {
        overlay!(s.fv, f; safety, leak_fraction);
    }
    if let Some(pp) = file.particles {
        overlay!(s.particles, pp; dt_max, gap_tol, sample_interval);
    }
    validate(&s)?;
    Ok(s)
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
    parse_scenario(&text, stem).map_err(|e| e.with_context(format!("loading {}", path.display())))
}

pub fn to_toml(s: &Scenario) -> Result<String> {
    toml::to_string(s).map_err(|e| Error::Config {
        key: ".".into(),
        message: e.to_string(),
    })
}

pub fn write_scenario(s: &Scenario, path: &Path) -> Result<()> {
    fs::write(path, to_toml(s)?).map_err(|e| Error::io(path, e))
}

fn invalid(key: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Validation {
        key: key.into(),
        message: message.into(),
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(key, format!("must be positive and finite, got {v}")))
    }
}

pub fn validate(s: &Scenario) -> Result<()> {
    s.params.validate()?;
    s.grid.validate()?;
    positive("t_final", s.t_final)?;
    if !(s.snapshot_interval.is_finite() && s.snapshot_interval >= 0.0) {
        return Err(invalid("snapshot_interval", format!("must be nonnegative, got {}", s.snapshot_interval)));
    }
    if !(s.fv.safety > 0.0 && s.fv.safety < 1.0) {
        return Err(invalid("fv.safety", format!("CFL safety must lie in (0, 1), got {}", s.fv.safety)));
    }
    if !(s.fv.leak_fraction > 0.0 && s.fv.leak_fraction < 1.0) {
        return Err(invalid("fv.leak_fraction", format!("must lie in (0, 1), got {}", s.fv.leak_fraction)));
    }
    positive("particles.dt_max", s.particles.dt_max)?;
    positive("particles.gap_tol", s.particles.gap_tol)?;
    if !(s.particles.sample_interval.is_finite() && s.particles.sample_interval >= 0.0) {
        return Err(invalid("particles.sample_interval", "must be nonnegative"));
    }
    let eps = &s.kinetic.epsilon;
    if eps.is_empty() {
        return Err(invalid("kinetic.epsilon", "needs at least one value"));
    }
    for (k, &e) in eps.iter().enumerate() {
        positive(&format!("kinetic.epsilon[{k}]"), e)?;
    }
    if eps.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(invalid("kinetic.epsilon", "must be strictly decreasing"));
    }

    let init = &s.initial;
    positive("initial.width", init.width)?;
    for (key, list) in [("initial.bumps1", &init.bumps1), ("initial.bumps2", &init.bumps2)] {
        for (k, b) in list.iter().enumerate() {
            if !(b.amplitude.is_finite() && b.amplitude >= 0.0) {
                return Err(invalid(format!("{key}[{k}].amplitude"), format!("negative or non-finite mass {}", b.amplitude)));
            }
            if !b.center.is_finite() {
                return Err(invalid(format!("{key}[{k}].center"), "must be finite"));
            }
        }
    }
    for (k, c) in init.clusters.iter().enumerate() {
        for (f, v) in [("m1", c.m1), ("m2", c.m2)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(format!("initial.clusters[{k}].{f}"), format!("negative or non-finite mass {v}")));
            }
        }
        if !c.position.is_finite() {
            return Err(invalid(format!("initial.clusters[{k}].position"), "must be finite"));
        }
    }
    let has_bumps = !init.bumps1.is_empty() || !init.bumps2.is_empty();
    match (has_bumps, init.clusters.is_empty()) {
        (true, false) => Err(invalid("initial", "give either bumps or clusters, not both")),
        (false, true) => Err(invalid("initial", "no initial data")),
        _ => Ok(()),
    }
}

impl Scenario {
    /// Cell masses on the scenario grid, and whether the bumps are under-resolved.
    pub fn grid_state(&self) -> Result<(GridState, bool)> {
        let init = &self.initial;
        if init.clusters.is_empty() {
            return GridState::from_bumps(self.grid, &init.bumps1, &init.bumps2, init.width);
        }
        let n = self.grid.cells();
        let (mut r1, mut r2) = (vec![0.0; n], vec![0.0; n]);
        for c in &init.clusters {
            let j = ((c.position - self.grid.xmin) / self.grid.dx).floor();
            if !(j >= 0.0 && (j as usize) < n) {
                return Err(Error::domain(format!("cluster at {} lies outside the grid", c.position)));
            }
            r1[j as usize] += c.m1;
            r2[j as usize] += c.m2;
        }
        Ok((GridState::new(self.grid, r1, r2)?, false))
    }

    /// Point clusters; each bump becomes one cluster of mass `A·√(π/w)` at its center.
    pub fn cluster_set(&self) -> Result<ClusterSet> {
        let init = &self.initial;
        let mut items: Vec<(f64, f64, f64)> = if init.clusters.is_empty() {
            let unit = bump_mass_unit(init.width);
            let b1 = init.bumps1.iter().map(|b| (b.center, b.amplitude * unit, 0.0));
            let b2 = init.bumps2.iter().map(|b| (b.center, 0.0, b.amplitude * unit));
            b1.chain(b2).collect()
        } else {
            init.clusters.iter().map(|c| (c.position, c.m1, c.m2)).collect()
        };
        items.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64, f64)> = Vec::with_capacity(items.len());
        for it in items {
            match merged.last_mut() {
                Some(last) if last.0 == it.0 => {
                    last.1 += it.1;
                    last.2 += it.2;
                }
                _ => merged.push(it),
            }
        }
        merged.retain(|c| c.1 + c.2 > 0.0);
        ClusterSet::new(merged)
    }

    pub fn snapshot_times(&self) -> Vec<f64> {
        let mut times = vec![0.0];
        if self.snapshot_interval > 0.0 {
            let count = (self.t_final / self.snapshot_interval * (1.0 + 1e-12)).floor() as usize;
            times.extend((1..=count).map(|k| k as f64 * self.snapshot_interval).filter(|&t| t <= self.t_final));
        }
        if times.last().is_some_and(|&t| t < self.t_final * (1.0 - 1e-12)) {
            times.push(self.t_final);
        }
        times
    }

    pub fn resolved_output_dir(&self) -> PathBuf {
        let dir = PathBuf::from(&self.output_dir);
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if dir.is_relative() => PathBuf::from(root).join(dir),
            _ => dir,
        }
    }
}

/// A solver event in a form shared by all solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEvent {
    pub solver: String,
    pub time: f64,
    pub kind: String,
    pub species: Option<Species>,
    pub position: f64,
    /// Masses of the colliding pair, when the event involves one.
    pub m1: Option<f64>,
    pub m2: Option<f64>,
    pub gamma: Option<f64>,
    pub sync_lhs: Option<f64>,
    pub sync_rhs: Option<f64>,
    pub sync_holds: Option<bool>,
    /// Cluster or peak positions right after the event.
    pub positions: Vec<f64>,
}

impl ReportEvent {
    pub fn cross_species(&self) -> bool {
        self.sync_lhs.is_some()
    }

    pub fn is_collision(&self) -> bool {
        matches!(
            self.kind.as_str(),
            "merge_same_species" | "glue" | "cross" | "final_collapse" | "contact" | "merge"
        )
    }

    /// Label pairing particle and finite-volume events of the same nature.
    pub fn category(&self) -> Option<&'static str> {
        match self.kind.as_str() {
            "glue" | "cross" | "contact" => Some("cross_species_contact"),
            "unglue" | "sync_lost" => Some("unglue"),
            "merge_same_species" | "merge" => Some("merge"),
            "final_collapse" => Some("final_collapse"),
            _ => None,
        }
    }
}

fn particle_kind(k: EventKind) -> &'static str {
    match k {
        EventKind::MergeSameSpecies => "merge_same_species",
        EventKind::Glue => "glue",
        EventKind::Cross => "cross",
        EventKind::Unglue => "unglue",
        EventKind::FinalCollapse => "final_collapse",
    }
}

fn fv_kind(k: FvEventKind) -> &'static str {
    match k {
        FvEventKind::Contact => "contact",
        FvEventKind::Separation => "separation",
        FvEventKind::SyncLost => "sync_lost",
        FvEventKind::Merge => "merge",
        FvEventKind::FinalCollapse => "final_collapse",
    }
}

impl From<&particles::Event> for ReportEvent {
    fn from(e: &particles::Event) -> Self {
        ReportEvent {
            solver: "particles".into(),
            time: e.time,
            kind: particle_kind(e.kind).into(),
            species: None,
            position: e.position,
            m1: Some(e.m1),
            m2: Some(e.m2),
            gamma: e.gamma,
            sync_lhs: e.sync_lhs,
            sync_rhs: e.sync_rhs,
            sync_holds: e.sync_lhs.zip(e.sync_rhs).map(|(l, r)| l <= r),
            positions: e.positions.clone(),
        }
    }
}

fn nearest(peaks: &[SpeciesPeak], x: f64) -> Option<f64> {
    peaks
        .iter()
        .min_by(|a, b| (a.position - x).abs().total_cmp(&(b.position - x).abs()))
        .map(|p| p.mass)
}

impl From<&FvEvent> for ReportEvent {
    fn from(e: &FvEvent) -> Self {
        let pair = e.sync_lhs.is_some();
        let mut positions: Vec<f64> = e.peaks1.iter().chain(&e.peaks2).map(|p| p.position).collect();
        positions.sort_by(f64::total_cmp);
        ReportEvent {
            solver: "fv".into(),
            time: e.time,
            kind: fv_kind(e.kind).into(),
            species: e.species,
            position: e.position,
            m1: if pair { nearest(&e.peaks1, e.position) } else { None },
            m2: if pair { nearest(&e.peaks2, e.position) } else { None },
            gamma: e.gamma,
            sync_lhs: e.sync_lhs,
            sync_rhs: e.sync_rhs,
            sync_holds: e.sync_holds,
            positions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverTimes {
    pub solver: String,
    pub collisions: Vec<f64>,
    pub transitions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conservation {
    pub solver: String,
    /// Relaxation time for kinetic runs.
    pub epsilon: Option<f64>,
    pub mass1_initial: f64,
    pub mass1_final: f64,
    pub mass2_initial: f64,
    pub mass2_final: f64,
    pub weighted_center_initial: Option<f64>,
    pub weighted_center_final: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventAgreement {
    pub category: String,
    pub particles: Option<f64>,
    pub fv: Option<f64>,
    pub difference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: Scenario,
    pub events: Vec<ReportEvent>,
    pub times: Vec<SolverTimes>,
    pub conservation: Vec<Conservation>,
    pub comparison: Vec<EventAgreement>,
    pub warnings: Vec<String>,
    /// Paths relative to the run directory.
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct PeakSnapshot {
    t: f64,
    peaks: Vec<Peak>,
}

struct Output<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl Output<'_> {
    fn create(&mut self, rel: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        self.files.push(rel.to_string());
        Ok(BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?))
    }

    fn write_json<T: Serialize + ?Sized>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut w = self.create(rel)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n").map_err(|e| Error::io(rel, e))?;
        w.flush().map_err(|e| Error::io(rel, e))
    }
}

struct SolverOutput {
    events: Vec<ReportEvent>,
    conservation: Vec<Conservation>,
    warnings: Vec<String>,
    files: Vec<String>,
}

fn run_fv(s: &Scenario, kernel: &dyn PointyKernel, dir: &Path) -> Result<SolverOutput> {
    let mut out = Output { dir, files: Vec::new() };
    let (initial, coarse) = s.grid_state()?;
    let mut warnings = Vec::new();
    if coarse {
        warnings.push(format!("grid spacing {} resolves the bumps with fewer than 8 cells per standard deviation", s.grid.dx));
    }
    let times = s.snapshot_times();
    let mut tracker = FvEventTracker::new(kernel, s.params, TrackerOptions::default());
    let result = fv::run_observed(
        &initial,
        kernel,
        &s.params,
        s.t_final,
        &fv::RunOptions {
            safety: s.fv.safety,
            snapshot_times: times,
            leak_fraction: s.fv.leak_fraction,
        },
        |state, _| {
            tracker.observe(state);
            Ok(())
        },
    )?;
    let mut peak_log = Vec::with_capacity(result.snapshots.len());
    for (k, snap) in result.snapshots.iter().enumerate() {
        snap.write_csv(out.create(&format!("fv/snapshot_{k:04}.csv"))?)?;
        peak_log.push(PeakSnapshot {
            t: snap.time,
            peaks: peaks::extract_peaks(snap, peaks::DEFAULT_PEAK_THRESHOLD)?,
        });
    }
    fv::write_diagnostics_csv(&result.diagnostics, out.create("fv/diagnostics.csv")?)?;
    out.write_json("fv/events.json", &tracker.events)?;
    out.write_json("fv/peaks.json", &peak_log)?;
    let fin = &result.final_state;
    Ok(SolverOutput {
        events: tracker.events.iter().map(ReportEvent::from).collect(),
        conservation: vec![Conservation {
            solver: "fv".into(),
            epsilon: None,
            mass1_initial: initial.mass(Species::One),
            mass1_final: fin.mass(Species::One),
            mass2_initial: initial.mass(Species::Two),
            mass2_final: fin.mass(Species::Two),
            weighted_center_initial: Some(initial.weighted_center(&s.params)),
            weighted_center_final: Some(fin.weighted_center(&s.params)),
        }],
        warnings,
        files: out.files,
    })
}

fn run_particles(s: &Scenario, kernel: &dyn PointyKernel, dir: &Path) -> Result<SolverOutput> {
    let mut out = Output { dir, files: Vec::new() };
    let initial = s.cluster_set()?;
    let result = particles::run(&initial, kernel, &s.params, s.t_final, &s.particles)?;
    particles::write_trajectory_csv(&result.trajectory, out.create("particles/trajectory.csv")?)?;
    particles::write_event_log(&result.events, out.create("particles/events.json")?)?;
    let fin = &result.final_state;
    Ok(SolverOutput {
        events: result.events.iter().map(ReportEvent::from).collect(),
        conservation: vec![Conservation {
            solver: "particles".into(),
            epsilon: None,
            mass1_initial: initial.mass1(),
            mass1_final: fin.mass1(),
            mass2_initial: initial.mass2(),
            mass2_final: fin.mass2(),
            weighted_center_initial: Some(initial.weighted_center(&s.params)),
            weighted_center_final: Some(fin.weighted_center(&s.params)),
        }],
        warnings: Vec::new(),
        files: out.files,
    })
}

fn require_kinetic_hypothesis(p: &ModelParams) -> Result<()> {
    if kinetic::check_positivity_condition(p) {
        Ok(())
    } else {
        Err(Error::Hypothesis(format!(
            "kinetic model needs χ_α(θ₁+θ₂) < 1, got χ₁ = {}, χ₂ = {}, θ₁+θ₂ = {}",
            p.chi1,
            p.chi2,
            p.theta_sum()
        )))
    }
}

fn run_kinetic(s: &Scenario, kernel: &dyn PointyKernel, dir: &Path) -> Result<SolverOutput> {
    require_kinetic_hypothesis(&s.params)?;
    let mut out = Output { dir, files: Vec::new() };
    let (initial, _) = s.grid_state()?;
    let times = s.snapshot_times();
    let mut conservation = Vec::new();
    for (i, &eps) in s.kinetic.epsilon.iter().enumerate() {
        let mut state = KineticState::well_prepared(&initial, kernel, &s.params, eps)?;
        for (k, &t) in times.iter().enumerate() {
            state = kinetic::run(&state, kernel, &s.params, t)?;
            let field = kinetic::solve_s(&state, kernel, &s.params);
            state.write_csv(&field, out.create(&format!("kinetic/eps_{i}/snapshot_{k:04}.csv"))?)?;
        }
        conservation.push(Conservation {
            solver: "kinetic".into(),
            epsilon: Some(eps),
            mass1_initial: initial.mass(Species::One),
            mass1_final: state.mass(Species::One),
            mass2_initial: initial.mass(Species::Two),
            mass2_final: state.mass(Species::Two),
            weighted_center_initial: None,
            weighted_center_final: None,
        });
    }
    Ok(SolverOutput {
        events: Vec::new(),
        conservation,
        warnings: Vec::new(),
        files: out.files,
    })
}

fn compare_events(events: &[ReportEvent]) -> Vec<EventAgreement> {
    let mut rows = Vec::new();
    for category in ["cross_species_contact", "unglue", "merge", "final_collapse"] {
        let of = |solver: &str| -> Vec<f64> {
            events
                .iter()
                .filter(|e| e.solver == solver && e.category() == Some(category))
                .map(|e| e.time)
                .collect()
        };
        let (a, b) = (of("particles"), of("fv"));
        for k in 0..a.len().max(b.len()) {
            let (pa, pb) = (a.get(k).copied(), b.get(k).copied());
            rows.push(EventAgreement {
                category: category.into(),
                particles: pa,
                fv: pb,
                difference: pa.zip(pb).map(|(x, y)| y - x),
            });
        }
    }
    rows
}

/// Runs the scenario into its resolved output directory.
pub fn run_scenario(s: &Scenario) -> Result<RunReport> {
    run_scenario_in(s, &s.resolved_output_dir())
}

/// Runs the scenario into `dir`, writing snapshots, diagnostics, event logs,
/// `scenario.toml`, `sync_analysis.txt` and `report.json`.
pub fn run_scenario_in(s: &Scenario, dir: &Path) -> Result<RunReport> {
    let context = format!("scenario `{}` ({})", s.name, s.solver.name());
    run_inner(s, dir).map_err(|e| e.with_context(context))
}

fn run_inner(s: &Scenario, dir: &Path) -> Result<RunReport> {
    validate(s)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let kernel: Arc<dyn PointyKernel> = s.kernel.build()?;
    let outputs = match s.solver {
        Solver::Fv => vec![run_fv(s, kernel.as_ref(), dir)?],
        Solver::Particles => vec![run_particles(s, kernel.as_ref(), dir)?],
        Solver::Kinetic => vec![run_kinetic(s, kernel.as_ref(), dir)?],
        Solver::Compare => {
            let (a, b) = std::thread::scope(|scope| {
                let part = scope.spawn(|| run_particles(s, kernel.as_ref(), dir));
                let fvr = run_fv(s, kernel.as_ref(), dir);
                (part.join().expect("particle solver thread panicked"), fvr)
            });
            vec![a?, b?]
        }
    };

    let mut events = Vec::new();
    let mut conservation = Vec::new();
    let mut warnings = Vec::new();
    let mut files = Vec::new();
    let mut times = Vec::new();
    for o in outputs {
        if let Some(solver) = o.conservation.first().map(|c| c.solver.clone()) {
            if solver != "kinetic" {
                times.push(SolverTimes {
                    solver,
                    collisions: o.events.iter().filter(|e| e.is_collision()).map(|e| e.time).collect(),
                    transitions: o.events.iter().filter(|e| !e.is_collision()).map(|e| e.time).collect(),
                });
            }
        }
        events.extend(o.events);
        conservation.extend(o.conservation);
        warnings.extend(o.warnings);
        files.extend(o.files);
    }
    let comparison = if s.solver == Solver::Compare { compare_events(&events) } else { Vec::new() };
    files.extend(["scenario.toml", "sync_analysis.txt", "report.json"].map(String::from));
    let report = RunReport {
        scenario: s.clone(),
        events,
        times,
        conservation,
        comparison,
        warnings,
        files,
    };

    let mut out = Output { dir, files: Vec::new() };
    let mut w = out.create("scenario.toml")?;
    w.write_all(to_toml(s)?.as_bytes()).map_err(|e| Error::io("scenario.toml", e))?;
    w.flush().map_err(|e| Error::io("scenario.toml", e))?;
    let mut w = out.create("sync_analysis.txt")?;
    w.write_all(report_sync_analysis(&report).as_bytes())
        .map_err(|e| Error::io("sync_analysis.txt", e))?;
    w.flush().map_err(|e| Error::io("sync_analysis.txt", e))?;
    out.write_json("report.json", &report)?;
    Ok(report)
}

/// Reads `report.json` from a run directory.
pub fn load_report(dir: &Path) -> Result<RunReport> {
    let path = dir.join("report.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Kinetic ε sweep against the finite-volume reference; writes `limit.csv`.
pub fn run_limit(s: &Scenario, dir: &Path) -> Result<Vec<LimitRow>> {
    let go = || -> Result<Vec<LimitRow>> {
        validate(s)?;
        require_kinetic_hypothesis(&s.params)?;
        let kernel = s.kernel.build()?;
        let (initial, _) = s.grid_state()?;
        let rows = kinetic::limit_experiment(&initial, kernel.as_ref(), &s.params, &s.kinetic.epsilon, s.t_final, s.fv.safety)?;
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut out = Output { dir, files: Vec::new() };
        kinetic::write_limit_csv(&rows, out.create("limit.csv")?)?;
        Ok(rows)
    };
    go().map_err(|e| e.with_context(format!("limit experiment for scenario `{}`", s.name)))
}

/// Shortest decimal form with at most four fractional digits.
fn num(x: f64) -> String {
    let s = format!("{x:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// Cross-species events with the synchronising-condition arithmetic, masses
/// in units of `m₀ = √(π/5000)`.
pub fn report_sync_analysis(report: &RunReport) -> String {
    let p = &report.scenario.params;
    let unit = m0();
    let unit_theta = p.theta1 == 1.0 && p.theta2 == 1.0;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "synchronising condition for `{}` (χ₁ = {}, χ₂ = {}, θ₁ = {}, θ₂ = {}; masses in m₀ = {:.6})",
        report.scenario.name,
        num(p.chi1),
        num(p.chi2),
        num(p.theta1),
        num(p.theta2),
        unit
    );
    let rows: Vec<&ReportEvent> = report.events.iter().filter(|e| e.cross_species()).collect();
    if rows.is_empty() {
        let _ = writeln!(out, "no cross-species events");
        return out;
    }
    for e in rows {
        let lhs = e.sync_lhs.unwrap_or(f64::NAN) / unit;
        let rhs = e.sync_rhs.unwrap_or(f64::NAN) / unit;
        let g = e.gamma.unwrap_or(f64::NAN) / unit;
        let (m1, m2) = (e.m1.unwrap_or(f64::NAN) / unit, e.m2.unwrap_or(f64::NAN) / unit);
        let holds = e.sync_holds.unwrap_or(lhs <= rhs);
        let positions: Vec<String> = e.positions.iter().map(|&x| num(x)).collect();
        let _ = writeln!(out);
        let _ = writeln!(out, "[{}] t = {}  {} at x = {}", e.solver, num(e.time), e.kind, num(e.position));
        let _ = writeln!(out, "  positions: {}", positions.join(", "));
        let _ = writeln!(out, "  m₁ = {}, m₂ = {}, γ = {}", num(m1), num(m2), num(g));
        let _ = writeln!(
            out,
            "  LHS = |(χ₁ − χ₂)γ| = |({} − {})·{}| = {}",
            num(p.chi1),
            num(p.chi2),
            num(g),
            num(lhs)
        );
        if unit_theta {
            let _ = writeln!(
                out,
                "  RHS = ½(χ₁m₂ + χ₂m₁) = ½({}·{} + {}·{}) = {}",
                num(p.chi1),
                num(m2),
                num(p.chi2),
                num(m1),
                num(rhs)
            );
        } else {
            let _ = writeln!(
                out,
                "  RHS = ½(χ₁θ₂m₂ + χ₂θ₁m₁) = ½({}·{}·{} + {}·{}·{}) = {}",
                num(p.chi1),
                num(p.theta2),
                num(m2),
                num(p.chi2),
                num(p.theta1),
                num(m1),
                num(rhs)
            );
        }
        let decision = if holds { "synchronise (LHS ≤ RHS)" } else { "separate (LHS > RHS)" };
        let _ = writeln!(out, "  decision: {decision}");
    }
    out
}
