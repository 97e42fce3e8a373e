//! Acceptance suite: one PASS/FAIL line per criterion, detail lines indented.
//! Runs with `harness = false`; the process exits nonzero when any criterion fails.

// Closed forms are kept at the 20 digits mpmath printed.
#![allow(clippy::excessive_precision)]

use std::time::{Duration, Instant};

use aggsync::expconv::{direct_hat_deriv, exp_hat_deriv, exp_hat_deriv_uniform, max_relative_deviation};
use aggsync::fv::{self, FluxField, GridState};
use aggsync::kinetic::{self, KineticState};
use aggsync::measures::m0;
use aggsync::particles::{self, ClusterSet, EventKind, ParticleOptions};
use aggsync::peaks::{FvEvent, FvEventKind, FvEventTracker, TrackerOptions};
use aggsync::scenario::{self, Scenario};
use aggsync::sync::{glued_selection, sync_condition};
use aggsync::{coupled_w2, quantile, wasserstein2, DiscreteMeasure, Exponential, Grid, ModelParams, PointyKernel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Check {
    ok: bool,
    text: String,
}

fn check(ok: bool, text: impl Into<String>) -> Check {
    Check { ok, text: text.into() }
}

fn within(label: &str, value: f64, target: f64, tol: f64) -> Check {
    check(
        (value - target).abs() <= tol,
        format!("{label} = {value:.6} (target {target} ± {})", fmt_tol(tol)),
    )
}

fn fmt_tol(tol: f64) -> String {
    if tol < 1e-4 {
        format!("{tol:.1e}")
    } else {
        format!("{tol}")
    }
}

fn within_rel(label: &str, value: f64, target: f64, rel: f64) -> Check {
    check(
        (value - target).abs() <= rel * target.abs(),
        format!("{label} = {value:.6} (target {target} ± {:.0}%)", rel * 100.0),
    )
}

fn missing(label: &str) -> Check {
    check(false, format!("{label}: not found"))
}

struct FvOutcome {
    events: Vec<FvEvent>,
    /// `(time, in contact)` at the requested probe times.
    probes: Vec<(f64, bool)>,
    wall: Duration,
    initial: GridState,
    final_state: GridState,
}

struct ParticleOutcome {
    run: particles::ParticleRun,
    initial: ClusterSet,
    wall: Duration,
}

fn run_fv(s: &Scenario, probes: &[f64]) -> FvOutcome {
    let (initial, _) = s.grid_state().expect("preset grid");
    let mut tracker = FvEventTracker::new(&Exponential, s.params, TrackerOptions::default());
    let mut seen = Vec::new();
    let opts = fv::RunOptions {
        safety: s.fv.safety,
        snapshot_times: probes.to_vec(),
        leak_fraction: s.fv.leak_fraction,
    };
    let start = Instant::now();
    let run = fv::run_observed(&initial, &Exponential, &s.params, s.t_final, &opts, |state, _| {
        tracker.observe(state);
        if probes.contains(&state.time) {
            seen.push((state.time, tracker.in_contact()));
        }
        Ok(())
    })
    .expect("fv run");
    FvOutcome {
        events: tracker.events,
        probes: seen,
        wall: start.elapsed(),
        initial,
        final_state: run.final_state,
    }
}

fn run_particles(s: &Scenario) -> ParticleOutcome {
    let initial = s.cluster_set().expect("preset clusters");
    let start = Instant::now();
    let run = particles::run(&initial, &Exponential, &s.params, s.t_final, &ParticleOptions::default()).expect("particle run");
    ParticleOutcome {
        run,
        initial,
        wall: start.elapsed(),
    }
}

fn cross_species(e: &particles::Event) -> bool {
    matches!(e.kind, EventKind::Glue | EventKind::Cross)
}

fn first_after(events: &[FvEvent], kind: FvEventKind, after: f64) -> Option<&FvEvent> {
    events.iter().find(|e| e.kind == kind && e.time > after)
}

/// The species-1 peak farthest from `x` among the peaks logged with `e`.
fn remote_species1(e: &FvEvent) -> Option<f64> {
    e.peaks1
        .iter()
        .map(|p| p.position)
        .max_by(|a, b| (a - e.position).abs().total_cmp(&(b - e.position).abs()))
}

/// Cluster position farthest from the event location.
fn remote_cluster(e: &particles::Event) -> Option<f64> {
    e.positions
        .iter()
        .copied()
        .max_by(|a, b| (a - e.position).abs().total_cmp(&(b - e.position).abs()))
}

fn print_fv(e: &FvEvent) -> String {
    let sync = match (e.sync_lhs, e.sync_rhs) {
        (Some(l), Some(r)) => format!(", LHS {:.4} m₀, RHS {:.4} m₀", l / m0(), r / m0()),
        _ => String::new(),
    };
    format!("fv {:?} t = {:.4} x = {:.4}{sync}", e.kind, e.time, e.position)
}

fn print_particle(e: &particles::Event) -> String {
    let sync = match (e.sync_lhs, e.sync_rhs) {
        (Some(l), Some(r)) => format!(", LHS {:.4} m₀, RHS {:.4} m₀", l / m0(), r / m0()),
        _ => String::new(),
    };
    format!("particles {:?} t = {:.4} x = {:.4}{sync}", e.kind, e.time, e.position)
}

fn ac1(fv: &FvOutcome, pr: &ParticleOutcome) -> Vec<Check> {
    let mut c = Vec::new();
    let ev = &pr.run.events;
    match ev.iter().find(|e| cross_species(e)) {
        Some(e) => {
            c.push(within("particles t1", e.time, 0.947, 0.05));
            c.push(within("particles contact x", e.position, -0.18, 0.02));
            match remote_cluster(e) {
                Some(x) => c.push(within("particles remote x", x, 0.12, 0.02)),
                None => c.push(missing("particles remote cluster")),
            }
            c.push(check(e.kind == EventKind::Glue, format!("particles decision {:?} (expected Glue)", e.kind)));
            let fin = ev.iter().find(|x| x.kind == EventKind::FinalCollapse);
            let unglued = ev.iter().any(|x| x.kind == EventKind::Unglue && fin.is_none_or(|f| x.time < f.time));
            c.push(check(fin.is_some() && !unglued, "particles pair stays glued until final collapse"));
        }
        None => c.push(missing("particles cross-species contact")),
    }
    match fv.events.iter().find(|e| e.kind == FvEventKind::Contact) {
        Some(e) => {
            c.push(within("fv t1", e.time, 0.947, 0.05));
            c.push(within("fv contact x", e.position, -0.18, 0.02));
            match remote_species1(e) {
                Some(x) => c.push(within("fv remote x", x, 0.12, 0.02)),
                None => c.push(missing("fv remote peak")),
            }
            c.push(check(e.sync_holds == Some(true), "fv decision glue (condition holds)"));
            let fin = fv.events.iter().find(|x| x.kind == FvEventKind::FinalCollapse);
            let broke = fv.events.iter().any(|x| {
                matches!(x.kind, FvEventKind::SyncLost | FvEventKind::Separation)
                    && x.time > e.time
                    && fin.is_none_or(|f| x.time < f.time)
            });
            c.push(check(fin.is_some() && !broke, "fv pair stays in contact until final collapse"));
        }
        None => c.push(missing("fv cross-species contact")),
    }
    c.push(check(fv.wall < Duration::from_secs(30), format!("fv runtime {:.2?} (< 30 s)", fv.wall)));
    c.push(check(pr.wall < Duration::from_secs(1), format!("particle runtime {:.2?} (< 1 s)", pr.wall)));
    c
}

fn ac2(fv: &FvOutcome, pr: &ParticleOutcome) -> Vec<Check> {
    let mut c = Vec::new();
    let ev = &pr.run.events;
    match ev.iter().find(|e| cross_species(e)) {
        Some(e) => {
            c.push(within("particles t1", e.time, 0.9, 0.05));
            c.push(within("particles x1", e.position, -0.15, 0.02));
            match remote_cluster(e) {
                Some(x) => c.push(within("particles x2", x, 0.25, 0.02)),
                None => c.push(missing("particles remote cluster")),
            }
            c.push(check(e.kind == EventKind::Cross, format!("particles decision {:?} (expected Cross)", e.kind)));
            let (l, r) = (e.sync_lhs.unwrap_or(f64::NAN) / m0(), e.sync_rhs.unwrap_or(f64::NAN) / m0());
            c.push(within("particles LHS/m₀", l, 12.066, 0.3));
            c.push(within("particles RHS/m₀", r, 11.0, 1e-12 * 11.0));
        }
        None => c.push(missing("particles cross-species contact")),
    }
    match ev.iter().find(|e| e.kind == EventKind::MergeSameSpecies) {
        Some(e) => c.push(within("particles t2 (merge)", e.time, 1.61, 0.08)),
        None => c.push(missing("particles t2 merge")),
    }
    match ev.iter().find(|e| e.kind == EventKind::FinalCollapse) {
        Some(e) => c.push(within("particles t3 (final collapse)", e.time, 1.85, 0.09)),
        None => c.push(missing("particles t3 final collapse")),
    }
    for e in fv.events.iter().filter(|e| e.kind != FvEventKind::Separation) {
        c.push(check(true, format!("info: {}", print_fv(e))));
    }
    c
}

fn ac3(fv: &FvOutcome, pr: &ParticleOutcome) -> Vec<Check> {
    let mut c = Vec::new();
    let ev = &pr.run.events;
    match ev.iter().find(|e| cross_species(e)) {
        Some(e) => {
            c.push(check(e.kind == EventKind::Glue, format!("particles decision {:?} (expected Glue)", e.kind)));
            c.push(within("particles t1 (glue)", e.time, 0.47, 0.03));
            c.push(within("particles LHS/m₀", e.sync_lhs.unwrap_or(f64::NAN) / m0(), 9.119, 0.3));
            c.push(within("particles RHS/m₀", e.sync_rhs.unwrap_or(f64::NAN) / m0(), 11.0, 1e-12 * 11.0));
        }
        None => c.push(missing("particles glue")),
    }
    match ev.iter().find(|e| e.kind == EventKind::Unglue) {
        Some(e) => c.push(within("particles t2 (unglue)", e.time, 1.04, 0.06)),
        None => c.push(missing("particles unglue")),
    }
    match ev.iter().find(|e| e.kind == EventKind::MergeSameSpecies) {
        Some(e) => c.push(within("particles t3 (merge)", e.time, 2.037, 0.1)),
        None => c.push(missing("particles t3 merge")),
    }
    match ev.iter().find(|e| e.kind == EventKind::FinalCollapse) {
        Some(e) => c.push(within("particles t4 (final collapse)", e.time, 2.32, 0.12)),
        None => c.push(missing("particles t4 final collapse")),
    }
    for e in fv.events.iter().filter(|e| e.kind != FvEventKind::Separation) {
        c.push(check(true, format!("info: {}", print_fv(e))));
    }
    c
}

const AC4_EVIDENCE: [f64; 2] = [0.4288, 1.256];

fn ac4(fv: &FvOutcome, pr: &ParticleOutcome) -> Vec<Check> {
    let mut c = Vec::new();
    let ev = &fv.events;
    let rel = 0.15;
    let apart_at = |t: f64| fv.probes.iter().find(|p| p.0 == t).map(|p| !p.1);

    let Some(e1) = first_after(ev, FvEventKind::Contact, -1.0) else {
        c.push(missing("1 first contact"));
        return c;
    };
    c.push(within_rel("1 contact", e1.time, 0.0459, rel));
    let s1 = first_after(ev, FvEventKind::Separation, e1.time);
    c.push(check(
        s1.is_some_and(|s| s.time <= (1.0 + rel) * AC4_EVIDENCE[0]) && apart_at(AC4_EVIDENCE[0]) == Some(true),
        format!(
            "2 separated by the snapshot at {} (separation at {:?})",
            AC4_EVIDENCE[0],
            s1.map(|s| s.time)
        ),
    ));
    let after1 = s1.map_or(e1.time, |s| s.time);
    let e3 = first_after(ev, FvEventKind::Contact, after1);
    match e3 {
        Some(e) => c.push(within_rel("3 re-contact", e.time, 0.9494, rel)),
        None => c.push(missing("3 re-contact")),
    }
    let after3 = e3.map_or(after1, |e| e.time);
    let e4 = ev
        .iter()
        .find(|e| e.kind == FvEventKind::Merge && e.species == Some(aggsync::Species::One) && e.time > after3);
    match e4 {
        Some(e) => c.push(within_rel("4 catch-up (species-1 merge)", e.time, 1.04, rel)),
        None => c.push(missing("4 catch-up")),
    }
    let after4 = e4.map_or(after3, |e| e.time);
    let s2 = first_after(ev, FvEventKind::Separation, after4);
    c.push(check(
        s2.is_some_and(|s| s.time <= (1.0 + rel) * AC4_EVIDENCE[1]) && apart_at(AC4_EVIDENCE[1]) == Some(true),
        format!(
            "5 separated by the snapshot at {} (separation at {:?})",
            AC4_EVIDENCE[1],
            s2.map(|s| s.time)
        ),
    ));
    let after5 = s2.map_or(after4, |s| s.time);
    let e6 = first_after(ev, FvEventKind::Contact, after5);
    match e6 {
        Some(e) => c.push(within_rel("6 glue", e.time, 1.684, rel)),
        None => c.push(missing("6 glue")),
    }
    let after6 = e6.map_or(after5, |e| e.time);
    match first_after(ev, FvEventKind::FinalCollapse, after6 - 1e-12) {
        Some(e) => c.push(within_rel("7 final collapse", e.time, 2.756, rel)),
        None => c.push(missing("7 final collapse")),
    }
    for e in &pr.run.events {
        c.push(check(true, format!("info: {}", print_particle(e))));
    }
    c
}

fn ac5() -> Vec<Check> {
    let p = ModelParams::new(10.0, 1.0, 1.0, 1.0).unwrap();
    let m = m0();
    // (label, contact x, remote x, μ at contact, ν at contact, remote μ, printed LHS, closed form, printed RHS)
    let cases = [
        ("example 1", -0.18, 0.12, 4.0, 2.0, 2.0, None, 6.6673639861354607946, 12.0),
        ("example 2", -0.15, 0.25, 2.0, 2.0, 4.0, Some(12.066), 12.065760828641507413, 11.0),
        ("example 3 glue", -0.29, 0.39, 2.0, 2.0, 4.0, Some(9.1191), 9.1191058625806129711, 11.0),
        ("example 3 unglue", -0.26, 0.23, 2.0, 2.0, 4.0, None, 11.027275095319489242, 11.0),
    ];
    let mut c = Vec::new();
    for (label, x1, x2, mu, nu, remote, printed, closed, rhs) in cases {
        let cs = ClusterSet::new(vec![(x1, mu * m, nu * m), (x2, remote * m, 0.0)]).unwrap();
        let g = particles::gamma(&cs, 0, &Exponential, &p);
        let s = sync_condition(g, mu * m, nu * m, &p);
        let (l, r) = (s.lhs / m, s.rhs / m);
        c.push(within(&format!("{label} LHS vs closed form"), l, closed, 1e-3));
        if let Some(v) = printed {
            c.push(within(&format!("{label} LHS vs printed"), l, v, 1e-3));
        }
        c.push(within(&format!("{label} RHS"), r, rhs, 1e-3));
    }
    c
}

fn ac6(fvs: &[(&str, &FvOutcome)], prs: &[(&str, &ParticleOutcome)]) -> Vec<Check> {
    let mut c = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 256;
    let grid = Grid::new(-2.0, 2.0, 4.0 / n as f64).unwrap();
    let r1: Vec<f64> = (0..n).map(|j| if (64..192).contains(&j) { rng.gen::<f64>() } else { 0.0 }).collect();
    let r2: Vec<f64> = (0..n).map(|j| if (64..192).contains(&j) { rng.gen::<f64>() } else { 0.0 }).collect();
    let p = ModelParams::new(rng.gen_range(0.5..5.0), rng.gen_range(0.5..5.0), 1.0, 1.0).unwrap();
    let mut st = GridState::new(grid, r1, r2).unwrap();
    let sums = |s: &GridState| (s.rho1().iter().sum::<f64>(), s.rho2().iter().sum::<f64>());
    let start = sums(&st);
    let dt = fv::scaled_cfl_dt(&st, &Exponential, &p, 0.9).unwrap();
    let mut exact = true;
    for _ in 0..10_000 {
        let flux = FluxField::new(&st, &Exponential, &p);
        st = fv::step(&st, &flux, &p, dt).unwrap();
        exact &= sums(&st) == start;
    }
    c.push(check(exact, "fv mass bit-identical over 10⁴ steps (left-to-right sums)"));
    for (name, o) in fvs {
        let p = scenario::preset(name).unwrap().params;
        let scale = (p.theta1 / p.chi1 * o.initial.mass(aggsync::Species::One)
            + p.theta2 / p.chi2 * o.initial.mass(aggsync::Species::Two))
            * o.initial.grid().xmax.abs().max(o.initial.grid().xmin.abs());
        let drift = (o.final_state.weighted_center(&p) - o.initial.weighted_center(&p)).abs() / scale;
        c.push(check(drift <= 1e-8, format!("{name} fv weighted-center drift {drift:.2e} (≤ 1e-8)")));
        let m = [aggsync::Species::One, aggsync::Species::Two]
            .iter()
            .all(|&s| o.final_state.mass(s) == o.initial.mass(s));
        c.push(check(m, format!("{name} fv species masses unchanged")));
    }
    for (name, o) in prs {
        let p = scenario::preset(name).unwrap().params;
        let scale = p.theta1 / p.chi1 * o.initial.mass1() + p.theta2 / p.chi2 * o.initial.mass2();
        let drift = (o.run.final_state.weighted_center(&p) - o.initial.weighted_center(&p)).abs() / scale;
        c.push(check(drift <= 1e-6, format!("{name} particle weighted-center drift {drift:.2e} (≤ 1e-6)")));
    }
    c
}

fn ac7() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let kernel = Exponential;
    let (mut negatives, mut over) = (0usize, 0usize);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.gen_range(32..400);
        let grid = Grid::new(-2.0, 2.0, 4.0 / n as f64).unwrap();
        let lo = n / 4;
        let hi = 3 * n / 4;
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..n)
                .map(|j| if j >= lo && j < hi && rng.gen_bool(0.6) { rng.gen::<f64>() } else { 0.0 })
                .collect()
        };
        let (r1, r2) = (draw(&mut rng), draw(&mut rng));
        let p = ModelParams::new(rng.gen_range(0.1..10.0), rng.gen_range(0.1..10.0), rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0)).unwrap();
        let mut st = GridState::new(grid, r1, r2).unwrap();
        let total = st.mass(aggsync::Species::One) + st.mass(aggsync::Species::Two);
        let bound = kernel.lipschitz() * p.theta_sum() * total;
        let dt = fv::scaled_cfl_dt(&st, &kernel, &p, 0.9).unwrap();
        for _ in 0..100 {
            let flux = FluxField::new(&st, &kernel, &p);
            let v = flux.max_velocity();
            worst = worst.max(v / bound);
            if v > bound {
                over += 1;
            }
            st = fv::step(&st, &flux, &p, dt).unwrap();
            if st.min_cell() < 0.0 {
                negatives += 1;
            }
        }
    }
    vec![
        check(negatives == 0, format!("negative cells in {negatives} of 10⁴ steps")),
        check(over == 0, format!("velocity bound exceeded in {over} steps (max|â|/bound = {worst:.4})")),
    ]
}

fn ac8() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let p = ModelParams::new(0.4, 0.4, 1.0, 1.0).unwrap();
    let rate = 2.0 * Exponential.lambda() * (p.chi1 + p.chi2) * p.theta_sum();
    let opts = ParticleOptions::default();
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    let random_species = |rng: &mut ChaCha8Rng, k: usize| -> Vec<(f64, f64)> {
        let w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
        let s: f64 = w.iter().sum();
        w.iter().map(|m| (rng.gen_range(-1.0..1.0), m / s)).collect()
    };
    for _ in 0..20 {
        let k1 = rng.gen_range(1..5);
        let k2 = rng.gen_range(1..5);
        let a: Vec<(f64, f64, f64)> = random_species(&mut rng, k1)
            .into_iter()
            .map(|(x, m)| (x, m, 0.0))
            .chain(random_species(&mut rng, k2).into_iter().map(|(x, m)| (x, 0.0, m)))
            .collect();
        let b: Vec<(f64, f64, f64)> = a.iter().map(|&(x, m1, m2)| (x + rng.gen_range(-0.05..0.05), m1, m2)).collect();
        let (Ok(mut u), Ok(mut v)) = (ClusterSet::new(a), ClusterSet::new(b)) else {
            continue;
        };
        let d0 = coupled_w2(&u.to_pair(), &v.to_pair(), &p).unwrap();
        for k in 1..=20 {
            let t = 0.1 * k as f64;
            u = particles::run(&u, &Exponential, &p, t, &opts).unwrap().final_state;
            v = particles::run(&v, &Exponential, &p, t, &opts).unwrap().final_state;
            u.time = t;
            v.time = t;
            let d = coupled_w2(&u.to_pair(), &v.to_pair(), &p).unwrap();
            let allowed = d0 * (rate * t).exp() * (1.0 + 1e-6);
            worst = worst.max(d / allowed);
            if d > allowed {
                violations += 1;
            }
        }
    }
    vec![check(
        violations == 0,
        format!("{violations} of 400 samples above the bound (max ratio {worst:.4})"),
    )]
}

fn ac9() -> Vec<Check> {
    let s = scenario::preset("hydro_limit").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let rows = scenario::run_limit(&s, dir.path()).unwrap();
    let mut c: Vec<Check> = rows
        .iter()
        .map(|r| check(true, format!("info: ε = {}: W2 = {:.6e}, {:.6e}", r.epsilon, r.w2_species1, r.w2_species2)))
        .collect();
    let eps_ok = s.kinetic.epsilon == [0.5, 0.1, 0.02] && s.t_final == 0.5 && s.params.chi1 == 0.45 && s.params.chi2 == 0.3;
    c.push(check(eps_ok, "χ = (0.45, 0.3), T = 0.5, ε ∈ {0.5, 0.1, 0.02}"));
    c.push(check(
        rows.windows(2).all(|w| w[1].w2_species1 < w[0].w2_species1),
        "species 1 distance strictly decreasing",
    ));
    c.push(check(
        rows.windows(2).all(|w| w[1].w2_species2 < w[0].w2_species2),
        "species 2 distance strictly decreasing",
    ));
    c
}

fn ac10() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut c = Vec::new();
    for n in [128usize, 1024, 10_000] {
        let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        x.sort_by(f64::total_cmp);
        x.dedup();
        let w: Vec<f64> = x.iter().map(|_| rng.gen::<f64>()).collect();
        let dev = max_relative_deviation(&exp_hat_deriv(&x, &w), &direct_hat_deriv(&Exponential, &x, &w));
        c.push(check(dev <= 1e-12, format!("N = {n} nonuniform: deviation {dev:.2e}")));
        let h = 6.0 / n as f64;
        let xu: Vec<f64> = (0..n).map(|j| -3.0 + (j as f64 + 0.5) * h).collect();
        let wu: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let dev = max_relative_deviation(&exp_hat_deriv_uniform(h, &wu), &direct_hat_deriv(&Exponential, &xu, &wu));
        c.push(check(dev <= 1e-12, format!("N = {n} uniform grid: deviation {dev:.2e}")));
        let grid = Grid::new(-3.0, 3.0, h).unwrap();
        let ks = KineticState::new(grid, [wu.clone(), wu.iter().rev().cloned().collect()], [vec![0.0; n], vec![0.0; n]], 0.1).unwrap();
        let p = ModelParams::new(0.4, 0.4, 1.0, 1.0).unwrap();
        let (fast, direct) = (kinetic::solve_s(&ks, &Exponential, &p), kinetic::solve_s_direct(&ks, &Exponential, &p));
        let dev = max_relative_deviation(&fast.s, &direct.s).max(max_relative_deviation(&fast.ds, &direct.ds));
        c.push(check(dev <= 1e-12, format!("N = {n} chemical field: deviation {dev:.2e}")));
    }
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let atoms = |rng: &mut ChaCha8Rng| {
            let k = rng.gen_range(1..12);
            let mut x: Vec<f64> = (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect();
            x.sort_by(f64::total_cmp);
            let m: Vec<f64> = x.iter().map(|_| rng.gen_range(0.05..1.0)).collect();
            DiscreteMeasure::new(x, m).unwrap().normalized().unwrap()
        };
        let (a, b) = (atoms(&mut rng), atoms(&mut rng));
        let exact = wasserstein2(&a, &b).unwrap();
        let points = 1_000_000;
        let mut acc = 0.0;
        for i in 0..points {
            let z = (i as f64 + 0.5) / points as f64;
            let d = quantile(&a, z).unwrap() - quantile(&b, z).unwrap();
            acc += d * d;
        }
        let brute = (acc / points as f64).sqrt();
        worst = worst.max((exact - brute).abs() / brute);
    }
    c.push(check(worst <= 1e-4, format!("W2 vs 10⁶-point quantile integration: max relative error {worst:.2e}")));
    c
}

fn ac11() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut mismatches = 0;
    for _ in 0..100_000 {
        let p = ModelParams::new(rng.gen_range(0.01..20.0), rng.gen_range(0.01..20.0), rng.gen_range(0.1..3.0), rng.gen_range(0.1..3.0)).unwrap();
        let (m1, m2) = (rng.gen_range(0.0..5.0), rng.gen_range(0.0..5.0));
        if m1 + m2 == 0.0 {
            continue;
        }
        let g = rng.gen_range(-5.0..5.0);
        let holds = sync_condition(g, m1, m2, &p).holds;
        if (glued_selection(g, m1, m2, &p).abs() <= 0.5) != holds {
            mismatches += 1;
        }
    }
    vec![check(mismatches == 0, format!("{mismatches} disagreements in 10⁵ draws"))]
}

fn main() {
    let names = ["example1", "example2", "example3", "example4"];
    let presets: Vec<Scenario> = names.iter().map(|n| scenario::preset(n).unwrap()).collect();
    let fvs: Vec<FvOutcome> = presets
        .iter()
        .map(|s| run_fv(s, if s.name == "example4" { &AC4_EVIDENCE } else { &[] }))
        .collect();
    let prs: Vec<ParticleOutcome> = presets.iter().map(run_particles).collect();

    type Criterion<'a> = (&'a str, &'a str, Box<dyn Fn() -> Vec<Check> + 'a>);
    let criteria: Vec<Criterion> = vec![
        ("AC1", "example 1 synchronising dynamics", Box::new(|| ac1(&fvs[0], &prs[0]))),
        ("AC2", "example 2 non-synchronising dynamics", Box::new(|| ac2(&fvs[1], &prs[1]))),
        ("AC3", "example 3 glue then unglue", Box::new(|| ac3(&fvs[2], &prs[2]))),
        ("AC4", "example 4 seven-event sequence", Box::new(|| ac4(&fvs[3], &prs[3]))),
        ("AC5", "synchronising-condition arithmetic", Box::new(ac5)),
        (
            "AC6",
            "conservation",
            Box::new(|| {
                let f: Vec<(&str, &FvOutcome)> = names.iter().copied().zip(fvs.iter()).collect();
                let p: Vec<(&str, &ParticleOutcome)> = names.iter().copied().zip(prs.iter()).collect();
                ac6(&f, &p)
            }),
        ),
        ("AC7", "positivity and velocity bound", Box::new(ac7)),
        ("AC8", "W2 contraction", Box::new(ac8)),
        ("AC9", "hydrodynamic limit", Box::new(ac9)),
        ("AC10", "fast/direct oracle equivalence", Box::new(ac10)),
        ("AC11", "glue-closure identity", Box::new(ac11)),
    ];

    let mut failed = Vec::new();
    for (id, title, run) in &criteria {
        let checks = run();
        let ok = checks.iter().all(|c| c.ok);
        println!("{id:<5} {}  {title}", if ok { "PASS" } else { "FAIL" });
        for c in &checks {
            println!("        [{}] {}", if c.ok { "ok" } else { "x" }, c.text);
        }
        if !ok {
            failed.push(*id);
        }
    }
    println!();
    println!("{} of {} criteria passed", criteria.len() - failed.len(), criteria.len());
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
