//! Acceptance criteria 1-8. Each test prints one `criterion N: PASS|FAIL`
//! line, bypassing the test harness capture, and then asserts.
//!
//! Runs of the bundled configurations are shared between criteria.

mod common;

use std::io::Write;
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use common::TwoByTwo;
use ksfv::diagnostics::{find_plateaus, RecordRow};
use ksfv::experiment::{self, ConvergenceReport, ExperimentConfig, JobOutput, RateRow};
use ksfv::scheme::{self, Outcome, Scheme, TimeGrid};
use ksfv::{Field, Mesh, ModelParams, PicardConfig, Rect, State};

// Criterion 1
const MASS_DRIFT_TOL: f64 = 1e-10;
const MEAN_IDENTITY_TOL: f64 = 1e-10;
const MARGIN_TOL: f64 = 1e-12;
const MARGIN_STEPS: usize = 3;
// Criterion 2
const NEWTON_TOL: f64 = 1e-8;
const NEWTON_BUDGET: Duration = Duration::from_secs(1);
// Criterion 3
const ORDER_RANGE: (f64, f64) = (0.75, 1.35);
const CONVERGENCE_BUDGET: Duration = Duration::from_secs(600);
// Criterion 4
const GRID_AGREEMENT: f64 = 0.15;
const DECAY_BUDGET: Duration = Duration::from_secs(600);
// Criterion 5
const BLOWUP_BEFORE: f64 = 1.0;
const GLOBAL_UNTIL: f64 = 5.0;
const BLOWUP_BUDGET: Duration = Duration::from_secs(900);
// Criterion 6
const PLATEAU_VARIATION: f64 = 0.05;
const PLATEAU_MIN_DURATION: f64 = 0.2;
const PLATEAU_RISE: f64 = 0.5;
const INTERMEDIATE_BUDGET: Duration = Duration::from_secs(900);
// Criterion 7
const CK_TRIALS: usize = 1000;
const INEQUALITY_BUDGET: Duration = Duration::from_secs(60);
// Criterion 8
const CONSTANT_TOL: f64 = 1e-12;
const CONSTANT_STEPS: usize = 100;

fn report(n: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion {n}: {verdict}  {detail}");
}

fn config(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(format!("{name}.json"));
    ExperimentConfig::load(path).unwrap()
}

struct Timed<T> {
    value: T,
    elapsed: Duration,
}

fn timed<T>(f: impl FnOnce() -> T) -> Timed<T> {
    let t0 = Instant::now();
    let value = f();
    Timed {
        value,
        elapsed: t0.elapsed(),
    }
}

fn convergence() -> &'static Timed<(ConvergenceReport, Vec<JobOutput>)> {
    static CELL: OnceLock<Timed<(ConvergenceReport, Vec<JobOutput>)>> = OnceLock::new();
    CELL.get_or_init(|| timed(|| experiment::cmd_convergence(&config("convergence"), None).unwrap()))
}

fn decay(name: &'static str) -> &'static Timed<(Vec<RateRow>, Vec<JobOutput>)> {
    static DELTA: OnceLock<Timed<(Vec<RateRow>, Vec<JobOutput>)>> = OnceLock::new();
    static MU: OnceLock<Timed<(Vec<RateRow>, Vec<JobOutput>)>> = OnceLock::new();
    let cell = if name == "entropy_decay" { &DELTA } else { &MU };
    cell.get_or_init(|| timed(|| experiment::cmd_decay(&config(name), None).unwrap()))
}

fn runs(name: &'static str) -> &'static Timed<Vec<JobOutput>> {
    static BLOWUP: OnceLock<Timed<Vec<JobOutput>>> = OnceLock::new();
    static INTERMEDIATE: OnceLock<Timed<Vec<JobOutput>>> = OnceLock::new();
    static CONSTANT: OnceLock<Timed<Vec<JobOutput>>> = OnceLock::new();
    let cell = match name {
        "blowup_nonsymmetric" => &BLOWUP,
        "intermediate_states" => &INTERMEDIATE,
        "constant" => &CONSTANT,
        _ => panic!("no such run fixture: {name}"),
    };
    cell.get_or_init(|| timed(|| experiment::cmd_run(&config(name), None).unwrap()))
}

#[test]
fn criterion_1_structural_invariants() {
    let mut all: Vec<(&str, &JobOutput)> = Vec::new();
    all.extend(convergence().value.1.iter().map(|o| ("convergence", o)));
    all.extend(decay("entropy_decay").value.1.iter().map(|o| ("entropy_decay", o)));
    all.extend(decay("entropy_decay_mu").value.1.iter().map(|o| ("entropy_decay_mu", o)));
    for name in ["blowup_nonsymmetric", "intermediate_states", "constant"] {
        all.extend(runs(name).value.iter().map(|o| (name, o)));
    }
    let mut failures = Vec::new();
    let (mut drift, mut mean, mut margin, mut min_n) = (0.0f64, 0.0f64, 0.0f64, f64::INFINITY);
    for (name, o) in &all {
        let inv = &o.summary.invariants;
        drift = drift.max(inv.max_mass_drift);
        mean = mean.max(inv.max_mean_identity_defect);
        margin = margin.max(inv.max_dominance_defect);
        min_n = min_n.min(inv.min_density);
        let ok = inv.min_density >= 0.0
            && inv.max_mass_drift <= MASS_DRIFT_TOL
            && inv.max_mean_identity_defect <= MEAN_IDENTITY_TOL
            && inv.dominance_steps.len() == MARGIN_STEPS
            && inv.max_dominance_defect <= MARGIN_TOL;
        if !ok {
            failures.push(format!("{name}/{}", o.job.label));
        }
    }
    let pass = failures.is_empty();
    report(
        1,
        pass,
        &format!(
            "{} runs of the bundled configs (inequalities has no time run): min n {min_n:.3e}, \
             mass drift {drift:.2e}, mean identity {mean:.2e}, margin defect {margin:.2e} on {MARGIN_STEPS} random steps; \
             failing: {failures:?}",
            all.len()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_2_fixed_point_matches_newton() {
    let t0 = Instant::now();
    let (delta, mu, dt) = (1e-3, 1.0, 1e-2);
    let n_prev = [10.0, 2.0, 3.0, 1.0];
    let mesh = Mesh::cartesian(2, 2, Rect::centered_unit_square()).unwrap();
    let params = ModelParams::new(delta, mu).unwrap();
    let scheme = Scheme::new(&mesh, params).unwrap();
    let state = scheme.initial_state(Field::new(&mesh, n_prev.to_vec()).unwrap()).unwrap();
    let step = scheme::picard_advance(&mesh, &params, &state, dt, &PicardConfig::default()).unwrap();
    let oracle = TwoByTwo {
        h: 0.5,
        dt,
        delta,
        mu,
        n_prev,
    };
    let x0: Vec<f64> = n_prev.iter().copied().chain(n_prev.iter().map(|v| mu * v)).collect();
    let (x, residual) = oracle.newton(&x0);
    let got: Vec<f64> = step.state.n.values().iter().chain(step.state.s.values()).copied().collect();
    let err = got.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let elapsed = t0.elapsed();
    let pass = residual < 1e-12 && err <= NEWTON_TOL && elapsed < NEWTON_BUDGET;
    report(
        2,
        pass,
        &format!(
            "2x2 step vs dense Newton: max deviation {err:.2e} (tol {NEWTON_TOL:e}), {} Picard iterations, {:.1} ms",
            step.iterations,
            elapsed.as_secs_f64() * 1e3
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_3_convergence_order() {
    let t = convergence();
    let rep = &t.value.0;
    let orders: Vec<(String, f64)> = ["l1", "l2", "linf"]
        .iter()
        .map(|n| (n.to_string(), rep.fitted(n).unwrap_or(f64::NAN)))
        .collect();
    let in_range = orders.iter().all(|(_, p)| *p >= ORDER_RANGE.0 && *p <= ORDER_RANGE.1);
    let pass = in_range && t.elapsed <= CONVERGENCE_BUDGET;
    let detail: Vec<String> = orders.iter().map(|(n, p)| format!("{n} {p:.3}")).collect();
    report(
        3,
        pass,
        &format!(
            "fitted orders {} (range [{}, {}]), {:.0} s",
            detail.join(", "),
            ORDER_RANGE.0,
            ORDER_RANGE.1,
            t.elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_4_entropy_decay() {
    let t = decay("entropy_decay");
    let rows = &t.value.0;
    let rate = |delta: f64, nx: usize| rows.iter().find(|r| r.delta == delta && r.nx == nx).unwrap();
    let monotone: Vec<String> = rows
        .iter()
        .filter(|r| !r.monotone)
        .map(|r| format!("{} rises at t = {:.4}", r.label, r.first_increase_t.unwrap()))
        .collect();
    let ordered = [16, 32].iter().all(|&nx| rate(1e-2, nx).rate > rate(1e-3, nx).rate);
    let spread: f64 = [1e-3, 1e-2]
        .iter()
        .map(|&d| (rate(d, 16).rate - rate(d, 32).rate).abs() / rate(d, 32).rate)
        .fold(0.0, f64::max);
    let pass = monotone.is_empty() && ordered && spread <= GRID_AGREEMENT && t.elapsed <= DECAY_BUDGET;
    let rates: Vec<String> = rows.iter().map(|r| format!("{} {:.2}", r.label, r.rate)).collect();
    report(
        4,
        pass,
        &format!(
            "rates [{}]; rate(1e-2) > rate(1e-3): {ordered}; grid spread {:.1}% (max {}%); non-monotone: {monotone:?}; {:.0} s",
            rates.join(", "),
            100.0 * spread,
            100.0 * GRID_AGREEMENT,
            t.elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_5_blowup_vs_global_existence() {
    let t = runs("blowup_nonsymmetric");
    let job = |delta: f64| t.value.iter().find(|o| o.job.params.delta == delta).unwrap();
    let (ks, cd) = (job(0.0), job(1e-3));
    let blowup = match ks.result.outcome {
        Outcome::BlowUp { time, .. } => Some(time),
        Outcome::Completed => None,
    };
    let s = &cd.summary;
    // Bounded: the run never crossed either blow-up signal of its config.
    let picard = &config("blowup_nonsymmetric").picard;
    let sup = cd.result.record.sup_norms().into_iter().fold(0.0, f64::max);
    let global = cd.result.outcome == Outcome::Completed
        && (s.final_time - GLOBAL_UNTIL).abs() < 1e-9
        && sup < picard.blowup_threshold
        && ksfv::scheme::max_cell_mass(&cd.mesh, &cd.result.final_state.n) < picard.blowup_cell_mass.unwrap();
    let pass = blowup.is_some_and(|t| t < BLOWUP_BEFORE) && global && s.final_max_in_corner && t.elapsed <= BLOWUP_BUDGET;
    report(
        5,
        pass,
        &format!(
            "delta 0: blow-up signal at t = {}; delta 1e-3: reached t = {}, max sup norm {sup:.4e}, final max at cell {} (corner: {}); {:.0} s",
            blowup.map_or("none".into(), |t| format!("{t:.3}")),
            s.final_time,
            s.final_argmax,
            s.final_max_in_corner,
            t.elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_6_intermediate_states() {
    let t = runs("intermediate_states");
    let rec = &t.value[0].result.record;
    let plateaus = find_plateaus(&rec.times(), &rec.sup_norms(), PLATEAU_VARIATION, PLATEAU_MIN_DURATION);
    let rise = plateaus
        .windows(2)
        .map(|w| w[1].level / w[0].level - 1.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let pass = plateaus.len() >= 2 && rise > PLATEAU_RISE && t.elapsed <= INTERMEDIATE_BUDGET;
    let desc: Vec<String> = plateaus
        .iter()
        .map(|p| format!("[{:.2}, {:.2}] {:.4e} ({:.2}%)", p.start, p.end, p.level, 100.0 * p.variation))
        .collect();
    report(
        6,
        pass,
        &format!(
            "sup-norm plateaus {}; largest rise {:.0}% (need > {}%); {:.0} s",
            desc.join(", "),
            100.0 * rise,
            100.0 * PLATEAU_RISE,
            t.elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_7_inequality_suite() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("inequalities");
    let t = timed(|| experiment::cmd_inequalities(&cfg, Some(dir.path())).unwrap());
    let rows = &t.value;
    let meshes: Vec<(usize, usize)> = rows.iter().map(|r| (r.nx, r.ny)).collect();
    let table = dir.path().join("inequalities.csv").exists();
    let pass = meshes == [(8, 8), (16, 16)]
        && rows.iter().all(|r| r.trials == CK_TRIALS && r.ck_violations == 0 && r.constant_lhs.abs() <= 1e-14)
        && table
        && t.elapsed <= INEQUALITY_BUDGET;
    let desc: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{}x{}: {} CK violations / {} (max ratio {:.3}), LS max ratio {:.3}, constant LHS {:.1e}",
                r.nx, r.ny, r.ck_violations, r.trials, r.ck_max_ratio, r.ls_max_ratio, r.constant_lhs
            )
        })
        .collect();
    report(7, pass, &format!("{}; {:.2} s", desc.join("; "), t.elapsed.as_secs_f64()));
    assert!(pass);
}

#[test]
fn criterion_8_constant_data_are_exact() {
    let cfg = config("constant");
    let mut meshes = vec![cfg.mesh(cfg.mesh_sizes[0]).unwrap()];
    meshes.push(Mesh::cartesian(5, 3, Rect::new(-1.0, 2.0, 0.0, 0.7)).unwrap());
    meshes.push(Mesh::cartesian(1, 7, Rect::new(0.0, 0.1, 0.0, 1.0)).unwrap());
    let mut worst = 0.0f64;
    let mut steps = usize::MAX;
    // Constant states with n*(μ − δλ₁)/(1 + λ₁) > 1 are linearly unstable
    // and amplify rounding; all three cases here are stable.
    for (i, mesh) in meshes.iter().enumerate() {
        let n_star = [1.0, 0.4, 0.25][i];
        let params = [cfg.params().unwrap(), ModelParams::new(0.0, 2.0).unwrap(), ModelParams::new(0.5, 0.3).unwrap()][i];
        let grid = TimeGrid::new(cfg.dt, CONSTANT_STEPS).unwrap();
        let mut count = 0;
        let mut obs = |_: &Mesh, st: &State, _: &RecordRow| -> ksfv::Result<()> {
            for (n, s) in st.n.values().iter().zip(st.s.values()) {
                worst = worst.max((n - n_star).abs() / n_star);
                worst = worst.max((s - params.mu * n_star).abs() / (params.mu * n_star));
            }
            count += 1;
            Ok(())
        };
        let res = scheme::run(mesh, &params, Field::constant(mesh, n_star), &grid, &cfg.picard, &mut [&mut obs]).unwrap();
        assert_eq!(res.outcome, Outcome::Completed);
        steps = steps.min(count - 1);
    }
    let pass = worst <= CONSTANT_TOL && steps == CONSTANT_STEPS;
    report(
        8,
        pass,
        &format!(
            "{} meshes x {CONSTANT_STEPS} steps: max relative deviation from (n*, mu n*) {worst:.2e} (tol {CONSTANT_TOL:e})",
            meshes.len()
        ),
    );
    assert!(pass);
}
