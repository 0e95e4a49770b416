//! Configuration-driven experiments: single runs and sweeps, grid
//! convergence studies, entropy decay rates and the functional-inequality
//! harness. These are what the `ksfv` binary calls.
//!
//! A configuration is one JSON document ([`ExperimentConfig`]). Masses and
//! other scalars may be written as multiples of π, e.g. `"6pi"`.
//!
//! Output tables, in addition to those listed in [`crate::io`]:
//!
//! | file | columns |
//! |---|---|
//! | `orders.csv` | `nx,ny,h,err_l1,err_l2,err_linf,order_l1,order_l2,order_linf` |
//! | `order_fit.csv` | `norm,order,log_constant` |
//! | `rates.csv` | `label,delta,mu,nx,ny,rate,intercept,residual,points,monotone,first_increase_t` |
//! | `inequalities.csv` | `nx,ny,trials,ck_violations,ck_max_ratio,ls_max_ratio,ls_c_l,ls_violations,constant_lhs` |

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize};

use crate::diagnostics::{self, LogSobolevConstants, RecordRow, RunRecord};
use crate::dspace::{self, Field};
use crate::error::{invalid, Error, Result};
use crate::io;
use crate::mesh::{Mesh, Rect};
use crate::scheme::{self, ModelParams, Observer, Outcome, PicardConfig, RunResult, State, TimeGrid};
use crate::solver;

/// Cells per side (`16`) or per direction (`[32, 16]`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSize {
    Square(usize),
    Rect([usize; 2]),
}

impl GridSize {
    pub fn dims(self) -> (usize, usize) {
        match self {
            GridSize::Square(n) => (n, n),
            GridSize::Rect([nx, ny]) => (nx, ny),
        }
    }
}

/// One Gaussian `M/(2πθ) exp(−|x − c|²/(2θ))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    #[serde(deserialize_with = "pi_scalar")]
    pub mass: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default)]
    pub center: [f64; 2],
}

impl Bump {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let r2 = (x - self.center[0]).powi(2) + (y - self.center[1]).powi(2);
        self.mass / (2.0 * PI * self.theta) * (-r2 / (2.0 * self.theta)).exp()
    }
}

fn default_theta() -> f64 {
    1e-2
}

/// Initial density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialDatum {
    /// Mass `6π`, `θ = 10⁻²`, centered at `(0.1, 0.1)`.
    Gaussian1,
    /// Mass `4π` at `(0.1, 0.1)` plus mass `2π` at `(−0.2, −0.2)`, `θ = 10⁻²`.
    Gaussian2,
    /// Centered Gaussian of mass `mass`.
    GaussianSym {
        #[serde(deserialize_with = "pi_scalar")]
        mass: f64,
        #[serde(default = "default_theta")]
        theta: f64,
    },
    Constant {
        #[serde(deserialize_with = "pi_scalar")]
        value: f64,
    },
    /// Sum of arbitrary Gaussians.
    Custom { bumps: Vec<Bump> },
}

impl InitialDatum {
    pub fn bumps(&self) -> Vec<Bump> {
        let b = |mass: f64, c: f64| Bump {
            mass,
            theta: 1e-2,
            center: [c, c],
        };
        match self {
            InitialDatum::Gaussian1 => vec![b(6.0 * PI, 0.1)],
            InitialDatum::Gaussian2 => vec![b(4.0 * PI, 0.1), b(2.0 * PI, -0.2)],
            InitialDatum::GaussianSym { mass, theta } => vec![Bump {
                mass: *mass,
                theta: *theta,
                center: [0.0, 0.0],
            }],
            InitialDatum::Constant { .. } => Vec::new(),
            InitialDatum::Custom { bumps } => bumps.clone(),
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            InitialDatum::Constant { value } => *value,
            _ => self.bumps().iter().map(|b| b.eval(x, y)).sum(),
        }
    }

    /// Cell averages on `mesh` (exact for constants).
    pub fn project(&self, mesh: &Mesh, quadrature_order: usize) -> Result<Field> {
        match self {
            InitialDatum::Constant { value } => {
                if !(*value >= 0.0) {
                    return Err(invalid("constant initial density must be nonnegative"));
                }
                Ok(Field::constant(mesh, *value))
            }
            _ => Ok(dspace::project_initial(mesh, |x, y| self.eval(x, y), quadrature_order)?.field),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Delta,
    Mu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: SweepParameter,
    #[serde(deserialize_with = "pi_scalars")]
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotFormat {
    #[default]
    Csv,
    Vtk,
}

/// Replacements applied by `--paper-scale`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleOverrides {
    pub mesh_sizes: Option<Vec<GridSize>>,
    pub reference: Option<GridSize>,
    pub dt: Option<f64>,
    pub final_time: Option<f64>,
    pub snapshot_times: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default = "Rect::centered_unit_square")]
    pub domain: Rect,
    pub mesh_sizes: Vec<GridSize>,
    /// Reference grid of a convergence study.
    #[serde(default)]
    pub reference: Option<GridSize>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_final_time")]
    pub final_time: f64,
    #[serde(default)]
    pub delta: f64,
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default = "default_initial")]
    pub initial: InitialDatum,
    #[serde(default)]
    pub picard: PicardConfig,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    /// Snapshots are written at the first step reaching each time, and
    /// always for the initial and the final state.
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default)]
    pub snapshot_format: SnapshotFormat,
    #[serde(default = "default_quadrature")]
    pub quadrature_order: usize,
    /// Time window of the relative entropy decay fit.
    #[serde(default)]
    pub decay_window: Option<[f64; 2]>,
    /// Random fields per mesh for the inequality harness.
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub paper_scale: Option<ScaleOverrides>,
}

fn default_dt() -> f64 {
    1e-3
}
fn default_final_time() -> f64 {
    1.0
}
fn default_mu() -> f64 {
    1.0
}
fn default_initial() -> InitialDatum {
    InitialDatum::Gaussian1
}
fn default_quadrature() -> usize {
    4
}
fn default_trials() -> usize {
    1000
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.mesh_sizes.is_empty() {
            return Err(invalid("mesh_sizes must not be empty"));
        }
        for g in self.mesh_sizes.iter().chain(&self.reference) {
            let (nx, ny) = g.dims();
            if nx == 0 || ny == 0 {
                return Err(invalid("mesh sizes must be positive"));
            }
        }
        TimeGrid::until(self.dt, self.final_time)?;
        ModelParams::new(self.delta, self.mu)?;
        self.picard.validate()?;
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(invalid("sweep needs at least one value"));
            }
            for &v in &s.values {
                self.params_with(s.parameter, v)?;
            }
        }
        if let Some([a, b]) = self.decay_window {
            if !(a < b) {
                return Err(invalid("decay window must be increasing"));
            }
        }
        if self.quadrature_order == 0 {
            return Err(invalid("quadrature order must be at least 1"));
        }
        Ok(())
    }

    /// The configuration with its `paper_scale` overrides applied.
    pub fn at_paper_scale(&self) -> Self {
        let mut c = self.clone();
        if let Some(o) = &self.paper_scale {
            if let Some(v) = &o.mesh_sizes {
                c.mesh_sizes = v.clone();
            }
            if o.reference.is_some() {
                c.reference = o.reference;
            }
            if let Some(v) = o.dt {
                c.dt = v;
            }
            if let Some(v) = o.final_time {
                c.final_time = v;
            }
            if let Some(v) = &o.snapshot_times {
                c.snapshot_times = v.clone();
            }
        }
        c
    }

    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::new(self.delta, self.mu)
    }

    fn params_with(&self, p: SweepParameter, v: f64) -> Result<ModelParams> {
        match p {
            SweepParameter::Delta => ModelParams::new(v, self.mu),
            SweepParameter::Mu => ModelParams::new(self.delta, v),
        }
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::until(self.dt, self.final_time)
    }

    pub fn mesh(&self, size: GridSize) -> Result<Mesh> {
        let (nx, ny) = size.dims();
        Mesh::cartesian(nx, ny, self.domain)
    }

    /// Sweep members times mesh sizes, in that nesting order.
    pub fn jobs(&self) -> Result<Vec<Job>> {
        let members: Vec<ModelParams> = match &self.sweep {
            None => vec![self.params()?],
            Some(s) => s
                .values
                .iter()
                .map(|&v| self.params_with(s.parameter, v))
                .collect::<Result<_>>()?,
        };
        let mut jobs = Vec::new();
        for params in members {
            for &size in &self.mesh_sizes {
                let (nx, ny) = size.dims();
                jobs.push(Job {
                    label: format!("delta={}_mu={}_{}x{}", params.delta, params.mu, nx, ny),
                    size,
                    params,
                });
            }
        }
        Ok(jobs)
    }
}

/// Accepts a number or a string such as `"6pi"`, `"2.5*pi"`, `"pi"`.
pub fn parse_pi_scalar(s: &str) -> Option<f64> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_lowercase();
    if let Some(head) = t.strip_suffix("pi").or_else(|| t.strip_suffix('π')) {
        let head = head.strip_suffix('*').unwrap_or(head);
        let k = if head.is_empty() { 1.0 } else { head.parse::<f64>().ok()? };
        Some(k * PI)
    } else {
        t.parse().ok()
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Scalar {
    Num(f64),
    Text(String),
}

impl Scalar {
    fn value<E: serde::de::Error>(self) -> std::result::Result<f64, E> {
        match self {
            Scalar::Num(v) => Ok(v),
            Scalar::Text(s) => parse_pi_scalar(&s).ok_or_else(|| E::custom(format!("cannot read `{s}` as a number"))),
        }
    }
}

fn pi_scalar<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Scalar::deserialize(d)?.value()
}

fn pi_scalars<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    Vec::<Scalar>::deserialize(d)?.into_iter().map(Scalar::value).collect()
}

/// One run of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub label: String,
    pub size: GridSize,
    pub params: ModelParams,
}

/// Structural invariants tracked along a run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InvariantReport {
    /// `min_{k,K} n_K^k`.
    pub min_density: f64,
    /// `max_k |M^k − M⁰| / M⁰`.
    pub max_mass_drift: f64,
    /// `max_k |Σ m S − μ Σ m n| / (μ Σ m n)`.
    pub max_mean_identity_defect: f64,
    /// Steps at which the density matrix was rebuilt and its column
    /// dominance margins compared with `m(L)/Δt`.
    pub dominance_steps: Vec<usize>,
    /// `max |margin_L − m(L)/Δt| / (m(L)/Δt)` over those steps.
    pub max_dominance_defect: f64,
}

/// Observer that checks positivity, mass, the mean identity of the signal
/// and, at a few randomly chosen steps, the column dominance of the density
/// matrix. The steps are a uniform sample (reservoir sampling) of the steps
/// actually taken, so runs that stop early are covered too.
pub struct InvariantMonitor {
    params: ModelParams,
    dt: f64,
    checks: usize,
    rng: ChaCha8Rng,
    seen: usize,
    sample: Vec<(usize, f64)>,
    mass0: Option<f64>,
    prev_n: Option<Field>,
    pub report: InvariantReport,
}

impl InvariantMonitor {
    /// Dominance is checked at `checks` distinct steps drawn with `seed`.
    pub fn new(params: ModelParams, grid: &TimeGrid, checks: usize, seed: u64) -> Self {
        Self {
            params,
            dt: grid.dt,
            checks,
            rng: ChaCha8Rng::seed_from_u64(seed),
            seen: 0,
            sample: Vec::new(),
            mass0: None,
            prev_n: None,
            report: InvariantReport {
                min_density: f64::INFINITY,
                ..Default::default()
            },
        }
    }

    fn dominance_defect(&self, mesh: &Mesh, prev: &Field, s: &Field) -> f64 {
        let sys = scheme::assemble_n_system(mesh, prev, s, self.dt);
        let dom = solver::check_column_dominance(&sys);
        dom.margins
            .iter()
            .zip(mesh.cells())
            .map(|(m, c)| {
                let want = c.area / self.dt;
                (m - want).abs() / want
            })
            .fold(0.0, f64::max)
    }
}

impl Observer for InvariantMonitor {
    fn observe(&mut self, mesh: &Mesh, state: &State, _row: &RecordRow) -> Result<()> {
        let r = &mut self.report;
        r.min_density = r.min_density.min(state.n.min());
        let mass = dspace::integral(mesh, &state.n);
        let m0 = *self.mass0.get_or_insert(mass);
        if m0 > 0.0 {
            r.max_mass_drift = r.max_mass_drift.max((mass - m0).abs() / m0);
            let s_int = dspace::integral(mesh, &state.s);
            let defect = (s_int - self.params.mu * mass).abs() / (self.params.mu * mass);
            r.max_mean_identity_defect = r.max_mean_identity_defect.max(defect);
        }
        if let Some(prev) = &self.prev_n {
            self.seen += 1;
            let slot = if self.sample.len() < self.checks {
                Some(self.sample.len())
            } else {
                let j = self.rng.gen_range(0..self.seen);
                (j < self.checks).then_some(j)
            };
            if let Some(j) = slot {
                let entry = (state.k, self.dominance_defect(mesh, prev, &state.s));
                if j == self.sample.len() {
                    self.sample.push(entry);
                } else {
                    self.sample[j] = entry;
                }
                let mut steps: Vec<usize> = self.sample.iter().map(|e| e.0).collect();
                steps.sort_unstable();
                self.report.dominance_steps = steps;
                self.report.max_dominance_defect = self.sample.iter().map(|e| e.1).fold(0.0, f64::max);
            }
        }
        self.prev_n = Some(state.n.clone());
        Ok(())
    }
}

struct SnapshotWriter {
    dir: PathBuf,
    format: SnapshotFormat,
    pending: Vec<f64>,
    dt: f64,
    written: Vec<PathBuf>,
    last_k: Option<usize>,
}

impl SnapshotWriter {
    fn write(&mut self, mesh: &Mesh, state: &State) -> Result<()> {
        if self.last_k == Some(state.k) {
            return Ok(());
        }
        let ext = match self.format {
            SnapshotFormat::Csv => "csv",
            SnapshotFormat::Vtk => "vtk",
        };
        let path = self.dir.join(format!("k{:07}.{ext}", state.k));
        match self.format {
            SnapshotFormat::Csv => io::write_snapshot_csv(&path, mesh, state)?,
            SnapshotFormat::Vtk => io::write_snapshot_vtk(&path, mesh, state)?,
        }
        self.written.push(path);
        self.last_k = Some(state.k);
        Ok(())
    }
}

impl Observer for SnapshotWriter {
    fn observe(&mut self, mesh: &Mesh, state: &State, _row: &RecordRow) -> Result<()> {
        let due = state.k == 0 || self.pending.iter().any(|&t| state.time >= t - 0.5 * self.dt);
        if due {
            let t = state.time;
            let dt = self.dt;
            self.pending.retain(|&p| t < p - 0.5 * dt);
            self.write(mesh, state)?;
        }
        Ok(())
    }
}

/// Machine-readable summary of one job, written as `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSummary {
    pub label: String,
    pub nx: usize,
    pub ny: usize,
    pub delta: f64,
    pub mu: f64,
    pub dt: f64,
    pub outcome: String,
    /// Last stable time of a blown-up run.
    pub blowup_time: Option<f64>,
    pub blowup_linf: Option<f64>,
    pub final_time: f64,
    pub steps: usize,
    pub halved_steps: usize,
    pub final_linf: f64,
    pub final_argmax: usize,
    pub final_argmax_center: [f64; 2],
    pub final_max_in_corner: bool,
    pub invariants: InvariantReport,
}

/// Everything a finished job produced.
#[derive(Debug, Clone)]
pub struct JobOutput {
    pub job: Job,
    pub mesh: Mesh,
    pub result: RunResult,
    pub summary: JobSummary,
    pub snapshots: Vec<PathBuf>,
}

/// Run one job; with `dir`, write `record.csv`, `entropy_terms.csv`,
/// `summary.json` and snapshots there.
pub fn run_job(cfg: &ExperimentConfig, job: &Job, dir: Option<&Path>) -> Result<JobOutput> {
    let mesh = cfg.mesh(job.size)?;
    let grid = cfg.time_grid()?;
    let n0 = cfg.initial.project(&mesh, cfg.quadrature_order)?;
    let mut monitor = InvariantMonitor::new(job.params, &grid, 3, cfg.seed);
    let mut snaps = match dir {
        Some(d) => {
            let sd = d.join("snapshots");
            fs::create_dir_all(&sd)?;
            Some(SnapshotWriter {
                dir: sd,
                format: cfg.snapshot_format,
                pending: cfg.snapshot_times.clone(),
                dt: grid.dt,
                written: Vec::new(),
                last_k: None,
            })
        }
        None => None,
    };
    let result = {
        let mut observers: Vec<&mut dyn Observer> = vec![&mut monitor];
        if let Some(s) = snaps.as_mut() {
            observers.push(s);
        }
        scheme::run(&mesh, &job.params, n0, &grid, &cfg.picard, &mut observers)?
    };
    let mut snapshots = Vec::new();
    if let Some(mut s) = snaps {
        s.write(&mesh, &result.final_state)?;
        snapshots = s.written;
    }
    let summary = summarize(cfg, job, &mesh, &grid, &result, monitor.report);
    if let Some(d) = dir {
        io::write_record(d.join("record.csv"), &result.record)?;
        io::write_entropy_terms(d.join("entropy_terms.csv"), &result.record)?;
        fs::write(d.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    }
    Ok(JobOutput {
        job: job.clone(),
        mesh,
        result,
        summary,
        snapshots,
    })
}

fn summarize(
    cfg: &ExperimentConfig,
    job: &Job,
    mesh: &Mesh,
    grid: &TimeGrid,
    result: &RunResult,
    invariants: InvariantReport,
) -> JobSummary {
    let (nx, ny) = job.size.dims();
    let fs = &result.final_state;
    let argmax = fs.n.argmax();
    let corner = mesh.grid().is_some_and(|g| g.corner_cells().contains(&argmax));
    let (outcome, bt, bl) = match result.outcome {
        Outcome::Completed => ("completed", None, None),
        Outcome::BlowUp { time, linf } => ("blow_up", Some(time), Some(linf)),
    };
    JobSummary {
        label: job.label.clone(),
        nx,
        ny,
        delta: job.params.delta,
        mu: job.params.mu,
        dt: cfg.dt,
        outcome: outcome.into(),
        blowup_time: bt,
        blowup_linf: bl,
        final_time: fs.time,
        steps: grid.steps,
        halved_steps: result.halved_steps,
        final_linf: fs.n.max(),
        final_argmax: argmax,
        final_argmax_center: mesh.cell(argmax).center,
        final_max_in_corner: corner,
        invariants,
    }
}

/// Run all jobs concurrently. With `out`, a single job writes into `out`
/// itself and several jobs into `out/<label>`.
pub fn run_jobs(cfg: &ExperimentConfig, jobs: &[Job], out: Option<&Path>) -> Result<Vec<JobOutput>> {
    let dirs: Vec<Option<PathBuf>> = jobs
        .iter()
        .map(|j| {
            out.map(|o| if jobs.len() == 1 { o.to_path_buf() } else { o.join(&j.label) })
        })
        .collect();
    for d in dirs.iter().flatten() {
        fs::create_dir_all(d)?;
    }
    let results: Vec<Result<JobOutput>> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .zip(&dirs)
            .map(|(job, dir)| scope.spawn(move || run_job(cfg, job, dir.as_deref())))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(invalid("experiment job panicked"))))
            .collect()
    });
    results.into_iter().collect()
}

/// `run`: every sweep member on every mesh size.
pub fn cmd_run(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Vec<JobOutput>> {
    let jobs = cfg.jobs()?;
    let outputs = run_jobs(cfg, &jobs, out)?;
    if let (Some(o), true) = (out, jobs.len() > 1) {
        let summaries: Vec<&JobSummary> = outputs.iter().map(|j| &j.summary).collect();
        fs::write(o.join("summary.json"), serde_json::to_string_pretty(&summaries)?)?;
    }
    Ok(outputs)
}

/// One row of `orders.csv`. Orders are relative to the previous (coarser)
/// mesh and absent on the first row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderRow {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub err_l1: f64,
    pub err_l2: f64,
    pub err_linf: f64,
    pub order_l1: Option<f64>,
    pub order_l2: Option<f64>,
    pub order_linf: Option<f64>,
}

/// One row of `order_fit.csv`: `log e ≈ log_constant + order log h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderFitRow {
    pub norm: String,
    pub order: f64,
    pub log_constant: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<OrderRow>,
    /// Least-squares orders over all meshes, for `L¹`, `L²`, `L∞`.
    pub fit: Vec<OrderFitRow>,
}

impl ConvergenceReport {
    pub fn fitted(&self, norm: &str) -> Option<f64> {
        self.fit.iter().find(|r| r.norm == norm).map(|r| r.order)
    }
}

/// `L¹`, `L²` and `L∞` distances of two fields on the same mesh.
pub fn error_norms(mesh: &Mesh, a: &Field, b: &Field) -> Result<[f64; 3]> {
    if a.len() != mesh.num_cells() || b.len() != mesh.num_cells() {
        return Err(invalid("fields do not match the mesh"));
    }
    let d = Field::from_vec(a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect());
    Ok([
        dspace::norm_0p(mesh, &d, 1.0)?,
        dspace::norm_0p(mesh, &d, 2.0)?,
        dspace::norm_0p(mesh, &d, f64::INFINITY)?,
    ])
}

/// `convergence`: solutions on `mesh_sizes` injected onto `reference` and
/// compared there at the final time.
pub fn cmd_convergence(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<(ConvergenceReport, Vec<JobOutput>)> {
    let reference = cfg
        .reference
        .ok_or_else(|| invalid("a convergence study needs a reference mesh"))?;
    let (rx, ry) = reference.dims();
    for g in &cfg.mesh_sizes {
        let (nx, ny) = g.dims();
        if rx % nx != 0 || ry % ny != 0 {
            return Err(invalid(format!("{nx}x{ny} is not nested in the {rx}x{ry} reference")));
        }
    }
    let params = cfg.params()?;
    let mut jobs: Vec<Job> = cfg
        .mesh_sizes
        .iter()
        .map(|&size| {
            let (nx, ny) = size.dims();
            Job {
                label: format!("{nx}x{ny}"),
                size,
                params,
            }
        })
        .collect();
    jobs.push(Job {
        label: format!("reference_{rx}x{ry}"),
        size: reference,
        params,
    });
    let outputs = run_jobs(cfg, &jobs, out)?;
    let (refout, coarse) = outputs.split_last().expect("reference job present");
    if refout.result.outcome != Outcome::Completed {
        return Err(invalid("the reference run did not complete"));
    }
    let fine = &refout.mesh;
    let mut rows: Vec<OrderRow> = Vec::new();
    for o in coarse {
        if o.result.outcome != Outcome::Completed {
            return Err(invalid(format!("run {} did not complete", o.job.label)));
        }
        let u = dspace::inject(&o.mesh, &o.result.final_state.n, fine)?;
        let [e1, e2, ei] = error_norms(fine, &u, &refout.result.final_state.n)?;
        let (nx, ny) = o.job.size.dims();
        let h = o.mesh.size();
        let order = |prev: Option<&OrderRow>, f: fn(&OrderRow) -> f64, e: f64| {
            prev.and_then(|p| {
                let v = (f(p) / e).ln() / (p.h / h).ln();
                v.is_finite().then_some(v)
            })
        };
        let prev = rows.last();
        let row = OrderRow {
            nx,
            ny,
            h,
            err_l1: e1,
            err_l2: e2,
            err_linf: ei,
            order_l1: order(prev, |r| r.err_l1, e1),
            order_l2: order(prev, |r| r.err_l2, e2),
            order_linf: order(prev, |r| r.err_linf, ei),
        };
        rows.push(row);
    }
    let mut fit = Vec::new();
    let usable: Vec<&OrderRow> = rows.iter().filter(|r| r.err_l1 > 0.0 && r.err_l2 > 0.0 && r.err_linf > 0.0).collect();
    if usable.len() >= 2 {
        let lh: Vec<f64> = usable.iter().map(|r| r.h.ln()).collect();
        for (name, f) in [
            ("l1", (|r: &OrderRow| r.err_l1) as fn(&OrderRow) -> f64),
            ("l2", |r: &OrderRow| r.err_l2),
            ("linf", |r: &OrderRow| r.err_linf),
        ] {
            let le: Vec<f64> = usable.iter().map(|r| f(r).ln()).collect();
            let (order, log_constant) = diagnostics::least_squares(&lh, &le);
            fit.push(OrderFitRow {
                norm: name.into(),
                order,
                log_constant,
            });
        }
    }
    if let Some(o) = out {
        io::write_csv(o.join("orders.csv"), &rows)?;
        io::write_csv(o.join("order_fit.csv"), &fit)?;
    }
    Ok((ConvergenceReport { rows, fit }, outputs))
}

/// One row of `rates.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub label: String,
    pub delta: f64,
    pub mu: f64,
    pub nx: usize,
    pub ny: usize,
    pub rate: f64,
    pub intercept: f64,
    pub residual: f64,
    pub points: usize,
    /// Whether the relative entropy decreased strictly at every step.
    pub monotone: bool,
    /// Time of the first step at which it did not.
    pub first_increase_t: Option<f64>,
}

/// First time at which the relative entropy fails to decrease strictly.
pub fn first_entropy_increase(record: &RunRecord) -> Option<f64> {
    record
        .rows
        .windows(2)
        .find(|w| !(w[1].rel_entropy < w[0].rel_entropy))
        .map(|w| w[1].t)
}

/// `decay`: every sweep member on every mesh, with a decay-rate fit.
pub fn cmd_decay(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<(Vec<RateRow>, Vec<JobOutput>)> {
    let window = cfg
        .decay_window
        .map(|[a, b]| (a, b))
        .unwrap_or((0.0, cfg.final_time));
    let jobs = cfg.jobs()?;
    let outputs = run_jobs(cfg, &jobs, out)?;
    let mut rows = Vec::new();
    for o in &outputs {
        let fit = diagnostics::fit_decay_rate(&o.result.record, window)?;
        let (nx, ny) = o.job.size.dims();
        let first = first_entropy_increase(&o.result.record);
        rows.push(RateRow {
            label: o.job.label.clone(),
            delta: o.job.params.delta,
            mu: o.job.params.mu,
            nx,
            ny,
            rate: fit.rate,
            intercept: fit.intercept,
            residual: fit.residual,
            points: fit.points,
            monotone: first.is_none(),
            first_increase_t: first,
        });
    }
    if let Some(o) = out {
        io::write_csv(o.join("rates.csv"), &rows)?;
    }
    Ok((rows, outputs))
}

/// One row of `inequalities.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityRow {
    pub nx: usize,
    pub ny: usize,
    pub trials: usize,
    pub ck_violations: usize,
    /// `max ‖n − n*‖²_{0,1} / (4 ‖n‖_{0,1} E[n|n*])`.
    pub ck_max_ratio: f64,
    /// `max lhs / |u|²_{1,2}` of the log-Sobolev inequality, `u = √n`.
    pub ls_max_ratio: f64,
    pub ls_c_l: f64,
    pub ls_violations: usize,
    /// Log-Sobolev left-hand side of a constant field.
    pub constant_lhs: f64,
}

/// A random nonnegative density of mean 1. Alternates between smooth bump
/// sums, rough log-uniform noise and sparse fields with empty cells.
pub fn random_density(mesh: &Mesh, rng: &mut impl Rng) -> Field {
    let family = rng.gen_range(0..3);
    let mut v: Vec<f64> = match family {
        0 => {
            let bumps: Vec<Bump> = (0..rng.gen_range(1..=4))
                .map(|_| Bump {
                    mass: rng.gen_range(0.1..1.0),
                    theta: 10f64.powf(rng.gen_range(-3.0..-0.5)),
                    center: [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                })
                .collect();
            let floor = rng.gen_range(0.0..0.1);
            mesh.cells()
                .iter()
                .map(|c| {
                    // Centers are rescaled to the unit square around the origin.
                    let d = mesh.grid().map(|g| g.rect).unwrap_or(Rect::centered_unit_square());
                    let x = (c.center[0] - 0.5 * (d.x0 + d.x1)) / d.width();
                    let y = (c.center[1] - 0.5 * (d.y0 + d.y1)) / d.height();
                    floor + bumps.iter().map(|b| b.eval(x, y)).sum::<f64>()
                })
                .collect()
        }
        1 => {
            let contrast = rng.gen_range(0.0..8.0);
            (0..mesh.num_cells()).map(|_| (contrast * (rng.gen::<f64>() - 0.5)).exp()).collect()
        }
        _ => {
            let fill = rng.gen_range(0.05..1.0);
            (0..mesh.num_cells())
                .map(|_| if rng.gen::<f64>() < fill { rng.gen::<f64>() } else { 0.0 })
                .collect()
        }
    };
    if v.iter().all(|&x| x == 0.0) {
        let i = rng.gen_range(0..v.len());
        v[i] = 1.0;
    }
    let f = Field::from_vec(v);
    let mean = dspace::mean_value(mesh, &f);
    f.scaled(1.0 / mean)
}

/// `inequalities`: Csiszár-Kullback and log-Sobolev on random fields.
pub fn cmd_inequalities(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Vec<InequalityRow>> {
    let constants = LogSobolevConstants::default();
    let mut rows = Vec::new();
    for (i, &size) in cfg.mesh_sizes.iter().enumerate() {
        let mesh = cfg.mesh(size)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(i as u64));
        let mut row = InequalityRow {
            nx: size.dims().0,
            ny: size.dims().1,
            trials: cfg.trials,
            ck_violations: 0,
            ck_max_ratio: 0.0,
            ls_max_ratio: 0.0,
            ls_c_l: constants.c_l(mesh.xi())?,
            ls_violations: 0,
            constant_lhs: diagnostics::log_sobolev_check(&mesh, &Field::constant(&mesh, 1.0), &constants)?.lhs,
        };
        for _ in 0..cfg.trials {
            let n = random_density(&mesh, &mut rng);
            let ck = diagnostics::csiszar_kullback_check(&mesh, &n, 1.0)?;
            if !ck.holds() {
                row.ck_violations += 1;
            }
            row.ck_max_ratio = row.ck_max_ratio.max(ck.ratio());
            let ls = diagnostics::log_sobolev_check(&mesh, &n.map(f64::sqrt), &constants)?;
            if !ls.within_bound() {
                row.ls_violations += 1;
            }
            row.ls_max_ratio = row.ls_max_ratio.max(ls.ratio);
        }
        rows.push(row);
    }
    if let Some(o) = out {
        fs::create_dir_all(o)?;
        io::write_csv(o.join("inequalities.csv"), &rows)?;
    }
    Ok(rows)
}
