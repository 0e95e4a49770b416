//! Fully implicit finite volume scheme for
//!
//! ```text
//!   ∂t n = div(∇n − n∇S),   0 = ΔS + δΔn + μn − S   in Ω,   no-flux on ∂Ω,
//! ```
//!
//! with two-point diffusive fluxes and an upwinded chemotactic flux.
//!
//! Each time step solves the coupled nonlinear system by a Picard
//! iteration over the two linear blocks: the signal system `A S = b(n)` and
//! the density system `B(S) n = c`. `A` only depends on the mesh and is
//! factored once. `B(S)` is an M-matrix, so every density iterate is
//! nonnegative and carries exactly the mass of the previous step.

use crate::diagnostics::{self, RecordRow, RunRecord, SteadyState};
use crate::dspace::{self, Field};
use crate::error::{invalid, Error, Result};
use crate::mesh::Mesh;
use crate::solver::{self, Factorized, SparseMatrix, SparseSystem};

/// Cross-diffusion coefficient `δ ≥ 0` and secretion rate `μ > 0`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelParams {
    pub delta: f64,
    pub mu: f64,
}

impl ModelParams {
    pub fn new(delta: f64, mu: f64) -> Result<Self> {
        let p = Self { delta, mu };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return Err(invalid(format!("delta must be finite and >= 0, got {}", self.delta)));
        }
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return Err(invalid(format!("mu must be finite and > 0, got {}", self.mu)));
        }
        Ok(())
    }
}

/// Uniform time grid `t^k = k Δt`, `k = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub dt: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, steps: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(invalid(format!("time step must be positive, got {dt}")));
        }
        if steps == 0 {
            return Err(invalid("at least one time step is required"));
        }
        Ok(Self { dt, steps })
    }

    /// Steps of size `dt` reaching `final_time` (rounded to the nearest
    /// whole number of steps).
    pub fn until(dt: f64, final_time: f64) -> Result<Self> {
        if !(final_time > 0.0) {
            return Err(invalid(format!("final time must be positive, got {final_time}")));
        }
        let steps = (final_time / dt).round() as usize;
        Self::new(dt, steps.max(1))
    }

    pub fn final_time(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }
}

/// Settings of the per-step nonlinear solve.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PicardConfig {
    /// Stop when `‖n^(γ+1) − n^(γ)‖_{0,1} / ‖n^k‖_{0,1} ≤ tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Sup norm of the density above which a run is declared blown up.
    pub blowup_threshold: f64,
    /// Optional mass `max_K m(K) n_K` above which a run is declared blown
    /// up. On a fixed mesh the density is bounded by `‖n₀‖_{L¹} / min m(K)`,
    /// so a collapse shows up as one cell holding a finite share of the
    /// mass rather than as an unbounded sup norm.
    pub blowup_cell_mass: Option<f64>,
    /// Relative residual required from every linear solve.
    pub linear_tol: f64,
    /// How many times [`run`] may halve a step whose iteration fails.
    pub max_halvings: usize,
    /// Number of previous iterates mixed by Anderson acceleration of the
    /// fixed-point map; 0 runs the plain iteration.
    pub anderson_depth: usize,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200,
            blowup_threshold: 1e6,
            blowup_cell_mass: None,
            linear_tol: solver::DEFAULT_TOL,
            max_halvings: 3,
            anderson_depth: 0,
        }
    }
}

impl PicardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(invalid(format!("Picard tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(invalid("Picard max_iter must be at least 1"));
        }
        if !(self.blowup_threshold > 0.0) {
            return Err(invalid("blow-up threshold must be positive"));
        }
        if !(self.linear_tol > 0.0) {
            return Err(invalid("linear tolerance must be positive"));
        }
        if self.blowup_cell_mass.is_some_and(|m| !(m > 0.0)) {
            return Err(invalid("blow-up cell mass must be positive"));
        }
        Ok(())
    }
}

/// Densities and signal at time level `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub k: usize,
    pub time: f64,
    pub n: Field,
    pub s: Field,
}

/// Matrix of the signal equation: `A_KK = Σ_{σ int} τ_σ + m(K)`,
/// `A_KL = −τ_σ`. Exterior edges carry no flux.
pub fn s_matrix(mesh: &Mesh) -> SparseMatrix {
    let mut diag: Vec<f64> = mesh.cells().iter().map(|c| c.area).collect();
    let mut t = Vec::with_capacity(mesh.num_cells() + 2 * mesh.num_edges());
    for (_, e) in mesh.interior_edges() {
        let (k, l) = (e.cell, e.neighbor.unwrap());
        diag[k] += e.transmissibility;
        diag[l] += e.transmissibility;
        t.push((k, l, -e.transmissibility));
        t.push((l, k, -e.transmissibility));
    }
    t.extend(diag.into_iter().enumerate().map(|(k, d)| (k, k, d)));
    SparseMatrix::from_triplets(mesh.num_cells(), t).expect("indices come from the mesh")
}

/// Right-hand side `b_K = δ Σ_σ τ_σ Dn_{K,σ} + μ m(K) n_K`.
pub fn s_rhs(mesh: &Mesh, params: &ModelParams, n: &Field) -> Vec<f64> {
    let mut b: Vec<f64> = mesh
        .cells()
        .iter()
        .zip(n.values())
        .map(|(c, nk)| params.mu * c.area * nk)
        .collect();
    if params.delta != 0.0 {
        for (_, e) in mesh.interior_edges() {
            let (k, l) = (e.cell, e.neighbor.unwrap());
            let flux = params.delta * e.transmissibility * (n[l] - n[k]);
            b[k] += flux;
            b[l] -= flux;
        }
    }
    b
}

pub fn assemble_s_system(mesh: &Mesh, params: &ModelParams, n: &Field) -> SparseSystem {
    SparseSystem {
        matrix: s_matrix(mesh),
        rhs: s_rhs(mesh, params, n),
    }
}

/// Density system for a given signal:
/// `B_KK = m(K)/Δt + Σ_{σ int} τ_σ (1 + (DS_{K,σ})⁺)`,
/// `B_KL = −τ_σ (1 + (DS_{K,σ})⁻)`, `c_K = m(K) n^k_K / Δt`.
pub fn assemble_n_system(mesh: &Mesh, n_prev: &Field, s: &Field, dt: f64) -> SparseSystem {
    let mut diag: Vec<f64> = mesh.cells().iter().map(|c| c.area / dt).collect();
    let mut t = Vec::with_capacity(mesh.num_cells() + 2 * mesh.num_edges());
    for (_, e) in mesh.interior_edges() {
        let (k, l) = (e.cell, e.neighbor.unwrap());
        let tau = e.transmissibility;
        let ds_k = s[l] - s[k];
        let ds_l = s[k] - s[l];
        debug_assert_eq!(ds_l.max(0.0), (-ds_k).max(0.0));
        diag[k] += tau * (1.0 + ds_k.max(0.0));
        diag[l] += tau * (1.0 + ds_l.max(0.0));
        t.push((k, l, -tau * (1.0 + (-ds_k).max(0.0))));
        t.push((l, k, -tau * (1.0 + (-ds_l).max(0.0))));
    }
    t.extend(diag.into_iter().enumerate().map(|(k, d)| (k, k, d)));
    let matrix = SparseMatrix::from_triplets(mesh.num_cells(), t).expect("indices come from the mesh");
    let rhs = mesh
        .cells()
        .iter()
        .zip(n_prev.values())
        .map(|(c, nk)| c.area * nk / dt)
        .collect();
    SparseSystem { matrix, rhs }
}

/// Scaled `ℓ¹` residuals of the two scheme equations at a candidate new
/// time level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    /// `Δt Σ_K |R^n_K| / ‖n^k‖_{0,1}`.
    pub density: f64,
    /// `Σ_K |R^S_K| / (μ ‖n‖_{0,1} + ‖S‖_{0,1})`.
    pub signal: f64,
}

/// Residuals of the density and signal equations for `(n, s)` following `n_prev`.
pub fn coupled_residuals(mesh: &Mesh, params: &ModelParams, dt: f64, n_prev: &Field, n: &Field, s: &Field) -> Residuals {
    let mut rn: Vec<f64> = mesh
        .cells()
        .iter()
        .enumerate()
        .map(|(k, c)| c.area * (n[k] - n_prev[k]) / dt)
        .collect();
    let mut rs: Vec<f64> = mesh
        .cells()
        .iter()
        .enumerate()
        .map(|(k, c)| -c.area * (params.mu * n[k] - s[k]))
        .collect();
    for (_, e) in mesh.interior_edges() {
        let (k, l) = (e.cell, e.neighbor.unwrap());
        let tau = e.transmissibility;
        let (dn_k, ds_k) = (n[l] - n[k], s[l] - s[k]);
        // Net flux out of K; the same amount enters L.
        let out = -tau * dn_k + tau * (ds_k.max(0.0) * n[k] - (-ds_k).max(0.0) * n[l]);
        rn[k] += out;
        rn[l] -= out;
        let sig = -tau * ds_k - params.delta * tau * dn_k;
        rs[k] += sig;
        rs[l] -= sig;
    }
    let mass_prev = dspace::integral(mesh, &n_prev.map(f64::abs));
    let density_sum: f64 = rn.iter().map(|r| r.abs()).sum::<f64>() * dt;
    let scale_s = params.mu * dspace::integral(mesh, &n.map(f64::abs)) + dspace::integral(mesh, &s.map(f64::abs));
    let signal_sum: f64 = rs.iter().map(|r| r.abs()).sum();
    Residuals {
        density: if mass_prev > 0.0 { density_sum / mass_prev } else { density_sum },
        signal: if scale_s > 0.0 { signal_sum / scale_s } else { signal_sum },
    }
}

/// Outcome of one accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: State,
    pub iterations: usize,
    /// Last relative `L¹` Picard update.
    pub update: f64,
}

/// The scheme on a fixed mesh with the signal matrix factored once.
#[derive(Debug, Clone)]
pub struct Scheme<'m> {
    mesh: &'m Mesh,
    params: ModelParams,
    signal: Factorized,
    ordering: Vec<usize>,
    linear_tol: f64,
}

impl<'m> Scheme<'m> {
    pub fn new(mesh: &'m Mesh, params: ModelParams) -> Result<Self> {
        Self::with_linear_tol(mesh, params, solver::DEFAULT_TOL)
    }

    pub fn with_linear_tol(mesh: &'m Mesh, params: ModelParams, linear_tol: f64) -> Result<Self> {
        params.validate()?;
        let a = s_matrix(mesh);
        let ordering = solver::choose_ordering(&a);
        let signal = Factorized::with_ordering(a, ordering.clone())?;
        Ok(Self {
            mesh,
            params,
            signal,
            ordering,
            linear_tol,
        })
    }

    pub fn mesh(&self) -> &'m Mesh {
        self.mesh
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Solve the signal equation for a given density.
    pub fn solve_signal(&self, n: &Field) -> Result<Field> {
        let b = s_rhs(self.mesh, &self.params, n);
        Ok(Field::from_vec(self.signal.solve(&b, self.linear_tol, 3)?))
    }

    /// Solve the density equation for a frozen signal.
    pub fn solve_density(&self, n_prev: &Field, s: &Field, dt: f64) -> Result<Field> {
        let sys = assemble_n_system(self.mesh, n_prev, s, dt);
        let f = Factorized::with_ordering(sys.matrix, self.ordering.clone())?;
        Ok(Field::from_vec(f.solve(&sys.rhs, self.linear_tol, 3)?))
    }

    /// State at `t = 0`: the projected density and the signal computed from it.
    pub fn initial_state(&self, n0: Field) -> Result<State> {
        if n0.len() != self.mesh.num_cells() {
            return Err(invalid("initial density does not match the mesh"));
        }
        if n0.values().iter().any(|v| !(*v >= 0.0)) {
            return Err(invalid("initial density must be nonnegative"));
        }
        let s = self.solve_signal(&n0)?;
        Ok(State {
            k: 0,
            time: 0.0,
            n: n0,
            s,
        })
    }

    /// One implicit step by Picard iteration.
    ///
    /// Starting from `n^(0) = n^k`, alternates `S^(γ) = A⁻¹ b(n^(γ))` and
    /// `n^(γ+1) = B(S^(γ))⁻¹ c` until the relative `L¹` update drops below
    /// `cfg.tol`, then recomputes the signal from the accepted density.
    ///
    /// With `cfg.anderson_depth > 0` the next input is an Anderson mixture of
    /// the latest map evaluations instead of the last one. Only map outputs
    /// are ever accepted, so the returned density is still the solution of an
    /// M-matrix system: nonnegative and of the same mass as `n^k`.
    pub fn advance(&self, state: &State, dt: f64, cfg: &PicardConfig) -> Result<Step> {
        if !(dt > 0.0) {
            return Err(invalid(format!("time step must be positive, got {dt}")));
        }
        let mesh = self.mesh;
        let time = state.time + dt;
        let mass = dspace::integral(mesh, &state.n);
        let scale = if mass > 0.0 { mass } else { 1.0 };
        let mut mixer = Anderson::new(cfg.anderson_depth, mesh);
        let mut x = state.n.clone();
        let mut last = state.n.clone();
        let mut update = f64::INFINITY;
        for it in 1..=cfg.max_iter {
            let s = self.solve_signal(&x)?;
            let g = self.solve_density(&state.n, &s, dt)?;
            let diff: f64 = mesh
                .cells()
                .iter()
                .zip(g.values().iter().zip(x.values()))
                .map(|(c, (a, b))| c.area * (a - b).abs())
                .sum();
            update = diff / scale;
            let linf = g.max();
            if !(linf <= cfg.blowup_threshold) {
                return Err(Error::BlowUp { time, linf });
            }
            if let Some(limit) = cfg.blowup_cell_mass {
                if max_cell_mass(mesh, &g) >= limit {
                    return Err(Error::BlowUp { time, linf });
                }
            }
            if update <= cfg.tol {
                let s = self.solve_signal(&g)?;
                return Ok(Step {
                    state: State {
                        k: state.k + 1,
                        time,
                        n: g,
                        s,
                    },
                    iterations: it,
                    update,
                });
            }
            x = mixer.next(x, &g);
            last = g;
        }
        let s = self.solve_signal(&last)?;
        Err(Error::NonConvergence {
            iterations: cfg.max_iter,
            update,
            last: Box::new(State {
                k: state.k + 1,
                time,
                n: last,
                s,
            }),
        })
    }
}

/// `max_K m(K) n_K`.
pub fn max_cell_mass(mesh: &Mesh, n: &Field) -> f64 {
    mesh.cells()
        .iter()
        .zip(n.values())
        .map(|(c, v)| c.area * v)
        .fold(0.0, f64::max)
}

/// Anderson mixing (type II) for the fixed point `x = G(x)`, with the
/// least-squares problem posed in the area-weighted `ℓ²` product.
#[derive(Debug)]
struct Anderson {
    depth: usize,
    weights: Vec<f64>,
    prev: Option<(Vec<f64>, Vec<f64>)>,
    df: std::collections::VecDeque<Vec<f64>>,
    dg: std::collections::VecDeque<Vec<f64>>,
}

impl Anderson {
    fn new(depth: usize, mesh: &Mesh) -> Self {
        Self {
            depth,
            weights: mesh.cells().iter().map(|c| c.area).collect(),
            prev: None,
            df: Default::default(),
            dg: Default::default(),
        }
    }

    /// Next input given the current input `x` and its image `g = G(x)`.
    fn next(&mut self, x: Field, g: &Field) -> Field {
        if self.depth == 0 {
            return g.clone();
        }
        let g = g.values().to_vec();
        let f: Vec<f64> = g.iter().zip(x.values()).map(|(a, b)| a - b).collect();
        if let Some((f_old, g_old)) = self.prev.take() {
            self.df.push_back(f.iter().zip(&f_old).map(|(a, b)| a - b).collect());
            self.dg.push_back(g.iter().zip(&g_old).map(|(a, b)| a - b).collect());
            if self.df.len() > self.depth {
                self.df.pop_front();
                self.dg.pop_front();
            }
        }
        let mut out = g.clone();
        let m = self.df.len();
        if m > 0 {
            let dot = |a: &[f64], b: &[f64]| -> f64 {
                a.iter().zip(b).zip(&self.weights).map(|((x, y), w)| w * x * y).sum()
            };
            let mut gram = vec![vec![0.0; m]; m];
            let mut rhs = vec![0.0; m];
            for i in 0..m {
                for j in 0..=i {
                    gram[i][j] = dot(&self.df[i], &self.df[j]);
                    gram[j][i] = gram[i][j];
                }
                rhs[i] = dot(&self.df[i], &f);
            }
            if let Some(gamma) = solve_small_spd(gram, rhs) {
                for (i, gi) in gamma.iter().enumerate() {
                    for (o, d) in out.iter_mut().zip(&self.dg[i]) {
                        *o -= gi * d;
                    }
                }
            } else {
                self.df.clear();
                self.dg.clear();
            }
        }
        self.prev = Some((f, g));
        Field::from_vec(out)
    }
}

/// Cholesky solve of a small Gram system with relative regularization;
/// `None` if the history is numerically degenerate.
fn solve_small_spd(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let m = b.len();
    let scale = (0..m).map(|i| a[i][i]).fold(0.0, f64::max);
    if !(scale > 0.0) || !scale.is_finite() {
        return None;
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += 1e-12 * scale;
    }
    for j in 0..m {
        let d = a[j][j] - (0..j).map(|k| a[j][k] * a[j][k]).sum::<f64>();
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        a[j][j] = d;
        for i in j + 1..m {
            a[i][j] = (a[i][j] - (0..j).map(|k| a[i][k] * a[j][k]).sum::<f64>()) / d;
        }
    }
    for i in 0..m {
        b[i] = (b[i] - (0..i).map(|k| a[i][k] * b[k]).sum::<f64>()) / a[i][i];
    }
    for i in (0..m).rev() {
        b[i] = (b[i] - (i + 1..m).map(|k| a[k][i] * b[k]).sum::<f64>()) / a[i][i];
    }
    Some(b)
}

/// Signal at `t = 0` from the projected initial density.
pub fn compute_s0(mesh: &Mesh, params: &ModelParams, n0: &Field) -> Result<Field> {
    Scheme::new(mesh, *params)?.solve_signal(n0)
}

/// One step without a prepared [`Scheme`].
pub fn picard_advance(mesh: &Mesh, params: &ModelParams, state: &State, dt: f64, cfg: &PicardConfig) -> Result<Step> {
    Scheme::with_linear_tol(mesh, *params, cfg.linear_tol)?.advance(state, dt, cfg)
}

/// Called once for the initial state and once after every accepted step.
pub trait Observer {
    fn observe(&mut self, mesh: &Mesh, state: &State, row: &RecordRow) -> Result<()>;
}

impl<F: FnMut(&Mesh, &State, &RecordRow) -> Result<()>> Observer for F {
    fn observe(&mut self, mesh: &Mesh, state: &State, row: &RecordRow) -> Result<()> {
        self(mesh, state, row)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Completed,
    /// Sup-norm threshold exceeded, or (for `δ = 0`) the nonlinear solve
    /// broke down even after halving. `time` is the last stable time.
    BlowUp { time: f64, linf: f64 },
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub record: RunRecord,
    pub final_state: State,
    pub outcome: Outcome,
    /// Steps that needed at least one halving.
    pub halved_steps: usize,
}

/// Advance `n0` over `grid`, recording diagnostics and notifying observers.
///
/// A step whose Picard iteration fails is retried as two half steps, up to
/// `cfg.max_halvings` levels deep. If it still fails, the run reports a
/// blow-up for `δ = 0` and returns the nonconvergence error otherwise.
pub fn run(
    mesh: &Mesh,
    params: &ModelParams,
    n0: Field,
    grid: &TimeGrid,
    cfg: &PicardConfig,
    observers: &mut [&mut dyn Observer],
) -> Result<RunResult> {
    cfg.validate()?;
    let scheme = Scheme::with_linear_tol(mesh, *params, cfg.linear_tol)?;
    let mut state = scheme.initial_state(n0)?;
    let steady = SteadyState::from_mass(mesh, params, dspace::integral(mesh, &state.n));
    let mut record = RunRecord::default();
    let row = diagnostics::record_row(mesh, params, &steady, &state, 0, None);
    for o in observers.iter_mut() {
        o.observe(mesh, &state, &row)?;
    }
    let mut prev_entropy = row.entropy;
    record.rows.push(row);

    let mut halved_steps = 0;
    let mut outcome = Outcome::Completed;
    for k in 0..grid.steps {
        let result = advance_with_halving(&scheme, &state, grid.dt, cfg, cfg.max_halvings);
        let (mut next, iterations, halved) = match result {
            Ok(v) => v,
            Err(Error::BlowUp { linf, .. }) => {
                outcome = Outcome::BlowUp { time: state.time, linf };
                break;
            }
            Err(Error::NonConvergence { last, .. }) if params.delta == 0.0 => {
                outcome = Outcome::BlowUp {
                    time: state.time,
                    linf: last.n.max(),
                };
                break;
            }
            Err(e) => return Err(e),
        };
        if halved {
            halved_steps += 1;
        }
        next.k = k + 1;
        next.time = grid.time(k + 1);
        let row = diagnostics::record_row(mesh, params, &steady, &next, iterations, Some((prev_entropy, grid.dt)));
        for o in observers.iter_mut() {
            o.observe(mesh, &next, &row)?;
        }
        prev_entropy = row.entropy;
        record.rows.push(row);
        state = next;
    }
    Ok(RunResult {
        record,
        final_state: state,
        outcome,
        halved_steps,
    })
}

fn advance_with_halving(scheme: &Scheme, state: &State, dt: f64, cfg: &PicardConfig, depth: usize) -> Result<(State, usize, bool)> {
    match scheme.advance(state, dt, cfg) {
        Ok(step) => Ok((step.state, step.iterations, false)),
        Err(Error::NonConvergence { .. }) if depth > 0 => {
            let (mid, i1, _) = advance_with_halving(scheme, state, 0.5 * dt, cfg, depth - 1)?;
            let (end, i2, _) = advance_with_halving(scheme, &mid, 0.5 * dt, cfg, depth - 1)?;
            Ok((end, i1 + i2, true))
        }
        Err(e) => Err(e),
    }
}
