//! Piecewise-constant functions on a mesh and their discrete norms.
//!
//! Sign conventions: [`Field::jump`] is the edge-indexed `D_σ u = |u_K - u_L|`
//! used by the seminorms, [`Field::difference`] is the signed
//! `DU_{K,σ} = u_L - u_K` used by the scheme (zero on exterior edges).

use crate::error::{invalid, Result};
use crate::mesh::{Mesh, Point};

/// One value per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    values: Vec<f64>,
}

impl Field {
    pub fn new(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.num_cells() {
            return Err(invalid(format!(
                "field has {} values for {} cells",
                values.len(),
                mesh.num_cells()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite value in cell {k}")));
        }
        Ok(Self { values })
    }

    /// Wrap values without checks. Callers guarantee length and finiteness.
    pub(crate) fn from_vec(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn constant(mesh: &Mesh, c: f64) -> Self {
        Self {
            values: vec![c; mesh.num_cells()],
        }
    }

    pub fn zeros(mesh: &Mesh) -> Self {
        Self::constant(mesh, 0.0)
    }

    /// Sample `f` at the cell centers.
    pub fn from_centers(mesh: &Mesh, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            values: mesh.cells().iter().map(|c| f(c.center[0], c.center[1])).collect(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// Pointwise map.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn shifted(&self, c: f64) -> Self {
        self.map(|v| v + c)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index of the largest value (first one on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = k;
            }
        }
        best
    }

    /// Signed `DU_{K,σ}`: `u_L - u_K` on an interior edge, 0 on an exterior one.
    pub fn difference(&self, mesh: &Mesh, cell: usize, edge: usize) -> f64 {
        match mesh.edge(edge).other(cell) {
            Some(l) => self.values[l] - self.values[cell],
            None => 0.0,
        }
    }

    /// `D_σ u = |u_K - u_L|` on an interior edge, 0 on an exterior one.
    pub fn jump(&self, mesh: &Mesh, edge: usize) -> f64 {
        let e = mesh.edge(edge);
        e.neighbor.map_or(0.0, |l| (self.values[e.cell] - self.values[l]).abs())
    }
}

impl std::ops::Index<usize> for Field {
    type Output = f64;
    fn index(&self, k: usize) -> &f64 {
        &self.values[k]
    }
}

fn check_len(mesh: &Mesh, u: &Field) {
    assert_eq!(u.len(), mesh.num_cells(), "field does not belong to this mesh");
}

/// Discrete `L^p` norm `(Σ_K m(K)|u_K|^p)^{1/p}`; `p = ∞` gives `max_K |u_K|`.
pub fn norm_0p(mesh: &Mesh, u: &Field, p: f64) -> Result<f64> {
    check_len(mesh, u);
    if p.is_nan() || p < 1.0 {
        return Err(invalid(format!("norm exponent must be >= 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok(u.values.iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    let s: f64 = mesh
        .cells()
        .iter()
        .zip(&u.values)
        .map(|(c, v)| c.area * v.abs().powf(p))
        .sum();
    Ok(s.powf(1.0 / p))
}

/// Discrete `W^{1,p}` seminorm `(Σ_{σ int} m(σ)/d_σ^{p-1} |D_σ u|^p)^{1/p}`.
pub fn seminorm_1p(mesh: &Mesh, u: &Field, p: f64) -> Result<f64> {
    check_len(mesh, u);
    if p.is_nan() || p < 1.0 || p.is_infinite() {
        return Err(invalid(format!("seminorm exponent must be in [1, inf), got {p}")));
    }
    let s: f64 = mesh
        .interior_edges()
        .map(|(id, e)| e.length / e.distance.powf(p - 1.0) * u.jump(mesh, id).powf(p))
        .sum();
    Ok(s.powf(1.0 / p))
}

/// `Σ_{σ int} τ_σ |D_σ u|^2`, the square of the `W^{1,2}` seminorm without
/// the final root. Cheaper and exact for the entropy bookkeeping.
pub fn seminorm_12_squared(mesh: &Mesh, u: &Field) -> f64 {
    check_len(mesh, u);
    mesh.interior_edges()
        .map(|(_, e)| {
            let d = u.values[e.cell] - u.values[e.neighbor.unwrap_or(e.cell)];
            e.transmissibility * d * d
        })
        .sum()
}

/// Discrete `W^{1,p}` norm: `norm_0p + seminorm_1p`.
pub fn norm_1p(mesh: &Mesh, u: &Field, p: f64) -> Result<f64> {
    Ok(norm_0p(mesh, u, p)? + seminorm_1p(mesh, u, p)?)
}

/// `Σ_K m(K) u_K`.
pub fn integral(mesh: &Mesh, u: &Field) -> f64 {
    check_len(mesh, u);
    mesh.cells().iter().zip(&u.values).map(|(c, v)| c.area * v).sum()
}

/// `ū = m(Ω)^{-1} Σ_K m(K) u_K`.
pub fn mean_value(mesh: &Mesh, u: &Field) -> f64 {
    integral(mesh, u) / mesh.domain_measure()
}

/// Value of the reconstructed gradient on one half-diamond `T_{K,σ}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiamondGradient {
    pub cell: usize,
    pub edge: usize,
    /// `m(T_{K,σ})`.
    pub measure: f64,
    pub value: Point,
}

/// Piecewise-constant gradient, one entry per `(cell, edge)` incidence in
/// [`Mesh::incidences`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub entries: Vec<DiamondGradient>,
}

impl GradientField {
    /// `L^2(Ω)` norm `(Σ m(T_{K,σ}) |∇u|^2)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|d| d.measure * (d.value[0] * d.value[0] + d.value[1] * d.value[1]))
            .sum::<f64>()
            .sqrt()
    }
}

/// Diamond-cell gradient `(m(σ)/m(T_σ)) DU_{K,σ} ν_{K,σ}`.
///
/// The value is constant on the whole diamond `T_σ = T_{K,σ} ∪ T_{L,σ}`, so
/// the ratio uses the full diamond measure; each half carries its own
/// measure for integration. Exterior entries are zero.
pub fn reconstruct_gradient(mesh: &Mesh, u: &Field) -> GradientField {
    check_len(mesh, u);
    let entries = mesh
        .incidences()
        .map(|(k, id)| {
            let e = mesh.edge(id);
            let value = if e.is_interior() {
                let scale = e.length / e.full_diamond() * u.difference(mesh, k, id);
                let nu = e.normal_from(k);
                [scale * nu[0], scale * nu[1]]
            } else {
                [0.0, 0.0]
            };
            DiamondGradient {
                cell: k,
                edge: id,
                measure: e.diamond_from(k),
                value,
            }
        })
        .collect();
    GradientField { entries }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> Vec<(f64, f64)> {
    let n = order;
    let mut rule = Vec::with_capacity(n);
    for i in 0..n {
        // Chebyshev initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            if n == 0 {
                break;
            }
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pnm1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        rule.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    rule.reverse();
    rule
}

/// Result of projecting an initial datum.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub field: Field,
    /// Cells whose quadrature value came out negative and was set to 0.
    pub clamped: usize,
}

/// Cell averages `(1/m(K)) ∫_K n0` by tensor Gauss-Legendre quadrature with
/// `order` points per direction.
///
/// Needs the cell rectangles of a Cartesian mesh; on other meshes only
/// `order == 1` (center value) is available.
pub fn project_initial(mesh: &Mesh, n0: impl Fn(f64, f64) -> f64, order: usize) -> Result<Projection> {
    if order < 1 {
        return Err(invalid("quadrature order must be at least 1"));
    }
    let mut values = Vec::with_capacity(mesh.num_cells());
    match mesh.grid() {
        Some(grid) => {
            let rule = gauss_legendre(order);
            for k in 0..mesh.num_cells() {
                let b = grid.cell_bounds(k);
                let (cx, cy) = (0.5 * (b.x0 + b.x1), 0.5 * (b.y0 + b.y1));
                let (hx, hy) = (0.5 * b.width(), 0.5 * b.height());
                let mut s = 0.0;
                for &(sy, wy) in &rule {
                    for &(sx, wx) in &rule {
                        s += wx * wy * n0(cx + hx * sx, cy + hy * sy);
                    }
                }
                values.push(0.25 * s);
            }
        }
        None if order == 1 => {
            values.extend(mesh.cells().iter().map(|c| n0(c.center[0], c.center[1])));
        }
        None => {
            return Err(invalid("higher-order projection needs a Cartesian mesh"));
        }
    }
    if let Some(k) = values.iter().position(|v| !v.is_finite()) {
        return Err(invalid(format!("initial datum is not finite on cell {k}")));
    }
    let mut clamped = 0;
    for v in &mut values {
        if *v < 0.0 {
            *v = 0.0;
            clamped += 1;
        }
    }
    Ok(Projection {
        field: Field::from_vec(values),
        clamped,
    })
}

/// Inject a field of a coarse Cartesian grid onto a nested finer grid of
/// the same rectangle: every fine cell takes the value of the coarse cell
/// containing it.
pub fn inject(coarse: &Mesh, u: &Field, fine: &Mesh) -> Result<Field> {
    let (Some(cg), Some(fg)) = (coarse.grid(), fine.grid()) else {
        return Err(invalid("injection needs two Cartesian grids"));
    };
    if u.len() != coarse.num_cells() {
        return Err(invalid("field does not match the coarse mesh"));
    }
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (a.abs() + b.abs()).max(1.0);
    let (a, b) = (cg.rect, fg.rect);
    if !(same(a.x0, b.x0) && same(a.x1, b.x1) && same(a.y0, b.y0) && same(a.y1, b.y1)) {
        return Err(invalid("grids cover different rectangles"));
    }
    if fg.nx % cg.nx != 0 || fg.ny % cg.ny != 0 {
        return Err(invalid(format!(
            "{}x{} grid is not nested in {}x{}",
            cg.nx, cg.ny, fg.nx, fg.ny
        )));
    }
    let (rx, ry) = (fg.nx / cg.nx, fg.ny / cg.ny);
    let values = (0..fine.num_cells())
        .map(|id| {
            let (i, j) = fg.cell_index(id);
            u[cg.cell_id(i / rx, j / ry)]
        })
        .collect();
    Ok(Field::from_vec(values))
}
