//! Admissible finite volume meshes of polygonal planar domains.
//!
//! A [`Mesh`] stores what two-point flux schemes need: cell centers and
//! areas, edge lengths, center-to-center distances, transmissibilities,
//! outward normals and the measures of the dual half-diamonds `T_{K,σ}`
//! (the triangle with apex `x_K` and base `σ`). Only uniform Cartesian grids
//! are generated here; any other admissible mesh (Voronoi, acute triangles)
//! can be supplied through [`Mesh::from_parts`] or the text format in
//! [`crate::io`].

use crate::error::{invalid, Result};

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub center: Point,
    pub area: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    Interior,
    Exterior,
}

/// One edge of the mesh.
///
/// `cell` is the cell `K` the normal points out of; `neighbor` is `L` for an
/// interior edge `σ = K|L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub cell: usize,
    pub neighbor: Option<usize>,
    pub length: f64,
    pub midpoint: Point,
    /// Unit normal, outward from `cell`.
    pub normal: Point,
    /// `d_σ`: `d(x_K, x_L)` for interior edges, `d(x_K, σ)` for exterior ones.
    pub distance: f64,
    pub transmissibility: f64,
    /// `d(x_K, σ)` and, for interior edges, `d(x_L, σ)`.
    pub center_distance: (f64, Option<f64>),
    /// `m(T_{K,σ})` and, for interior edges, `m(T_{L,σ})`.
    pub diamond: (f64, Option<f64>),
}

impl Edge {
    pub fn kind(&self) -> EdgeKind {
        if self.neighbor.is_some() {
            EdgeKind::Interior
        } else {
            EdgeKind::Exterior
        }
    }

    pub fn is_interior(&self) -> bool {
        self.neighbor.is_some()
    }

    /// The cell on the other side of the edge as seen from `cell`.
    pub fn other(&self, cell: usize) -> Option<usize> {
        match self.neighbor {
            Some(l) if self.cell == cell => Some(l),
            Some(_) if self.neighbor == Some(cell) => Some(self.cell),
            _ => None,
        }
    }

    /// Outward unit normal of `σ` with respect to `cell`.
    pub fn normal_from(&self, cell: usize) -> Point {
        if cell == self.cell {
            self.normal
        } else {
            [-self.normal[0], -self.normal[1]]
        }
    }

    /// `d(x_K, σ)` for the incident cell `cell`.
    pub fn center_distance_from(&self, cell: usize) -> f64 {
        if cell == self.cell {
            self.center_distance.0
        } else {
            self.center_distance.1.unwrap_or(self.center_distance.0)
        }
    }

    /// `m(T_{K,σ})` for the incident cell `cell`.
    pub fn diamond_from(&self, cell: usize) -> f64 {
        if cell == self.cell {
            self.diamond.0
        } else {
            self.diamond.1.unwrap_or(self.diamond.0)
        }
    }

    /// Measure of the full dual cell attached to `σ`: the diamond
    /// `x_K, x_L, endpoints` for interior edges, the triangle for exterior ones.
    pub fn full_diamond(&self) -> f64 {
        self.diamond.0 + self.diamond.1.unwrap_or(0.0)
    }
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    /// The square `(-1/2, 1/2)^2` used throughout the experiments.
    pub fn centered_unit_square() -> Self {
        Self::new(-0.5, 0.5, -0.5, 0.5)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

/// Structure of a uniform Cartesian grid; cell `(i, j)` has id `j * nx + i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartesianGrid {
    pub nx: usize,
    pub ny: usize,
    pub rect: Rect,
}

impl CartesianGrid {
    pub fn hx(&self) -> f64 {
        self.rect.width() / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        self.rect.height() / self.ny as f64
    }

    pub fn cell_id(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn cell_index(&self, id: usize) -> (usize, usize) {
        (id % self.nx, id / self.nx)
    }

    /// Bounds `(x0, x1, y0, y1)` of cell `id`.
    pub fn cell_bounds(&self, id: usize) -> Rect {
        let (i, j) = self.cell_index(id);
        let (hx, hy) = (self.hx(), self.hy());
        Rect::new(
            self.rect.x0 + i as f64 * hx,
            self.rect.x0 + (i + 1) as f64 * hx,
            self.rect.y0 + j as f64 * hy,
            self.rect.y0 + (j + 1) as f64 * hy,
        )
    }

    /// Ids of the four corner cells.
    pub fn corner_cells(&self) -> [usize; 4] {
        let (nx, ny) = (self.nx, self.ny);
        [
            self.cell_id(0, 0),
            self.cell_id(nx - 1, 0),
            self.cell_id(0, ny - 1),
            self.cell_id(nx - 1, ny - 1),
        ]
    }
}

/// Edge description accepted by [`Mesh::from_parts`]. Derived quantities
/// (distances, transmissibility, diamond measures) are computed from it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeSpec {
    pub cell: usize,
    pub neighbor: Option<usize>,
    pub length: f64,
    pub midpoint: Point,
    pub normal: Point,
    /// Overrides the computed `d_σ` when present.
    pub distance: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    cells: Vec<Cell>,
    edges: Vec<Edge>,
    cell_edges: Vec<Vec<usize>>,
    xi: f64,
    domain_measure: f64,
    grid: Option<CartesianGrid>,
}

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

impl Mesh {
    /// Uniform `nx × ny` grid of `rect`, cell centers at the centroids.
    pub fn cartesian(nx: usize, ny: usize, rect: Rect) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(invalid(format!("cell counts must be positive, got {nx}x{ny}")));
        }
        let finite = [rect.x0, rect.x1, rect.y0, rect.y1].iter().all(|v| v.is_finite());
        if !finite || rect.width() <= 0.0 || rect.height() <= 0.0 {
            return Err(invalid(format!("degenerate rectangle {rect:?}")));
        }
        let grid = CartesianGrid { nx, ny, rect };
        let (hx, hy) = (grid.hx(), grid.hy());

        let cells = (0..nx * ny)
            .map(|id| {
                let b = grid.cell_bounds(id);
                Cell {
                    center: [0.5 * (b.x0 + b.x1), 0.5 * (b.y0 + b.y1)],
                    area: hx * hy,
                }
            })
            .collect();

        let mut specs = Vec::with_capacity((nx + 1) * ny + (ny + 1) * nx);
        // Vertical edges x = x_i, row by row.
        for j in 0..ny {
            let ym = rect.y0 + (j as f64 + 0.5) * hy;
            for i in 0..=nx {
                let x = rect.x0 + i as f64 * hx;
                let (cell, neighbor, normal) = if i == 0 {
                    (grid.cell_id(0, j), None, [-1.0, 0.0])
                } else if i == nx {
                    (grid.cell_id(nx - 1, j), None, [1.0, 0.0])
                } else {
                    (grid.cell_id(i - 1, j), Some(grid.cell_id(i, j)), [1.0, 0.0])
                };
                specs.push(EdgeSpec {
                    cell,
                    neighbor,
                    length: hy,
                    midpoint: [x, ym],
                    normal,
                    distance: None,
                });
            }
        }
        // Horizontal edges y = y_j, line by line.
        for j in 0..=ny {
            let y = rect.y0 + j as f64 * hy;
            for i in 0..nx {
                let xm = rect.x0 + (i as f64 + 0.5) * hx;
                let (cell, neighbor, normal) = if j == 0 {
                    (grid.cell_id(i, 0), None, [0.0, -1.0])
                } else if j == ny {
                    (grid.cell_id(i, ny - 1), None, [0.0, 1.0])
                } else {
                    (grid.cell_id(i, j - 1), Some(grid.cell_id(i, j)), [0.0, 1.0])
                };
                specs.push(EdgeSpec {
                    cell,
                    neighbor,
                    length: hx,
                    midpoint: [xm, y],
                    normal,
                    distance: None,
                });
            }
        }

        let mut mesh = Self::from_parts(cells, specs, Some(rect.area()))?;
        mesh.grid = Some(grid);
        Ok(mesh)
    }

    /// Assemble a mesh from explicit cells and edges.
    ///
    /// `domain_measure` defaults to the sum of the cell areas.
    pub fn from_parts(cells: Vec<Cell>, specs: Vec<EdgeSpec>, domain_measure: Option<f64>) -> Result<Self> {
        if cells.is_empty() {
            return Err(invalid("mesh has no cells"));
        }
        for (id, c) in cells.iter().enumerate() {
            if !(c.area > 0.0) || !c.center.iter().all(|v| v.is_finite()) {
                return Err(invalid(format!("cell {id} has invalid geometry {c:?}")));
            }
        }
        let n = cells.len();
        let mut cell_edges = vec![Vec::new(); n];
        let mut edges = Vec::with_capacity(specs.len());
        for (id, s) in specs.into_iter().enumerate() {
            if s.cell >= n || s.neighbor.is_some_and(|l| l >= n || l == s.cell) {
                return Err(invalid(format!("edge {id} references invalid cells")));
            }
            let nn = norm(s.normal);
            if !(s.length > 0.0) || !(nn > 0.0) {
                return Err(invalid(format!("edge {id} has invalid length or normal")));
            }
            let normal = [s.normal[0] / nn, s.normal[1] / nn];
            let xk = cells[s.cell].center;
            let dk = dot(sub(s.midpoint, xk), normal).abs();
            let (distance, dl) = match s.neighbor {
                Some(l) => {
                    let xl = cells[l].center;
                    (s.distance.unwrap_or_else(|| norm(sub(xl, xk))), Some(dot(sub(s.midpoint, xl), normal).abs()))
                }
                None => (s.distance.unwrap_or(dk), None),
            };
            if !(distance > 0.0) {
                return Err(invalid(format!("edge {id} has non-positive distance {distance}")));
            }
            let edge = Edge {
                cell: s.cell,
                neighbor: s.neighbor,
                length: s.length,
                midpoint: s.midpoint,
                normal,
                distance,
                transmissibility: s.length / distance,
                center_distance: (dk, dl),
                diamond: (0.5 * s.length * dk, dl.map(|d| 0.5 * s.length * d)),
            };
            cell_edges[s.cell].push(id);
            if let Some(l) = s.neighbor {
                cell_edges[l].push(id);
            }
            edges.push(edge);
        }

        let xi = regularity(&edges);
        let domain_measure = domain_measure.unwrap_or_else(|| cells.iter().map(|c| c.area).sum());
        Ok(Self {
            cells,
            edges,
            cell_edges,
            xi,
            domain_measure,
            grid: None,
        })
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn cell(&self, id: usize) -> &Cell {
        &self.cells[id]
    }

    pub fn edge(&self, id: usize) -> &Edge {
        &self.edges[id]
    }

    /// Edge ids `E_K` of cell `k`.
    pub fn cell_edges(&self, k: usize) -> &[usize] {
        &self.cell_edges[k]
    }

    pub fn interior_edges(&self) -> impl Iterator<Item = (usize, &Edge)> {
        self.edges.iter().enumerate().filter(|(_, e)| e.is_interior())
    }

    /// Regularity parameter `ξ`: the minimum of `d(x_K, σ) / d(x_K, x_L)`
    /// over interior edge incidences (1 when there are none).
    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn domain_measure(&self) -> f64 {
        self.domain_measure
    }

    /// Grid structure when the mesh came from [`Mesh::cartesian`].
    pub fn grid(&self) -> Option<&CartesianGrid> {
        self.grid.as_ref()
    }

    /// Largest cell diameter `Δx`. Uses the grid when known, otherwise twice
    /// the largest center-to-edge distance.
    pub fn size(&self) -> f64 {
        match &self.grid {
            Some(g) => g.hx().hypot(g.hy()),
            None => self
                .edges
                .iter()
                .flat_map(|e| std::iter::once(e.center_distance.0).chain(e.center_distance.1))
                .fold(0.0, f64::max)
                * 2.0,
        }
    }

    /// `(cell, edge)` incidences in cell-major order: the indexing of diamonds.
    pub fn incidences(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.cell_edges
            .iter()
            .enumerate()
            .flat_map(|(k, es)| es.iter().map(move |&e| (k, e)))
    }

    /// Half-bandwidth of the cell adjacency in the current numbering.
    pub fn bandwidth(&self) -> usize {
        self.interior_edges()
            .map(|(_, e)| e.cell.abs_diff(e.neighbor.unwrap_or(e.cell)))
            .max()
            .unwrap_or(0)
    }
}

fn regularity(edges: &[Edge]) -> f64 {
    let mut xi = f64::INFINITY;
    for e in edges.iter().filter(|e| e.is_interior()) {
        xi = xi.min(e.center_distance.0 / e.distance);
        if let Some(dl) = e.center_distance.1 {
            xi = xi.min(dl / e.distance);
        }
    }
    if xi.is_finite() {
        xi
    } else {
        1.0
    }
}

/// One failed admissibility test.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// `x_L - x_K` is not parallel to the edge normal; `defect` is the sine
    /// of the angle between them.
    Orthogonality { edge: usize, defect: f64 },
    /// `Σ_σ m(σ) d(x_K, σ)` differs from `2 m(K)`; relative defect.
    CellIdentity { cell: usize, defect: f64 },
    /// The half-diamonds do not tile the domain; relative defect.
    DiamondPartition { defect: f64 },
    /// Cell areas do not sum to the domain measure; relative defect.
    CellPartition { defect: f64 },
    NonPositiveTransmissibility { edge: usize },
    NonPositiveXi { xi: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    pub passed: bool,
    pub worst_orthogonality: f64,
    pub worst_cell_identity: f64,
    pub diamond_partition_defect: f64,
    pub cell_partition_defect: f64,
    pub xi: f64,
    pub violations: Vec<Violation>,
}

impl AdmissibilityReport {
    pub fn worst(&self) -> f64 {
        [
            self.worst_orthogonality,
            self.worst_cell_identity,
            self.diamond_partition_defect,
            self.cell_partition_defect,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Check the geometric conditions two-point fluxes rely on. Report only;
/// never fails.
pub fn check_admissibility(mesh: &Mesh, tol: f64) -> AdmissibilityReport {
    let mut violations = Vec::new();
    let mut worst_orthogonality: f64 = 0.0;
    for (id, e) in mesh.edges.iter().enumerate() {
        if !(e.transmissibility > 0.0) {
            violations.push(Violation::NonPositiveTransmissibility { edge: id });
        }
        let Some(l) = e.neighbor else { continue };
        let d = sub(mesh.cells[l].center, mesh.cells[e.cell].center);
        let len = norm(d);
        let defect = if len > 0.0 {
            (d[0] * e.normal[1] - d[1] * e.normal[0]).abs() / len
        } else {
            1.0
        };
        let defect = if dot(d, e.normal) <= 0.0 { defect.max(1.0) } else { defect };
        worst_orthogonality = worst_orthogonality.max(defect);
        if defect > tol {
            violations.push(Violation::Orthogonality { edge: id, defect });
        }
    }

    let mut worst_cell_identity: f64 = 0.0;
    for (k, cell) in mesh.cells.iter().enumerate() {
        let sum: f64 = mesh.cell_edges[k]
            .iter()
            .map(|&e| {
                let edge = &mesh.edges[e];
                edge.length * edge.center_distance_from(k)
            })
            .sum();
        let defect = (sum - 2.0 * cell.area).abs() / (2.0 * cell.area);
        worst_cell_identity = worst_cell_identity.max(defect);
        if defect > tol {
            violations.push(Violation::CellIdentity { cell: k, defect });
        }
    }

    let m = mesh.domain_measure;
    let diamonds: f64 = mesh.edges.iter().map(Edge::full_diamond).sum();
    let diamond_partition_defect = (diamonds - m).abs() / m;
    if diamond_partition_defect > tol {
        violations.push(Violation::DiamondPartition {
            defect: diamond_partition_defect,
        });
    }
    let areas: f64 = mesh.cells.iter().map(|c| c.area).sum();
    let cell_partition_defect = (areas - m).abs() / m;
    if cell_partition_defect > tol {
        violations.push(Violation::CellPartition {
            defect: cell_partition_defect,
        });
    }
    if !(mesh.xi > 0.0) {
        violations.push(Violation::NonPositiveXi { xi: mesh.xi });
    }

    AdmissibilityReport {
        passed: violations.is_empty(),
        worst_orthogonality,
        worst_cell_identity,
        diamond_partition_defect,
        cell_partition_defect,
        xi: mesh.xi,
        violations,
    }
}

/// Move the center of cell `k`, recomputing every derived edge quantity.
/// Used to build non-admissible meshes for testing the checker.
pub fn with_moved_center(mesh: &Mesh, k: usize, center: Point) -> Result<Mesh> {
    let mut cells = mesh.cells.clone();
    cells
        .get_mut(k)
        .ok_or_else(|| invalid(format!("cell {k} out of range")))?
        .center = center;
    let specs = mesh
        .edges
        .iter()
        .map(|e| EdgeSpec {
            cell: e.cell,
            neighbor: e.neighbor,
            length: e.length,
            midpoint: e.midpoint,
            normal: e.normal,
            distance: None,
        })
        .collect();
    Mesh::from_parts(cells, specs, Some(mesh.domain_measure))
}
