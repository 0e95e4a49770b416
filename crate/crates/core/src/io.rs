//! Plain-text inputs and outputs: CSV tables, legacy VTK snapshots and the
//! mesh file format.
//!
//! # CSV schemas
//!
//! | file | columns |
//! |---|---|
//! | `record.csv` | `k,t,mass,entropy,rel_entropy,linf_n,s_h1_err,picard_iters` |
//! | `entropy_terms.csv` | `k,t,sqrt_n_dissipation,s_l2_sq,s_gradient_sq,stability_constant` |
//! | `snapshots/*.csv` | `cell_id,x,y,area,n,s` |
//!
//! Experiment tables (`orders.csv`, `rates.csv`, `inequalities.csv`) are
//! documented next to their row types in [`crate::experiment`]. Every table
//! is read back by [`read_csv`].
//!
//! # Mesh files
//!
//! ```text
//! ksfv-mesh 1
//! domain_measure <m(Ω)>
//! cells <N>
//! <id> <x> <y> <area>                                  (N lines)
//! edges <E>
//! <id> interior <K> <L> <length> <d_σ> <νx> <νy> <mx> <my>
//! <id> exterior <K> - <length> <d_σ> <νx> <νy> <mx> <my>
//! ```
//!
//! `ν` is the normal outward from `K` and `(mx, my)` the edge midpoint.
//! Blank lines and lines starting with `#` are ignored. Ids must be dense
//! and in order.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{RecordRow, RunRecord};
use crate::error::{Error, Result};
use crate::mesh::{Cell, EdgeSpec, Mesh};
use crate::scheme::State;

/// Write `rows` with a header derived from the row type.
pub fn write_csv<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path.as_ref())?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?;
    Ok(rows)
}

/// One row of `record.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecordCsvRow {
    pub k: usize,
    pub t: f64,
    pub mass: f64,
    pub entropy: f64,
    pub rel_entropy: f64,
    pub linf_n: f64,
    pub s_h1_err: f64,
    pub picard_iters: usize,
}

impl From<&RecordRow> for RecordCsvRow {
    fn from(r: &RecordRow) -> Self {
        Self {
            k: r.k,
            t: r.t,
            mass: r.mass,
            entropy: r.entropy,
            rel_entropy: r.rel_entropy,
            linf_n: r.linf_n,
            s_h1_err: r.s_h1_err,
            picard_iters: r.picard_iters,
        }
    }
}

/// One row of `entropy_terms.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyTermsRow {
    pub k: usize,
    pub t: f64,
    pub sqrt_n_dissipation: f64,
    pub s_l2_sq: f64,
    pub s_gradient_sq: f64,
    pub stability_constant: Option<f64>,
}

impl From<&RecordRow> for EntropyTermsRow {
    fn from(r: &RecordRow) -> Self {
        Self {
            k: r.k,
            t: r.t,
            sqrt_n_dissipation: r.sqrt_n_dissipation,
            s_l2_sq: r.s_l2_sq,
            s_gradient_sq: r.s_gradient_sq,
            stability_constant: r.stability_constant,
        }
    }
}

pub fn write_record(path: impl AsRef<Path>, record: &RunRecord) -> Result<()> {
    let rows: Vec<RecordCsvRow> = record.rows.iter().map(RecordCsvRow::from).collect();
    write_csv(path, &rows)
}

pub fn read_record(path: impl AsRef<Path>) -> Result<Vec<RecordCsvRow>> {
    read_csv(path)
}

pub fn write_entropy_terms(path: impl AsRef<Path>, record: &RunRecord) -> Result<()> {
    let rows: Vec<EntropyTermsRow> = record.rows.iter().map(EntropyTermsRow::from).collect();
    write_csv(path, &rows)
}

/// One row of a snapshot table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRow {
    pub cell_id: usize,
    pub x: f64,
    pub y: f64,
    pub area: f64,
    pub n: f64,
    pub s: f64,
}

pub fn snapshot_rows(mesh: &Mesh, state: &State) -> Vec<SnapshotRow> {
    mesh.cells()
        .iter()
        .enumerate()
        .map(|(k, c)| SnapshotRow {
            cell_id: k,
            x: c.center[0],
            y: c.center[1],
            area: c.area,
            n: state.n[k],
            s: state.s[k],
        })
        .collect()
}

pub fn write_snapshot_csv(path: impl AsRef<Path>, mesh: &Mesh, state: &State) -> Result<()> {
    write_csv(path, &snapshot_rows(mesh, state))
}

pub fn read_snapshot_csv(path: impl AsRef<Path>) -> Result<Vec<SnapshotRow>> {
    read_csv(path)
}

/// Legacy VTK `STRUCTURED_POINTS` file with `n` and `S` as cell data.
/// Only Cartesian meshes can be written this way.
pub fn write_snapshot_vtk(path: impl AsRef<Path>, mesh: &Mesh, state: &State) -> Result<()> {
    let g = mesh
        .grid()
        .ok_or_else(|| Error::InvalidArgument("VTK structured output needs a Cartesian mesh".into()))?;
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "ksfv k={} t={}", state.k, state.time);
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET STRUCTURED_POINTS");
    let _ = writeln!(s, "DIMENSIONS {} {} 1", g.nx + 1, g.ny + 1);
    let _ = writeln!(s, "ORIGIN {:e} {:e} 0", g.rect.x0, g.rect.y0);
    let _ = writeln!(s, "SPACING {:e} {:e} 1", g.hx(), g.hy());
    let _ = writeln!(s, "CELL_DATA {}", mesh.num_cells());
    for (name, field) in [("n", &state.n), ("S", &state.s)] {
        let _ = writeln!(s, "SCALARS {name} double 1");
        let _ = writeln!(s, "LOOKUP_TABLE default");
        // Cell ids run x-fastest, as VTK expects.
        for v in field.values() {
            let _ = writeln!(s, "{v:e}");
        }
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn write_mesh(path: impl AsRef<Path>, mesh: &Mesh) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path.as_ref())?);
    writeln!(f, "ksfv-mesh 1")?;
    writeln!(f, "domain_measure {:e}", mesh.domain_measure())?;
    writeln!(f, "cells {}", mesh.num_cells())?;
    for (k, c) in mesh.cells().iter().enumerate() {
        writeln!(f, "{k} {:e} {:e} {:e}", c.center[0], c.center[1], c.area)?;
    }
    writeln!(f, "edges {}", mesh.num_edges())?;
    for (id, e) in mesh.edges().iter().enumerate() {
        let (kind, l) = match e.neighbor {
            Some(l) => ("interior", l.to_string()),
            None => ("exterior", "-".to_string()),
        };
        writeln!(
            f,
            "{id} {kind} {} {l} {:e} {:e} {:e} {:e} {:e} {:e}",
            e.cell, e.length, e.distance, e.normal[0], e.normal[1], e.midpoint[0], e.midpoint[1]
        )?;
    }
    f.flush()?;
    Ok(())
}

/// Load a mesh written in the format above. The result is not checked for
/// admissibility; see [`crate::mesh::check_admissibility`].
pub fn read_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_mesh(&text).map_err(|(line, message)| Error::Parse {
        path: path.to_path_buf(),
        message: format!("line {line}: {message}"),
    })
}

type ParseResult<T> = std::result::Result<T, (usize, String)>;

fn parse_mesh(text: &str) -> ParseResult<Mesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let mut next = |what: &str| lines.next().ok_or((0, format!("unexpected end of file, expected {what}")));

    let (ln, header) = next("header")?;
    if header.split_whitespace().collect::<Vec<_>>() != ["ksfv-mesh", "1"] {
        return Err((ln, format!("expected `ksfv-mesh 1`, got `{header}`")));
    }
    let (ln, l) = next("domain_measure")?;
    let domain_measure: f64 = keyed(ln, l, "domain_measure")?;
    let (ln, l) = next("cells")?;
    let ncells: usize = keyed(ln, l, "cells")?;
    let mut cells = Vec::with_capacity(ncells);
    for k in 0..ncells {
        let (ln, l) = next("cell")?;
        let t: Vec<&str> = l.split_whitespace().collect();
        if t.len() != 4 {
            return Err((ln, format!("cell line needs 4 fields, got {}", t.len())));
        }
        expect_id(ln, t[0], k)?;
        cells.push(Cell {
            center: [num(ln, t[1])?, num(ln, t[2])?],
            area: num(ln, t[3])?,
        });
    }
    let (ln, l) = next("edges")?;
    let nedges: usize = keyed(ln, l, "edges")?;
    let mut specs = Vec::with_capacity(nedges);
    for id in 0..nedges {
        let (ln, l) = next("edge")?;
        let t: Vec<&str> = l.split_whitespace().collect();
        if t.len() != 10 {
            return Err((ln, format!("edge line needs 10 fields, got {}", t.len())));
        }
        expect_id(ln, t[0], id)?;
        let cell: usize = num(ln, t[2])?;
        let neighbor = match (t[1], t[3]) {
            ("interior", l) => Some(num(ln, l)?),
            ("exterior", "-") => None,
            (kind, l) => return Err((ln, format!("bad edge kind/neighbor `{kind} {l}`"))),
        };
        specs.push(EdgeSpec {
            cell,
            neighbor,
            length: num(ln, t[4])?,
            distance: Some(num(ln, t[5])?),
            normal: [num(ln, t[6])?, num(ln, t[7])?],
            midpoint: [num(ln, t[8])?, num(ln, t[9])?],
        });
    }
    if let Some((ln, l)) = lines.next() {
        return Err((ln, format!("trailing content `{l}`")));
    }
    Mesh::from_parts(cells, specs, Some(domain_measure)).map_err(|e| (0, e.to_string()))
}

fn num<T: std::str::FromStr>(ln: usize, s: &str) -> ParseResult<T> {
    s.parse().map_err(|_| (ln, format!("cannot parse `{s}`")))
}

fn keyed<T: std::str::FromStr>(ln: usize, line: &str, key: &str) -> ParseResult<T> {
    match line.split_whitespace().collect::<Vec<_>>()[..] {
        [k, v] if k == key => num(ln, v),
        _ => Err((ln, format!("expected `{key} <value>`, got `{line}`"))),
    }
}

fn expect_id(ln: usize, s: &str, want: usize) -> ParseResult<()> {
    let got: usize = num(ln, s)?;
    if got != want {
        return Err((ln, format!("ids must be dense and ordered: expected {want}, got {got}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dspace::Field;
    use crate::mesh::Rect;

    fn state(mesh: &Mesh) -> State {
        State {
            k: 3,
            time: 0.25,
            n: Field::from_centers(mesh, |x, y| 1.0 + x * x + y),
            s: Field::from_centers(mesh, |x, _| 2.0 - x),
        }
    }

    #[test]
    fn mesh_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.txt");
        let mesh = Mesh::cartesian(3, 2, Rect::new(-1.0, 2.0, 0.0, 1.0)).unwrap();
        write_mesh(&path, &mesh).unwrap();
        let back = read_mesh(&path).unwrap();
        assert_eq!(back.num_cells(), mesh.num_cells());
        assert_eq!(back.edges(), mesh.edges());
        assert_eq!(back.cells(), mesh.cells());
        assert_eq!(back.xi(), mesh.xi());
        assert_eq!(back.domain_measure(), mesh.domain_measure());
    }

    #[test]
    fn mesh_parse_errors_carry_line_numbers() {
        let bad = "ksfv-mesh 1\ndomain_measure 1\ncells 1\n0 0.5 0.5 1\nedges 1\n0 sideways 0 - 1 0.5 1 0 1 0.5\n";
        let err = parse_mesh(bad).unwrap_err();
        assert_eq!(err.0, 6);
        assert!(parse_mesh("ksfv-mesh 2\n").is_err());
        let skipped = "ksfv-mesh 1\ndomain_measure 1\ncells 1\n1 0.5 0.5 1\n";
        assert_eq!(parse_mesh(skipped).unwrap_err().0, 4);
    }

    #[test]
    fn snapshot_and_record_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = Mesh::cartesian(2, 3, Rect::centered_unit_square()).unwrap();
        let st = state(&mesh);
        let p = dir.path().join("snap.csv");
        write_snapshot_csv(&p, &mesh, &st).unwrap();
        assert_eq!(read_snapshot_csv(&p).unwrap(), snapshot_rows(&mesh, &st));

        let row = RecordRow {
            k: 1,
            t: 0.5,
            mass: 1.0,
            entropy: 0.1,
            rel_entropy: 0.01,
            linf_n: 3.0,
            s_h1_err: 0.2,
            picard_iters: 7,
            sqrt_n_dissipation: 0.3,
            s_l2_sq: 0.4,
            s_gradient_sq: 0.5,
            stability_constant: None,
        };
        let rec = RunRecord { rows: vec![row] };
        let p = dir.path().join("record.csv");
        write_record(&p, &rec).unwrap();
        let header = fs::read_to_string(&p).unwrap();
        assert!(header.starts_with("k,t,mass,entropy,rel_entropy,linf_n,s_h1_err,picard_iters\n"));
        assert_eq!(read_record(&p).unwrap(), vec![RecordCsvRow::from(&row)]);
        let p = dir.path().join("terms.csv");
        write_entropy_terms(&p, &rec).unwrap();
        let back: Vec<EntropyTermsRow> = read_csv(&p).unwrap();
        assert_eq!(back, vec![EntropyTermsRow::from(&row)]);
    }

    #[test]
    fn vtk_layout() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = Mesh::cartesian(2, 3, Rect::centered_unit_square()).unwrap();
        let st = state(&mesh);
        let p = dir.path().join("s.vtk");
        write_snapshot_vtk(&p, &mesh, &st).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.contains("DIMENSIONS 3 4 1"));
        assert!(text.contains("CELL_DATA 6"));
        let values: Vec<f64> = text
            .lines()
            .skip_while(|l| !l.starts_with("SCALARS n"))
            .skip(2)
            .take(6)
            .map(|l| l.parse().unwrap())
            .collect();
        assert_eq!(values, st.n.values());

        let mut other = Mesh::cartesian(1, 1, Rect::centered_unit_square()).unwrap();
        other = crate::mesh::with_moved_center(&other, 0, [0.1, 0.0]).unwrap();
        let st = State {
            k: 0,
            time: 0.0,
            n: Field::constant(&other, 1.0),
            s: Field::constant(&other, 1.0),
        };
        assert!(write_snapshot_vtk(dir.path().join("x.vtk"), &other, &st).is_err());
    }
}
