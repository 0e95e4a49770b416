//! Build a Cartesian mesh, check the two-point flux conditions, break one of
//! them on purpose and round-trip the mesh through the text format.

use ksfv::mesh::{check_admissibility, with_moved_center};
use ksfv::{io, Mesh, Rect};

fn main() -> ksfv::Result<()> {
    let mesh = Mesh::cartesian(8, 4, Rect::new(-1.0, 1.0, -0.5, 0.5))?;
    println!(
        "{} cells, {} edges, h = {:.4}, xi = {:.3}, bandwidth {}",
        mesh.num_cells(),
        mesh.num_edges(),
        mesh.size(),
        mesh.xi(),
        mesh.bandwidth()
    );
    let report = check_admissibility(&mesh, 1e-12);
    println!("admissible: {} (worst defect {:.2e})", report.passed, report.worst());

    // Pull one center off its cell's midpoint: edges are no longer orthogonal.
    let c = mesh.cell(9).center;
    let skewed = with_moved_center(&mesh, 9, [c[0] + 0.05, c[1] + 0.03])?;
    let report = check_admissibility(&skewed, 1e-12);
    println!("after moving a center: admissible {}", report.passed);
    for v in report.violations.iter().take(4) {
        println!("  {v:?}");
    }

    let dir = std::env::temp_dir().join("ksfv_mesh_example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("rect.mesh");
    io::write_mesh(&path, &mesh)?;
    let back = io::read_mesh(&path)?;
    println!(
        "read back {} cells / {} edges from {}",
        back.num_cells(),
        back.num_edges(),
        path.display()
    );
    Ok(())
}
