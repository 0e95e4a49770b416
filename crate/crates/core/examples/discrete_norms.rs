//! Discrete norms, the diamond gradient, projection of initial data and
//! injection onto a finer grid.

use ksfv::dspace::{self, Field};
use ksfv::{Mesh, Rect};

fn main() -> ksfv::Result<()> {
    let domain = Rect::centered_unit_square();
    let f = |x: f64, y: f64| (std::f64::consts::PI * x).cos() * (std::f64::consts::PI * y).cos();
    println!("{:>5} {:>12} {:>12} {:>12}", "n", "|u|_{1,2}", "|u|_{0,2}", "|grad_D u|");
    for n in [8, 16, 32, 64] {
        let mesh = Mesh::cartesian(n, n, domain)?;
        let u = Field::from_centers(&mesh, f);
        // |u|_{1,2} tends to π/√2. The diamond gradient only converges
        // weakly; on squares its norm is √2 |u|_{1,2}.
        let semi = dspace::seminorm_1p(&mesh, &u, 2.0)?;
        let l2 = dspace::norm_0p(&mesh, &u, 2.0)?;
        let g = dspace::reconstruct_gradient(&mesh, &u).l2_norm();
        println!("{n:>5} {semi:>12.6} {l2:>12.6} {g:>12.6}");
    }

    let coarse = Mesh::cartesian(4, 4, domain)?;
    let fine = Mesh::cartesian(16, 16, domain)?;
    let p = dspace::project_initial(&coarse, |x, y| 1.0 + x * x + y, 4)?;
    let up = dspace::inject(&coarse, &p.field, &fine)?;
    println!(
        "projected integral {:.12}, after injection {:.12}, exact {:.12}",
        dspace::integral(&coarse, &p.field),
        dspace::integral(&fine, &up),
        1.0 + 1.0 / 12.0
    );
    Ok(())
}
