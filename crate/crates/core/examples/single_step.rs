//! One implicit step of the scheme, with the Picard history, the residuals
//! of both equations and the column dominance of the density matrix.

use ksfv::experiment::InitialDatum;
use ksfv::scheme::{self, Scheme};
use ksfv::solver;
use ksfv::{dspace, Mesh, ModelParams, PicardConfig, Rect};

fn main() -> ksfv::Result<()> {
    let mesh = Mesh::cartesian(16, 16, Rect::centered_unit_square())?;
    let params = ModelParams::new(1e-3, 1.0)?;
    let n0 = InitialDatum::Gaussian1.project(&mesh, 4)?;
    let scheme = Scheme::new(&mesh, params)?;
    let state = scheme.initial_state(n0)?;
    let dt = 1e-4;

    for depth in [0, 5] {
        let cfg = PicardConfig {
            anderson_depth: depth,
            ..PicardConfig::default()
        };
        let step = scheme.advance(&state, dt, &cfg)?;
        let r = scheme::coupled_residuals(&mesh, &params, dt, &state.n, &step.state.n, &step.state.s);
        println!(
            "anderson depth {depth}: {} iterations, update {:.2e}, residuals {:.2e} / {:.2e}",
            step.iterations, step.update, r.density, r.signal
        );
    }

    let step = scheme.advance(&state, dt, &PicardConfig::default())?;
    let mass0 = dspace::integral(&mesh, &state.n);
    let mass1 = dspace::integral(&mesh, &step.state.n);
    println!("mass {mass0:.15} -> {mass1:.15}, min n {:.3e}", step.state.n.min());

    let sys = scheme::assemble_n_system(&mesh, &state.n, &step.state.s, dt);
    let dom = solver::check_column_dominance(&sys);
    let worst = dom
        .margins
        .iter()
        .zip(mesh.cells())
        .map(|(m, c)| (m - c.area / dt).abs() / (c.area / dt))
        .fold(0.0, f64::max);
    println!(
        "density matrix strictly column dominant: {}, margin defect vs m(L)/dt {worst:.1e}",
        dom.strictly_dominant()
    );
    Ok(())
}
