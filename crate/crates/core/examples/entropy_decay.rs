//! Relative entropy decay towards the constant state for two values of the
//! cross-diffusion parameter, with fitted exponential rates.

use ksfv::diagnostics;
use ksfv::experiment::InitialDatum;
use ksfv::scheme::{self, TimeGrid};
use ksfv::{Mesh, ModelParams, PicardConfig, Rect};

fn main() -> ksfv::Result<()> {
    let mesh = Mesh::cartesian(16, 16, Rect::centered_unit_square())?;
    let datum = InitialDatum::GaussianSym {
        mass: 5.0 * std::f64::consts::PI,
        theta: 1e-2,
    };
    let grid = TimeGrid::until(2e-4, 0.6)?;
    let cfg = PicardConfig {
        anderson_depth: 5,
        ..PicardConfig::default()
    };
    for delta in [1e-3, 1e-2] {
        let params = ModelParams::new(delta, 1.0)?;
        let res = scheme::run(&mesh, &params, datum.project(&mesh, 4)?, &grid, &cfg, &mut [])?;
        let fit = diagnostics::fit_decay_rate(&res.record, (0.1, 0.5))?;
        let e = res.record.rel_entropies();
        println!("delta = {delta:e}: fitted rate {:.3}", fit.rate);
        for k in (0..e.len()).step_by(500) {
            println!("  t = {:.2}  E = {:.4e}", res.record.rows[k].t, e[k]);
        }
    }
    Ok(())
}
