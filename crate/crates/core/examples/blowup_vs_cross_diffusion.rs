//! Supercritical nonsymmetric data: without cross-diffusion the density
//! collapses into one cell, with a little cross-diffusion the peak moves to
//! a corner and stays bounded.

use ksfv::experiment::{cmd_run, ExperimentConfig, Sweep, SweepParameter};
use ksfv::scheme::Outcome;

fn main() -> ksfv::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/blowup_nonsymmetric.json");
    let mut cfg = ExperimentConfig::load(path)?;
    cfg.final_time = 2.0;
    cfg.sweep = Some(Sweep {
        parameter: SweepParameter::Delta,
        values: vec![0.0, 1e-3, 1e-2],
    });
    for out in cmd_run(&cfg, None)? {
        let s = &out.summary;
        match out.result.outcome {
            Outcome::BlowUp { time, linf } => {
                println!("delta = {:e}: blow-up signal after t = {time:.3} (sup norm {linf:.3e})", s.delta)
            }
            Outcome::Completed => {
                let g = out.mesh.grid().expect("cartesian");
                println!(
                    "delta = {:e}: bounded up to t = {}, sup norm {:.3e} at cell {:?}{}",
                    s.delta,
                    s.final_time,
                    s.final_linf,
                    g.cell_index(s.final_argmax),
                    if s.final_max_in_corner { ", a corner" } else { "" }
                )
            }
        }
    }
    Ok(())
}
