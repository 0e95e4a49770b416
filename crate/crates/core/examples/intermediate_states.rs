//! Radially symmetric supercritical data with cross-diffusion: the sup norm
//! of the density sits on one level, jumps, and settles on a higher one.

use ksfv::diagnostics::find_plateaus;
use ksfv::experiment::{run_job, ExperimentConfig};

fn main() -> ksfv::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/intermediate_states.json");
    let cfg = ExperimentConfig::load(path)?;
    let job = &cfg.jobs()?[0];
    let out = run_job(&cfg, job, None)?;
    let rec = &out.result.record;
    let (t, v) = (rec.times(), rec.sup_norms());
    for k in (0..t.len()).step_by(250) {
        println!("t = {:.2}  |n|_inf = {:.4e}", t[k], v[k]);
    }
    for p in find_plateaus(&t, &v, 0.05, 0.2) {
        println!(
            "plateau [{:.3}, {:.3}] at level {:.4e} (variation {:.2}%)",
            p.start,
            p.end,
            p.level,
            100.0 * p.variation
        );
    }
    Ok(())
}
