//! A small grid convergence study: coarse solutions injected onto a fine
//! reference grid, errors in three norms and observed orders.

use ksfv::experiment::{cmd_convergence, ExperimentConfig};

fn main() -> ksfv::Result<()> {
    let cfg = ExperimentConfig::from_json(
        r#"{
            "mesh_sizes": [4, 8, 16, 32],
            "reference": 64,
            "dt": 1e-6,
            "final_time": 5e-5,
            "delta": 1e-3,
            "initial": { "kind": "gaussian1" }
        }"#,
    )?;
    let (rep, _) = cmd_convergence(&cfg, None)?;
    println!("{:>4} {:>11} {:>11} {:>11} {:>6} {:>6} {:>6}", "n", "L1", "L2", "Linf", "p1", "p2", "pinf");
    let o = |p: Option<f64>| p.map_or("-".into(), |v| format!("{v:.2}"));
    for r in &rep.rows {
        println!(
            "{:>4} {:>11.3e} {:>11.3e} {:>11.3e} {:>6} {:>6} {:>6}",
            r.nx,
            r.err_l1,
            r.err_l2,
            r.err_linf,
            o(r.order_l1),
            o(r.order_l2),
            o(r.order_linf)
        );
    }
    for f in &rep.fit {
        println!("least-squares order ({}): {:.3}", f.norm, f.order);
    }
    Ok(())
}
