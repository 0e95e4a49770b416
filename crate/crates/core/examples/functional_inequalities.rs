//! The discrete Csiszár-Kullback and log-Sobolev inequalities on random
//! densities, and how the empirical log-Sobolev ratio depends on the mesh.

use ksfv::diagnostics::{csiszar_kullback_check, log_sobolev_check, LogSobolevConstants};
use ksfv::experiment::{cmd_inequalities, ExperimentConfig};
use ksfv::{Field, Mesh, Rect};

fn main() -> ksfv::Result<()> {
    let mut cfg = ExperimentConfig::from_json(r#"{"mesh_sizes": [4, 8, 16, 32], "trials": 300, "seed": 3}"#)?;
    println!("{:>4} {:>10} {:>10} {:>10} {:>6}", "n", "CK viol.", "CK ratio", "LS ratio", "C_L");
    for r in cmd_inequalities(&cfg, None)? {
        println!(
            "{:>4} {:>10} {:>10.4} {:>10.4} {:>6.1}",
            r.nx, r.ck_violations, r.ck_max_ratio, r.ls_max_ratio, r.ls_c_l
        );
    }

    // A two-level field by hand.
    let mesh = Mesh::cartesian(2, 1, Rect::new(0.0, 2.0, 0.0, 1.0))?;
    let n = Field::new(&mesh, vec![1.5, 0.5])?;
    let ck = csiszar_kullback_check(&mesh, &n, 1.0)?;
    let ls = log_sobolev_check(&mesh, &n.map(f64::sqrt), &LogSobolevConstants::default())?;
    println!("two cells: CK {:.4} <= {:.4}; LS lhs {:.4}, rhs {:.4}", ck.lhs, ck.rhs, ls.lhs, ls.rhs);

    cfg.seed = 4;
    cfg.trials = 10;
    let a = cmd_inequalities(&cfg, None)?;
    println!("another seed, 10 trials on 4x4: CK ratio {:.4}", a[0].ck_max_ratio);
    Ok(())
}
