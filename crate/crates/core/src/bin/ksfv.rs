//! Command-line front end to the experiment drivers.
//!
//! Exit status: 0 on success, 10 when a run blew up, 11 when a Picard
//! iteration failed to converge, 64 for bad input, 1 for anything else.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ksfv::experiment::{self, ExperimentConfig};
use ksfv::scheme::Outcome;
use ksfv::Error;

#[derive(Parser)]
#[command(name = "ksfv", version, about = "Finite volume Keller-Segel experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Time integration of every sweep member on every mesh.
    Run(Common),
    /// Grid convergence against a fine reference solution.
    Convergence(Common),
    /// Relative entropy decay rates.
    Decay(Common),
    /// Randomized check of the discrete functional inequalities.
    Inequalities(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory (default: the config's `output_dir`, else `out/<name>`).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Use the large meshes and small steps listed under `paper_scale`.
    #[arg(long)]
    paper_scale: bool,
    /// Seed for every random choice.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

impl Common {
    fn load(&self, command: &str) -> Result<(ExperimentConfig, PathBuf), Error> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if self.paper_scale {
            cfg = cfg.at_paper_scale();
            cfg.validate()?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        let out = self.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| {
            let name = if cfg.name.is_empty() { command } else { &cfg.name };
            PathBuf::from("out").join(name)
        });
        std::fs::create_dir_all(&out)?;
        Ok((cfg, out))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::NonConvergence { .. } => 11,
                Error::BlowUp { .. } => 10,
                Error::Parse { .. } | Error::InvalidArgument(_) => 64,
                _ => 1,
            })
        }
    }
}

fn dispatch(command: Command) -> Result<u8, Error> {
    match command {
        Command::Run(c) => {
            let (cfg, out) = c.load("run")?;
            let outputs = experiment::cmd_run(&cfg, Some(&out))?;
            let mut blew_up = false;
            for o in &outputs {
                let s = &o.summary;
                match o.result.outcome {
                    Outcome::Completed => println!(
                        "{}: completed at t = {}, max n = {:.6e} in cell {}{}",
                        s.label,
                        s.final_time,
                        s.final_linf,
                        s.final_argmax,
                        if s.final_max_in_corner { " (corner)" } else { "" }
                    ),
                    Outcome::BlowUp { time, linf } => {
                        blew_up = true;
                        println!("{}: blow-up after t = {time}, max n = {linf:.6e}", s.label);
                    }
                }
            }
            println!("wrote {}", out.display());
            Ok(if blew_up { 10 } else { 0 })
        }
        Command::Convergence(c) => {
            let (cfg, out) = c.load("convergence")?;
            let (rep, _) = experiment::cmd_convergence(&cfg, Some(&out))?;
            println!("{:>6} {:>6} {:>12} {:>12} {:>12} {:>7} {:>7} {:>7}", "nx", "ny", "L1", "L2", "Linf", "p1", "p2", "pinf");
            let f = |p: Option<f64>| p.map_or("-".to_string(), |v| format!("{v:.3}"));
            for r in &rep.rows {
                println!(
                    "{:>6} {:>6} {:>12.4e} {:>12.4e} {:>12.4e} {:>7} {:>7} {:>7}",
                    r.nx,
                    r.ny,
                    r.err_l1,
                    r.err_l2,
                    r.err_linf,
                    f(r.order_l1),
                    f(r.order_l2),
                    f(r.order_linf)
                );
            }
            for r in &rep.fit {
                println!("fitted order {}: {:.3}", r.norm, r.order);
            }
            println!("wrote {}", out.display());
            Ok(0)
        }
        Command::Decay(c) => {
            let (cfg, out) = c.load("decay")?;
            let (rows, _) = experiment::cmd_decay(&cfg, Some(&out))?;
            for r in &rows {
                let mono = match r.first_increase_t {
                    None => "monotone".to_string(),
                    Some(t) => format!("first increase at t = {t}"),
                };
                println!("{}: rate {:.4}, {mono}", r.label, r.rate);
            }
            println!("wrote {}", out.display());
            Ok(0)
        }
        Command::Inequalities(c) => {
            let (cfg, out) = c.load("inequalities")?;
            let rows = experiment::cmd_inequalities(&cfg, Some(&out))?;
            for r in &rows {
                println!(
                    "{}x{}: {} trials, CK violations {}, max CK ratio {:.4}, max LS ratio {:.4} (C_L {:.4})",
                    r.nx, r.ny, r.trials, r.ck_violations, r.ck_max_ratio, r.ls_max_ratio, r.ls_c_l
                );
            }
            println!("wrote {}", out.display());
            Ok(0)
        }
    }
}
