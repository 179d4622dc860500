//! Batch runner behind the `qsep` binary: one config document in, CSV
//! tables and a JSON run record out.

pub mod config;
mod experiments;
pub mod record;
mod solvers;

use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Result};

pub use config::{load_state, save_state, Config, COMMANDS};
pub use record::{RunRecord, Table};

/// Runs `command` on `cfg` with file references resolved against `base`.
/// Configuration problems are errors; numeric failures of single cells
/// land in [`RunRecord::errors`].
pub fn run(command: &str, cfg: &Config, base: &Path) -> Result<RunRecord> {
    if let Some(named) = &cfg.command {
        if named != command {
            bail!("config names command '{named}' but '{command}' was requested");
        }
    }
    let mut rec = RunRecord::new(command, cfg);
    let start = Instant::now();
    match command {
        "entropy" => experiments::entropy(cfg, base, &mut rec)?,
        "gibbs" => experiments::gibbs(cfg, base, &mut rec)?,
        "zeta" => experiments::zeta(cfg, base, &mut rec)?,
        "approx" => experiments::approx(cfg, base, &mut rec)?,
        "er" => solvers::er(cfg, base, &mut rec)?,
        "er-reg" => solvers::er_reg(cfg, base, &mut rec)?,
        "er-energy" => solvers::er_energy(cfg, base, &mut rec)?,
        "fda" => solvers::fda(cfg, base, &mut rec)?,
        "verify" => solvers::verify(cfg, base, &mut rec)?,
        "theorem2" => solvers::theorem2(cfg, base, &mut rec)?,
        other => bail!("unknown command '{other}' (expected one of {})", COMMANDS.join(", ")),
    }
    rec.wall_time_s = start.elapsed().as_secs_f64();
    Ok(rec)
}
