use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use qsep_cli::{run, Config};

#[derive(Parser)]
#[command(name = "qsep", version, about = "Truncation, continuity and relative-entropy-of-entanglement experiments")]
struct Cli {
    /// Print the built-in state and spectrum fixtures and exit.
    #[arg(long)]
    list_fixtures: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON or TOML experiment document; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for `<command>.csv`, extra tables and `<command>.json`.
    /// Without it the tables go to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for independent cells.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Entropies of a state, or entropy inequalities on random samples.
    Entropy(RunArgs),
    /// Gibbs inverse temperature and entropy ceiling along an energy grid.
    Gibbs(RunArgs),
    /// Partition-function limits and spectrum analyzers.
    Zeta(RunArgs),
    /// Truncation experiment with the continuity envelope.
    Approx(RunArgs),
    /// Relative entropy of entanglement of one state.
    Er(RunArgs),
    /// Per-copy estimates on tensor powers.
    ErReg(RunArgs),
    /// Energy-constrained sweep.
    ErEnergy(RunArgs),
    /// Finite-dimensional approximation along spectral truncations.
    Fda(RunArgs),
    /// Inequality verification on named or random samples.
    Verify(RunArgs),
    /// Depolarized sequence converging to a state.
    Theorem2(RunArgs),
}

impl Command {
    fn split(&self) -> (&'static str, &RunArgs) {
        match self {
            Command::Entropy(a) => ("entropy", a),
            Command::Gibbs(a) => ("gibbs", a),
            Command::Zeta(a) => ("zeta", a),
            Command::Approx(a) => ("approx", a),
            Command::Er(a) => ("er", a),
            Command::ErReg(a) => ("er-reg", a),
            Command::ErEnergy(a) => ("er-energy", a),
            Command::Fda(a) => ("fda", a),
            Command::Verify(a) => ("verify", a),
            Command::Theorem2(a) => ("theorem2", a),
        }
    }
}

fn list_fixtures() {
    println!("fixtures (version {})", qsep_core::fixtures::FIXTURE_VERSION);
    for (name, description) in qsep_core::fixtures::NAMES {
        println!("  {name:<16} {description}");
    }
}

fn execute(name: &str, args: &RunArgs) -> Result<bool> {
    let (cfg, base) = match &args.config {
        Some(p) => Config::load(p)?,
        None => (Config::default(), PathBuf::from(".")),
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(args.jobs.max(1)).build()?;
    let rec = pool.install(|| run(name, &cfg, &base))?;
    match &args.out {
        Some(dir) => rec.save(dir)?,
        None => {
            let mut out = std::io::stdout().lock();
            rec.print_tables(&mut out)?;
            out.flush()?;
        }
    }
    rec.print_summary(&mut std::io::stderr().lock()).context("writing summary")?;
    Ok(rec.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.list_fixtures {
        list_fixtures();
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        eprintln!("qsep: no command given (try --help)");
        return ExitCode::from(2);
    };
    let (name, args) = command.split();
    match execute(name, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("qsep {name}: {e:#}");
            ExitCode::from(2)
        }
    }
}
