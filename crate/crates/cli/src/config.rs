use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use qsep_core::relent::{ErOptions, LmoOptions};
use qsep_core::{fixtures, DensityOp, DimSig, Partition};
use serde::Deserialize;

/// Commands the runner knows.
pub const COMMANDS: [&str; 10] =
    ["entropy", "gibbs", "zeta", "approx", "er", "er-reg", "er-energy", "fda", "verify", "theorem2"];

/// One experiment document. Every field is optional at parse time; each
/// command asks for the ones it needs via [`Config::need`].
#[derive(Clone, Debug, Default, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub struct Config {
    pub command: Option<String>,
    pub state: Option<String>,
    pub partition: Option<Vec<Vec<usize>>>,
    pub seed: Option<u64>,
    pub solver: Option<SolverConfig>,

    pub random: Option<RandomStates>,

    pub hamiltonian: Option<String>,
    pub hamiltonians: Option<Vec<String>>,
    pub energies: Option<Vec<f64>>,
    pub dim: Option<usize>,

    pub families: Option<Vec<String>>,
    pub betas: Option<Vec<f64>>,
    pub n_max: Option<usize>,
    pub power_q: Option<Vec<f64>>,

    pub subset: Option<Vec<usize>>,
    pub r_grid: Option<Vec<usize>>,
    pub function: Option<String>,
    pub channels: Option<Vec<String>>,
    pub map: Option<String>,
    pub envelope: Option<EnvelopeConfig>,

    pub k_max: Option<usize>,
    pub ranks: Option<Vec<usize>>,
    pub m_grid: Option<Vec<usize>>,
    pub samples: Option<Vec<SampleConfig>>,
    pub ks: Option<Vec<usize>>,
}

#[derive(Clone, Debug, Default, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub restarts: Option<usize>,
    pub max_sweeps: Option<usize>,
    pub away_steps: Option<bool>,
}

/// `count` states of signature `dims`, the `i`-th drawn with seed `seed + i`.
#[derive(Clone, Debug, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields)]
pub struct RandomStates {
    pub dims: Vec<usize>,
    pub count: usize,
    /// Full rank when absent; `1` gives pure states.
    pub rank: Option<usize>,
}

#[derive(Clone, Debug, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeConfig {
    pub c: f64,
    pub d: f64,
    /// Spectrum family literal per subsystem `0..m`; its witness supplies `G_s`.
    pub witnesses: Vec<String>,
}

#[derive(Clone, Debug, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub enum SampleKind {
    State,
    Mixture,
    PureTripartite,
}

#[derive(Clone, Debug, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub kind: SampleKind,
    /// A named or file state; exclusive with `random`.
    pub state: Option<String>,
    /// Second state of a mixture.
    pub with: Option<String>,
    /// Mixing weight of a mixture; drawn uniformly from the seed when absent.
    pub p: Option<f64>,
    pub random: Option<RandomStates>,
}

impl Config {
    pub fn load(path: &Path) -> Result<(Config, PathBuf)> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg = Self::parse(&text, path.extension().and_then(|e| e.to_str()))
            .with_context(|| format!("config {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    pub fn parse(text: &str, extension: Option<&str>) -> Result<Config> {
        match extension {
            Some("toml") => Ok(toml::from_str(text)?),
            Some("json") => Ok(serde_json::from_str(text)?),
            _ => serde_json::from_str(text).or_else(|_| toml::from_str(text).map_err(anyhow::Error::from)),
        }
    }

    /// A required field, or a usage error naming it.
    pub fn need<'a, T>(&self, field: &'a Option<T>, name: &str, command: &str) -> Result<&'a T> {
        field.as_ref().ok_or_else(|| anyhow!("config field '{name}' is required by command '{command}'"))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn solver_options(&self) -> Result<ErOptions> {
        let mut opts = ErOptions { lmo: LmoOptions { seed: self.seed(), ..LmoOptions::default() }, ..ErOptions::default() };
        if let Some(s) = &self.solver {
            if let Some(v) = s.max_iters {
                opts.max_iters = v;
            }
            if let Some(v) = s.tol {
                if !(v > 0.0) {
                    bail!("config field 'solver.tol' must be positive, got {v}");
                }
                opts.tol = v;
            }
            if let Some(v) = s.restarts {
                opts.lmo.restarts = v;
            }
            if let Some(v) = s.max_sweeps {
                opts.lmo.max_sweeps = v;
            }
            if let Some(v) = s.away_steps {
                opts.away_steps = v;
            }
        }
        Ok(opts)
    }

    pub fn partition_for(&self, rho: &DensityOp) -> Result<Partition> {
        let n = rho.sig().parties();
        match &self.partition {
            None => Ok(Partition::finest(n)),
            Some(groups) => Partition::new(groups.clone(), n).context("config field 'partition'"),
        }
    }
}

/// Resolves a state reference: a path ending in `.json` (relative to the
/// config file), or a fixture name with an optional `fixture:` prefix.
pub fn load_state(reference: &str, base: &Path) -> Result<DensityOp> {
    if reference.ends_with(".json") {
        let path = base.join(reference);
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading state {}", path.display()))?;
        return DensityOp::from_json_str(&text).with_context(|| format!("state file {}", path.display()));
    }
    let name = reference.strip_prefix("fixture:").unwrap_or(reference);
    fixtures::state(name).map_err(|e| anyhow!("state '{reference}': {e}"))
}

pub fn save_state(rho: &DensityOp, path: &Path) -> Result<()> {
    std::fs::write(path, rho.to_json_string()).with_context(|| format!("writing {}", path.display()))
}

impl RandomStates {
    pub fn draw(&self, seed: u64) -> Result<Vec<DensityOp>> {
        let sig = DimSig::new(self.dims.clone()).context("random.dims")?;
        let rank = self.rank.unwrap_or(sig.total());
        (0..self.count)
            .map(|i| {
                let s = seed.wrapping_add(i as u64);
                if rank == 1 {
                    Ok(qsep_core::qmat::random_pure(&sig, s))
                } else {
                    qsep_core::qmat::random_density(&sig, rank, s).context("random.rank")
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_and_json_agree() {
        let t = Config::parse("command = \"er\"\nstate = \"bell\"\n[solver]\ntol = 1e-6\n", Some("toml")).unwrap();
        let j = Config::parse(r#"{"command":"er","state":"bell","solver":{"tol":1e-6}}"#, Some("json")).unwrap();
        assert_eq!(t.state, j.state);
        assert_eq!(t.solver_options().unwrap(), j.solver_options().unwrap());
        let sniffed = Config::parse("state = \"bell\"", None).unwrap();
        assert_eq!(sniffed.state.as_deref(), Some("bell"));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = Config::parse(r#"{"stat": "bell"}"#, Some("json")).unwrap_err();
        assert!(format!("{err:#}").contains("stat"));
    }

    #[test]
    fn missing_field_names_it() {
        let cfg = Config::default();
        let err = cfg.need(&cfg.state, "state", "er").unwrap_err();
        assert_eq!(err.to_string(), "config field 'state' is required by command 'er'");
    }

    #[test]
    fn states_resolve_from_fixtures() {
        let base = Path::new(".");
        assert_eq!(load_state("bell", base).unwrap(), load_state("fixture:bell", base).unwrap());
        assert!(load_state("nope", base).is_err());
    }
}
