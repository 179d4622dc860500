//! Relative-entropy-of-entanglement pipelines: er, er-reg, er-energy, fda,
//! verify and theorem2.

use std::path::Path;

use anyhow::{anyhow, bail, Result};
use qsep_core::relent::{
    depolarized_sequence, energy_sweep, fda_experiment, regularized_estimate, relent_entanglement,
    spectral_projector_sequence, theorem2_row, verify_er_inequalities, ErCheck, ErInequality, ErSample,
    VerifyOptions,
};
use qsep_core::{DensityOp, HamiltonianSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{load_state, Config, SampleKind};
use crate::record::{num, opt, RunRecord, Table};

/// Allowed increase of the per-copy estimate with `k`, and of an
/// energy-sweep value with `E`.
const MONOTONE_SLACK: f64 = 1e-6;

pub fn er(cfg: &Config, base: &Path, rec: &mut RunRecord) -> Result<()> {
    let rho = load_state(cfg.need(&cfg.state, "state", "er")?, base)?;
    let partition = cfg.partition_for(&rho)?;
    let sol = relent_entanglement(&rho, &partition, &cfg.solver_options()?)?;
    let mut t = Table::new("history", &["iteration", "value"]);
    for (i, v) in sol.history.iter().enumerate() {
        t.push(vec![i.to_string(), num(*v)]);
    }
    rec.tables.push(t);
    rec.note("value", num(sol.value));
    rec.note("gap", num(sol.gap));
    rec.note("iterations", sol.iterations);
    rec.note("converged", sol.converged);
    rec.payload = Some(serde_json::from_str(&sol.to_json())?);
    Ok(())
}

pub fn er_reg(cfg: &Config, base: &Path, rec: &mut RunRecord) -> Result<()> {
    let rho = load_state(cfg.need(&cfg.state, "state", "er-reg")?, base)?;
    let partition = cfg.partition_for(&rho)?;
    let k_max = cfg.k_max.unwrap_or(2);
    let rep = regularized_estimate(&rho, &partition, k_max, &cfg.solver_options()?)?;
    let mut t = Table::new("er-reg", &["k", "value", "per_copy", "gap", "iterations", "converged"]);
    let first = rep.rows[0].per_copy;
    for r in &rep.rows {
        if r.per_copy > first + MONOTONE_SLACK {
            rec.violations.push(format!("k={}: per-copy {} above the single-copy {first}", r.k, r.per_copy));
        }
        t.push(vec![
            r.k.to_string(),
            num(r.value),
            num(r.per_copy),
            num(r.gap),
            r.iterations.to_string(),
            r.converged.to_string(),
        ]);
    }
    rec.tables.push(t);
    rec.note("best per-copy", num(rep.best));
    Ok(())
}

pub fn er_energy(cfg: &Config, base: &Path, rec: &mut RunRecord) -> Result<()> {
    let rho = load_state(cfg.need(&cfg.state, "state", "er-energy")?, base)?;
    let partition = cfg.partition_for(&rho)?;
    let hams: Vec<HamiltonianSpec> = cfg
        .need(&cfg.hamiltonians, "hamiltonians", "er-energy")?
        .iter()
        .map(|h| h.parse().map_err(|e| anyhow!("config field 'hamiltonians': {e}")))
        .collect::<Result<_>>()?;
    let mut energies = cfg.need(&cfg.energies, "energies", "er-energy")?.clone();
    if energies.is_empty() {
        bail!("config field 'energies' is empty");
    }
    energies.sort_by(f64::total_cmp);
    let rows = energy_sweep(&rho, &partition, &hams, &energies, &cfg.solver_options()?)?;
    let mut t = Table::new("er-energy", &["E", "value", "gap", "iterations", "converged"]);
    for (i, r) in rows.iter().enumerate() {
        if i > 0 && r.value > rows[i - 1].value + MONOTONE_SLACK {
            rec.violations.push(format!("E={}: value {} rose above {}", r.e, r.value, rows[i - 1].value));
        }
        t.push(vec![num(r.e), num(r.value), num(r.gap), r.iterations.to_string(), r.converged.to_string()]);
    }
    rec.tables.push(t);
    Ok(())
}

pub fn fda(cfg: &Config, base: &Path, rec: &mut RunRecord) -> Result<()> {
    let rho = load_state(cfg.need(&cfg.state, "state", "fda")?, base)?;
    let n = rho.sig().parties();
    let max_dim = rho.sig().dims().iter().copied().max().unwrap_or(1);
    let ranks = cfg.ranks.clone().unwrap_or_else(|| (1..=max_dim).collect());
    let m_grid = cfg.m_grid.clone().unwrap_or_else(|| vec![n]);
    if ranks.is_empty() || m_grid.is_empty() {
        bail!("config fields 'ranks' and 'm_grid' must be nonempty");
    }
    let seq = spectral_projector_sequence(&rho, &ranks)?;
    let rep = fda_experiment(&rho, &seq, &m_grid, &cfg.solver_options()?)?;
    let mut t = Table::new("fda", &["m", "k", "rank", "kept_weight", "value", "gap", "weighted_mi", "note"]);
    for r in &rep.rows {
        if r.weighted_mi.is_some_and(|w| w > rep.mutual_information + 1e-8) {
            rec.violations.push(format!("m={} k={}: weighted QMI above the untruncated QMI", r.m, r.k));
        }
        t.push(vec![
            r.m.to_string(),
            r.k.to_string(),
            ranks.get(r.k).map(|x| x.to_string()).unwrap_or_default(),
            num(r.kept_weight),
            opt(r.value),
            opt(r.gap),
            opt(r.weighted_mi),
            r.note.clone().unwrap_or_default(),
        ]);
    }
    rec.tables.push(t);
    let mut s = Table::new("series", &["m", "untruncated", "last_change"]);
    for sr in &rep.series {
        s.push(vec![sr.m.to_string(), num(sr.untruncated), opt(sr.last_change)]);
    }
    rec.tables.push(s);
    rec.note("mutual information", num(rep.mutual_information));
    Ok(())
}

fn inequality_name(i: ErInequality) -> &'static str {
    match i {
        ErInequality::MarginalUpperBound => "marginal_upper_bound",
        ErInequality::MixingDefect => "mixing_defect",
        ErInequality::ConditionalLowerBound => "conditional_lower_bound",
        ErInequality::PureTripartite => "pure_tripartite",
    }
}

/// Expands the sample list of a `verify` config in order.
fn verify_samples(cfg: &Config, base: &Path) -> Result<Vec<ErSample>> {
    let mut out = Vec::new();
    let seed = cfg.seed();
    for (j, spec) in cfg.samples.iter().flatten().enumerate() {
        let field = format!("samples[{j}]");
        let sample_seed = seed.wrapping_add(1_000_003 * j as u64);
        let primary: Vec<DensityOp> = match (&spec.state, &spec.random) {
            (Some(s), None) => vec![load_state(s, base)?],
            (None, Some(r)) => r.draw(sample_seed)?,
            _ => bail!("config field '{field}' needs exactly one of 'state' or 'random'"),
        };
        match spec.kind {
            SampleKind::State => out.extend(primary.into_iter().map(ErSample::State)),
            SampleKind::PureTripartite => out.extend(primary.into_iter().map(ErSample::PureTripartite)),
            SampleKind::Mixture => {
                let partners: Vec<DensityOp> = match (&spec.with, &spec.random) {
                    (Some(w), _) => vec![load_state(w, base)?; primary.len()],
                    (None, Some(r)) => r.draw(sample_seed.wrapping_add(r.count as u64))?,
                    (None, None) => bail!("config field '{field}.with' is required for a fixed mixture"),
                };
                let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
                for (rho, sigma) in primary.into_iter().zip(partners) {
                    let p = spec.p.unwrap_or_else(|| rng.random::<f64>());
                    out.push(ErSample::Mixture { rho, sigma, p });
                }
            }
        }
    }
    Ok(out)
}

pub fn verify(cfg: &Config, base: &Path, rec: &mut RunRecord) -> Result<()> {
    let samples = verify_samples(cfg, base)?;
    let opts = VerifyOptions { solver: cfg.solver_options()?, k_max: cfg.k_max.unwrap_or(1) };
    let cells: Vec<Result<Vec<ErCheck>>> = samples
        .par_iter()
        .map(|s| Ok(verify_er_inequalities(std::slice::from_ref(s), &opts)?.checks))
        .collect();
    let mut t = Table::new(
        "verify",
        &["sample", "inequality", "label", "small_lower", "small_upper", "large_lower", "large_upper", "violated", "certified"],
    );
    let mut certified = 0;
    let mut total = 0;
    for (i, cell) in cells.into_iter().enumerate() {
        match cell {
            Ok(checks) => {
                for c in checks {
                    total += 1;
                    if c.certified() {
                        certified += 1;
                    }
                    if c.violated() {
                        rec.violations.push(format!(
                            "sample {i} {} {}: {} > {}",
                            inequality_name(c.inequality),
                            c.label,
                            c.small_lower,
                            c.large_upper
                        ));
                    }
                    t.push(vec![
                        i.to_string(),
                        inequality_name(c.inequality).into(),
                        c.label.clone(),
                        num(c.small_lower),
                        num(c.small_upper),
                        num(c.large_lower),
                        num(c.large_upper),
                        c.violated().to_string(),
                        c.certified().to_string(),
                    ]);
                }
            }
            Err(e) => rec.errors.push(format!("sample {i}: {e:#}")),
        }
    }
    rec.tables.push(t);
    rec.note("samples", samples.len());
    rec.note("checks", total);
    rec.note("certified", certified);
    Ok(())
}

pub fn theorem2(cfg: &Config, base: &Path, rec: &mut RunRecord) -> Result<()> {
    let rho0 = load_state(cfg.need(&cfg.state, "state", "theorem2")?, base)?;
    let partition = cfg.partition_for(&rho0)?;
    let ks = cfg.ks.clone().unwrap_or_else(|| vec![1, 2, 4, 8, 16, 32]);
    let k_max = cfg.k_max.unwrap_or(1);
    let opts = cfg.solver_options()?;
    let seq = depolarized_sequence(&rho0, &ks)?;
    let mut jobs: Vec<(usize, String, &DensityOp)> =
        seq.iter().enumerate().map(|(i, r)| (i, ks[i].to_string(), r)).collect();
    jobs.push((seq.len(), "limit".into(), &rho0));
    let cells: Vec<Result<_>> = jobs
        .par_iter()
        .map(|(i, _, r)| Ok(theorem2_row(*i, r, &rho0, &partition, k_max, &opts)?))
        .collect();
    let mut t = Table::new(
        "theorem2",
        &["index", "k", "trace_distance", "mutual_information", "er", "er_gap", "er_regularized"],
    );
    for ((i, k, _), cell) in jobs.iter().zip(cells) {
        match cell {
            Ok(row) => {
                // the product of the group marginals is separable, so E_R ≤ I
                if row.er - row.er_gap.max(0.0) > row.mutual_information + MONOTONE_SLACK {
                    rec.violations.push(format!("k={k}: E_R {} above the mutual information", row.er));
                }
                t.push(vec![
                    row.index.to_string(),
                    k.clone(),
                    num(row.trace_distance),
                    num(row.mutual_information),
                    num(row.er),
                    num(row.er_gap),
                    num(row.er_regularized),
                ]);
            }
            Err(e) => rec.errors.push(format!("row {i}: {e:#}")),
        }
    }
    rec.tables.push(t);
    Ok(())
}
