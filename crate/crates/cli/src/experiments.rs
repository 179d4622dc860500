//! entropy, gibbs, zeta and approx pipelines.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use qsep_core::approx::{
    apply_product_channel, energy_growth_check, gentle_bound_check, p_ineq_check, theorem1_experiment, Channel,
    EnvelopeInputs, StateFunction, TruncationMap, TruncationPlan,
};
use qsep_core::entropy::{
    binary_entropy, chain_rule_terms, conditional_entropy_ext, marginal_entropy, total_correlation, von_neumann_entropy,
};
use qsep_core::gibbs::{lemma1_check, monotone_concave_violations, solve_beta};
use qsep_core::spectra::{
    build_fa_witness, check_entropy_criterion, check_fa_sufficient, zeta_limit, DEFAULT_BETAS, DIRECT_TERMS,
};
use qsep_core::{DensityOp, HamiltonianSpec, SpectrumFamily, Verdict};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{load_state, Config};
use crate::record::{num, opt, RunRecord, Table};

const INEQ_SLACK: f64 = 1e-8;
/// Accepted distance of a witness's extrapolated partition limit from 1.
const WITNESS_LIMIT_TOL: f64 = 0.05;

fn flag(b: bool) -> String {
    b.to_string()
}

pub fn entropy(cfg: &Config, base: &Path, rec: &mut RunRecord) -> Result<()> {
    if cfg.state.is_none() && cfg.random.is_none() {
        bail!("command 'entropy' needs config field 'state' or 'random'");
    }
    if let Some(reference) = &cfg.state {
        let rho = load_state(reference, base)?;
        let n = rho.sig().parties();
        let mut t = Table::new("quantities", &["quantity", "value"]);
        t.push(vec!["entropy".into(), num(von_neumann_entropy(&rho))]);
        for s in 0..n {
            t.push(vec![format!("marginal_entropy_A{}", s + 1), num(marginal_entropy(&rho, &[s])?)]);
        }
        if n >= 2 {
            t.push(vec!["total_correlation".into(), num(total_correlation(&rho)?)]);
            for (k, v) in chain_rule_terms(&rho)?.into_iter().enumerate() {
                t.push(vec![format!("chain_I(A{}:A{}..A{n})", k + 1, k + 2), num(v)]);
            }
        }
        if n == 2 {
            for a in 0..2 {
                let v = conditional_entropy_ext(&rho, a).map(num).unwrap_or_else(|e| format!("error: {e}"));
                t.push(vec![format!("conditional_entropy_A{}|A{}", a + 1, 2 - a), v]);
            }
        }
        rec.tables.push(t);
    }
    if let Some(random) = &cfg.random {
        let seed = cfg.seed();
        let states = random.draw(seed)?;
        let partners = random.draw(seed.wrapping_add(random.count as u64))?;
        let cells: Vec<Result<Vec<Vec<String>>>> = states
            .par_iter()
            .zip(partners.par_iter())
            .enumerate()
            .map(|(i, (rho, sigma))| {
                let p = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64)).random::<f64>();
                entropy_checks(i, rho, sigma, p)
            })
            .collect();
        let mut t = Table::new("checks", &["sample", "check", "lhs", "rhs", "holds"]);
        for (i, cell) in cells.into_iter().enumerate() {
            match cell {
                Ok(rows) => {
                    for r in rows {
                        if r[4] == "false" {
                            rec.violations.push(format!("sample {i}: {} ({} vs {})", r[1], r[2], r[3]));
                        }
                        t.push(r);
                    }
                }
                Err(e) => rec.errors.push(format!("sample {i}: {e:#}")),
            }
        }
        rec.note("random samples", random.count);
        rec.tables.push(t);
    }
    Ok(())
}

/// Concavity defect, the QMI bound for every choice of `n − 1` marginals,
/// and the chain-rule decomposition.
fn entropy_checks(i: usize, rho: &DensityOp, sigma: &DensityOp, p: f64) -> Result<Vec<Vec<String>>> {
    let mut rows = Vec::new();
    let idx = i.to_string();
    let mix = rho.mix(p, sigma)?;
    let lhs = von_neumann_entropy(&mix);
    let rhs = p * von_neumann_entropy(rho) + (1.0 - p) * von_neumann_entropy(sigma) + binary_entropy(p)?;
    rows.push(vec![idx.clone(), format!("mixing_entropy p={p}"), num(lhs), num(rhs), flag(lhs <= rhs + INEQ_SLACK)]);

    let n = rho.sig().parties();
    if n >= 2 {
        let mi = total_correlation(rho)?;
        let marg: Vec<f64> = (0..n).map(|s| marginal_entropy(rho, &[s])).collect::<qsep_core::Result<_>>()?;
        let total: f64 = marg.iter().sum();
        for (s, m) in marg.iter().enumerate() {
            let rhs = 2.0 * (total - m);
            rows.push(vec![
                idx.clone(),
                format!("qmi_bound_without_A{}", s + 1),
                num(mi),
                num(rhs),
                flag(mi <= rhs + INEQ_SLACK),
            ]);
        }
        let chain: f64 = chain_rule_terms(rho)?.iter().sum();
        rows.push(vec![idx, "chain_rule".into(), num(mi), num(chain), flag((mi - chain).abs() <= INEQ_SLACK)]);
    }
    Ok(rows)
}

pub fn gibbs(cfg: &Config, _base: &Path, rec: &mut RunRecord) -> Result<()> {
    let literal = cfg.need(&cfg.hamiltonian, "hamiltonian", "gibbs")?;
    let h: HamiltonianSpec = literal.parse().map_err(|e| anyhow!("config field 'hamiltonian': {e}"))?;
    let mut energies = cfg.need(&cfg.energies, "energies", "gibbs")?.clone();
    if energies.is_empty() {
        bail!("config field 'energies' is empty");
    }
    energies.sort_by(f64::total_cmp);
    let cells: Vec<Result<Vec<String>>> = energies
        .par_iter()
        .map(|&e| {
            let sol = solve_beta(&h, e, cfg.dim)?;
            let lemma = lemma1_check(&h, &[e], cfg.dim)?[0];
            Ok(vec![
                num(e),
                num(sol.beta),
                num(sol.entropy),
                num(sol.entropy / e),
                num(lemma.f_squared),
                num(lemma.f_sqrt),
                flag(lemma.holds),
            ])
        })
        .collect();
    let mut t = Table::new("gibbs", &["E", "beta", "F_H", "ratio", "F_H2", "F_H_sqrtE", "lemma1"]);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (e, cell) in energies.iter().zip(cells) {
        match cell {
            Ok(row) => {
                if row[6] == "false" {
                    rec.violations.push(format!("E = {e}: F_H2(E) = {} exceeds F_H(sqrt E) = {}", row[4], row[5]));
                }
                xs.push(*e);
                ys.push(row[2].parse::<f64>().unwrap_or(f64::NAN));
                t.push(row);
            }
            Err(e2) => rec.errors.push(format!("E = {e}: {e2:#}")),
        }
    }
    for k in monotone_concave_violations(&xs, &ys, INEQ_SLACK) {
        rec.violations.push(format!("F_H not monotone and concave at E = {}", xs[k]));
    }
    rec.note("hamiltonian", &h);
    rec.tables.push(t);
    Ok(())
}

pub fn zeta(cfg: &Config, _base: &Path, rec: &mut RunRecord) -> Result<()> {
    if cfg.hamiltonians.is_none() && cfg.families.is_none() {
        bail!("command 'zeta' needs config field 'hamiltonians' or 'families'");
    }
    let betas = cfg.betas.clone().unwrap_or_else(|| DEFAULT_BETAS.to_vec());
    let n_max = cfg.n_max.unwrap_or(DIRECT_TERMS);
    if let Some(literals) = &cfg.hamiltonians {
        let mut t = Table::new("zeta", &["hamiltonian", "beta", "value"]);
        for lit in literals {
            let h: HamiltonianSpec = lit.parse().map_err(|e| anyhow!("hamiltonian '{lit}': {e}"))?;
            match zeta_limit(&h, &betas, n_max) {
                Ok(rep) => {
                    for (b, v) in rep.betas.iter().zip(&rep.values) {
                        t.push(vec![lit.clone(), num(*b), num(*v)]);
                    }
                    t.push(vec![lit.clone(), "limit".into(), num(rep.extrapolated)]);
                    rec.note(&format!("limit {lit}"), num(rep.extrapolated));
                }
                Err(e) => rec.errors.push(format!("hamiltonian '{lit}': {e}")),
            }
        }
        rec.tables.push(t);
    }
    if let Some(literals) = &cfg.families {
        let qs = cfg.power_q.clone().unwrap_or_else(|| vec![2.5, 3.0]);
        let mut t = Table::new(
            "families",
            &["family", "entropy_criterion", "fa_sufficient", "power_q", "power_verdict", "witness_energy", "witness_limit"],
        );
        for lit in literals {
            let fam: SpectrumFamily = lit.parse().map_err(|e| anyhow!("family '{lit}': {e}"))?;
            let entropy = check_entropy_criterion(&fam, n_max).verdict;
            let fa = check_fa_sufficient(&fam, n_max, None).sufficient.verdict;
            if fa == Verdict::Converges && entropy == Verdict::Diverges {
                rec.violations.push(format!("{lit}: ln^2 moment converges but entropy series diverges"));
            }
            let (energy, limit) = if fa == Verdict::Converges {
                match build_fa_witness(&fam, n_max) {
                    Ok(w) => {
                        let lim = zeta_limit(&w.as_hamiltonian(), &betas, n_max).map(|r| r.extrapolated);
                        match lim {
                            Ok(l) => {
                                if !w.energy().is_finite() || (l - 1.0).abs() > WITNESS_LIMIT_TOL {
                                    rec.violations.push(format!(
                                        "{lit}: witness energy {} with partition limit {l}, outside 1 +- {WITNESS_LIMIT_TOL}",
                                        w.energy()
                                    ));
                                }
                                (Some(w.energy()), Some(l))
                            }
                            Err(e) => {
                                rec.errors.push(format!("{lit}: witness limit: {e}"));
                                (Some(w.energy()), None)
                            }
                        }
                    }
                    Err(e) => {
                        rec.errors.push(format!("{lit}: {e}"));
                        (None, None)
                    }
                }
            } else {
                (None, None)
            };
            for &q in &qs {
                let power = check_fa_sufficient(&fam, n_max, Some(q)).power.expect("power requested").verdict;
                t.push(vec![
                    lit.clone(),
                    entropy.to_string(),
                    fa.to_string(),
                    num(q),
                    power.to_string(),
                    opt(energy),
                    opt(limit),
                ]);
            }
        }
        rec.tables.push(t);
    }
    Ok(())
}

fn state_function(name: &str) -> Result<Box<StateFunction<'static>>> {
    Ok(match name {
        "qmi" => Box::new(qsep_core::entropy::total_correlation),
        "entropy" => Box::new(|r: &DensityOp| Ok(von_neumann_entropy(r))),
        "conditional" => Box::new(|r: &DensityOp| conditional_entropy_ext(r, 0)),
        other => bail!("config field 'function': unknown '{other}' (qmi, entropy, conditional)"),
    })
}

pub fn approx(cfg: &Config, base: &Path, rec: &mut RunRecord) -> Result<()> {
    let rho = load_state(cfg.need(&cfg.state, "state", "approx")?, base)?;
    let n = rho.sig().parties();
    let subset = cfg.subset.clone().unwrap_or_else(|| (0..n).collect());
    let max_dim = subset.iter().map(|&s| rho.sig().dims().get(s).copied().unwrap_or(0)).max().unwrap_or(1);
    let r_grid = cfg.r_grid.clone().unwrap_or_else(|| (1..=max_dim).collect());
    if r_grid.is_empty() {
        bail!("config field 'r_grid' is empty");
    }
    let map = match cfg.map.as_deref().unwrap_or("compression") {
        "compression" => TruncationMap::Compression,
        "channels" => TruncationMap::Channels,
        other => bail!("config field 'map': unknown '{other}' (compression, channels)"),
    };
    let fname = cfg.function.clone().unwrap_or_else(|| "qmi".into());
    state_function(&fname).map(drop)?;
    let channels: Vec<Channel> = cfg
        .channels
        .clone()
        .unwrap_or_else(|| vec!["identity".into()])
        .iter()
        .map(|c| c.parse().map_err(|e| anyhow!("config field 'channels': {e}")))
        .collect::<Result<_>>()?;
    let envelope = match &cfg.envelope {
        None => None,
        Some(env) => {
            let witnesses = env
                .witnesses
                .iter()
                .map(|lit| {
                    let fam: SpectrumFamily = lit.parse().map_err(|e| anyhow!("envelope witness '{lit}': {e}"))?;
                    build_fa_witness(&fam, DIRECT_TERMS).map_err(|e| anyhow!("envelope witness '{lit}': {e}"))
                })
                .collect::<Result<Vec<_>>>()?;
            let dims: Vec<usize> = rho.sig().dims().iter().take(witnesses.len()).copied().collect();
            Some(EnvelopeInputs::from_witnesses(env.c, env.d, &witnesses, &dims).context("config field 'envelope'")?)
        }
    };

    let cells: Vec<Result<Vec<Vec<String>>>> = channels
        .par_iter()
        .map(|ch| {
            let chans = vec![*ch; n];
            let f = state_function(&fname)?;
            let g = move |r: &DensityOp| f(&apply_product_channel(r, &chans)?);
            let rep = theorem1_experiment(&rho, &g, &subset, &r_grid, map, envelope.as_ref())?;
            Ok(rep
                .rows
                .iter()
                .map(|row| {
                    vec![
                        ch.to_string(),
                        row.r.to_string(),
                        num(row.c_r),
                        num(row.eps_r),
                        num(row.gentle_bound),
                        opt(row.y_r),
                        num(row.f_exact),
                        num(row.f_trunc),
                        num(row.diff),
                    ]
                })
                .collect())
        })
        .collect();
    let mut t = Table::new(
        "approx",
        &["channel", "r", "c_r", "eps_r", "gentle_bound", "Y_r", "f_exact", "f_trunc", "diff"],
    );
    for (ch, cell) in channels.iter().zip(cells) {
        match cell {
            Ok(rows) => {
                for r in rows {
                    if let Ok(y) = r[5].parse::<f64>() {
                        let diff: f64 = r[8].parse().unwrap_or(f64::NAN);
                        if !(diff <= y + INEQ_SLACK) {
                            rec.violations.push(format!("{ch} r={}: diff {diff} exceeds Y_r {y}", r[1]));
                        }
                    }
                    t.push(r);
                }
            }
            Err(e) => rec.errors.push(format!("channel {ch}: {e:#}")),
        }
    }
    rec.tables.push(t);

    let levels = envelope.as_ref().map(|e| e.levels.clone());
    let mut m = Table::new(
        "machinery",
        &["r", "tr_q_rho", "p_ineq_rhs", "distance", "projector_bound", "marginal_bound", "energy_lhs", "energy_rhs"],
    );
    for &r in &r_grid {
        match machinery_row(&rho, &subset, r, levels.as_deref()) {
            Ok((row, problems)) => {
                rec.violations.extend(problems);
                m.push(row);
            }
            Err(e) => rec.errors.push(format!("r={r}: {e:#}")),
        }
    }
    rec.tables.push(m);
    rec.note("function", &fname);
    Ok(())
}

fn machinery_row(
    rho: &DensityOp,
    subset: &[usize],
    r: usize,
    levels: Option<&[Vec<f64>]>,
) -> Result<(Vec<String>, Vec<String>)> {
    let plan = TruncationPlan::new(rho, subset, r)?;
    let p = p_ineq_check(&plan, rho)?;
    let g = gentle_bound_check(rho, subset, r)?;
    let mut problems = Vec::new();
    if !p.lhs_at_least_rhs(INEQ_SLACK) {
        problems.push(format!("r={r}: Tr Q rho = {} below {}", p.lhs, p.rhs));
    }
    if !g.holds(INEQ_SLACK) {
        problems.push(format!("r={r}: gentle chain {} / {} / {}", g.distance, g.projector_bound, g.marginal_bound));
    }
    let (el, er) = match levels {
        Some(lv) => {
            let e = energy_growth_check(rho, &plan, lv)?;
            if !e.holds(INEQ_SLACK) {
                problems.push(format!("r={r}: energy {} exceeds {}", e.lhs, e.rhs));
            }
            (Some(e.lhs), Some(e.rhs))
        }
        None => (None, None),
    };
    let row = vec![
        r.to_string(),
        num(p.lhs),
        num(p.rhs),
        num(g.distance),
        num(g.projector_bound),
        num(g.marginal_bound),
        opt(el),
        opt(er),
    ];
    Ok((row, problems))
}
