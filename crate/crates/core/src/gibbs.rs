//! Gibbs states, the entropy ceiling `F_H(E)` and the continuity bound built
//! from it.

use crate::entropy::{binary_entropy, g_func, marginal_entropy};
use crate::error::{QsepError, Result};
use crate::qmat::{DensityOp, DimSig};
use crate::spectra::{GibbsSums, Growth, HamiltonianSpec};

/// Energy residual tolerance of the inverse-temperature root.
pub const ENERGY_TOL: f64 = 1e-10;
/// Largest dimension of the diagonal state attached to a symbolic solution.
pub const MAX_STATE_DIM: usize = 256;
/// Levels beyond this weight relative to the partial sum are left out of the state.
const STATE_CUTOFF: f64 = 1e-14;
const STATE_FLOOR: usize = 64;
/// Slack used by the sampled class checks.
pub const CLASS_SLACK: f64 = 1e-8;

/// A Hamiltonian together with an optional truncation to its first `dim` levels.
#[derive(Clone, Copy, Debug)]
pub struct Subsystem<'a> {
    pub h: &'a HamiltonianSpec,
    pub dim: Option<usize>,
}

impl<'a> Subsystem<'a> {
    pub fn new(h: &'a HamiltonianSpec, dim: Option<usize>) -> Self {
        Self { h, dim }
    }

    fn levels(&self) -> Option<usize> {
        match (self.h.dim(), self.dim) {
            (Some(n), Some(d)) => Some(n.min(d)),
            (n, d) => n.or(d),
        }
    }

    fn sums(&self, beta: f64) -> Result<GibbsSums> {
        self.h.sums(beta, self.dim)
    }

    /// Inverse temperatures at or below this leave the partition function infinite.
    fn threshold(&self) -> f64 {
        if self.levels().is_some() {
            0.0
        } else {
            self.h.beta_threshold()
        }
    }

    fn ground_multiplicity(&self) -> usize {
        let ground = self.h.ground();
        let n = self.levels().unwrap_or(STATE_FLOOR).min(STATE_FLOOR * 16);
        (1..=n).take_while(|&i| self.h.level(i) <= ground).count().max(1)
    }
}

#[derive(Clone, Debug)]
pub struct GibbsSolution {
    /// `+inf` for the ground state.
    pub beta: f64,
    /// Diagonal state on the first levels (all of them for finite spectra).
    pub state: DensityOp,
    /// Weight of the levels left out of `state`.
    pub tail_weight: f64,
    pub mean_energy: f64,
    pub entropy: f64,
    pub ln_z: f64,
}

/// Common inverse temperature and per-subsystem sums at energy `e`.
#[derive(Clone, Debug)]
pub struct MultiGibbs {
    pub beta: f64,
    pub sums: Vec<GibbsSums>,
    pub entropy: f64,
    pub mean_energy: f64,
}

fn ground_energy(systems: &[Subsystem<'_>]) -> f64 {
    systems.iter().map(|s| s.h.ground()).sum()
}

fn total_mean(systems: &[Subsystem<'_>], beta: f64) -> Option<f64> {
    let mut acc = 0.0;
    for s in systems {
        match s.sums(beta) {
            Ok(g) if g.mean.is_finite() => acc += g.mean,
            _ => return None,
        }
    }
    Some(acc)
}

/// Solves `Σ_k ⟨H_k⟩_β = e` for one common `β` by bracketed bisection.
pub fn solve_common_beta(systems: &[Subsystem<'_>], e: f64) -> Result<MultiGibbs> {
    if systems.is_empty() {
        return Err(QsepError::InvalidArgument("no Hamiltonians given".into()));
    }
    if !e.is_finite() {
        return Err(QsepError::InvalidArgument(format!("energy {e} is not finite")));
    }
    let ground = ground_energy(systems);
    let scale = ground.abs().max(1.0);
    if e < ground - 1e-12 * scale {
        return Err(QsepError::InfeasibleEnergy(format!("E = {e} below ground energy {ground}")));
    }
    if e <= ground + 1e-13 * scale {
        let sums: Vec<GibbsSums> = systems
            .iter()
            .map(|s| GibbsSums { ln_z: f64::NEG_INFINITY, mean: s.h.ground() })
            .collect();
        let entropy = systems.iter().map(|s| (s.ground_multiplicity() as f64).ln()).sum();
        return Ok(MultiGibbs { beta: f64::INFINITY, sums, entropy, mean_energy: ground });
    }
    let finite_space = systems.iter().all(|s| s.levels().is_some());
    if finite_space {
        let mean0 = total_mean(systems, 0.0).expect("finite sums at beta = 0");
        if e >= mean0 {
            return finish(systems, 0.0);
        }
    }
    let lo0 = systems.iter().map(|s| s.threshold()).fold(0.0, f64::max);
    if !lo0.is_finite() {
        return Err(QsepError::Divergent("partition function is infinite at every temperature".into()));
    }
    let above = |beta: f64| total_mean(systems, beta).is_none_or(|m| m > e);
    let mut lo = lo0;
    let mut step = 1.0;
    let mut hi = lo0 + step;
    while above(hi) {
        lo = hi;
        step *= 2.0;
        hi = lo0 + step;
        if step > 1e300 {
            return Err(QsepError::InfeasibleEnergy(format!("no inverse temperature reaches E = {e}")));
        }
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match total_mean(systems, mid) {
            Some(m) if (m - e).abs() <= 1e-15 * e.abs().max(1.0) => {
                lo = mid;
                hi = mid;
                break;
            }
            Some(m) if m <= e => hi = mid,
            _ => lo = mid,
        }
    }
    finish(systems, 0.5 * (lo + hi))
}

fn finish(systems: &[Subsystem<'_>], beta: f64) -> Result<MultiGibbs> {
    let sums = systems.iter().map(|s| s.sums(beta)).collect::<Result<Vec<_>>>()?;
    let entropy = sums.iter().map(|g| g.entropy(beta)).sum();
    let mean_energy = sums.iter().map(|g| g.mean).sum();
    Ok(MultiGibbs { beta, sums, entropy, mean_energy })
}

/// Gibbs state of `h` with mean energy `e`, truncated to `dim` levels when given.
/// Above the β = 0 mean of a finite space the constraint is inactive and the
/// maximally mixed state is returned.
pub fn solve_beta(h: &HamiltonianSpec, e: f64, dim: Option<usize>) -> Result<GibbsSolution> {
    let sys = Subsystem::new(h, dim);
    let sol = solve_common_beta(&[sys], e)?;
    let sums = sol.sums[0];
    let (probs, tail_weight) = if sol.beta.is_infinite() {
        let mult = sys.ground_multiplicity();
        (vec![1.0 / mult as f64; mult], 0.0)
    } else {
        gibbs_weights(&sys, sol.beta, sums.ln_z)
    };
    let state = DensityOp::diagonal(DimSig::single(probs.len())?, &probs)?;
    Ok(GibbsSolution {
        beta: sol.beta,
        state,
        tail_weight,
        mean_energy: sol.mean_energy,
        entropy: sol.entropy,
        ln_z: sums.ln_z,
    })
}

/// Probabilities `e^{−βh_i}/Z` on the retained levels, and the weight left out.
fn gibbs_weights(sys: &Subsystem<'_>, beta: f64, ln_z: f64) -> (Vec<f64>, f64) {
    let h = sys.h;
    let mut probs = Vec::new();
    let mut partial = 0.0;
    let limit = sys.levels().unwrap_or(MAX_STATE_DIM);
    for i in 1..=limit {
        let p = (-beta * h.level(i) - ln_z).exp();
        probs.push(p);
        partial += p;
        if sys.levels().is_none() && i >= STATE_FLOOR && p < STATE_CUTOFF * partial {
            break;
        }
    }
    (probs, (1.0 - partial).max(0.0))
}

/// `F_H(E)`, the largest entropy at mean energy at most `E`.
pub fn f_h(h: &HamiltonianSpec, e: f64, dim: Option<usize>) -> Result<f64> {
    Ok(solve_common_beta(&[Subsystem::new(h, dim)], e)?.entropy)
}

/// `F_{H_1..H_m}(E)`: maximal entropy of a state on the product space with
/// `Σ_k Tr H_k ρ_k ≤ E`, attained by a product of Gibbs states at a common β.
pub fn f_multi(hams: &[HamiltonianSpec], e: f64, dims: &[Option<usize>]) -> Result<f64> {
    if !dims.is_empty() && dims.len() != hams.len() {
        return Err(QsepError::DimensionMismatch(format!("{} Hamiltonians, {} dimensions", hams.len(), dims.len())));
    }
    let systems: Vec<Subsystem<'_>> =
        hams.iter().enumerate().map(|(k, h)| Subsystem::new(h, dims.get(k).copied().flatten())).collect();
    Ok(solve_common_beta(&systems, e)?.entropy)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthOrder {
    /// `F_H(E) = o(E)`
    Linear,
    /// `F_H(E) = o(√E)`
    SquareRoot,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct AsymptoticReport {
    pub order: GrowthOrder,
    pub energies: Vec<f64>,
    pub betas: Vec<f64>,
    pub entropies: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Ratios strictly decreasing along the grid. Evidence of a trend only.
    pub decreasing: bool,
}

/// Tabulates `F_H(E)/E` or `F_H(E)/√E` on an increasing energy grid.
pub fn check_asymptotic_condition(h: &HamiltonianSpec, order: GrowthOrder, grid: &[f64]) -> Result<AsymptoticReport> {
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(QsepError::InvalidArgument("energy grid must be increasing".into()));
    }
    let mut betas = Vec::with_capacity(grid.len());
    let mut entropies = Vec::with_capacity(grid.len());
    for &e in grid {
        let sol = solve_common_beta(&[Subsystem::new(h, None)], e)?;
        betas.push(sol.beta);
        entropies.push(sol.entropy);
    }
    let ratios: Vec<f64> = grid
        .iter()
        .zip(&entropies)
        .map(|(&e, &f)| match order {
            GrowthOrder::Linear => f / e,
            GrowthOrder::SquareRoot => f / e.sqrt(),
        })
        .collect();
    let decreasing = ratios.windows(2).all(|w| w[1] < w[0]);
    Ok(AsymptoticReport { order, energies: grid.to_vec(), betas, entropies, ratios, decreasing })
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct Lemma1Row {
    pub energy: f64,
    pub f_squared: f64,
    pub f_sqrt: f64,
    pub holds: bool,
}

/// Compares `F_{H²}(E)` with `F_H(√E)` along `grid` (slack 1e-8).
pub fn lemma1_check(h: &HamiltonianSpec, grid: &[f64], dim: Option<usize>) -> Result<Vec<Lemma1Row>> {
    let squared = HamiltonianSpec::squared(h);
    grid.iter()
        .map(|&e| {
            let f_squared = f_h(&squared, e, dim)?;
            let f_sqrt = f_h(h, e.sqrt(), dim)?;
            Ok(Lemma1Row { energy: e, f_squared, f_sqrt, holds: f_squared <= f_sqrt + 1e-8 })
        })
        .collect()
}

/// Indices `k` where a sampled function fails to be nondecreasing (at `k`)
/// or concave (at the interior point `k`), with slack.
pub fn monotone_concave_violations(xs: &[f64], ys: &[f64], slack: f64) -> Vec<usize> {
    let mut bad = Vec::new();
    for k in 1..xs.len() {
        if ys[k] < ys[k - 1] - slack {
            bad.push(k);
        }
    }
    for k in 1..xs.len().saturating_sub(1) {
        let t = (xs[k] - xs[k - 1]) / (xs[k + 1] - xs[k - 1]);
        let chord = (1.0 - t) * ys[k - 1] + t * ys[k + 1];
        if ys[k] < chord - slack && !bad.contains(&k) {
            bad.push(k);
        }
    }
    bad.sort_unstable();
    bad
}

/// Parameters of the common continuity bound under the joint energy constraint
/// `Σ_k Tr H_k ρ_k ≤ mE`.
#[derive(Clone, Debug)]
pub struct BoundParams {
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub hams: Vec<HamiltonianSpec>,
    pub trunc_dim: Option<usize>,
}

impl BoundParams {
    pub fn new(c: f64, d: f64, e: f64, hams: Vec<HamiltonianSpec>, trunc_dim: Option<usize>) -> Result<Self> {
        if !(c >= 0.0 && d >= 0.0) {
            return Err(QsepError::InvalidArgument(format!("C = {c} and D = {d} must be nonnegative")));
        }
        if hams.is_empty() {
            return Err(QsepError::InvalidArgument("at least one Hamiltonian is required".into()));
        }
        let p = Self { c, d, e, hams, trunc_dim };
        let e0 = p.ground_energy();
        if !(e > e0) {
            return Err(QsepError::InfeasibleEnergy(format!("E = {e} must exceed E0 = {e0}")));
        }
        Ok(p)
    }

    pub fn m(&self) -> usize {
        self.hams.len()
    }

    /// `E_0`, the mean of the ground levels.
    pub fn ground_energy(&self) -> f64 {
        self.hams.iter().map(|h| h.ground()).sum::<f64>() / self.hams.len() as f64
    }
}

/// `C√(ε(2−ε)) F_{H_1..H_m}(2mE/(ε(2−ε))) + D g(√(ε(2−ε)))`, zero at `ε = 0`.
pub fn fcb_bound(p: &BoundParams, eps: f64) -> Result<f64> {
    let dims = vec![p.trunc_dim; p.m()];
    continuity_bound(p.c, p.d, &p.hams, &dims, p.e, eps)
}

/// [`fcb_bound`] without the `E > E_0` precondition; `E = E_0` is allowed.
pub fn continuity_bound(
    c: f64,
    d: f64,
    hams: &[HamiltonianSpec],
    dims: &[Option<usize>],
    e: f64,
    eps: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(QsepError::InvalidArgument(format!("eps = {eps} outside [0,1]")));
    }
    if eps == 0.0 {
        return Ok(0.0);
    }
    let t = eps * (2.0 - eps);
    let root = t.sqrt();
    let first = if c == 0.0 { 0.0 } else { c * root * f_multi(hams, 2.0 * hams.len() as f64 * e / t, dims)? };
    Ok(first + d * g_func(root)?)
}

/// One `(ρ, σ, p)` sample for the class checks.
#[derive(Clone, Debug)]
pub struct ClassSample {
    pub rho: DensityOp,
    pub sigma: DensityOp,
    pub p: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassCondition {
    /// `−c⁻ C_m ≤ f ≤ c⁺ C_m`
    Sandwich,
    /// `−d⁻ h₂(p) ≤ f(mix) − p f(ρ) − (1−p) f(σ) ≤ d⁺ h₂(p)`
    Mixing,
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct ClassViolation {
    pub sample: usize,
    pub condition: ClassCondition,
    /// Amount by which the inequality fails.
    pub excess: f64,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct ClassReport {
    pub samples: usize,
    pub violations: Vec<ClassViolation>,
    /// Smallest distance to either side of either inequality over all samples.
    pub min_margin: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassConstants {
    pub c_minus: f64,
    pub c_plus: f64,
    pub d_minus: f64,
    pub d_plus: f64,
}

/// `Σ_{s<m} S(ρ_{A_s})`.
pub fn marginal_entropy_sum(rho: &DensityOp, m: usize) -> Result<f64> {
    if m > rho.sig().parties() {
        return Err(QsepError::InvalidArgument(format!("m = {m} exceeds {} parties", rho.sig().parties())));
    }
    (0..m).map(|s| marginal_entropy(rho, &[s])).sum()
}

/// Checks both defining inequalities of the class on each sample. A clean
/// report is evidence, not proof of membership.
pub fn class_membership_check(
    f: &dyn Fn(&DensityOp) -> Result<f64>,
    k: ClassConstants,
    m: usize,
    samples: &[ClassSample],
) -> Result<ClassReport> {
    let mut violations = Vec::new();
    let mut min_margin = f64::INFINITY;
    let mut record = |sample: usize, condition: ClassCondition, lower: f64, value: f64, upper: f64| {
        let margin = (value - lower).min(upper - value);
        min_margin = min_margin.min(margin);
        if margin < -CLASS_SLACK {
            violations.push(ClassViolation { sample, condition, excess: -margin });
        }
    };
    for (idx, s) in samples.iter().enumerate() {
        if !(s.p > 0.0 && s.p < 1.0) {
            return Err(QsepError::InvalidArgument(format!("sample {idx}: p = {} outside (0,1)", s.p)));
        }
        let mix = s.rho.mix(s.p, &s.sigma)?;
        let mut values = [0.0; 3];
        for (slot, state) in [&s.rho, &s.sigma, &mix].into_iter().enumerate() {
            let v = f(state)?;
            let cm = marginal_entropy_sum(state, m)?;
            record(idx, ClassCondition::Sandwich, -k.c_minus * cm, v, k.c_plus * cm);
            values[slot] = v;
        }
        let h2 = binary_entropy(s.p)?;
        let defect = values[2] - s.p * values[0] - (1.0 - s.p) * values[1];
        record(idx, ClassCondition::Mixing, -k.d_minus * h2, defect, k.d_plus * h2);
    }
    Ok(ClassReport { samples: samples.len(), violations, min_margin })
}

/// The ceiling energy above which a finite or truncated Hamiltonian is
/// unconstrained (the β = 0 mean).
pub fn unconstrained_mean(h: &HamiltonianSpec, dim: Option<usize>) -> Option<f64> {
    match (h.growth(), dim) {
        (Growth::Finite(_), _) | (_, Some(_)) => h.sums(0.0, dim).ok().map(|g| g.mean),
        _ => None,
    }
}
