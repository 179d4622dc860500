//! Spectral truncation of multipartite states and the quantities that control
//! how much a characteristic can move under it.
//!
//! Subsystem indices are 0-based. The truncation acts on a chosen subset of
//! subsystems; energies are taken on the first `m` subsystems.

use std::fmt;
use std::str::FromStr;

use crate::error::{QsepError, Result};
use crate::gibbs::continuity_bound;
use crate::qmat::{
    apply_local_kraus, eigh, kron, outer, partial_trace, trace_norm, CMat, C64, DensityOp,
    SpectralDecomp,
};
use crate::spectra::{FAWitness, HamiltonianSpec, SpectrumFamily};

/// Below this weight the compression is treated as annihilating the state.
pub const MIN_KEPT_WEIGHT: f64 = 1e-12;
/// Slack for the proof-side inequalities.
pub const CHECK_SLACK: f64 = 1e-8;

/// Rank-`r` spectral compression on a subset of subsystems, built from one state.
#[derive(Clone, Debug)]
pub struct TruncationPlan {
    subset: Vec<usize>,
    r: usize,
    /// Marginal decompositions, aligned with `subset`.
    marginals: Vec<SpectralDecomp>,
    projectors: Vec<CMat>,
    q: CMat,
    c_r: f64,
}

impl TruncationPlan {
    pub fn new(rho: &DensityOp, subset: &[usize], r: usize) -> Result<Self> {
        let sig = rho.sig();
        let mut sorted = subset.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != subset.len() {
            return Err(QsepError::InvalidArgument(format!("repeated subsystem in {subset:?}")));
        }
        if let Some(&bad) = sorted.iter().find(|&&s| s >= sig.parties()) {
            return Err(QsepError::InvalidArgument(format!("subsystem {bad} out of range")));
        }
        if r == 0 {
            return Err(QsepError::InvalidArgument("truncation rank must be >= 1".into()));
        }
        if let Some(&s) = sorted.iter().find(|&&s| sig.dims()[s] < r) {
            return Err(QsepError::InvalidArgument(format!(
                "rank {r} exceeds the dimension {} of subsystem {s}",
                sig.dims()[s]
            )));
        }
        let mut marginals = Vec::with_capacity(sorted.len());
        let mut projectors = Vec::with_capacity(sorted.len());
        for &s in &sorted {
            let dec = partial_trace(rho, &[s])?.eigh();
            let block = dec.vectors.columns(0, r);
            projectors.push(block * block.adjoint());
            marginals.push(dec);
        }
        let mut q = CMat::identity(1, 1);
        for (s, &d) in sig.dims().iter().enumerate() {
            let factor = match sorted.iter().position(|&t| t == s) {
                Some(k) => projectors[k].clone(),
                None => CMat::identity(d, d),
            };
            q = kron(&q, &factor);
        }
        let c_r = (&q * rho.mat()).trace().re;
        Ok(Self { subset: sorted, r, marginals, projectors, q, c_r })
    }

    pub fn subset(&self) -> &[usize] {
        &self.subset
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// `P_r^s` for each subsystem of the subset.
    pub fn projectors(&self) -> &[CMat] {
        &self.projectors
    }

    /// The product projector `Q_r`.
    pub fn q(&self) -> &CMat {
        &self.q
    }

    /// `Tr Q_r ρ` for the state the plan was built from.
    pub fn c_r(&self) -> f64 {
        self.c_r
    }

    /// `Tr P̄_r^s ρ_s` for each subsystem of the subset.
    pub fn marginal_tails(&self) -> Vec<f64> {
        self.marginals.iter().map(|dec| dec.values[self.r..].iter().map(|v| v.max(0.0)).sum()).collect()
    }

    /// `ε_r = √(Σ_j Tr P̄_r^{s_j} ρ_{s_j})`.
    pub fn eps(&self) -> f64 {
        self.marginal_tails().iter().sum::<f64>().sqrt()
    }

    /// `Q_r σ Q_r / Tr Q_r σ`.
    pub fn apply(&self, sigma: &DensityOp) -> Result<DensityOp> {
        if sigma.dim() != self.q.nrows() {
            return Err(QsepError::DimensionMismatch(format!(
                "plan for dimension {} applied to dimension {}",
                self.q.nrows(),
                sigma.dim()
            )));
        }
        let compressed = &self.q * sigma.mat() * &self.q;
        let weight = compressed.trace().re;
        if weight <= MIN_KEPT_WEIGHT {
            return Err(QsepError::TruncationAnnihilates { weight });
        }
        Ok(DensityOp::from_hermitian_unchecked(sigma.sig().clone(), compressed / C64::new(weight, 0.0)))
    }
}

/// `Λ_r(ρ) = Q_r ρ Q_r / Tr Q_r ρ` with `Q_r` the product of the rank-`r`
/// spectral projectors of the marginals on `subset`.
pub fn lambda_map(rho: &DensityOp, subset: &[usize], r: usize) -> Result<(DensityOp, TruncationPlan)> {
    let plan = TruncationPlan::new(rho, subset, r)?;
    Ok((plan.apply(rho)?, plan))
}

/// Product of the channels `Φ(ϱ) = PϱP + Tr[(I−P)ϱ] τ` on `subset`, with `P`
/// the rank-`r` spectral projector and `τ` the top eigenvector of each marginal.
pub fn phi_channels_map(rho: &DensityOp, subset: &[usize], r: usize) -> Result<DensityOp> {
    let plan = TruncationPlan::new(rho, subset, r)?;
    let sig = rho.sig();
    let mut mat = rho.mat().clone();
    for (k, &s) in plan.subset.iter().enumerate() {
        let dec = &plan.marginals[k];
        let top = dec.vector(0);
        let mut kraus = vec![plan.projectors[k].clone()];
        for j in r..dec.dim() {
            kraus.push(&top * dec.vector(j).adjoint());
        }
        mat = apply_local_kraus(&mat, sig, s, &kraus);
    }
    Ok(DensityOp::from_hermitian_unchecked(sig.clone(), mat))
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
}

impl InequalityCheck {
    /// `lhs ≥ rhs` up to slack.
    pub fn lhs_at_least_rhs(&self, slack: f64) -> bool {
        self.lhs >= self.rhs - slack
    }

    /// `lhs ≤ rhs` up to slack.
    pub fn lhs_at_most_rhs(&self, slack: f64) -> bool {
        self.lhs <= self.rhs + slack
    }
}

/// `Tr Q_r ρ` against `1 − Σ_j Tr P̄_r^{s_j} ρ_{s_j}`.
pub fn p_ineq_check(plan: &TruncationPlan, rho: &DensityOp) -> Result<InequalityCheck> {
    if rho.dim() != plan.q.nrows() {
        return Err(QsepError::DimensionMismatch("plan and state dimensions differ".into()));
    }
    let lhs = (&plan.q * rho.mat()).trace().re;
    Ok(InequalityCheck { lhs, rhs: 1.0 - plan.marginal_tails().iter().sum::<f64>() })
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct GentleCheck {
    /// `‖ρ − Λ_r(ρ)‖₁`
    pub distance: f64,
    /// `2√(Tr Q̄_r ρ)`
    pub projector_bound: f64,
    /// `2√(Σ_j Tr P̄_r^{s_j} ρ_{s_j}) = 2ε_r`
    pub marginal_bound: f64,
}

impl GentleCheck {
    /// The second link is compared on the radicands, where roundoff of
    /// order 1e-16 is not amplified by the square root.
    pub fn holds(&self, slack: f64) -> bool {
        self.distance <= self.projector_bound + slack
            && self.projector_bound.powi(2) <= self.marginal_bound.powi(2) + slack
    }
}

pub fn gentle_bound_check(rho: &DensityOp, subset: &[usize], r: usize) -> Result<GentleCheck> {
    let (out, plan) = lambda_map(rho, subset, r)?;
    Ok(gentle_from_plan(rho, &out, &plan))
}

fn gentle_from_plan(rho: &DensityOp, out: &DensityOp, plan: &TruncationPlan) -> GentleCheck {
    let distance = trace_norm(&(rho.mat() - out.mat()));
    GentleCheck {
        distance,
        projector_bound: 2.0 * (1.0 - plan.c_r).max(0.0).sqrt(),
        marginal_bound: 2.0 * plan.eps(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct EnergyCheck {
    /// `Σ_s Tr G_s [Λ_r(ρ)]_s`
    pub lhs: f64,
    /// `E_S / c_r`
    pub rhs: f64,
    /// `E_S / (1 − Σ_j Tr P̄_r^{s_j} ρ_{s_j})`, `+inf` when the denominator vanishes.
    pub rhs_marginal: f64,
    pub energy: f64,
}

impl EnergyCheck {
    pub fn holds(&self, slack: f64) -> bool {
        self.lhs <= self.rhs + slack && self.rhs <= self.rhs_marginal + slack
    }
}

/// `Σ_i g_i λ_i` with `g` given on the marginal eigenbasis (nonincreasing eigenvalue order).
fn diagonal_energy(dec: &SpectralDecomp, g: &[f64]) -> f64 {
    dec.values.iter().zip(g).map(|(l, g)| l.max(0.0) * g).sum()
}

/// `G_s = Σ_i g_i |φ_i⟩⟨φ_i|` in the eigenbasis `φ` of `ρ_s`.
fn witness_operator(dec: &SpectralDecomp, g: &[f64]) -> CMat {
    let d = dec.dim();
    let mut out = CMat::zeros(d, d);
    for (i, &gi) in g.iter().take(d).enumerate() {
        if gi != 0.0 {
            out += outer(&dec.vector(i)) * C64::new(gi, 0.0);
        }
    }
    out
}

fn check_levels(rho: &DensityOp, levels: &[Vec<f64>]) -> Result<()> {
    let sig = rho.sig();
    if levels.len() > sig.parties() {
        return Err(QsepError::InvalidArgument(format!(
            "{} witness sequences for {} subsystems",
            levels.len(),
            sig.parties()
        )));
    }
    for (s, g) in levels.iter().enumerate() {
        if g.len() < sig.dims()[s] {
            return Err(QsepError::DimensionMismatch(format!(
                "witness for subsystem {s} has {} levels, dimension is {}",
                g.len(),
                sig.dims()[s]
            )));
        }
    }
    Ok(())
}

/// Energy growth under compression, with witness operators `G_s` (for
/// `s < levels.len()`) diagonal in the eigenbasis of `ρ_s`.
pub fn energy_growth_check(rho: &DensityOp, plan: &TruncationPlan, levels: &[Vec<f64>]) -> Result<EnergyCheck> {
    check_levels(rho, levels)?;
    let out = plan.apply(rho)?;
    let mut lhs = 0.0;
    let mut energy = 0.0;
    for (s, g) in levels.iter().enumerate() {
        let dec = partial_trace(rho, &[s])?.eigh();
        energy += diagonal_energy(&dec, g);
        let op = witness_operator(&dec, g);
        lhs += (&op * partial_trace(&out, &[s])?.mat()).trace().re;
    }
    let denom = 1.0 - plan.marginal_tails().iter().sum::<f64>();
    let rhs_marginal = if denom > 0.0 { energy / denom } else { f64::INFINITY };
    Ok(EnergyCheck { lhs, rhs: energy / plan.c_r, rhs_marginal, energy })
}

/// Constants of the common continuity bound together with the witness
/// sequences `g^s` for subsystems `0..m`.
#[derive(Clone, Debug)]
pub struct EnvelopeInputs {
    pub c: f64,
    pub d: f64,
    pub levels: Vec<Vec<f64>>,
}

impl EnvelopeInputs {
    /// Witness levels `g_1..g_{d_s}` for each of the first `dims.len()` subsystems.
    pub fn from_witnesses(c: f64, d: f64, witnesses: &[FAWitness], dims: &[usize]) -> Result<Self> {
        if witnesses.len() != dims.len() {
            return Err(QsepError::DimensionMismatch(format!(
                "{} witnesses for {} subsystems",
                witnesses.len(),
                dims.len()
            )));
        }
        let levels = witnesses.iter().zip(dims).map(|(w, &d)| (1..=d).map(|i| w.g(i)).collect()).collect();
        Ok(Self { c, d, levels })
    }

    pub fn m(&self) -> usize {
        self.levels.len()
    }
}

/// `Y = B̂(ε, 2E_S | G_1..G_m)` where defined: the energy doubling needs
/// `c_r ≥ ½`, which the marginals guarantee once `ε² ≤ ½`.
fn envelope_value(
    c: f64,
    d: f64,
    hams: &[HamiltonianSpec],
    dims: &[Option<usize>],
    e_s: f64,
    eps: f64,
) -> Result<Option<f64>> {
    if eps > std::f64::consts::FRAC_1_SQRT_2 * (1.0 + 1e-12) {
        return Ok(None);
    }
    if eps == 0.0 {
        return Ok(Some(0.0));
    }
    let m = hams.len().max(1) as f64;
    Ok(Some(continuity_bound(c, d, hams, dims, 2.0 * e_s / m, eps)?))
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct EnvelopePoint {
    pub r: usize,
    pub eps_r: f64,
    /// `None` where the closed-form branch does not apply.
    pub y_r: Option<f64>,
}

/// `Y_r` for an idealised state given by the marginal spectra on the
/// truncated subsystems and witnesses (with their energies) on `0..m`.
pub fn y_envelope(
    truncated_spectra: &[SpectrumFamily],
    witnesses: &[FAWitness],
    c: f64,
    d: f64,
    r_grid: &[usize],
) -> Result<Vec<EnvelopePoint>> {
    let e_s: f64 = witnesses.iter().map(|w| w.energy()).sum();
    if !e_s.is_finite() {
        return Err(QsepError::NoWitness("witness energy is not finite".into()));
    }
    let hams: Vec<HamiltonianSpec> = witnesses.iter().map(|w| w.as_hamiltonian()).collect();
    let dims = vec![None; hams.len()];
    r_grid
        .iter()
        .map(|&r| {
            let eps_r = truncated_spectra.iter().map(|s| s.tail_mass(r)).sum::<f64>().sqrt();
            let y_r = envelope_value(c, d, &hams, &dims, e_s, eps_r)?;
            Ok(EnvelopePoint { r, eps_r, y_r })
        })
        .collect()
}

/// Which truncation the experiment applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationMap {
    #[default]
    Compression,
    Channels,
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct ApproxRow {
    pub r: usize,
    pub c_r: f64,
    pub eps_r: f64,
    /// `2ε_r`, the gentle-measurement bound on `‖ρ − Λ_r(ρ)‖₁`.
    pub gentle_bound: f64,
    pub y_r: Option<f64>,
    pub f_exact: f64,
    pub f_trunc: f64,
    pub diff: f64,
}

impl ApproxRow {
    /// `diff ≤ Y_r` (slack 1e-8) where `Y_r` is defined.
    pub fn within_envelope(&self) -> Option<bool> {
        self.y_r.map(|y| self.diff <= y + CHECK_SLACK)
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct ApproxReport {
    pub subset: Vec<usize>,
    pub map: TruncationMap,
    pub rows: Vec<ApproxRow>,
}

impl ApproxReport {
    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| r.within_envelope() == Some(false)).count()
    }
}

pub type StateFunction<'a> = dyn Fn(&DensityOp) -> Result<f64> + Sync + 'a;

/// One grid point of [`theorem1_experiment`].
pub fn theorem1_row(
    rho: &DensityOp,
    f: &StateFunction<'_>,
    f_exact: f64,
    subset: &[usize],
    r: usize,
    map: TruncationMap,
    envelope: Option<&EnvelopeInputs>,
) -> Result<ApproxRow> {
    let plan = TruncationPlan::new(rho, subset, r)?;
    let truncated = match map {
        TruncationMap::Compression => plan.apply(rho)?,
        TruncationMap::Channels => phi_channels_map(rho, subset, r)?,
    };
    let f_trunc = f(&truncated)?;
    let eps_r = plan.eps();
    let y_r = match envelope {
        None => None,
        Some(env) => {
            check_levels(rho, &env.levels)?;
            let mut e_s = 0.0;
            let mut hams = Vec::with_capacity(env.m());
            for (s, g) in env.levels.iter().enumerate() {
                let dim = rho.sig().dims()[s];
                e_s += diagonal_energy(&partial_trace(rho, &[s])?.eigh(), g);
                hams.push(HamiltonianSpec::explicit(g[..dim].to_vec())?);
            }
            let dims = vec![None; hams.len()];
            envelope_value(env.c, env.d, &hams, &dims, e_s, eps_r)?
        }
    };
    Ok(ApproxRow {
        r,
        c_r: plan.c_r,
        eps_r,
        gentle_bound: 2.0 * eps_r,
        y_r,
        f_exact,
        f_trunc,
        diff: (f_trunc - f_exact).abs(),
    })
}

/// Evaluates `|f(Λ_r(ρ)) − f(ρ)|` along `r_grid`, with the envelope `Y_r`
/// computed from the marginals of `ρ` when `envelope` is given.
pub fn theorem1_experiment(
    rho: &DensityOp,
    f: &StateFunction<'_>,
    subset: &[usize],
    r_grid: &[usize],
    map: TruncationMap,
    envelope: Option<&EnvelopeInputs>,
) -> Result<ApproxReport> {
    let f_exact = f(rho)?;
    let rows = r_grid
        .iter()
        .map(|&r| theorem1_row(rho, f, f_exact, subset, r, map, envelope))
        .collect::<Result<Vec<_>>>()?;
    let mut sorted = subset.to_vec();
    sorted.sort_unstable();
    Ok(ApproxReport { subset: sorted, map, rows })
}

/// Local channels for the product-channel experiments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Channel {
    Identity,
    /// `ϱ ↦ (1−p)ϱ + p Tr(ϱ) I/d`
    Depolarizing(f64),
    /// `ϱ ↦ (1−p)ϱ + p diag(ϱ)`
    Dephasing(f64),
}

impl Channel {
    pub fn kraus(&self, d: usize) -> Vec<CMat> {
        let id = CMat::identity(d, d);
        match *self {
            Channel::Identity => vec![id],
            Channel::Depolarizing(p) => {
                // (1/d²) Σ_ab W_ab ϱ W_ab† = Tr(ϱ) I/d for the Weyl operators W_ab = X^a Z^b
                let mut ops = vec![id * C64::new((1.0 - p).sqrt(), 0.0)];
                let scale = p.sqrt() / d as f64;
                for a in 0..d {
                    for b in 0..d {
                        let w = CMat::from_fn(d, d, |i, j| {
                            if i == (j + a) % d {
                                C64::from_polar(1.0, 2.0 * std::f64::consts::PI * (b * j) as f64 / d as f64)
                            } else {
                                C64::new(0.0, 0.0)
                            }
                        });
                        ops.push(w * C64::new(scale, 0.0));
                    }
                }
                ops
            }
            Channel::Dephasing(p) => {
                let mut ops = vec![id * C64::new((1.0 - p).sqrt(), 0.0)];
                for k in 0..d {
                    let mut e = CMat::zeros(d, d);
                    e[(k, k)] = C64::new(p.sqrt(), 0.0);
                    ops.push(e);
                }
                ops
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Channel::Depolarizing(p) | Channel::Dephasing(p) if !(0.0..=1.0).contains(&p) => {
                Err(QsepError::InvalidArgument(format!("channel parameter {p} outside [0,1]")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Channel::Identity => write!(f, "identity"),
            Channel::Depolarizing(p) => write!(f, "depolarizing:{p}"),
            Channel::Dephasing(p) => write!(f, "dephasing:{p}"),
        }
    }
}

impl FromStr for Channel {
    type Err = QsepError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, arg) = s.split_once(':').unwrap_or((s, ""));
        let param = || arg.parse::<f64>().map_err(|e| QsepError::Parse(format!("channel '{s}': {e}")));
        let ch = match head {
            "identity" | "id" => Channel::Identity,
            "depolarizing" => Channel::Depolarizing(param()?),
            "dephasing" => Channel::Dephasing(param()?),
            other => return Err(QsepError::Parse(format!("unknown channel '{other}'"))),
        };
        ch.validate()?;
        Ok(ch)
    }
}

/// `Φ_1 ⊗ … ⊗ Φ_n (ρ)`.
pub fn apply_product_channel(rho: &DensityOp, channels: &[Channel]) -> Result<DensityOp> {
    let sig = rho.sig();
    if channels.len() != sig.parties() {
        return Err(QsepError::DimensionMismatch(format!(
            "{} channels for {} subsystems",
            channels.len(),
            sig.parties()
        )));
    }
    let mut mat = rho.mat().clone();
    for (s, ch) in channels.iter().enumerate() {
        ch.validate()?;
        if *ch != Channel::Identity {
            mat = apply_local_kraus(&mat, sig, s, &ch.kraus(sig.dims()[s]));
        }
    }
    Ok(DensityOp::from_hermitian_unchecked(sig.clone(), mat))
}

/// `‖Q² − Q‖_F`.
pub fn projector_defect(q: &CMat) -> f64 {
    (q * q - q).norm()
}

/// Spectrum of a marginal, nonincreasing.
pub fn marginal_spectrum(rho: &DensityOp, s: usize) -> Result<Vec<f64>> {
    Ok(eigh(partial_trace(rho, &[s])?.mat())?.values)
}
