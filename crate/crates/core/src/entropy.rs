//! Von Neumann entropy, relative entropy and the quantities built from them.
//! All logarithms are natural.

use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{QsepError, Result};
use crate::qmat::{eigh, kron, partial_trace, sig_mismatch, CMat, DensityOp, Partition};

/// Eigenvalue threshold separating the support from the null space.
pub const SUPPORT_TOL: f64 = 1e-9;

/// A nonnegative quantity that may be infinite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EntropyValue {
    Finite(f64),
    Infinite,
}

impl EntropyValue {
    pub fn is_finite(self) -> bool {
        matches!(self, EntropyValue::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            EntropyValue::Finite(v) => Some(v),
            EntropyValue::Infinite => None,
        }
    }

    /// The value as an `f64`, with `+inf` for the infinite marker.
    pub fn to_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl fmt::Display for EntropyValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntropyValue::Finite(v) => write!(f, "{v}"),
            EntropyValue::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for EntropyValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            EntropyValue::Finite(v) => s.serialize_f64(*v),
            EntropyValue::Infinite => s.serialize_str("inf"),
        }
    }
}

/// `η(x) = −x ln x`, with `η(0) = 0`.
pub fn eta(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -x * x.ln()
    }
}

/// Shannon entropy of a list of eigenvalues; nonpositive entries contribute 0.
pub fn spectrum_entropy(values: &[f64]) -> f64 {
    values.iter().map(|&x| eta(x)).sum()
}

pub fn von_neumann_entropy(rho: &DensityOp) -> f64 {
    spectrum_entropy(&rho.eigh().values)
}

/// Entropy of the reduced state on `keep`.
pub fn marginal_entropy(rho: &DensityOp, keep: &[usize]) -> Result<f64> {
    Ok(von_neumann_entropy(&partial_trace(rho, keep)?))
}

/// `h₂(p) = η(p) + η(1−p)`.
pub fn binary_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(QsepError::InvalidArgument(format!("binary entropy argument {p} outside [0,1]")));
    }
    Ok(eta(p) + eta(1.0 - p))
}

/// `g(x) = (x+1) ln(x+1) − x ln x`, with `g(0) = 0`.
pub fn g_func(x: f64) -> Result<f64> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(QsepError::InvalidArgument(format!("g argument {x} must be finite and >= 0")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    Ok((x + 1.0) * x.ln_1p() - x * x.ln())
}

/// `D(ρ‖σ) = Tr ρ(ln ρ − ln σ)`, or the infinite marker when the support of
/// `ρ` is not contained in that of `σ`.
pub fn relative_entropy(rho: &DensityOp, sigma: &DensityOp) -> Result<EntropyValue> {
    if rho.sig() != sigma.sig() {
        return Err(sig_mismatch(rho.sig(), sigma.sig()));
    }
    relative_entropy_matrices(rho.mat(), sigma.mat())
}

/// Matrix-level form of [`relative_entropy`] for PSD inputs of equal size.
pub fn relative_entropy_matrices(rho: &CMat, sigma: &CMat) -> Result<EntropyValue> {
    if rho.shape() != sigma.shape() {
        return Err(QsepError::DimensionMismatch(format!(
            "{:?} and {:?} matrices",
            rho.shape(),
            sigma.shape()
        )));
    }
    let r = eigh(rho)?;
    let s = eigh(sigma)?;
    let null: Vec<usize> = (0..s.dim()).filter(|&j| s.values[j] <= SUPPORT_TOL).collect();
    if !null.is_empty() {
        for (i, &lam) in r.values.iter().enumerate() {
            if lam <= SUPPORT_TOL {
                continue;
            }
            let v = r.vectors.column(i);
            let leak: f64 = null.iter().map(|&j| s.vectors.column(j).dotc(&v).norm_sqr()).sum();
            if leak >= SUPPORT_TOL {
                return Ok(EntropyValue::Infinite);
            }
        }
    }
    // Tr ρ ln σ evaluated in σ's eigenbasis
    let rotated = s.vectors.adjoint() * rho * &s.vectors;
    let cross: f64 = (0..s.dim())
        .filter(|&j| s.values[j] > SUPPORT_TOL)
        .map(|j| rotated[(j, j)].re * s.values[j].ln())
        .sum();
    let value = -spectrum_entropy(&r.values) - cross;
    Ok(EntropyValue::Finite(value))
}

/// `S(A|B) = S(ρ_A) − D(ρ‖ρ_A⊗ρ_B)` on a bipartite state, with `a` the
/// index (0 or 1) of the conditioned subsystem.
pub fn conditional_entropy_ext(rho: &DensityOp, a: usize) -> Result<f64> {
    if rho.sig().parties() != 2 {
        return Err(QsepError::InvalidArgument(format!(
            "conditional entropy needs a bipartite state, got {} parties",
            rho.sig().parties()
        )));
    }
    if a > 1 {
        return Err(QsepError::InvalidArgument(format!("subsystem {a} is not 0 or 1")));
    }
    let r0 = partial_trace(rho, &[0])?;
    let r1 = partial_trace(rho, &[1])?;
    let s_a = von_neumann_entropy(if a == 0 { &r0 } else { &r1 });
    let product = kron(r0.mat(), r1.mat());
    match relative_entropy_matrices(rho.mat(), &product)? {
        EntropyValue::Finite(d) => Ok(s_a - d),
        EntropyValue::Infinite => Err(QsepError::Divergent(
            "state support escapes the product of its marginals".into(),
        )),
    }
}

/// `I(A₁:…:A_n) = Σ_s S(ρ_{A_s}) − S(ρ)`, where each `A_s` is a group of
/// subsystems.
pub fn mutual_information(rho: &DensityOp, groups: &Partition) -> Result<f64> {
    if groups.parties() != rho.sig().parties() {
        return Err(QsepError::InvalidArgument(format!(
            "grouping covers {} subsystems, state has {}",
            groups.parties(),
            rho.sig().parties()
        )));
    }
    let mut total = -von_neumann_entropy(rho);
    for g in groups.groups() {
        total += marginal_entropy(rho, g)?;
    }
    Ok(total)
}

/// Mutual information between all subsystems, each its own party.
pub fn total_correlation(rho: &DensityOp) -> Result<f64> {
    mutual_information(rho, &Partition::finest(rho.sig().parties()))
}

/// Terms of the chain `I(A_{n−1}:A_n) + I(A_{n−2}:A_{n−1}A_n) + …`, ordered
/// from the first subsystem: entry `k` is `I(A_k : A_{k+1}…A_n)`.
pub fn chain_rule_terms(rho: &DensityOp) -> Result<Vec<f64>> {
    let n = rho.sig().parties();
    let mut terms = Vec::with_capacity(n.saturating_sub(1));
    for k in 0..n.saturating_sub(1) {
        let tail: Vec<usize> = (k..n).collect();
        let reduced = partial_trace(rho, &tail)?;
        let split = Partition::new(vec![vec![0], (1..n - k).collect()], n - k)?;
        terms.push(mutual_information(&reduced, &split)?);
    }
    Ok(terms)
}
