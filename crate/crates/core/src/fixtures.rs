//! Named states and spectra shared by the tests, the acceptance suite and the CLI.

use crate::error::{QsepError, Result};
use crate::qmat::{CVec, DensityOp, DimSig, C64};
use crate::spectra::SpectrumFamily;

/// Geometric ratio of the marginals of [`gibbs_ghz`]: the Gibbs state of
/// `h_i = i − 1` at `β = ln 1000`.
pub const GHZ_GIBBS_Q: f64 = 1e-3;
/// Inverse temperature of the marginals of [`gibbs_pair`].
pub const PAIR_GIBBS_BETA: f64 = 6.0;

/// Bumped whenever a fixture's definition changes.
pub const FIXTURE_VERSION: u32 = 1;

pub const NAMES: [(&str, &str); 11] = [
    ("bell", "two-qubit maximally entangled state (|00> + |11>)/sqrt2"),
    ("product", "two-qubit product |0>|+>"),
    ("classical-pair", "two-qubit separable mixture (|00><00| + |11><11|)/2"),
    ("ghz", "three-qubit GHZ state"),
    ("w", "three-qubit W state (|001> + |010> + |100>)/sqrt3"),
    ("mixed", "two-qubit maximally mixed state I/4"),
    ("gibbs-product", "3x3 product gamma x gamma, gamma the Gibbs state of h_i = i-1 at beta = 1"),
    ("werner", "two-qubit Werner-type mixture 0.8 Bell + 0.2 I/4"),
    ("ghz-gibbs", "three 6-level parties, 0.8 |psi><psi| + 0.2 gamma^3 with psi = sum sqrt(l_i)|iii>, l geometric(1e-3)"),
    ("gibbs-pair", "3x3 state 0.9 |psi><psi| + 0.1 gamma^2 with psi = sum sqrt(l_i)|ii>, l Gibbs of h_i = i-1 at beta = 6"),
    ("remark1", "spectrum c / (j ln^3 j (ln ln j)^2), j = i + 9"),
];

fn qubits(n: usize) -> DimSig {
    DimSig::new(vec![2; n]).expect("qubit signature")
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn bell() -> DensityOp {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let psi = CVec::from_vec(vec![c(s), c(0.0), c(0.0), c(s)]);
    DensityOp::pure(qubits(2), &psi).expect("unit vector")
}

pub fn product() -> DensityOp {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let psi = CVec::from_vec(vec![c(s), c(s), c(0.0), c(0.0)]);
    DensityOp::pure(qubits(2), &psi).expect("unit vector")
}

pub fn classical_pair() -> DensityOp {
    DensityOp::diagonal(qubits(2), &[0.5, 0.0, 0.0, 0.5]).expect("probabilities")
}

pub fn ghz(n: usize) -> Result<DensityOp> {
    if n < 2 {
        return Err(QsepError::InvalidArgument(format!("GHZ needs at least 2 parties, got {n}")));
    }
    let d = 1usize << n;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut psi = CVec::zeros(d);
    psi[0] = c(s);
    psi[d - 1] = c(s);
    DensityOp::pure(qubits(n), &psi)
}

pub fn w_state() -> DensityOp {
    let s = 1.0 / 3f64.sqrt();
    let mut psi = CVec::zeros(8);
    for i in [1, 2, 4] {
        psi[i] = c(s);
    }
    DensityOp::pure(qubits(3), &psi).expect("unit vector")
}

pub fn werner() -> DensityOp {
    bell().mix(0.8, &DensityOp::maximally_mixed(qubits(2))).expect("same signature")
}

/// `(1 − noise)|ψ⟩⟨ψ| + noise·γ^{⊗n}` with `ψ = Σ_i √λ_i |i…i⟩`: every
/// marginal equals `γ = diag(λ)` exactly.
pub fn correlated_with_marginal(parties: usize, lambda: &[f64], noise: f64) -> Result<DensityOp> {
    if parties < 2 {
        return Err(QsepError::InvalidArgument("need at least two parties".into()));
    }
    if !(0.0..=1.0).contains(&noise) {
        return Err(QsepError::InvalidArgument(format!("noise {noise} outside [0,1]")));
    }
    let total: f64 = lambda.iter().sum();
    if lambda.is_empty() || lambda.iter().any(|&x| x < 0.0) || total <= 0.0 {
        return Err(QsepError::InvalidArgument("marginal spectrum must be a nonzero distribution".into()));
    }
    let lambda: Vec<f64> = lambda.iter().map(|x| x / total).collect();
    let d = lambda.len();
    let sig = DimSig::new(vec![d; parties])?;
    let mut psi = CVec::zeros(sig.total());
    for (i, &l) in lambda.iter().enumerate() {
        psi[sig.flat(&vec![i; parties])] = c(l.sqrt());
    }
    let pure = DensityOp::pure(sig.clone(), &psi)?;
    let gamma = DensityOp::diagonal(DimSig::single(d)?, &lambda)?;
    let mut product = gamma.clone();
    for _ in 1..parties {
        product = product.tensor(&gamma);
    }
    pure.mix(1.0 - noise, &product)
}

pub fn gibbs_product() -> DensityOp {
    let gamma = truncated_geometric((-1f64).exp(), 3);
    let g = DensityOp::diagonal(DimSig::single(3).expect("dimension"), &gamma).expect("probabilities");
    g.tensor(&g)
}

/// Normalised `1, q, q², …` of length `d`.
pub fn truncated_geometric(q: f64, d: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..d).map(|i| q.powi(i as i32)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Three 6-level parties whose marginals are the truncated geometric
/// spectrum with ratio [`GHZ_GIBBS_Q`].
pub fn gibbs_ghz() -> DensityOp {
    correlated_with_marginal(3, &truncated_geometric(GHZ_GIBBS_Q, 6), 0.2).expect("valid fixture")
}

/// A 3⊗3 entangled mixture whose marginals are the Gibbs state of the
/// three-level ladder `h = (0, 1, 2)` at [`PAIR_GIBBS_BETA`].
pub fn gibbs_pair() -> DensityOp {
    let q = (-PAIR_GIBBS_BETA).exp();
    correlated_with_marginal(2, &truncated_geometric(q, 3), 0.1).expect("valid fixture")
}

/// `λ_i ∝ [j ln³ j (ln ln j)²]^{−1}`, `j = i + 9`: finite `Σλ_i ln² i`,
/// divergent `Σλ_i ln^q i` for every `q > 2`.
pub fn remark1() -> SpectrumFamily {
    SpectrumFamily::power_log(3.0, 2.0, 10).expect("normalisable family")
}

/// A named state fixture.
pub fn state(name: &str) -> Result<DensityOp> {
    match name {
        "bell" => Ok(bell()),
        "product" => Ok(product()),
        "classical-pair" => Ok(classical_pair()),
        "ghz" => ghz(3),
        "w" => Ok(w_state()),
        "mixed" => Ok(DensityOp::maximally_mixed(qubits(2))),
        "gibbs-product" => Ok(gibbs_product()),
        "werner" => Ok(werner()),
        "ghz-gibbs" => Ok(gibbs_ghz()),
        "gibbs-pair" => Ok(gibbs_pair()),
        "remark1" => Err(QsepError::InvalidArgument("remark1 is a spectrum, not a state".into())),
        other => Err(QsepError::InvalidArgument(format!("unknown fixture '{other}'"))),
    }
}

/// A named spectrum fixture.
pub fn spectrum(name: &str) -> Result<SpectrumFamily> {
    match name {
        "remark1" => Ok(remark1()),
        "ghz-gibbs" => SpectrumFamily::geometric(GHZ_GIBBS_Q),
        "gibbs-pair" => SpectrumFamily::geometric((-PAIR_GIBBS_BETA).exp()),
        other => Err(QsepError::InvalidArgument(format!("no spectrum fixture '{other}'"))),
    }
}
