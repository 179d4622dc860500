//! Symbolic spectra and Hamiltonians of idealised infinite-dimensional
//! states, with tail-corrected sums and the convergence tests built on them.
//!
//! Indices are 1-based throughout, matching `λ_1 ≥ λ_2 ≥ …` and
//! `h_1 ≤ h_2 ≤ …`. Infinite sums are split into a direct part over the first
//! few thousand indices and an integral tail in `u = ln x`.

use std::fmt;
use std::str::FromStr;

use crate::error::{QsepError, Result};
use crate::qmat::{DensityOp, DimSig};
use crate::quad::{ln_integral, log_add};

/// Direct-summation cutoff before an integral tail takes over.
pub const DIRECT_TERMS: usize = 4096;
/// Minimum number of directly summed terms.
const DIRECT_FLOOR: usize = 64;
/// A direct term below this fraction of the running sum ends the summation.
const NEGLIGIBLE: f64 = 1e-17;
/// Hard stop for direct summation of fast-decaying kinds.
const DIRECT_LIMIT: usize = 50_000_000;
/// `ln 10^12`: beyond this abscissa power-log tails use the closed form.
const CLOSED_FORM_FROM: f64 = 27.631_021_115_928_547;
/// Largest `u = ln i` at which witness blocks are still located.
pub const WITNESS_U_CAP: f64 = 1e7;
/// Maximal number of witness blocks.
pub const WITNESS_MAX_BLOCKS: usize = 60;

/// Default inverse temperatures for [`zeta_limit`].
pub const DEFAULT_BETAS: [f64; 5] = [0.2, 0.1, 0.05, 0.02, 0.01];

/// Weight attached to each term of a partition-type sum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Weight {
    One,
    /// `ln^w i`
    LogPow(f64),
    /// `h_i`
    Energy,
}

impl Weight {
    fn ln_at(self, u: f64, h: f64) -> f64 {
        match self {
            Weight::One => 0.0,
            Weight::LogPow(w) if w == 0.0 => 0.0,
            Weight::LogPow(w) => {
                if u <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    w * u.ln()
                }
            }
            Weight::Energy => {
                if h <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    h.ln()
                }
            }
        }
    }
}

/// Asymptotic growth of a Hamiltonian's levels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Growth {
    /// Finitely many levels.
    Finite(usize),
    /// `h_i ~ a·ln^p i`.
    Slow { a: f64, p: f64 },
    /// At least linear in `i`.
    Fast,
}

#[derive(Clone, Debug, PartialEq)]
pub enum HamKind {
    Explicit(Vec<f64>),
    LogPower { a: f64, p: f64 },
    Linear { omega: f64 },
    Squared(Box<HamiltonianSpec>),
    Witness(FAWitness),
}

/// A diagonal positive operator `H = Σ h_i |τ_i⟩⟨τ_i|` with nondecreasing
/// levels `h_i = offset + base_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianSpec {
    kind: HamKind,
    offset: f64,
}

/// Log partition function and mean energy at one inverse temperature.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GibbsSums {
    pub ln_z: f64,
    pub mean: f64,
}

impl GibbsSums {
    /// Entropy `β⟨h⟩ + ln Z` of the Gibbs state.
    pub fn entropy(&self, beta: f64) -> f64 {
        if beta == 0.0 {
            self.ln_z
        } else {
            beta * self.mean + self.ln_z
        }
    }
}

impl HamiltonianSpec {
    pub fn explicit(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(QsepError::InvalidArgument("empty level list".into()));
        }
        if levels.iter().any(|h| !h.is_finite() || *h < 0.0) {
            return Err(QsepError::InvalidArgument("levels must be finite and nonnegative".into()));
        }
        if levels.windows(2).any(|w| w[1] < w[0]) {
            return Err(QsepError::InvalidArgument("levels must be nondecreasing".into()));
        }
        Ok(Self { kind: HamKind::Explicit(levels), offset: 0.0 })
    }

    /// `h_i = a·ln^p i`.
    pub fn log_power(a: f64, p: f64) -> Result<Self> {
        if !(a > 0.0 && p > 0.0 && a.is_finite() && p.is_finite()) {
            return Err(QsepError::InvalidArgument(format!("log-power needs a > 0, p > 0 (got a={a}, p={p})")));
        }
        Ok(Self { kind: HamKind::LogPower { a, p }, offset: 0.0 })
    }

    /// `h_i = ω(i − 1)`.
    pub fn linear(omega: f64) -> Result<Self> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(QsepError::InvalidArgument(format!("linear spacing must be positive, got {omega}")));
        }
        Ok(Self { kind: HamKind::Linear { omega }, offset: 0.0 })
    }

    /// `H²`, levels `h_i²`.
    pub fn squared(inner: &HamiltonianSpec) -> Self {
        Self { kind: HamKind::Squared(Box::new(inner.clone())), offset: 0.0 }
    }

    /// The witness sequence `g_i` used as a Hamiltonian.
    pub fn witness(w: &FAWitness) -> Self {
        Self { kind: HamKind::Witness(w.clone()), offset: 0.0 }
    }

    pub fn with_offset(mut self, offset: f64) -> Result<Self> {
        if !(offset >= 0.0 && offset.is_finite()) {
            return Err(QsepError::InvalidArgument(format!("offset must be finite and >= 0, got {offset}")));
        }
        self.offset = offset;
        Ok(self)
    }

    pub fn kind(&self) -> &HamKind {
        &self.kind
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Number of levels, `None` for infinitely many.
    pub fn dim(&self) -> Option<usize> {
        match self.growth() {
            Growth::Finite(n) => Some(n),
            _ => None,
        }
    }

    pub fn ground(&self) -> f64 {
        self.level(1)
    }

    /// `h_i` for `i ≥ 1`; `+inf` past the last level of an explicit list.
    pub fn level(&self, i: usize) -> f64 {
        debug_assert!(i >= 1);
        let base = match &self.kind {
            HamKind::Explicit(v) => v.get(i - 1).copied().unwrap_or(f64::INFINITY),
            HamKind::LogPower { a, p } => a * (i as f64).ln().powf(*p),
            HamKind::Linear { omega } => omega * (i - 1) as f64,
            HamKind::Squared(inner) => inner.level(i).powi(2),
            HamKind::Witness(w) => w.g(i),
        };
        self.offset + base
    }

    /// The first `d` levels.
    pub fn levels(&self, d: usize) -> Vec<f64> {
        (1..=d).map(|i| self.level(i)).collect()
    }

    /// Continuous interpolation `h(e^u)` used by integral tails.
    fn level_u(&self, u: f64) -> f64 {
        let base = match &self.kind {
            HamKind::Explicit(_) => f64::INFINITY,
            HamKind::LogPower { a, p } => a * u.powf(*p),
            HamKind::Linear { omega } => omega * u.exp_m1(),
            HamKind::Squared(inner) => inner.level_u(u).powi(2),
            HamKind::Witness(w) => w.g_u(u),
        };
        self.offset + base
    }

    fn breaks(&self) -> &[f64] {
        match &self.kind {
            HamKind::Witness(w) => w.starts(),
            HamKind::Squared(inner) => inner.breaks(),
            _ => &[],
        }
    }

    pub fn growth(&self) -> Growth {
        match &self.kind {
            HamKind::Explicit(v) => Growth::Finite(v.len()),
            HamKind::LogPower { a, p } => Growth::Slow { a: *a, p: *p },
            HamKind::Linear { .. } => Growth::Fast,
            HamKind::Squared(inner) => match inner.growth() {
                Growth::Slow { a, p } => Growth::Slow { a: a * a, p: 2.0 * p },
                other => other,
            },
            HamKind::Witness(_) => Growth::Slow { a: 1.0, p: 2.0 },
        }
    }

    /// Infimum of the inverse temperatures at which `Tr e^{−βH}` is finite.
    /// The partition function is finite for every `β` strictly above it
    /// (and at `β = 0` only for finitely many levels).
    pub fn beta_threshold(&self) -> f64 {
        match self.growth() {
            Growth::Finite(_) | Growth::Fast => 0.0,
            Growth::Slow { p, .. } if p > 1.0 => 0.0,
            Growth::Slow { a, p } if p == 1.0 => 1.0 / a,
            Growth::Slow { .. } => f64::INFINITY,
        }
    }

    fn partition_finite(&self, beta: f64) -> bool {
        match self.growth() {
            Growth::Finite(_) => true,
            _ => beta > self.beta_threshold(),
        }
    }

    /// `ln Σ_{i ≥ from} w_i e^{−β h_i}`, over the first `upto` levels when
    /// given, otherwise over all levels with an integral tail for slowly
    /// growing kinds. Returns `+inf` for a divergent sum and `−inf` for an
    /// empty one.
    pub fn ln_sum(&self, beta: f64, from: usize, upto: Option<usize>, weight: Weight) -> f64 {
        self.ln_sum_with_cutoff(beta, from, upto, weight, DIRECT_TERMS)
    }

    pub fn ln_sum_with_cutoff(
        &self,
        beta: f64,
        from: usize,
        upto: Option<usize>,
        weight: Weight,
        cutoff: usize,
    ) -> f64 {
        let from = from.max(1);
        let last = match (self.growth(), upto) {
            (Growth::Finite(n), Some(d)) => Some(n.min(d)),
            (Growth::Finite(n), None) => Some(n),
            (_, d) => d,
        };
        if let Some(last) = last {
            if from > last {
                return f64::NEG_INFINITY;
            }
            let ground = self.level(from);
            let mut acc = 0.0;
            for i in from..=last {
                let h = self.level(i);
                acc += (weight.ln_at((i as f64).ln(), h) - beta * (h - ground)).exp();
            }
            return acc.ln() - beta * ground;
        }
        if !self.partition_finite(beta) {
            return f64::INFINITY;
        }
        if let (HamKind::Linear { omega }, Weight::One | Weight::Energy) = (&self.kind, weight) {
            return self.ln_linear_tail(beta, *omega, from, weight);
        }
        let ground = self.level(from);
        let slow = matches!(self.growth(), Growth::Slow { .. });
        let mut acc = 0.0;
        let mut i = from;
        loop {
            let h = self.level(i);
            let term = (weight.ln_at((i as f64).ln(), h) - beta * (h - ground)).exp();
            acc += term;
            i += 1;
            let settled = i >= from + DIRECT_FLOOR && acc > 0.0 && term < NEGLIGIBLE * acc;
            if settled && !slow {
                return acc.ln() - beta * ground;
            }
            if settled || (slow && i >= cutoff.max(from + DIRECT_FLOOR)) {
                break;
            }
            if i >= DIRECT_LIMIT {
                return f64::INFINITY;
            }
        }
        let tail = self.ln_tail_integral(beta, i as f64, weight, ground);
        log_add(acc.ln(), tail) - beta * ground
    }

    /// `ln Σ_{i ≥ x} w_i e^{−β h_i}` for a real starting point; large `x`
    /// are handled by the integral tail alone.
    pub fn ln_sum_from(&self, beta: f64, x: f64, weight: Weight) -> f64 {
        if x < DIRECT_TERMS as f64 {
            return self.ln_sum(beta, first_index_at_least(x), None, weight);
        }
        match self.growth() {
            Growth::Slow { .. } => {
                if !self.partition_finite(beta) {
                    return f64::INFINITY;
                }
                let ground = self.level_u(x.ln());
                self.ln_tail_integral(beta, x, weight, ground) - beta * ground
            }
            _ if x < 1e15 => self.ln_sum(beta, first_index_at_least(x), None, weight),
            _ => f64::NEG_INFINITY,
        }
    }

    /// `ln ∫_{x−½}^∞ w(t) e^{−β(h(t) − ground)} dt` in the variable `u = ln t`.
    fn ln_tail_integral(&self, beta: f64, x: f64, weight: Weight, ground: f64) -> f64 {
        let phi = |u: f64| {
            let h = self.level_u(u);
            u - beta * (h - ground) + weight.ln_at(u, h)
        };
        ln_integral(&phi, (x - 0.5).ln(), None, self.breaks())
    }

    fn ln_linear_tail(&self, beta: f64, omega: f64, from: usize, weight: Weight) -> f64 {
        // levels h = offset + ω n for n = m, m+1, ...
        let m = (from - 1) as f64;
        let ground = self.offset + omega * m;
        let one_minus_q = -(-beta * omega).exp_m1();
        let q = 1.0 - one_minus_q;
        let value = match weight {
            Weight::One => 1.0 / one_minus_q,
            _ => ground / one_minus_q + omega * q / (one_minus_q * one_minus_q),
        };
        value.ln() - beta * ground
    }

    /// Partition function and mean energy, truncated to `dim` levels when given.
    pub fn sums(&self, beta: f64, dim: Option<usize>) -> Result<GibbsSums> {
        let ln_z = self.ln_sum(beta, 1, dim, Weight::One);
        if !ln_z.is_finite() {
            return Err(QsepError::Divergent(format!("partition function of {self} at beta = {beta}")));
        }
        let ln_e = self.ln_sum(beta, 1, dim, Weight::Energy);
        let mean = if ln_e == f64::NEG_INFINITY { 0.0 } else { (ln_e - ln_z).exp() };
        Ok(GibbsSums { ln_z, mean })
    }
}

/// Smallest integer `i ≥ 1` with `i ≥ x`.
fn first_index_at_least(x: f64) -> usize {
    if x <= 1.0 {
        1
    } else {
        x.ceil() as usize
    }
}

/// Smallest integer `i ≥ 1` with `ln i ≥ u`, exact for `u` obtained as `ln` of an integer.
fn first_index_with_log_at_least(u: f64) -> usize {
    if u <= 0.0 {
        return 1;
    }
    let mut i = (u.exp() - 1e-6).ceil().max(1.0) as usize;
    while (i as f64).ln() < u {
        i += 1;
    }
    while i > 1 && ((i - 1) as f64).ln() >= u {
        i -= 1;
    }
    i
}

impl fmt::Display for HamiltonianSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            HamKind::Explicit(v) => write!(f, "hamexplicit:{}", list_literal(v))?,
            HamKind::LogPower { a, p } => write!(f, "hamlogp:a={a},p={p}")?,
            HamKind::Linear { omega } => write!(f, "hamlinear:w={omega}")?,
            HamKind::Squared(inner) => write!(f, "hamsq:{inner}")?,
            HamKind::Witness(w) => write!(f, "hamwitness:blocks={}", w.starts.len())?,
        }
        if self.offset != 0.0 {
            write!(f, ",offset={}", self.offset)?;
        }
        Ok(())
    }
}

fn list_literal(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    format!("[{}]", items.join(","))
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    let inner = s
        .trim()
        .strip_prefix('[')
        .and_then(|t| t.strip_suffix(']'))
        .ok_or_else(|| QsepError::Parse(format!("expected [..] list, got '{s}'")))?;
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| QsepError::Parse(format!("'{t}': {e}"))))
        .collect()
}

/// Parses `k=v,k=v` into pairs.
fn parse_params(s: &str) -> Result<Vec<(String, f64)>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| QsepError::Parse(format!("expected key=value, got '{kv}'")))?;
            let v = v.trim().parse::<f64>().map_err(|e| QsepError::Parse(format!("'{kv}': {e}")))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

fn take(params: &[(String, f64)], key: &str) -> Option<f64> {
    params.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
}

fn require(params: &[(String, f64)], key: &str, literal: &str) -> Result<f64> {
    take(params, key).ok_or_else(|| QsepError::Parse(format!("'{literal}' is missing '{key}'")))
}

fn reject_unknown(params: &[(String, f64)], allowed: &[&str], literal: &str) -> Result<()> {
    match params.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
        Some((k, _)) => Err(QsepError::Parse(format!("unknown parameter '{k}' in '{literal}'"))),
        None => Ok(()),
    }
}

impl FromStr for HamiltonianSpec {
    type Err = QsepError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, rest) = s
            .split_once(':')
            .ok_or_else(|| QsepError::Parse(format!("Hamiltonian literal '{s}' has no kind prefix")))?;
        match head {
            "hamsq" => Ok(HamiltonianSpec::squared(&rest.parse()?)),
            "hamexplicit" => {
                let (list, tail) = match rest.rfind(']') {
                    Some(end) => (&rest[..=end], rest[end + 1..].trim_start_matches(',')),
                    None => return Err(QsepError::Parse(format!("'{s}' needs a [..] list"))),
                };
                let params = parse_params(tail)?;
                reject_unknown(&params, &["offset"], s)?;
                HamiltonianSpec::explicit(parse_list(list)?)?.with_offset(take(&params, "offset").unwrap_or(0.0))
            }
            "hamlogp" => {
                let params = parse_params(rest)?;
                reject_unknown(&params, &["a", "p", "offset"], s)?;
                HamiltonianSpec::log_power(require(&params, "a", s)?, require(&params, "p", s)?)?
                    .with_offset(take(&params, "offset").unwrap_or(0.0))
            }
            "hamlinear" => {
                let params = parse_params(rest)?;
                reject_unknown(&params, &["w", "offset"], s)?;
                HamiltonianSpec::linear(require(&params, "w", s)?)?
                    .with_offset(take(&params, "offset").unwrap_or(0.0))
            }
            other => Err(QsepError::Parse(format!("unknown Hamiltonian kind '{other}'"))),
        }
    }
}

/// Decay class `λ_i ~ i^{−s} ln^{−q} i (ln ln i)^{−p}` of a symbolic spectrum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TailClass {
    Finite,
    /// Faster than any power of `i`.
    Fast,
    Power { s: f64, q: f64, p: f64 },
}

impl TailClass {
    /// Whether `Σ λ_i ln^w i` converges, by integral comparison.
    pub fn converges_with_log_weight(self, w: f64) -> bool {
        match self {
            TailClass::Finite | TailClass::Fast => true,
            TailClass::Power { s, q, p } => {
                if s != 1.0 {
                    return s > 1.0;
                }
                let q = q - w;
                q > 1.0 || (q == 1.0 && p > 1.0)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FamilyKind {
    Explicit(Vec<f64>),
    /// `λ_i = (1−q) q^{i−1}`.
    Geometric { q: f64 },
    /// `λ_i = c / (j ln^q j (ln ln j)^p)` with `j = i + i0 − 1`.
    PowerLog { q: f64, p: f64, i0: usize },
    /// `λ_i = e^{−β h_i} / Z`.
    GibbsOf { h: HamiltonianSpec, beta: f64 },
}

/// A nonincreasing probability sequence, normalised on construction.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumFamily {
    kind: FamilyKind,
    /// Sum of the unnormalised weights (the log partition function for `GibbsOf`).
    norm: f64,
}

impl SpectrumFamily {
    pub fn explicit(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(QsepError::InvalidArgument("explicit spectrum needs finite nonnegative entries".into()));
        }
        if values.windows(2).any(|w| w[1] > w[0] + 1e-15) {
            return Err(QsepError::InvalidArgument("explicit spectrum must be nonincreasing".into()));
        }
        let norm: f64 = values.iter().sum();
        if norm <= 0.0 {
            return Err(QsepError::InvalidArgument("explicit spectrum sums to zero".into()));
        }
        Ok(Self { kind: FamilyKind::Explicit(values), norm })
    }

    pub fn geometric(q: f64) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(QsepError::InvalidArgument(format!("geometric ratio {q} outside (0,1)")));
        }
        Ok(Self { kind: FamilyKind::Geometric { q }, norm: 1.0 })
    }

    /// `λ_i ∝ 1 / (j ln^q j (ln ln j)^p)`, `j = i + i0 − 1`.
    pub fn power_log(q: f64, p: f64, i0: usize) -> Result<Self> {
        if !(q >= 1.0 && p >= 0.0 && q.is_finite() && p.is_finite()) {
            return Err(QsepError::InvalidArgument(format!("power-log needs q >= 1, p >= 0 (got q={q}, p={p})")));
        }
        if i0 < 2 || (p != 0.0 && i0 < 3) {
            return Err(QsepError::InvalidArgument(format!(
                "power-log start index {i0} too small (needs ln i0 > 0, and ln ln i0 > 0 when p != 0)"
            )));
        }
        if !(TailClass::Power { s: 1.0, q, p }).converges_with_log_weight(0.0) {
            return Err(QsepError::Divergent(format!("power-log family q={q}, p={p} is not normalisable")));
        }
        let mut fam = Self { kind: FamilyKind::PowerLog { q, p, i0 }, norm: 1.0 };
        fam.norm = fam.raw_tail_from(1, 0.0);
        Ok(fam)
    }

    /// Gibbs spectrum of `h` at inverse temperature `beta`.
    pub fn gibbs_of(h: &HamiltonianSpec, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(QsepError::InvalidArgument(format!("inverse temperature {beta} must be positive")));
        }
        let ln_z = h.ln_sum(beta, 1, None, Weight::One);
        if !ln_z.is_finite() {
            return Err(QsepError::Divergent(format!("partition function of {h} at beta = {beta}")));
        }
        Ok(Self { kind: FamilyKind::GibbsOf { h: h.clone(), beta }, norm: ln_z })
    }

    pub fn kind(&self) -> &FamilyKind {
        &self.kind
    }

    /// Number of nonzero entries, `None` when infinite.
    pub fn len(&self) -> Option<usize> {
        match &self.kind {
            FamilyKind::Explicit(v) => Some(v.len()),
            FamilyKind::GibbsOf { h, .. } => h.dim(),
            _ => None,
        }
    }

    /// `λ_i`, 1-based.
    pub fn lambda(&self, i: usize) -> f64 {
        debug_assert!(i >= 1);
        match &self.kind {
            FamilyKind::Explicit(v) => v.get(i - 1).map_or(0.0, |x| x / self.norm),
            FamilyKind::Geometric { q } => (1.0 - q) * q.powi((i - 1) as i32),
            FamilyKind::PowerLog { q, p, i0 } => powlog_weight(*q, *p, (i + i0 - 1) as f64) / self.norm,
            FamilyKind::GibbsOf { h, beta } => {
                let level = h.level(i);
                if level.is_finite() {
                    (-beta * level - self.norm).exp()
                } else {
                    0.0
                }
            }
        }
    }

    pub fn tail_class(&self) -> Option<TailClass> {
        match &self.kind {
            FamilyKind::Explicit(_) => None,
            FamilyKind::Geometric { .. } => Some(TailClass::Fast),
            FamilyKind::PowerLog { q, p, .. } => Some(TailClass::Power { s: 1.0, q: *q, p: *p }),
            FamilyKind::GibbsOf { h, beta } => Some(match h.growth() {
                Growth::Finite(_) => TailClass::Finite,
                Growth::Fast => TailClass::Fast,
                Growth::Slow { p, .. } if p > 1.0 => TailClass::Fast,
                Growth::Slow { a, .. } => TailClass::Power { s: beta * a, q: 0.0, p: 0.0 },
            }),
        }
    }

    /// `Σ_{i ≤ n} λ_i ln^w i`.
    pub fn weighted_partial(&self, n: usize, w: f64) -> f64 {
        let n = self.len().map_or(n, |len| n.min(len));
        (1..=n).map(|i| self.lambda(i) * log_pow(i, w)).sum()
    }

    /// `Σ_{i ≥ from} λ_i ln^w i` (possibly `+inf`).
    pub fn weighted_tail(&self, from: usize, w: f64) -> f64 {
        let from = from.max(1);
        match &self.kind {
            FamilyKind::PowerLog { .. } => self.raw_tail_from(from, w) / self.norm,
            FamilyKind::GibbsOf { h, beta } => (h.ln_sum(*beta, from, None, Weight::LogPow(w)) - self.norm).exp(),
            FamilyKind::Explicit(v) => (from..=v.len()).map(|i| self.lambda(i) * log_pow(i, w)).sum(),
            FamilyKind::Geometric { .. } => {
                let mut acc = 0.0;
                let mut i = from;
                loop {
                    let term = self.lambda(i) * log_pow(i, w);
                    acc += term;
                    i += 1;
                    if term == 0.0 && self.lambda(i) == 0.0 {
                        break;
                    }
                    if i >= from + DIRECT_FLOOR && term < NEGLIGIBLE * acc {
                        break;
                    }
                }
                acc
            }
        }
    }

    /// `Σ_{i : ln i ≥ u} λ_i ln^w i`, for real `u` (continuous beyond the
    /// direct-summation range).
    pub fn weighted_tail_log(&self, u: f64, w: f64) -> f64 {
        if u < (DIRECT_TERMS as f64).ln() {
            return self.weighted_tail(first_index_with_log_at_least(u), w);
        }
        let x = u.exp();
        match &self.kind {
            FamilyKind::PowerLog { q, p, i0 } => powlog_tail(*q, *p, (i0 - 1) as f64, u, w) / self.norm,
            FamilyKind::GibbsOf { h, beta } => (h.ln_sum_from(*beta, x, Weight::LogPow(w)) - self.norm).exp(),
            FamilyKind::Explicit(v) => {
                if x > v.len() as f64 {
                    0.0
                } else {
                    self.weighted_tail(first_index_with_log_at_least(u), w)
                }
            }
            FamilyKind::Geometric { .. } => {
                if x < 1e15 {
                    self.weighted_tail(first_index_with_log_at_least(u), w)
                } else {
                    0.0
                }
            }
        }
    }

    /// `Σ_{i > r} λ_i`.
    pub fn tail_mass(&self, r: usize) -> f64 {
        self.weighted_tail(r + 1, 0.0)
    }

    /// Unnormalised power-log sum `Σ_{i ≥ from} f(i + i0 − 1) ln^w i`.
    fn raw_tail_from(&self, from: usize, w: f64) -> f64 {
        let FamilyKind::PowerLog { q, p, i0 } = self.kind else {
            unreachable!("raw power-log tail on another family")
        };
        let shift = (i0 - 1) as f64;
        let direct_end = DIRECT_TERMS.max(from);
        let direct: f64 = (from..direct_end).map(|i| powlog_weight(q, p, i as f64 + shift) * log_pow(i, w)).sum();
        direct + powlog_tail(q, p, shift, (direct_end as f64).ln(), w)
    }

    /// Diagonal state with the first `d` entries renormalised, together with
    /// the discarded weight `1 − Σ_{i ≤ d} λ_i`.
    pub fn truncate_to_density(&self, d: usize) -> Result<(DensityOp, f64)> {
        if d == 0 {
            return Err(QsepError::InvalidArgument("truncation dimension must be >= 1".into()));
        }
        let probs: Vec<f64> = (1..=d).map(|i| self.lambda(i)).collect();
        let discarded = self.tail_mass(d);
        let state = DensityOp::diagonal(DimSig::single(d)?, &probs)?;
        Ok((state, discarded))
    }
}

fn log_pow(i: usize, w: f64) -> f64 {
    if w == 0.0 {
        1.0
    } else {
        (i as f64).ln().powf(w)
    }
}

/// `1 / (x ln^q x (ln ln x)^p)`.
fn powlog_weight(q: f64, p: f64, x: f64) -> f64 {
    (-ln_powlog(q, p, x)).exp()
}

fn ln_powlog(q: f64, p: f64, x: f64) -> f64 {
    let l = x.ln();
    let mut out = l + q * l.ln();
    if p != 0.0 {
        out += p * l.ln().ln();
    }
    out
}

/// `Σ_{i : ln i ≥ u} f(i + shift) ln^w i` approximated by the midpoint-rule
/// integral `∫_{e^u − ½}^∞`, computed numerically in `u` up to `ln 10^12`
/// and in closed form (in `v = ln ln x`) beyond.
fn powlog_tail(q: f64, p: f64, shift: f64, u: f64, w: f64) -> f64 {
    let qq = q - w;
    if !(TailClass::Power { s: 1.0, q: qq, p }).converges_with_log_weight(0.0) {
        return f64::INFINITY;
    }
    let start = if u < CLOSED_FORM_FROM { (u.exp() - 0.5).ln() } else { u };
    let mut total = 0.0;
    let mut closed_from = start;
    if start < CLOSED_FORM_FROM {
        let phi = |t: f64| {
            let lw = if w == 0.0 { 0.0 } else { w * t.ln() };
            t - ln_powlog(q, p, t.exp() + shift) + lw
        };
        total += ln_integral(&phi, start, Some(CLOSED_FORM_FROM), &[]).exp();
        closed_from = CLOSED_FORM_FROM;
    }
    total + loglog_tail_integral(qq, p, closed_from.ln())
}

/// `∫_{v0}^∞ e^{−(q−1)v} v^{−p} dv`, i.e. `∫ dx / (x ln^q x (ln ln x)^p)` from `ln ln x = v0`.
fn loglog_tail_integral(q: f64, p: f64, v0: f64) -> f64 {
    if q < 1.0 {
        return f64::INFINITY;
    }
    if q == 1.0 {
        return if p > 1.0 { v0.powf(1.0 - p) / (p - 1.0) } else { f64::INFINITY };
    }
    let a = q - 1.0;
    if p == 0.0 {
        return (-a * v0).exp() / a;
    }
    let phi = |v: f64| -a * (v - v0) - p * v.ln();
    (ln_integral(&phi, v0, None, &[]) - a * v0).exp()
}

impl fmt::Display for SpectrumFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            FamilyKind::Explicit(v) => write!(f, "explicit:{}", list_literal(v)),
            FamilyKind::Geometric { q } => write!(f, "geometric:{q}"),
            FamilyKind::PowerLog { q, p, i0 } if *p == 0.0 => write!(f, "powlog:q={q},i0={i0}"),
            FamilyKind::PowerLog { q, p, i0 } => write!(f, "loglog:q={q},p={p},i0={i0}"),
            FamilyKind::GibbsOf { h, beta } => write!(f, "gibbs:beta={beta};{h}"),
        }
    }
}

impl FromStr for SpectrumFamily {
    type Err = QsepError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, rest) = s
            .split_once(':')
            .ok_or_else(|| QsepError::Parse(format!("family literal '{s}' has no kind prefix")))?;
        match head {
            "geometric" => {
                let q = rest.trim().parse::<f64>().map_err(|e| QsepError::Parse(format!("'{s}': {e}")))?;
                SpectrumFamily::geometric(q)
            }
            "powlog" | "loglog" => {
                let params = parse_params(rest)?;
                reject_unknown(&params, &["q", "p", "i0"], s)?;
                let i0 = require(&params, "i0", s)?;
                if i0.fract() != 0.0 || i0 < 1.0 {
                    return Err(QsepError::Parse(format!("'{s}': i0 must be a positive integer")));
                }
                let p = if head == "loglog" { require(&params, "p", s)? } else { take(&params, "p").unwrap_or(0.0) };
                SpectrumFamily::power_log(require(&params, "q", s)?, p, i0 as usize)
            }
            "explicit" => SpectrumFamily::explicit(parse_list(rest)?),
            "gibbs" => {
                let (beta_part, ham) = rest
                    .split_once(';')
                    .ok_or_else(|| QsepError::Parse(format!("'{s}': expected gibbs:beta=..;<hamiltonian>")))?;
                let params = parse_params(beta_part)?;
                reject_unknown(&params, &["beta"], s)?;
                SpectrumFamily::gibbs_of(&ham.parse()?, require(&params, "beta", s)?)
            }
            other => Err(QsepError::Parse(format!("unknown family kind '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Converges,
    Diverges,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Converges => "converges",
            Verdict::Diverges => "diverges",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// Analytic verdict on `Σ λ_i ln^w i` together with its partial sum.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct SeriesCheck {
    pub weight: f64,
    pub verdict: Verdict,
    pub partial: f64,
    pub terms: usize,
}

pub fn check_log_moment(s: &SpectrumFamily, w: f64, n_max: usize) -> SeriesCheck {
    let verdict = match s.tail_class() {
        None => Verdict::Inconclusive,
        Some(class) if class.converges_with_log_weight(w) => Verdict::Converges,
        Some(_) => Verdict::Diverges,
    };
    SeriesCheck { weight: w, verdict, partial: s.weighted_partial(n_max, w), terms: n_max }
}

/// Finite-entropy criterion `Σ λ_i ln i < ∞`.
pub fn check_entropy_criterion(s: &SpectrumFamily, n_max: usize) -> SeriesCheck {
    check_log_moment(s, 1.0, n_max)
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct FaCheck {
    /// `Σ λ_i ln² i`.
    pub sufficient: SeriesCheck,
    /// `Σ λ_i ln^q i` for the caller's `q > 2`.
    pub power: Option<SeriesCheck>,
}

pub fn check_fa_sufficient(s: &SpectrumFamily, n_max: usize, q: Option<f64>) -> FaCheck {
    FaCheck { sufficient: check_log_moment(s, 2.0, n_max), power: q.map(|q| check_log_moment(s, q, n_max)) }
}

/// Partition-function values `[Tr e^{−βH}]^β` and their extrapolation to `β → 0⁺`.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct ZetaReport {
    pub betas: Vec<f64>,
    /// `+inf` where the partition function diverges.
    pub values: Vec<f64>,
    pub extrapolated: f64,
}

/// Evaluates `[Σ_i e^{−β h_i}]^β` on `betas` (strictly decreasing, positive)
/// and extrapolates by fitting `L + aβ + bβ ln β` through the three smallest.
pub fn zeta_limit(h: &HamiltonianSpec, betas: &[f64], n_max: usize) -> Result<ZetaReport> {
    if betas.is_empty() {
        return Err(QsepError::InvalidArgument("empty beta list".into()));
    }
    if betas.iter().any(|&b| !(b > 0.0 && b.is_finite())) || betas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(QsepError::InvalidArgument("betas must be positive and strictly decreasing".into()));
    }
    let values: Vec<f64> = betas
        .iter()
        .map(|&b| {
            let ln_z = h.ln_sum_with_cutoff(b, 1, None, Weight::One, n_max.max(DIRECT_FLOOR));
            if ln_z.is_finite() {
                (b * ln_z).exp()
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let extrapolated = if values.iter().any(|v| v.is_infinite()) {
        f64::INFINITY
    } else if values.len() < 3 {
        *values.last().expect("nonempty")
    } else {
        let n = values.len();
        extrapolate_beta_log_beta(&betas[n - 3..], &values[n - 3..])
    };
    Ok(ZetaReport { betas: betas.to_vec(), values, extrapolated })
}

/// Intercept `L` of `value = L + aβ + bβ ln β` through three points.
fn extrapolate_beta_log_beta(betas: &[f64], values: &[f64]) -> f64 {
    let rows: Vec<[f64; 3]> = betas.iter().map(|&b| [1.0, b, b * b.ln()]).collect();
    let m = nalgebra::Matrix3::from_fn(|i, j| rows[i][j]);
    let rhs = nalgebra::Vector3::new(values[0], values[1], values[2]);
    m.lu().solve(&rhs).map_or(values[2], |sol| sol[0])
}

/// A sequence `g_i = c_i ln² i` with `c_i` increasing, piecewise constant on
/// blocks, and `Σ λ_i g_i < ∞` for the spectrum it was built from.
///
/// Block `k` (where `c_i = k`) starts where the remaining tail of
/// `Σ λ_j ln² j` first drops to `2^{−(k−1)}` of its total. Block starts
/// are stored as `u = ln i`; past the last located block `c_i` stays
/// constant.
#[derive(Clone, Debug, PartialEq)]
pub struct FAWitness {
    starts: Vec<f64>,
    energy: f64,
    first_tail: f64,
}

impl FAWitness {
    /// Block starts in `u = ln i`.
    pub fn starts(&self) -> &[f64] {
        &self.starts
    }

    /// `Σ λ_i g_i` for the family the witness was built from.
    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// `Σ λ_i ln² i` for the family the witness was built from.
    pub fn first_tail(&self) -> f64 {
        self.first_tail
    }

    pub fn coefficient_u(&self, u: f64) -> f64 {
        1.0 + self.starts.partition_point(|&s| s <= u) as f64
    }

    pub fn coefficient(&self, i: usize) -> f64 {
        self.coefficient_u((i as f64).ln())
    }

    /// `g_i`; `g_1 = 0`.
    pub fn g(&self, i: usize) -> f64 {
        let u = (i as f64).ln();
        self.coefficient_u(u) * u * u
    }

    fn g_u(&self, u: f64) -> f64 {
        self.coefficient_u(u) * u * u
    }

    /// `Σ λ_i g_i` for another spectrum, by `Σ_i λ_i c_i ln² i = T(1) + Σ_k T(start_k)`
    /// with `T(u)` the tail of `Σ λ_j ln² j` over `ln j ≥ u`.
    pub fn energy_for(&self, s: &SpectrumFamily) -> f64 {
        s.weighted_tail(1, 2.0) + self.starts.iter().map(|&u| s.weighted_tail_log(u, 2.0)).sum::<f64>()
    }

    pub fn as_hamiltonian(&self) -> HamiltonianSpec {
        HamiltonianSpec::witness(self)
    }
}

/// Builds the block witness for a family whose `Σ λ_i ln² i` is known to
/// converge. `n_max` bounds the integer range searched directly.
pub fn build_fa_witness(s: &SpectrumFamily, n_max: usize) -> Result<FAWitness> {
    let check = check_fa_sufficient(s, n_max, None).sufficient;
    if check.verdict != Verdict::Converges {
        return Err(QsepError::NoWitness(format!("sum of lambda_i ln^2 i for {s} is {}", check.verdict)));
    }
    let first_tail = s.weighted_tail(1, 2.0);
    if !first_tail.is_finite() {
        return Err(QsepError::NoWitness(format!("tail of {s} evaluates to {first_tail}")));
    }
    let n0 = n_max.clamp(DIRECT_FLOOR, DIRECT_TERMS);
    // T(i) for i = 1..=n0, built backwards from the tail at n0
    let mut tails = vec![0.0; n0 + 2];
    tails[n0 + 1] = s.weighted_tail(n0 + 1, 2.0);
    for i in (1..=n0).rev() {
        tails[i] = tails[i + 1] + s.lambda(i) * log_pow(i, 2.0);
    }
    let switch_u = ((n0 + 1) as f64).ln();
    let mut starts = Vec::new();
    let mut cursor = 1usize;
    for k in 1..WITNESS_MAX_BLOCKS {
        let target = first_tail * 0.5f64.powi(k as i32);
        while cursor <= n0 + 1 && tails[cursor] > target {
            cursor += 1;
        }
        let start = if cursor <= n0 {
            (cursor as f64).ln()
        } else {
            let tail_at = |u: f64| s.weighted_tail_log(u, 2.0);
            if tail_at(switch_u) <= target {
                switch_u
            } else {
                let mut lo = switch_u;
                let mut hi = 2.0 * switch_u;
                while tail_at(hi) > target {
                    lo = hi;
                    hi *= 2.0;
                    if lo > WITNESS_U_CAP {
                        break;
                    }
                }
                if lo > WITNESS_U_CAP {
                    break;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if tail_at(mid) > target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 1e-13 * hi {
                        break;
                    }
                }
                hi
            }
        };
        if start > WITNESS_U_CAP {
            break;
        }
        starts.push(start);
        if s.weighted_tail_log(start, 2.0) == 0.0 {
            break;
        }
    }
    let mut w = FAWitness { starts, energy: 0.0, first_tail };
    w.energy = w.energy_for(s);
    if !w.energy.is_finite() {
        return Err(QsepError::NoWitness(format!("witness energy for {s} is not finite")));
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn entropy_criterion_examples() {
        let geo = SpectrumFamily::geometric(0.5).unwrap();
        assert_eq!(check_entropy_criterion(&geo, 100).verdict, Verdict::Converges);
        // ∫ dx/(x ln x) = ln ln x diverges
        let q2 = SpectrumFamily::power_log(2.0, 0.0, 2).unwrap();
        assert_eq!(check_entropy_criterion(&q2, 100).verdict, Verdict::Diverges);
        // ∫ dx/(x ln² x) converges
        let q3 = SpectrumFamily::power_log(3.0, 0.0, 2).unwrap();
        assert_eq!(check_entropy_criterion(&q3, 100).verdict, Verdict::Converges);
        let ex = SpectrumFamily::explicit(vec![0.5, 0.5]).unwrap();
        let c = check_entropy_criterion(&ex, 10);
        assert_eq!(c.verdict, Verdict::Inconclusive);
        assert!((c.partial - 0.5 * LN_2).abs() < 1e-15);
    }

    #[test]
    fn fa_sufficient_examples() {
        let q4 = SpectrumFamily::power_log(4.0, 0.0, 2).unwrap();
        assert_eq!(check_fa_sufficient(&q4, 100, None).sufficient.verdict, Verdict::Converges);
        let q2 = SpectrumFamily::power_log(2.0, 0.0, 2).unwrap();
        assert_eq!(check_fa_sufficient(&q2, 100, None).sufficient.verdict, Verdict::Diverges);
        let borderline = SpectrumFamily::power_log(3.0, 2.0, 10).unwrap();
        for q in [2.5, 3.0] {
            let c = check_fa_sufficient(&borderline, 100, Some(q));
            assert_eq!(c.sufficient.verdict, Verdict::Converges);
            assert_eq!(c.power.unwrap().verdict, Verdict::Diverges);
        }
    }

    #[test]
    fn normalisation_matches_direct_oracle() {
        // oracle for q=4: ∫_{N-½}^∞ dx/(x ln⁴ x) = 1/(3 ln³(N-½)) added to a long direct sum
        let fam = SpectrumFamily::power_log(4.0, 0.0, 2).unwrap();
        let n = 200_000usize;
        let direct: f64 = (2..n).map(|j| 1.0 / (j as f64 * (j as f64).ln().powi(4))).sum();
        let tail = 1.0 / (3.0 * ((n as f64) - 0.5).ln().powi(3));
        let oracle = direct + tail;
        let c_inv = 1.0 / fam.lambda(1) * (1.0 / (2.0 * 2f64.ln().powi(4)));
        assert!((c_inv - oracle).abs() / oracle < 1e-8, "{c_inv} vs {oracle}");
        let total = fam.weighted_partial(1000, 0.0) + fam.tail_mass(1000);
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn loglog_normalisation_closed_form_tail() {
        // q=1, p=2: ∫ dx/(x ln x (ln ln x)²) = 1/ln ln x
        let fam = SpectrumFamily::power_log(1.0, 2.0, 16).unwrap();
        let n = 2_000_000usize;
        let f = |j: f64| 1.0 / (j * j.ln() * j.ln().ln().powi(2));
        let direct: f64 = (16..n).map(|j| f(j as f64)).sum();
        let oracle = direct + 1.0 / ((n as f64 - 0.5).ln().ln());
        let got = f(16.0) / fam.lambda(1);
        assert!((got - oracle).abs() / oracle < 1e-7, "{got} vs {oracle}");
    }

    #[test]
    fn geometric_tail_mass() {
        let fam = SpectrumFamily::geometric(0.5).unwrap();
        for r in 0..20 {
            assert!((fam.tail_mass(r) - 0.5f64.powi(r as i32)).abs() < 1e-15);
        }
    }

    #[test]
    fn truncate_examples() {
        let fam = SpectrumFamily::geometric(0.5).unwrap();
        let (rho, dropped) = fam.truncate_to_density(2).unwrap();
        assert!((rho.mat()[(0, 0)].re - 2.0 / 3.0).abs() < 1e-15);
        assert!((rho.mat()[(1, 1)].re - 1.0 / 3.0).abs() < 1e-15);
        assert!((dropped - 0.25).abs() < 1e-15);
        let ex = SpectrumFamily::explicit(vec![0.5, 0.3, 0.2]).unwrap();
        let (rho, dropped) = ex.truncate_to_density(3).unwrap();
        assert!((rho.mat()[(1, 1)].re - 0.3).abs() < 1e-15 && dropped == 0.0);
        let (rho, _) = SpectrumFamily::power_log(4.0, 0.0, 2).unwrap().truncate_to_density(1).unwrap();
        assert_eq!(rho.mat()[(0, 0)].re, 1.0);
    }

    #[test]
    fn linear_partition_closed_form() {
        let h = HamiltonianSpec::linear(1.0).unwrap();
        let s = h.sums(LN_2, None).unwrap();
        assert!((s.ln_z - 2f64.ln()).abs() < 1e-14);
        assert!((s.mean - 1.0).abs() < 1e-14);
        // direct route for comparison
        let direct: f64 = (0..200).map(|n| (-(n as f64) * LN_2).exp()).sum();
        assert!((s.ln_z - direct.ln()).abs() < 1e-14);
    }

    #[test]
    fn log_power_partition_matches_long_direct_sum() {
        let h = HamiltonianSpec::log_power(1.0, 2.0).unwrap();
        let beta = 0.2;
        // e^{-0.2 ln² i} is below 1e-20 once ln i > 15.2
        let direct: f64 = (1..5_000_000usize).map(|i| (-beta * (i as f64).ln().powi(2)).exp()).sum();
        let got = h.ln_sum(beta, 1, None, Weight::One);
        assert!((got - direct.ln()).abs() < 1e-7, "{got} vs {}", direct.ln());
    }

    #[test]
    fn p_series_partition() {
        // Σ i^{-2} = π²/6
        let h = HamiltonianSpec::log_power(1.0, 1.0).unwrap();
        let got = h.ln_sum(2.0, 1, None, Weight::One).exp();
        assert!((got - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-8);
        assert_eq!(h.ln_sum(0.9, 1, None, Weight::One), f64::INFINITY);
    }

    #[test]
    fn zeta_examples() {
        let cubic = HamiltonianSpec::log_power(1.0, 3.0).unwrap();
        let rep = zeta_limit(&cubic, &DEFAULT_BETAS, DIRECT_TERMS).unwrap();
        assert!((rep.extrapolated - 1.0).abs() < 0.02, "{rep:?}");

        let quad = HamiltonianSpec::log_power(4.0, 2.0).unwrap();
        let rep = zeta_limit(&quad, &DEFAULT_BETAS, DIRECT_TERMS).unwrap();
        assert!((rep.extrapolated - (1.0f64 / 16.0).exp()).abs() < 0.01, "{rep:?}");

        let log = HamiltonianSpec::log_power(1.0, 1.0).unwrap();
        assert_eq!(zeta_limit(&log, &DEFAULT_BETAS, DIRECT_TERMS).unwrap().extrapolated, f64::INFINITY);
        assert!(zeta_limit(&log, &[0.1, 0.2], 100).is_err());
    }

    #[test]
    fn zeta_decreases_when_scaled_up() {
        for p in [2.0, 3.0] {
            let h1 = HamiltonianSpec::log_power(1.0, p).unwrap();
            let h2 = HamiltonianSpec::log_power(2.0, p).unwrap();
            for &b in &DEFAULT_BETAS {
                let z1 = h1.ln_sum(b, 1, None, Weight::One);
                let z2 = h2.ln_sum(b, 1, None, Weight::One);
                assert!(z2 < z1);
            }
        }
    }

    #[test]
    fn witness_examples() {
        let geo = SpectrumFamily::geometric(0.5).unwrap();
        let w = build_fa_witness(&geo, 1000).unwrap();
        assert_eq!(w.g(1), 0.0);
        assert!(w.energy().is_finite() && w.energy() > 0.0);
        // energy identity against a direct sum
        let direct: f64 = (1..2000).map(|i| geo.lambda(i) * w.g(i)).sum();
        assert!((w.energy() - direct).abs() < 1e-12 * direct.max(1.0));

        let q2 = SpectrumFamily::power_log(2.0, 0.0, 2).unwrap();
        assert!(matches!(build_fa_witness(&q2, 1000), Err(QsepError::NoWitness(_))));
        let ex = SpectrumFamily::explicit(vec![0.6, 0.4]).unwrap();
        assert!(matches!(build_fa_witness(&ex, 10), Err(QsepError::NoWitness(_))));
    }

    #[test]
    fn witness_on_power_log_is_finite_and_increasing() {
        let fam = SpectrumFamily::power_log(4.0, 0.0, 2).unwrap();
        let w = build_fa_witness(&fam, DIRECT_TERMS).unwrap();
        assert!(w.energy().is_finite());
        // energy bounded by Σ_k k·2^{-(k-1)}·T₁ = 4T₁
        assert!(w.energy() <= 4.0 * w.first_tail() + 1e-12);
        assert!(w.starts().windows(2).all(|p| p[1] >= p[0]));
        // c_i = ln ln(i + e^e) grows slower than the block coefficient's
        // energy budget: Σ λ_i c_i ln² i is still finite by integral comparison
        let slow = |i: usize| (i as f64 + std::f64::consts::E.powf(std::f64::consts::E)).ln().ln();
        let partial: f64 = (1..DIRECT_TERMS).map(|i| fam.lambda(i) * slow(i) * log_pow(i, 2.0)).sum();
        assert!(partial.is_finite());
    }

    #[test]
    fn literals_round_trip() {
        for lit in ["geometric:0.5", "powlog:q=4,i0=2", "loglog:q=1,p=2,i0=16", "explicit:[0.5,0.3,0.2]"] {
            let fam: SpectrumFamily = lit.parse().unwrap();
            assert_eq!(fam.to_string(), lit);
        }
        for lit in ["hamlogp:a=4,p=2", "hamlinear:w=1", "hamexplicit:[0,1]", "hamsq:hamlinear:w=1"] {
            let h: HamiltonianSpec = lit.parse().unwrap();
            assert_eq!(h.to_string(), lit);
        }
        let g: SpectrumFamily = "gibbs:beta=0.6931471805599453;hamlinear:w=1".parse().unwrap();
        assert!((g.lambda(3) - 0.125).abs() < 1e-15);
        assert!("powlog:q=4".parse::<SpectrumFamily>().is_err());
        assert!("hamlogp:a=4,p=2,z=1".parse::<HamiltonianSpec>().is_err());
        assert!("nope:1".parse::<SpectrumFamily>().is_err());
    }

    #[test]
    fn implication_chain_on_shipped_families() {
        let fams = [
            SpectrumFamily::geometric(0.5).unwrap(),
            SpectrumFamily::power_log(4.0, 0.0, 2).unwrap(),
            SpectrumFamily::power_log(3.0, 2.0, 10).unwrap(),
            SpectrumFamily::power_log(2.0, 0.0, 2).unwrap(),
            SpectrumFamily::power_log(1.0, 2.0, 16).unwrap(),
            SpectrumFamily::gibbs_of(&HamiltonianSpec::log_power(1.0, 1.0).unwrap(), 1.5).unwrap(),
        ];
        for f in &fams {
            if check_fa_sufficient(f, 100, None).sufficient.verdict == Verdict::Converges {
                assert_eq!(check_entropy_criterion(f, 100).verdict, Verdict::Converges, "{f}");
            }
        }
    }
}
