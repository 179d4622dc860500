//! Dense complex linear algebra for multipartite states.
//!
//! Matrices are `nalgebra::DMatrix<Complex<f64>>`. Subsystem `s` of a
//! signature `(d_0, .., d_{n-1})` is indexed from zero and the first
//! subsystem is the most significant digit of the row index.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{QsepError, Result};

pub use nalgebra::Complex;

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Hermiticity tolerance enforced on validated states.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Most negative eigenvalue accepted in a validated state.
pub const POSITIVITY_TOL: f64 = 1e-10;
/// Allowed deviation of the trace of a validated state from one.
pub const TRACE_TOL: f64 = 1e-10;
/// Hermiticity tolerance for the eigensolver input.
pub const EIGH_TOL: f64 = 1e-8;

const TIE_TOL: f64 = 1e-10;

/// Local dimensions of a multipartite system.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DimSig {
    dims: Vec<usize>,
}

impl DimSig {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(QsepError::InvalidArgument("empty dimension signature".into()));
        }
        if dims.contains(&0) {
            return Err(QsepError::InvalidArgument(format!(
                "local dimensions must be positive, got {dims:?}"
            )));
        }
        Ok(Self { dims })
    }

    /// Single-party signature of dimension `d`.
    pub fn single(d: usize) -> Result<Self> {
        Self::new(vec![d])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn parties(&self) -> usize {
        self.dims.len()
    }

    pub fn total(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn concat(&self, other: &DimSig) -> DimSig {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        DimSig { dims }
    }

    /// Signature restricted to the listed subsystems, in the listed order.
    pub fn select(&self, parts: &[usize]) -> DimSig {
        DimSig { dims: parts.iter().map(|&s| self.dims[s]).collect() }
    }

    /// Row-major strides of each subsystem.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.dims.len()];
        for s in (0..self.dims.len().saturating_sub(1)).rev() {
            strides[s] = strides[s + 1] * self.dims[s + 1];
        }
        strides
    }

    /// Multi-index of a flat basis index.
    pub fn digits(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for s in (0..self.dims.len()).rev() {
            out[s] = index % self.dims[s];
            index /= self.dims[s];
        }
        out
    }

    pub fn flat(&self, digits: &[usize]) -> usize {
        digits.iter().zip(&self.dims).fold(0, |acc, (&i, &d)| acc * d + i)
    }
}

/// A partition of the subsystems into nonempty disjoint groups.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition {
    groups: Vec<Vec<usize>>,
}

impl Partition {
    /// Validates that `groups` partition `0..parties`. Indices inside a group
    /// are sorted; group order is kept.
    pub fn new(groups: Vec<Vec<usize>>, parties: usize) -> Result<Self> {
        if groups.is_empty() || groups.iter().any(|g| g.is_empty()) {
            return Err(QsepError::InvalidArgument("partition has an empty group".into()));
        }
        let mut seen = vec![false; parties];
        for &s in groups.iter().flatten() {
            if s >= parties {
                return Err(QsepError::InvalidArgument(format!(
                    "subsystem {s} out of range for {parties} parties"
                )));
            }
            if seen[s] {
                return Err(QsepError::InvalidArgument(format!("subsystem {s} appears twice")));
            }
            seen[s] = true;
        }
        if let Some(missing) = seen.iter().position(|&b| !b) {
            return Err(QsepError::InvalidArgument(format!("subsystem {missing} not covered")));
        }
        let groups = groups
            .into_iter()
            .map(|mut g| {
                g.sort_unstable();
                g
            })
            .collect();
        Ok(Self { groups })
    }

    /// Every subsystem in its own group.
    pub fn finest(parties: usize) -> Self {
        Self { groups: (0..parties).map(|s| vec![s]).collect() }
    }

    /// All subsystems in one group.
    pub fn trivial(parties: usize) -> Self {
        Self { groups: vec![(0..parties).collect()] }
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn parties(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    /// Factor order that makes each group contiguous.
    pub fn order(&self) -> Vec<usize> {
        self.groups.iter().flatten().copied().collect()
    }

    /// Signature with one merged factor per group.
    pub fn group_sig(&self, sig: &DimSig) -> DimSig {
        DimSig {
            dims: self.groups.iter().map(|g| g.iter().map(|&s| sig.dims[s]).product()).collect(),
        }
    }

    /// True when every group of `self` lies inside a group of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        self.groups
            .iter()
            .all(|g| coarser.groups.iter().any(|c| g.iter().all(|s| c.contains(s))))
    }
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues in descending order.
#[derive(Clone, Debug)]
pub struct SpectralDecomp {
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns.
    pub vectors: CMat,
}

impl SpectralDecomp {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `V f(Λ) V†`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> CMat {
        let n = self.dim();
        let mut scaled = self.vectors.clone();
        for (j, &lam) in self.values.iter().enumerate() {
            let w = f(lam);
            for i in 0..n {
                scaled[(i, j)] *= w;
            }
        }
        &scaled * self.vectors.adjoint()
    }

    pub fn reconstruct(&self) -> CMat {
        self.map(|x| x)
    }

    pub fn vector(&self, j: usize) -> CVec {
        self.vectors.column(j).into_owned()
    }
}

/// A validated density operator with its dimension signature.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOp {
    sig: DimSig,
    mat: CMat,
}

impl DensityOp {
    /// Validates Hermiticity, positivity and unit trace.
    pub fn new(sig: DimSig, mat: CMat) -> Result<Self> {
        check_shape(&sig, &mat)?;
        let residual = hermitian_residual(&mat);
        if residual > HERMITIAN_TOL {
            return Err(QsepError::NotHermitian { residual });
        }
        let trace = mat.trace().re;
        if (trace - 1.0).abs() > TRACE_TOL {
            return Err(QsepError::BadTrace { trace });
        }
        let min_eigenvalue = eigh(&mat)?.values.last().copied().unwrap_or(0.0);
        if min_eigenvalue < -POSITIVITY_TOL {
            return Err(QsepError::NotPositive { min_eigenvalue });
        }
        Ok(Self { sig, mat })
    }

    /// Builds a state from an approximately valid matrix: Hermitian part,
    /// negative eigenvalues clipped to zero, trace renormalised.
    pub fn sanitized(sig: DimSig, mat: CMat) -> Result<Self> {
        check_shape(&sig, &mat)?;
        let mut herm = hermitian_part(&mat);
        let dec = eigh(&herm)?;
        if dec.values.last().is_some_and(|&v| v < 0.0) {
            herm = dec.map(|x| x.max(0.0));
        }
        let trace = herm.trace().re;
        if trace <= 0.0 || !trace.is_finite() {
            return Err(QsepError::BadTrace { trace });
        }
        herm /= C64::new(trace, 0.0);
        Ok(Self { sig, mat: herm })
    }

    pub fn pure(sig: DimSig, psi: &CVec) -> Result<Self> {
        if psi.len() != sig.total() {
            return Err(QsepError::DimensionMismatch(format!(
                "vector of length {} for signature {:?}",
                psi.len(),
                sig.dims()
            )));
        }
        let norm = psi.norm();
        if norm == 0.0 {
            return Err(QsepError::InvalidArgument("zero vector".into()));
        }
        let v = psi.unscale(norm);
        Ok(Self { sig, mat: outer(&v) })
    }

    pub fn diagonal(sig: DimSig, probs: &[f64]) -> Result<Self> {
        if probs.len() != sig.total() {
            return Err(QsepError::DimensionMismatch(format!(
                "{} diagonal entries for total dimension {}",
                probs.len(),
                sig.total()
            )));
        }
        if probs.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(QsepError::InvalidArgument("negative or non-finite probability".into()));
        }
        let total: f64 = probs.iter().sum();
        if total <= 0.0 {
            return Err(QsepError::BadTrace { trace: total });
        }
        let diag = CVec::from_iterator(probs.len(), probs.iter().map(|&p| C64::new(p / total, 0.0)));
        Ok(Self { sig, mat: CMat::from_diagonal(&diag) })
    }

    /// Wraps a matrix already known to be a state (up to rounding), taking its Hermitian part.
    pub(crate) fn from_hermitian_unchecked(sig: DimSig, mat: CMat) -> Self {
        Self { sig, mat: hermitian_part(&mat) }
    }

    pub fn maximally_mixed(sig: DimSig) -> Self {
        let d = sig.total();
        let mat = CMat::identity(d, d) / C64::new(d as f64, 0.0);
        Self { sig, mat }
    }

    pub fn sig(&self) -> &DimSig {
        &self.sig
    }

    pub fn mat(&self) -> &CMat {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn into_parts(self) -> (DimSig, CMat) {
        (self.sig, self.mat)
    }

    pub fn tensor(&self, other: &DensityOp) -> DensityOp {
        DensityOp { sig: self.sig.concat(&other.sig), mat: kron(&self.mat, &other.mat) }
    }

    pub fn purity(&self) -> f64 {
        (&self.mat * &self.mat).trace().re
    }

    pub fn eigh(&self) -> SpectralDecomp {
        eigh(&self.mat).expect("validated density operator is Hermitian")
    }

    /// `p·self + (1-p)·other`.
    pub fn mix(&self, p: f64, other: &DensityOp) -> Result<DensityOp> {
        if self.sig != other.sig {
            return Err(sig_mismatch(&self.sig, &other.sig));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(QsepError::InvalidArgument(format!("mixing weight {p} outside [0,1]")));
        }
        let mat = &self.mat * C64::new(p, 0.0) + &other.mat * C64::new(1.0 - p, 0.0);
        Ok(DensityOp { sig: self.sig.clone(), mat })
    }

    /// Same matrix under a different signature with equal total dimension.
    pub fn with_sig(&self, sig: DimSig) -> Result<DensityOp> {
        check_shape(&sig, &self.mat)?;
        Ok(DensityOp { sig, mat: self.mat.clone() })
    }

    pub fn to_json(&self) -> MatrixJson {
        MatrixJson::from_matrix(self.sig.dims(), &self.mat)
    }

    pub fn from_json(doc: &MatrixJson) -> Result<Self> {
        let (sig, mat) = doc.to_matrix()?;
        Self::new(sig, mat)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("matrix serialisation")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let doc: MatrixJson = serde_json::from_str(s).map_err(|e| QsepError::Parse(e.to_string()))?;
        Self::from_json(&doc)
    }
}

/// On-disk matrix format: `{"dims":[..],"re":[[..]],"im":[[..]]}`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub dims: Vec<usize>,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl MatrixJson {
    pub fn from_matrix(dims: &[usize], m: &CMat) -> Self {
        let rows = |f: fn(&C64) -> f64| {
            (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect()).collect()
        };
        MatrixJson { dims: dims.to_vec(), re: rows(|z| z.re), im: rows(|z| z.im) }
    }

    pub fn to_matrix(&self) -> Result<(DimSig, CMat)> {
        let sig = DimSig::new(self.dims.clone())?;
        let n = sig.total();
        let square = |rows: &Vec<Vec<f64>>| rows.len() == n && rows.iter().all(|r| r.len() == n);
        if !square(&self.re) || !square(&self.im) {
            return Err(QsepError::DimensionMismatch(format!(
                "dims {:?} require {n}x{n} re/im blocks (got {} re rows, {} im rows)",
                self.dims,
                self.re.len(),
                self.im.len()
            )));
        }
        let mat = CMat::from_fn(n, n, |i, j| C64::new(self.re[i][j], self.im[i][j]));
        Ok((sig, mat))
    }
}

fn check_shape(sig: &DimSig, mat: &CMat) -> Result<()> {
    let n = sig.total();
    if mat.nrows() != n || mat.ncols() != n {
        return Err(QsepError::DimensionMismatch(format!(
            "{}x{} matrix for signature {:?} (total {n})",
            mat.nrows(),
            mat.ncols(),
            sig.dims()
        )));
    }
    Ok(())
}

pub(crate) fn sig_mismatch(a: &DimSig, b: &DimSig) -> QsepError {
    QsepError::DimensionMismatch(format!("signatures {:?} and {:?} differ", a.dims(), b.dims()))
}

/// `|v><v|`.
pub fn outer(v: &CVec) -> CMat {
    v * v.adjoint()
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Largest entry of `|M - M†|`.
pub fn hermitian_residual(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Kronecker product.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Spectral decomposition of a Hermitian matrix.
///
/// Eigenvalues come back in descending order. Eigenvectors inside a cluster
/// of (numerically) equal eigenvalues are replaced by the Gram–Schmidt
/// orthonormalisation of the cluster projector applied to the standard basis
/// vectors, taken in increasing index order. Every eigenvector is phased so
/// that its leading component is real and positive. The output therefore
/// depends only on the eigenspaces, not on the internals of the solver.
pub fn eigh(m: &CMat) -> Result<SpectralDecomp> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(QsepError::DimensionMismatch(format!("{}x{} matrix is not square", n, m.ncols())));
    }
    let scale = m.iter().fold(1.0f64, |acc, z| acc.max(z.norm()));
    let residual = hermitian_residual(m);
    if residual > EIGH_TOL * scale {
        return Err(QsepError::NotHermitian { residual });
    }
    if n == 0 {
        return Ok(SpectralDecomp { values: vec![], vectors: CMat::zeros(0, 0) });
    }
    let raw = hermitian_part(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| raw.eigenvalues[b].total_cmp(&raw.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&k| raw.eigenvalues[k]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (j, &k) in order.iter().enumerate() {
        vectors.set_column(j, &raw.eigenvectors.column(k));
    }

    let tol = TIE_TOL * scale;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[end - 1] - values[end] <= tol {
            end += 1;
        }
        if end - start > 1 {
            canonicalize_cluster(&mut vectors, start, end);
        } else {
            let mut col = vectors.column(start).into_owned();
            fix_phase(&mut col);
            vectors.set_column(start, &col);
        }
        start = end;
    }
    Ok(SpectralDecomp { values, vectors })
}

fn canonicalize_cluster(vectors: &mut CMat, start: usize, end: usize) {
    let n = vectors.nrows();
    let block = vectors.columns(start, end - start).into_owned();
    // projector onto the part of the cluster not yet spanned by `chosen`
    let mut rest = &block * block.adjoint();
    let mut chosen: Vec<CVec> = Vec::with_capacity(end - start);
    let threshold = 0.5 / n as f64;
    // Each pass picks the lowest basis index whose residual is large enough;
    // the remaining projector has trace >= 1, so some index always qualifies.
    while chosen.len() < end - start {
        let (idx, norm2) = (0..n)
            .map(|idx| (idx, rest.column(idx).norm_squared()))
            .find(|&(_, norm2)| norm2 >= threshold)
            .expect("cluster projector has a qualifying basis vector");
        let mut v = rest.column(idx).unscale(norm2.sqrt());
        let phase = v[idx] / C64::new(v[idx].norm(), 0.0);
        v /= phase;
        rest -= &v * v.adjoint();
        chosen.push(v);
    }
    for (j, v) in chosen.into_iter().enumerate() {
        vectors.set_column(start + j, &v);
    }
}

fn fix_phase(v: &mut CVec) {
    let mut best = 0;
    let mut best_norm = -1.0;
    for (i, z) in v.iter().enumerate() {
        if z.norm() > best_norm + 1e-12 {
            best = i;
            best_norm = z.norm();
        }
    }
    if best_norm > 0.0 {
        let phase = v[best] / C64::new(best_norm, 0.0);
        *v /= phase;
    }
}

/// Sum of the absolute eigenvalues of a Hermitian matrix.
pub fn trace_norm(m: &CMat) -> f64 {
    eigh(m).map(|d| d.values.iter().map(|v| v.abs()).sum()).unwrap_or(f64::NAN)
}

/// `½‖ρ − σ‖₁`.
pub fn trace_distance(rho: &DensityOp, sigma: &DensityOp) -> Result<f64> {
    if rho.sig != sigma.sig {
        return Err(sig_mismatch(&rho.sig, &sigma.sig));
    }
    let diff = &rho.mat - &sigma.mat;
    Ok(0.5 * trace_norm(&diff))
}

/// Reduced state on the listed subsystems (output keeps the original order).
pub fn partial_trace(rho: &DensityOp, keep: &[usize]) -> Result<DensityOp> {
    let (sig, mat) = partial_trace_matrix(rho.mat(), rho.sig(), keep)?;
    Ok(DensityOp { sig, mat })
}

/// Partial trace of an arbitrary operator.
pub fn partial_trace_matrix(m: &CMat, sig: &DimSig, keep: &[usize]) -> Result<(DimSig, CMat)> {
    if keep.is_empty() {
        return Err(QsepError::EmptyKeep);
    }
    let mut kept = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if kept.len() != keep.len() {
        return Err(QsepError::InvalidArgument(format!("repeated subsystem in {keep:?}")));
    }
    if let Some(&bad) = kept.iter().find(|&&s| s >= sig.parties()) {
        return Err(QsepError::InvalidArgument(format!(
            "subsystem {bad} out of range for {} parties",
            sig.parties()
        )));
    }
    if m.nrows() != sig.total() {
        return Err(QsepError::DimensionMismatch(format!(
            "{}x{} matrix for total dimension {}",
            m.nrows(),
            m.ncols(),
            sig.total()
        )));
    }
    let traced: Vec<usize> = (0..sig.parties()).filter(|s| !kept.contains(s)).collect();
    let table = split_index_table(sig, &kept, &traced);
    let dk = table.len();
    let dt = table.first().map_or(1, |r| r.len());
    let mut out = CMat::zeros(dk, dk);
    for a in 0..dk {
        for b in 0..dk {
            let mut acc = C64::new(0.0, 0.0);
            for t in 0..dt {
                acc += m[(table[a][t], table[b][t])];
            }
            out[(a, b)] = acc;
        }
    }
    Ok((sig.select(&kept), out))
}

/// `table[a][t]` is the flat index whose digits on `first` spell `a` and
/// whose digits on `second` spell `t`. The two lists must partition the
/// subsystems.
pub(crate) fn split_index_table(sig: &DimSig, first: &[usize], second: &[usize]) -> Vec<Vec<usize>> {
    let strides = sig.strides();
    let offsets = |parts: &[usize]| -> Vec<usize> {
        let sub = sig.select(parts);
        (0..sub.total())
            .map(|flat| {
                sub.digits(flat).iter().zip(parts).map(|(&digit, &s)| digit * strides[s]).sum()
            })
            .collect()
    };
    let a_off = offsets(first);
    let t_off = if second.is_empty() { vec![0] } else { offsets(second) };
    a_off.iter().map(|&a| t_off.iter().map(|&t| a + t).collect()).collect()
}

/// Reorders the tensor factors: output factor `k` is input factor `perm[k]`.
pub fn permute_subsystems(m: &CMat, sig: &DimSig, perm: &[usize]) -> Result<(DimSig, CMat)> {
    let map = permutation_map(sig, perm)?;
    let n = map.len();
    let mut out = CMat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = m[(map[i], map[j])];
        }
    }
    Ok((sig.select(perm), out))
}

/// `map[new_index] = old_index` for a factor permutation.
pub fn permutation_map(sig: &DimSig, perm: &[usize]) -> Result<Vec<usize>> {
    let mut check = perm.to_vec();
    check.sort_unstable();
    if check != (0..sig.parties()).collect::<Vec<_>>() {
        return Err(QsepError::InvalidArgument(format!("{perm:?} is not a permutation")));
    }
    let new_sig = sig.select(perm);
    let strides = sig.strides();
    Ok((0..new_sig.total())
        .map(|flat| new_sig.digits(flat).iter().zip(perm).map(|(&d, &s)| d * strides[s]).sum())
        .collect())
}

/// `I ⊗ … ⊗ A ⊗ … ⊗ I` with `A` on factor `party`.
pub fn embed_local(a: &CMat, sig: &DimSig, party: usize) -> CMat {
    let mut out = CMat::identity(1, 1);
    for (s, &d) in sig.dims().iter().enumerate() {
        let factor = if s == party { a.clone() } else { CMat::identity(d, d) };
        out = kron(&out, &factor);
    }
    out
}

/// `(A_party ⊗ I) M` without forming the embedded operator.
pub fn local_left_multiply(a: &CMat, m: &CMat, sig: &DimSig, party: usize) -> CMat {
    let d = sig.dims()[party];
    let stride = sig.strides()[party];
    let n = m.nrows();
    let mut out = CMat::zeros(n, m.ncols());
    for j in 0..m.ncols() {
        for i in 0..n {
            let digit = (i / stride) % d;
            let base = i - digit * stride;
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..d {
                let coeff = a[(digit, k)];
                if coeff != C64::new(0.0, 0.0) {
                    acc += coeff * m[(base + k * stride, j)];
                }
            }
            out[(i, j)] = acc;
        }
    }
    out
}

/// `Σ_k (K_k ⊗ I) M (K_k ⊗ I)†` for Kraus operators acting on factor `party`.
pub fn apply_local_kraus(m: &CMat, sig: &DimSig, party: usize, kraus: &[CMat]) -> CMat {
    let n = m.nrows();
    let mut out = CMat::zeros(n, n);
    for k in kraus {
        let left = local_left_multiply(k, m, sig, party);
        let both = local_left_multiply(k, &left.adjoint(), sig, party).adjoint();
        out += both;
    }
    out
}

/// Rank-`r` projector onto the eigenvectors of the `r` largest eigenvalues.
pub fn top_projector(rho_marginal: &DensityOp, r: usize) -> Result<CMat> {
    top_projector_from(&rho_marginal.eigh(), r)
}

pub fn top_projector_from(dec: &SpectralDecomp, r: usize) -> Result<CMat> {
    let d = dec.dim();
    if r == 0 || r > d {
        return Err(QsepError::InvalidArgument(format!("projector rank {r} outside 1..={d}")));
    }
    let block = dec.vectors.columns(0, r);
    Ok(block * block.adjoint())
}

pub(crate) fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) fn gaussian_complex<R: rand::Rng>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im)
}

/// Haar-random unit vector.
pub fn random_unit_vector<R: rand::Rng>(dim: usize, rng: &mut R) -> CVec {
    let v = CVec::from_fn(dim, |_, _| gaussian_complex(rng));
    let norm = v.norm();
    v.unscale(norm)
}

/// Random state `GG†/Tr GG†` with `G` a complex Ginibre matrix of `rank` columns.
pub fn random_density(sig: &DimSig, rank: usize, seed: u64) -> Result<DensityOp> {
    let d = sig.total();
    if rank == 0 || rank > d {
        return Err(QsepError::InvalidArgument(format!("rank {rank} outside 1..={d}")));
    }
    let mut rng = rng_from_seed(seed);
    let g = CMat::from_fn(d, rank, |_, _| gaussian_complex(&mut rng));
    let mut m = &g * g.adjoint();
    let tr = m.trace();
    m /= tr;
    DensityOp::sanitized(sig.clone(), m)
}

/// Haar-random pure state.
pub fn random_pure(sig: &DimSig, seed: u64) -> DensityOp {
    let mut rng = rng_from_seed(seed);
    let psi = random_unit_vector(sig.total(), &mut rng);
    DensityOp { sig: sig.clone(), mat: outer(&psi) }
}
