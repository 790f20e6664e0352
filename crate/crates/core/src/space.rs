//! The inner-product space of `p×p` symmetric matrices.
//!
//! Matrices are compared through the normalized trace inner product
//! `⟨A, B⟩ = tr(ABᵀ)/p`. A list of matrices spans a subspace whose dimension
//! equals the rank of its Gram matrix; the averaged `k×k` principal minors of
//! that Gram matrix are positive up to the span dimension and vanish beyond it.
//! That sequence is the quantity the dimensionality test estimates.

use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, binomial, binomial_u128, Combinations, KahanSum};

/// Relative symmetry tolerance for matrices ingested from data.
pub const INGEST_SYMMETRY_TOL: f64 = 1e-12;

/// Relative eigenvalue floor below which a matrix is rejected as not PSD.
pub const PSD_TOL: f64 = 1e-10;

/// Auto strategy switches to the spectral route above this `C(q,k)·k³` cost.
pub const ENUMERATION_BUDGET: f64 = 1e7;

/// A dense real symmetric `p×p` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Wraps `m`, requiring exact symmetry.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        Self::check_shape(&m)?;
        for c in 0..m.ncols() {
            for r in (c + 1)..m.nrows() {
                if m[(r, c)] != m[(c, r)] {
                    return Err(Error::Domain(format!(
                        "matrix is not symmetric at ({r}, {c}): {} vs {}",
                        m[(r, c)],
                        m[(c, r)]
                    )));
                }
            }
        }
        Ok(SymMatrix(m))
    }

    /// Wraps data read from outside, tolerating asymmetry up to
    /// `1e-12·max|entry|` and symmetrizing the result.
    pub fn from_data(mut m: DMatrix<f64>) -> Result<Self> {
        Self::check_shape(&m)?;
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("matrix has non-finite entries".into()));
        }
        let tol = INGEST_SYMMETRY_TOL * m.amax();
        for c in 0..m.ncols() {
            for r in (c + 1)..m.nrows() {
                if (m[(r, c)] - m[(c, r)]).abs() > tol {
                    return Err(Error::Data(format!(
                        "matrix is not symmetric at ({r}, {c}): {} vs {}",
                        m[(r, c)],
                        m[(c, r)]
                    )));
                }
            }
        }
        linalg::symmetrize(&mut m);
        Ok(SymMatrix(m))
    }

    /// Builds a matrix from the upper triangle `f(r, c)` with `r ≤ c`.
    pub fn from_upper_fn(p: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(p >= 1, "dimension must be positive");
        let mut m = DMatrix::zeros(p, p);
        for c in 0..p {
            for r in 0..=c {
                let v = f(r, c);
                m[(r, c)] = v;
                m[(c, r)] = v;
            }
        }
        SymMatrix(m)
    }

    /// Wraps a matrix known to be symmetric up to rounding, averaging it
    /// with its transpose.
    pub(crate) fn from_computed(mut m: DMatrix<f64>) -> Self {
        linalg::symmetrize(&mut m);
        SymMatrix(m)
    }

    fn check_shape(m: &DMatrix<f64>) -> Result<()> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::Dimension("matrix dimension must be positive".into()));
        }
        Ok(())
    }

    pub fn identity(p: usize) -> Self {
        assert!(p >= 1, "dimension must be positive");
        SymMatrix(DMatrix::identity(p, p))
    }

    pub fn zeros(p: usize) -> Self {
        assert!(p >= 1, "dimension must be positive");
        SymMatrix(DMatrix::zeros(p, p))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// The indicator matrix of the `j`-th off-diagonal band, `(1{|r−s| = j})`.
    /// `band_indicator(p, 0)` is the identity.
    pub fn band_indicator(p: usize, j: usize) -> Self {
        Self::from_upper_fn(p, |r, c| if c - r == j { 1.0 } else { 0.0 })
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.0[(r, c)]
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn scaled(&self, w: f64) -> Self {
        SymMatrix(&self.0 * w)
    }

    /// `Σ coeffs[j]·mats[j]`.
    pub fn linear_combination(coeffs: &[f64], mats: &[&SymMatrix]) -> Result<Self> {
        if coeffs.len() != mats.len() {
            return Err(Error::Dimension(format!(
                "{} coefficients for {} matrices",
                coeffs.len(),
                mats.len()
            )));
        }
        let first = mats
            .first()
            .ok_or_else(|| Error::EmptyInput("linear combination of no matrices".into()))?;
        let p = first.dim();
        let mut out = DMatrix::zeros(p, p);
        for (&a, m) in coeffs.iter().zip(mats) {
            check_same_dim(first, m)?;
            if a != 0.0 {
                out.zip_apply(&m.0, |o, x| *o += a * x);
            }
        }
        Ok(SymMatrix(out))
    }

    /// The diagonal part `D(A)` as a vector.
    pub fn diagonal(&self) -> Vec<f64> {
        self.0.diagonal().iter().copied().collect()
    }
}

impl Add for &SymMatrix {
    type Output = SymMatrix;
    fn add(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &SymMatrix {
    type Output = SymMatrix;
    fn sub(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 - &rhs.0)
    }
}

impl Mul<f64> for &SymMatrix {
    type Output = SymMatrix;
    fn mul(self, rhs: f64) -> SymMatrix {
        self.scaled(rhs)
    }
}

fn check_same_dim(a: &SymMatrix, b: &SymMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!(
            "matrices of dimension {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Whether a Gram matrix comes from known matrices or from data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GramKind {
    Population,
    Estimated,
}

/// A `q×q` symmetric matrix of pairwise inner products.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    entries: DMatrix<f64>,
    kind: GramKind,
    dim_p: usize,
}

impl GramMatrix {
    /// Wraps precomputed entries. The matrix must be square and symmetric up
    /// to `1e-12·max|entry|`.
    pub fn from_entries(mut entries: DMatrix<f64>, kind: GramKind, dim_p: usize) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "Gram matrix must be square and nonempty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let tol = INGEST_SYMMETRY_TOL * entries.amax();
        let q = entries.nrows();
        for c in 0..q {
            for r in (c + 1)..q {
                if (entries[(r, c)] - entries[(c, r)]).abs() > tol {
                    return Err(Error::Domain(format!(
                        "Gram matrix is not symmetric at ({r}, {c})"
                    )));
                }
            }
        }
        linalg::symmetrize(&mut entries);
        Ok(GramMatrix {
            entries,
            kind,
            dim_p,
        })
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn kind(&self) -> GramKind {
        self.kind
    }

    pub fn dim_p(&self) -> usize {
        self.dim_p
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.entries.diagonal().iter().copied().collect()
    }

    /// The principal submatrix on `idx`.
    pub fn principal(&self, idx: &[usize]) -> GramMatrix {
        let k = idx.len();
        GramMatrix {
            entries: DMatrix::from_fn(k, k, |r, c| self.entries[(idx[r], idx[c])]),
            kind: self.kind,
            dim_p: self.dim_p,
        }
    }

    /// Natural magnitude of a `k×k` principal minor: `(max_i G_ii)^k`.
    pub fn minor_scale(&self, k: usize) -> f64 {
        let m = self
            .entries
            .diagonal()
            .iter()
            .fold(0.0_f64, |acc, v| acc.max(v.abs()));
        m.powi(k as i32)
    }
}

/// `⟨A, B⟩ = tr(ABᵀ)/p`.
pub fn inner(a: &SymMatrix, b: &SymMatrix) -> Result<f64> {
    check_same_dim(a, b)?;
    Ok(linalg::frob_dot(&a.0, &b.0) / a.dim() as f64)
}

/// The population Gram matrix `G_ij = ⟨mats[i], mats[j]⟩`.
pub fn gram(mats: &[SymMatrix]) -> Result<GramMatrix> {
    let refs: Vec<&SymMatrix> = mats.iter().collect();
    gram_of(&refs)
}

pub(crate) fn gram_of(mats: &[&SymMatrix]) -> Result<GramMatrix> {
    let first = mats
        .first()
        .ok_or_else(|| Error::EmptyInput("Gram matrix of an empty list".into()))?;
    for m in mats {
        check_same_dim(first, m)?;
    }
    let q = mats.len();
    let p = first.dim() as f64;
    let mut entries = DMatrix::zeros(q, q);
    for i in 0..q {
        for j in i..q {
            let v = linalg::frob_dot(&mats[i].0, &mats[j].0) / p;
            entries[(i, j)] = v;
            entries[(j, i)] = v;
        }
    }
    Ok(GramMatrix {
        entries,
        kind: GramKind::Population,
        dim_p: first.dim(),
    })
}

/// How [`principal_minor_sum`] evaluates the sum of `k×k` principal minors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MinorStrategy {
    /// Sum the determinants of all `C(q,k)` principal submatrices.
    Enumerate,
    /// The `k`-th elementary symmetric polynomial of the eigenvalues.
    Spectral,
    /// Enumerate when `C(q,k)·k³ ≤ 10⁷`, otherwise spectral.
    #[default]
    Auto,
}

impl MinorStrategy {
    /// The concrete strategy `Auto` resolves to for a given `(q, k)`.
    pub fn resolve(self, q: usize, k: usize) -> MinorStrategy {
        match self {
            MinorStrategy::Auto => {
                let cost = binomial_u128(q, k) as f64 * (k as f64).powi(3);
                if cost <= ENUMERATION_BUDGET {
                    MinorStrategy::Enumerate
                } else {
                    MinorStrategy::Spectral
                }
            }
            s => s,
        }
    }
}

/// Unnormalized sum `Σ det G(i₁..i_k)` over all `k`-subsets.
pub fn principal_minor_sum(g: &GramMatrix, k: usize, strategy: MinorStrategy) -> Result<f64> {
    let q = g.size();
    if k == 0 || k > q {
        return Err(Error::Domain(format!(
            "minor order k = {k} outside 1..={q}"
        )));
    }
    match strategy.resolve(q, k) {
        MinorStrategy::Spectral => {
            let eig = linalg::sym_eigenvalues(&g.entries)?;
            Ok(elementary_symmetric(&eig, k))
        }
        _ => Ok(enumerate_minor_sum(&g.entries, k)),
    }
}

/// `C(q,k)⁻¹ Σ det G(i₁..i_k)`, the averaged principal minor of order `k`.
pub fn mean_principal_minor(g: &GramMatrix, k: usize, strategy: MinorStrategy) -> Result<f64> {
    let total = principal_minor_sum(g, k, strategy)?;
    Ok(total / binomial(g.size(), k))
}

fn enumerate_minor_sum(g: &DMatrix<f64>, k: usize) -> f64 {
    let q = g.nrows();
    // One task per smallest index; partial sums are reduced in index order so
    // the result does not depend on scheduling.
    let partials: Vec<f64> = (0..q)
        .into_par_iter()
        .map(|first| {
            let mut buf = vec![0.0; k * k];
            let mut acc = KahanSum::new();
            let mut comb = Combinations::starting_with(q, k, first);
            while let Some(idx) = comb.current() {
                for (r, &ir) in idx.iter().enumerate() {
                    for (c, &ic) in idx.iter().enumerate() {
                        buf[r * k + c] = g[(ir, ic)];
                    }
                }
                acc.add(linalg::det_in_place(&mut buf, k));
                comb.advance_within_first();
            }
            acc.value()
        })
        .collect();
    partials.into_iter().collect::<KahanSum>().value()
}

/// `e_k(λ)` through the coefficient recurrence of `∏(x + λ_i)`, with
/// error-free products and compensated accumulation per coefficient.
pub fn elementary_symmetric(values: &[f64], k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > values.len() {
        return 0.0;
    }
    let mut hi = vec![0.0_f64; k + 1];
    let mut lo = vec![0.0_f64; k + 1];
    hi[0] = 1.0;
    for (i, &lam) in values.iter().enumerate() {
        let top = k.min(i + 1);
        for j in (1..=top).rev() {
            let prod = lam * hi[j - 1];
            let prod_err = lam.mul_add(hi[j - 1], -prod) + lam * lo[j - 1];
            let s = hi[j] + prod;
            let bp = s - hi[j];
            let sum_err = (hi[j] - (s - bp)) + (prod - bp);
            hi[j] = s;
            lo[j] += sum_err + prod_err;
        }
    }
    hi[k] + lo[k]
}

/// `M^(k) = C(q,k)⁻¹ Σ det G(i₁..i_k)` for the population Gram of `mats`.
pub fn m_pop(mats: &[SymMatrix], k: usize) -> Result<f64> {
    if k == 0 || k > mats.len() {
        return Err(Error::Domain(format!(
            "minor order k = {k} outside 1..={}",
            mats.len()
        )));
    }
    let g = gram(mats)?;
    mean_principal_minor(&g, k, MinorStrategy::Auto)
}

/// Averaged augmented minor: `C(m,k)⁻¹ Σ det Gram(target, basis_{i₁..i_k})`
/// over `k`-subsets of `basis`.
pub fn m_pop_augmented(target: &SymMatrix, basis: &[SymMatrix], k: usize) -> Result<f64> {
    if k == 0 || k > basis.len() {
        return Err(Error::Domain(format!(
            "minor order k = {k} outside 1..={}",
            basis.len()
        )));
    }
    let mut all: Vec<&SymMatrix> = Vec::with_capacity(basis.len() + 1);
    all.push(target);
    all.extend(basis.iter());
    let g = gram_of(&all)?;
    let m = basis.len();
    let size = k + 1;
    let mut buf = vec![0.0; size * size];
    let mut idx = vec![0usize; size];
    let mut acc = KahanSum::new();
    let mut comb = Combinations::new(m, k);
    while let Some(sub) = comb.current() {
        idx[0] = 0;
        for (t, &s) in sub.iter().enumerate() {
            idx[t + 1] = s + 1;
        }
        for r in 0..size {
            for c in 0..size {
                buf[r * size + c] = g.entries[(idx[r], idx[c])];
            }
        }
        acc.add(linalg::det_in_place(&mut buf, size));
        comb.advance();
    }
    Ok(acc.value() / binomial(m, k))
}

/// The symmetric PSD square root. Negative eigenvalues down to
/// `−1e-10·λ_max` are clamped to zero.
pub fn psd_sqrt(s: &SymMatrix) -> Result<SymMatrix> {
    let (vals, vecs) = linalg::sym_eigen(&s.0)?;
    let max = vals.last().copied().unwrap_or(0.0);
    let min = vals.first().copied().unwrap_or(0.0);
    if min < -PSD_TOL * max.max(0.0) {
        return Err(Error::NotPsd {
            min_eigenvalue: min,
            max_eigenvalue: max,
        });
    }
    let roots: Vec<f64> = vals.iter().map(|v| v.max(0.0).sqrt()).collect();
    let mut scaled = vecs.clone();
    for (c, r) in roots.iter().enumerate() {
        scaled.column_mut(c).scale_mut(*r);
    }
    Ok(SymMatrix::from_computed(&scaled * vecs.transpose()))
}

/// First-row cofactors `(−1)^{1+k} A_{1k}` of an `m×m` array whose first row
/// is left symbolic and whose remaining rows are `scalar_rows` ((m−1)×m).
pub fn row_det_coefficients(scalar_rows: &DMatrix<f64>) -> Result<Vec<f64>> {
    let m = scalar_rows.ncols();
    if m == 0 || scalar_rows.nrows() + 1 != m {
        return Err(Error::Dimension(format!(
            "scalar rows must be (m-1)×m, got {}x{}",
            scalar_rows.nrows(),
            m
        )));
    }
    let k = m - 1;
    let mut buf = vec![0.0; k * k];
    let mut out = Vec::with_capacity(m);
    for col in 0..m {
        for r in 0..k {
            let mut t = 0;
            for c in 0..m {
                if c != col {
                    buf[r * k + t] = scalar_rows[(r, c)];
                    t += 1;
                }
            }
        }
        let minor = linalg::det_in_place(&mut buf, k);
        let sign = if col % 2 == 0 { 1.0 } else { -1.0 };
        out.push(sign * minor);
    }
    Ok(out)
}

/// Matrix-valued determinant expanded along a symbolic first row:
/// `Σ_k (−1)^{1+k} A_{1k} B_k`.
pub fn matrix_row_det(top_row: &[SymMatrix], scalar_rows: &DMatrix<f64>) -> Result<SymMatrix> {
    if top_row.len() != scalar_rows.ncols() {
        return Err(Error::Dimension(format!(
            "{} matrices in the first row but {} scalar columns",
            top_row.len(),
            scalar_rows.ncols()
        )));
    }
    let coeffs = row_det_coefficients(scalar_rows)?;
    let refs: Vec<&SymMatrix> = top_row.iter().collect();
    SymMatrix::linear_combination(&coeffs, &refs)
}

/// Orthogonal decomposition of a matrix against the span of a basis.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthoDecomposition {
    /// Projection onto the span of the basis.
    pub parallel_part: SymMatrix,
    /// Residual, orthogonal to every basis member.
    pub perp_part: SymMatrix,
    /// `⟨perp_part, perp_part⟩`.
    pub perp_norm_sq: f64,
    /// Coefficients of `parallel_part` in the basis (minimum norm when the
    /// basis is dependent).
    pub coefficients: Vec<f64>,
}

/// Projects `target` onto `span(basis)` by solving the Gram normal equations
/// with an eigenvalue-thresholded pseudo-inverse (cutoff `1e-10·λ_max`).
pub fn orth_decompose(target: &SymMatrix, basis: &[SymMatrix]) -> Result<OrthoDecomposition> {
    if basis.is_empty() {
        return Err(Error::EmptyInput("orthogonal decomposition against an empty basis".into()));
    }
    for b in basis {
        check_same_dim(target, b)?;
    }
    let g = gram(basis)?;
    let rhs: Vec<f64> = basis
        .iter()
        .map(|b| inner(b, target))
        .collect::<Result<_>>()?;
    let (vals, vecs) = linalg::sym_eigen(&g.entries)?;
    let max = vals.last().copied().unwrap_or(0.0).max(0.0);
    let cutoff = PSD_TOL * max;
    let rhs = DVector::from_vec(rhs);
    let proj = vecs.transpose() * &rhs;
    let mut scaled = DVector::zeros(vals.len());
    for (i, &lam) in vals.iter().enumerate() {
        if lam > cutoff && lam > 0.0 {
            scaled[i] = proj[i] / lam;
        }
    }
    let coeffs = &vecs * scaled;
    let coefficients: Vec<f64> = coeffs.iter().copied().collect();
    let refs: Vec<&SymMatrix> = basis.iter().collect();
    let parallel_part = SymMatrix::linear_combination(&coefficients, &refs)?;
    let perp_part = target - &parallel_part;
    let perp_norm_sq = inner(&perp_part, &perp_part)?;
    Ok(OrthoDecomposition {
        parallel_part,
        perp_part,
        perp_norm_sq,
        coefficients,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(rng: &mut ChaCha8Rng, p: usize) -> SymMatrix {
        SymMatrix::from_upper_fn(p, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn random_psd(rng: &mut ChaCha8Rng, p: usize) -> SymMatrix {
        let a = DMatrix::from_fn(p, p, |_, _| rng.gen_range(-1.0..1.0));
        SymMatrix::from_computed(&a * a.transpose())
    }

    #[test]
    fn inner_of_identity_is_one() {
        for p in [1, 3, 10] {
            let i = SymMatrix::identity(p);
            assert_relative_eq!(inner(&i, &i).unwrap(), 1.0);
        }
    }

    #[test]
    fn inner_of_first_band_indicator() {
        for p in [5, 12, 40] {
            let l1 = SymMatrix::band_indicator(p, 1);
            let pf = p as f64;
            assert_relative_eq!(inner(&l1, &l1).unwrap(), 2.0 - 2.0 / pf, epsilon = 1e-15);
        }
    }

    #[test]
    fn inner_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_sym(&mut rng, 5);
        let b = random_sym(&mut rng, 5);
        let mut expect = 0.0;
        for r in 0..5 {
            for s in 0..5 {
                expect += a.get(r, s) * b.get(r, s);
            }
        }
        assert_relative_eq!(inner(&a, &b).unwrap(), expect / 5.0, epsilon = 1e-14);
        assert_relative_eq!(inner(&a, &b).unwrap(), inner(&b, &a).unwrap());
    }

    #[test]
    fn inner_rejects_dimension_mismatch() {
        let r = inner(&SymMatrix::identity(3), &SymMatrix::identity(4));
        assert!(matches!(r, Err(Error::Dimension(_))));
    }

    #[test]
    fn new_requires_exact_symmetry_and_from_data_tolerates_rounding() {
        let mut m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        m[(0, 1)] += 1e-14;
        assert!(SymMatrix::new(m.clone()).is_err());
        let s = SymMatrix::from_data(m).unwrap();
        assert_eq!(s.get(0, 1), s.get(1, 0));
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.1, 1.0]);
        assert!(matches!(SymMatrix::from_data(bad), Err(Error::Data(_))));
    }

    #[test]
    fn gram_examples() {
        let g = gram(&[SymMatrix::identity(4)]).unwrap();
        assert_eq!(g.size(), 1);
        assert_relative_eq!(g.get(0, 0), 1.0);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = random_psd(&mut rng, 6);
        let g = gram(&[s.clone(), s.scaled(2.0)]).unwrap();
        let g0 = inner(&s, &s).unwrap();
        assert_relative_eq!(g.get(0, 1), 2.0 * g0, max_relative = 1e-14);
        assert_relative_eq!(g.get(1, 1), 4.0 * g0, max_relative = 1e-14);
        assert_eq!(g.kind(), GramKind::Population);

        assert!(matches!(gram(&[]), Err(Error::EmptyInput(_))));
        assert!(matches!(
            gram(&[SymMatrix::identity(2), SymMatrix::identity(3)]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn band_indicator_gram_is_diagonal() {
        for p in [7usize, 20, 100] {
            let mats: Vec<_> = (0..4).map(|j| SymMatrix::band_indicator(p, j)).collect();
            let g = gram(&mats).unwrap();
            let pf = p as f64;
            // 2 − 2j/p as the correctly rounded quotient 2(p−j)/p
            let expect = [1.0, (2 * (p - 1)) as f64 / pf, (2 * (p - 2)) as f64 / pf, (2 * (p - 3)) as f64 / pf];
            for i in 0..4 {
                for j in 0..4 {
                    let e = if i == j { expect[i] } else { 0.0 };
                    assert_eq!(g.get(i, j), e, "p={p} ({i},{j})");
                }
            }
            for j in 1..4 {
                let naive = 2.0 - 2.0 * j as f64 / pf;
                assert!((g.get(j, j) - naive).abs() <= 2.0 * f64::EPSILON);
            }
        }
    }

    #[test]
    fn minor_sum_of_diagonal() {
        let (a, b, c) = (2.0, 3.0, 5.0);
        let g = GramMatrix::from_entries(
            DMatrix::from_diagonal(&DVector::from_vec(vec![a, b, c])),
            GramKind::Population,
            1,
        )
        .unwrap();
        for s in [MinorStrategy::Enumerate, MinorStrategy::Spectral] {
            assert_relative_eq!(
                principal_minor_sum(&g, 2, s).unwrap(),
                a * b + a * c + b * c,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn minor_sum_vanishes_for_rank_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_psd(&mut rng, 5);
        let mats = vec![s; 6];
        let g = gram(&mats).unwrap();
        let scale = g.minor_scale(2);
        for st in [MinorStrategy::Enumerate, MinorStrategy::Spectral] {
            assert!(principal_minor_sum(&g, 2, st).unwrap().abs() < 1e-12 * scale);
        }
    }

    #[test]
    fn minor_sum_domain_errors() {
        let g = gram(&[SymMatrix::identity(2)]).unwrap();
        assert!(matches!(
            principal_minor_sum(&g, 0, MinorStrategy::Auto),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            principal_minor_sum(&g, 2, MinorStrategy::Auto),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn strategies_agree_on_random_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = DMatrix::from_fn(8, 8, |_, _| rng.gen_range(-1.0..1.0));
        let g = GramMatrix::from_entries(&a + a.transpose(), GramKind::Estimated, 1).unwrap();
        let e = principal_minor_sum(&g, 3, MinorStrategy::Enumerate).unwrap();
        let s = principal_minor_sum(&g, 3, MinorStrategy::Spectral).unwrap();
        assert!((e - s).abs() <= 1e-8 * e.abs().max(1e-2), "{e} vs {s}");
    }

    #[test]
    fn auto_resolution_threshold() {
        assert_eq!(MinorStrategy::Auto.resolve(20, 3), MinorStrategy::Enumerate);
        assert_eq!(MinorStrategy::Auto.resolve(50, 4), MinorStrategy::Spectral);
        assert_eq!(MinorStrategy::Enumerate.resolve(50, 4), MinorStrategy::Enumerate);
    }

    #[test]
    fn characteristic_polynomial_identity() {
        // Σ_k e_k(λ)(−x)^{q−k} = det(G − xI)
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = 6;
        let a = DMatrix::from_fn(q, q, |_, _| rng.gen_range(-1.0..1.0));
        let sym = &a + a.transpose();
        let g = GramMatrix::from_entries(sym.clone(), GramKind::Estimated, 1).unwrap();
        let e: Vec<f64> = (0..=q)
            .map(|k| {
                if k == 0 {
                    1.0
                } else {
                    principal_minor_sum(&g, k, MinorStrategy::Enumerate).unwrap()
                }
            })
            .collect();
        for _ in 0..5 {
            let x: f64 = rng.gen_range(-2.0..2.0);
            let poly: f64 = (0..=q).map(|k| e[k] * (-x).powi((q - k) as i32)).sum();
            let det = (&sym - DMatrix::identity(q, q) * x).determinant();
            assert!((poly - det).abs() <= 1e-8 * det.abs().max(1.0), "{poly} vs {det}");
        }
    }

    #[test]
    fn m_pop_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = random_psd(&mut rng, 4);
        let copies = vec![s; 5];
        let g = gram(&copies).unwrap();
        assert!(m_pop(&copies, 2).unwrap().abs() < 1e-12 * g.minor_scale(2));

        let p = 9;
        let pair = [SymMatrix::identity(p), SymMatrix::band_indicator(p, 1)];
        assert_relative_eq!(
            m_pop(&pair, 2).unwrap(),
            2.0 - 2.0 / p as f64,
            max_relative = 1e-14
        );
    }

    #[test]
    fn m_pop_vanishes_above_span_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let base: Vec<_> = (0..3).map(|_| random_psd(&mut rng, 6)).collect();
        let mats: Vec<SymMatrix> = (0..6)
            .map(|_| {
                let w: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
                let refs: Vec<&SymMatrix> = base.iter().collect();
                SymMatrix::linear_combination(&w, &refs).unwrap()
            })
            .collect();
        let g = gram(&mats).unwrap();
        for k in 1..=3 {
            assert!(m_pop(&mats, k).unwrap() > 1e-8 * g.minor_scale(k));
        }
        assert!(m_pop(&mats, 4).unwrap().abs() < 1e-10 * g.minor_scale(4));
    }

    #[test]
    fn psd_sqrt_examples() {
        let d = SymMatrix::from_diagonal(&[4.0, 9.0]);
        let r = psd_sqrt(&d).unwrap();
        assert_relative_eq!(r.get(0, 0), 2.0, max_relative = 1e-14);
        assert_relative_eq!(r.get(1, 1), 3.0, max_relative = 1e-14);
        assert!(r.get(0, 1).abs() < 1e-15);

        let i = psd_sqrt(&SymMatrix::identity(5)).unwrap();
        assert!((i.as_matrix() - DMatrix::<f64>::identity(5, 5)).norm() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_psd(&mut rng, 10);
        let r = psd_sqrt(&a).unwrap();
        let rec = r.as_matrix() * r.as_matrix();
        assert!((rec - a.as_matrix()).norm() <= 1e-9 * a.frobenius_norm());

        let bad = SymMatrix::from_diagonal(&[1.0, -0.5]);
        assert!(matches!(psd_sqrt(&bad), Err(Error::NotPsd { .. })));
        let tiny = SymMatrix::from_diagonal(&[1.0, -1e-13]);
        assert!(psd_sqrt(&tiny).is_ok());
    }

    #[test]
    fn row_det_two_by_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_sym(&mut rng, 4);
        let b = random_sym(&mut rng, 4);
        let (x, y) = (0.7, -1.3);
        let d = matrix_row_det(&[a.clone(), b.clone()], &DMatrix::from_row_slice(1, 2, &[x, y])).unwrap();
        // bA − aB with scalar row [a, b] = [x, y]
        let expect = &a.scaled(y) - &b.scaled(x);
        assert!((d.as_matrix() - expect.as_matrix()).norm() < 1e-14);

        // proportional columns
        let t = a.trace() / 4.0;
        let z = matrix_row_det(&[a.clone(), a.clone()], &DMatrix::from_row_slice(1, 2, &[t, t])).unwrap();
        assert!(z.frobenius_norm() < 1e-14);
    }

    #[test]
    fn row_det_three_by_three_cofactors() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mats: Vec<_> = (0..3).map(|_| random_sym(&mut rng, 3)).collect();
        let s = DMatrix::from_fn(2, 3, |_, _| rng.gen_range(-1.0..1.0));
        let d = matrix_row_det(&mats, &s).unwrap();
        let (a, b, c, dd, e, f) = (s[(0, 0)], s[(0, 1)], s[(0, 2)], s[(1, 0)], s[(1, 1)], s[(1, 2)]);
        let c0 = b * f - c * e;
        let c1 = -(a * f - c * dd);
        let c2 = a * e - b * dd;
        let expect = SymMatrix::linear_combination(&[c0, c1, c2], &[&mats[0], &mats[1], &mats[2]]).unwrap();
        assert!((d.as_matrix() - expect.as_matrix()).norm() < 1e-13);
    }

    #[test]
    fn row_det_with_unit_top_row_is_scalar_det() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in 1..=5 {
            let s = DMatrix::from_fn(m - 1, m, |_, _| rng.gen_range(-1.0..1.0));
            let ones: Vec<SymMatrix> = (0..m).map(|_| SymMatrix::identity(1)).collect();
            let d = matrix_row_det(&ones, &s).unwrap();
            let mut full = DMatrix::from_element(m, m, 1.0);
            full.rows_mut(1, m - 1).copy_from(&s);
            assert!((d.get(0, 0) - full.determinant()).abs() < 1e-12, "m={m}");
        }
    }

    #[test]
    fn row_det_shape_errors() {
        let s = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        assert!(matches!(
            matrix_row_det(&[SymMatrix::identity(2)], &s),
            Err(Error::Dimension(_))
        ));
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(
            matrix_row_det(&[SymMatrix::identity(2), SymMatrix::identity(2)], &bad),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn orth_decompose_examples() {
        let p = 8;
        let i = SymMatrix::identity(p);
        let l1 = SymMatrix::band_indicator(p, 1);
        let d = orth_decompose(&(&i + &l1), std::slice::from_ref(&i)).unwrap();
        assert!((d.parallel_part.as_matrix() - i.as_matrix()).norm() < 1e-14);
        assert!((d.perp_part.as_matrix() - l1.as_matrix()).norm() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let basis: Vec<_> = (0..3).map(|_| random_psd(&mut rng, 5)).collect();
        let inside = SymMatrix::linear_combination(&[0.3, -1.0, 2.0], &[&basis[0], &basis[1], &basis[2]]).unwrap();
        let d = orth_decompose(&inside, &basis).unwrap();
        assert!(d.perp_norm_sq < 1e-20 * inner(&inside, &inside).unwrap());
    }

    #[test]
    fn orth_decompose_handles_dependent_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = random_psd(&mut rng, 5);
        let b = random_psd(&mut rng, 5);
        let basis = vec![a.clone(), b.clone(), &a + &b, a.scaled(3.0)];
        let t = random_sym(&mut rng, 5);
        let d = orth_decompose(&t, &basis).unwrap();
        for m in &basis {
            let ip = inner(&d.perp_part, m).unwrap();
            assert!(ip.abs() <= 1e-9 * d.perp_part.frobenius_norm() * m.frobenius_norm());
        }
        let rec = &d.parallel_part + &d.perp_part;
        assert!((rec.as_matrix() - t.as_matrix()).norm() <= 1e-9 * t.frobenius_norm());
        let again = orth_decompose(&d.parallel_part, &basis).unwrap();
        assert!(again.perp_part.frobenius_norm() <= 1e-9 * t.frobenius_norm());
    }
}
