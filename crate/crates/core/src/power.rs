//! Population-level power analysis under the outlier alternative.
//!
//! Under the alternative, `q − K` "majority" covariances span a space of
//! dimension `d₀` and `K ≥ 1` outliers carry components `Σ⊥` orthogonal to
//! it. The power of the one-sided test is then bounded below by
//! `Φ(γ − z_α)` with
//!
//! ```text
//! γ = Σ_j tr(Σ⊥_j²) / (2·√q·√β),     β = q⁻¹ Σ_i c_i² G_ii²
//! ```
//!
//! All quantities here drop the `o(1)` terms of the asymptotics, so the
//! returned powers are asymptotic lower bounds rather than finite-sample
//! values. `β` always uses all `q` groups.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{binomial, frob_dot, Combinations};
use crate::normal::{normal_cdf, z_alpha};
use crate::space::{
    gram, inner, mean_principal_minor, orth_decompose, psd_sqrt, row_det_coefficients,
    GramMatrix, MinorStrategy, SymMatrix,
};

/// Beyond this many groups `R_i` is estimated from sampled subsets when the
/// number of subsets also exceeds [`R_I_SAMPLES`].
pub const R_I_EXACT_MAX_Q: usize = 60;
/// Number of sampled subsets per `R_i` in sampling mode.
pub const R_I_SAMPLES: usize = 100_000;
/// Relative tolerance of the span-dimension check on the majority.
pub const SPAN_TOL: f64 = 1e-10;

/// Configuration of the outlier alternative.
#[derive(Debug, Clone)]
pub struct AlternativeSpec {
    majority: Vec<SymMatrix>,
    outliers: Vec<SymMatrix>,
    d0: usize,
    c_list: Vec<f64>,
    nu4: f64,
}

impl AlternativeSpec {
    /// Validates the configuration: at least one outlier, one ratio per group
    /// and a majority spanning exactly `d0` dimensions.
    pub fn new(
        majority: Vec<SymMatrix>,
        outliers: Vec<SymMatrix>,
        d0: usize,
        c_list: Vec<f64>,
        nu4: f64,
    ) -> Result<Self> {
        Self::build(majority, outliers, d0, c_list, nu4, SPAN_TOL)
    }

    pub(crate) fn build(
        majority: Vec<SymMatrix>,
        outliers: Vec<SymMatrix>,
        d0: usize,
        c_list: Vec<f64>,
        nu4: f64,
        tol: f64,
    ) -> Result<Self> {
        if outliers.is_empty() {
            return Err(Error::InvalidScenario("at least one outlier is required".into()));
        }
        if d0 == 0 {
            return Err(Error::Domain("d0 must be at least 1".into()));
        }
        if majority.len() < d0 {
            return Err(Error::InvalidScenario(format!(
                "{} majority matrices cannot span {d0} dimensions",
                majority.len()
            )));
        }
        let q = majority.len() + outliers.len();
        if c_list.len() != q {
            return Err(Error::Dimension(format!(
                "{} ratios for {q} groups",
                c_list.len()
            )));
        }
        if let Some(c) = c_list.iter().find(|c| !(**c > 0.0)) {
            return Err(Error::Domain(format!("ratio c = {c} must be positive")));
        }
        if !(nu4 >= 1.0) {
            return Err(Error::Domain(format!("ν₄ = {nu4} must be at least 1")));
        }
        let p = majority[0].dim();
        if let Some(m) = majority.iter().chain(&outliers).find(|m| m.dim() != p) {
            return Err(Error::Dimension(format!(
                "mixed dimensions {p} and {}",
                m.dim()
            )));
        }
        let g = gram(&majority)?;
        check_span_dimension(&g, d0, tol)?;
        Ok(Self {
            majority,
            outliers,
            d0,
            c_list,
            nu4,
        })
    }

    pub fn majority(&self) -> &[SymMatrix] {
        &self.majority
    }

    pub fn outliers(&self) -> &[SymMatrix] {
        &self.outliers
    }

    pub fn d0(&self) -> usize {
        self.d0
    }

    pub fn c_list(&self) -> &[f64] {
        &self.c_list
    }

    pub fn nu4(&self) -> f64 {
        self.nu4
    }

    /// Total number of groups `q`.
    pub fn q(&self) -> usize {
        self.majority.len() + self.outliers.len()
    }

    pub fn dim_p(&self) -> usize {
        self.majority[0].dim()
    }

    /// All covariances, majority first.
    pub fn all(&self) -> Vec<SymMatrix> {
        self.majority.iter().chain(&self.outliers).cloned().collect()
    }
}

/// Checks that a Gram matrix has rank `d`: `M^(d) > tol·scale` and
/// `|M^(d+1)| < tol·scale`.
pub(crate) fn check_span_dimension(g: &GramMatrix, d: usize, tol: f64) -> Result<()> {
    let m_d = mean_principal_minor(g, d, MinorStrategy::Auto)?;
    let scale_d = g.minor_scale(d);
    if !(m_d > tol * scale_d) {
        return Err(Error::InvalidScenario(format!(
            "span dimension is below {d}: M^({d}) = {m_d:e}"
        )));
    }
    if d < g.size() {
        let m_next = mean_principal_minor(g, d + 1, MinorStrategy::Auto)?;
        let scale_next = g.minor_scale(d + 1);
        if m_next.abs() >= tol * scale_next {
            return Err(Error::InvalidScenario(format!(
                "span dimension exceeds {d}: M^({}) = {m_next:e}",
                d + 1
            )));
        }
    }
    Ok(())
}

/// `β = q⁻¹ Σ c_i² (tr(Σ_i²)/p)²`.
pub fn beta_pop(mats: &[SymMatrix], c_list: &[f64]) -> Result<f64> {
    if mats.len() != c_list.len() {
        return Err(Error::Dimension(format!(
            "{} matrices but {} ratios",
            mats.len(),
            c_list.len()
        )));
    }
    if mats.is_empty() {
        return Err(Error::EmptyInput("no matrices".into()));
    }
    let mut total = 0.0;
    for (m, c) in mats.iter().zip(c_list) {
        let g = inner(m, m)?;
        total += c * c * g * g;
    }
    Ok(total / mats.len() as f64)
}

/// `μ(A,B|Λ) = (2/p)tr(ΛAΛB) + ((ν₄−3)/p)·tr(D(Λ^½AΛ^½)·D(Λ^½BΛ^½))`,
/// where `D(·)` keeps the diagonal.
pub fn mu_functional(a: &SymMatrix, b: &SymMatrix, lambda: &SymMatrix, nu4: f64) -> Result<f64> {
    let p = lambda.dim();
    if a.dim() != p || b.dim() != p {
        return Err(Error::Dimension(format!(
            "Λ is {p}x{p} but A is {0}x{0} and B is {1}x{1}",
            a.dim(),
            b.dim()
        )));
    }
    let root = psd_sqrt(lambda)?;
    let l = lambda.as_matrix();
    let la = l * a.as_matrix();
    let lb = l * b.as_matrix();
    // tr(ΛAΛB) = Σ_rs (ΛA)_rs (ΛB)_sr
    let main = frob_dot(&la, &lb.transpose());
    let pf = p as f64;
    let mut out = 2.0 * main / pf;
    if nu4 != 3.0 {
        let r = root.as_matrix();
        let da = sandwich_diagonal(r, a.as_matrix());
        let db = sandwich_diagonal(r, b.as_matrix());
        let diag: f64 = da.iter().zip(&db).map(|(x, y)| x * y).sum();
        out += (nu4 - 3.0) * diag / pf;
    }
    Ok(out)
}

/// Diagonal of `R·A·R` for symmetric `R`.
fn sandwich_diagonal(r: &DMatrix<f64>, a: &DMatrix<f64>) -> Vec<f64> {
    let ra = r * a;
    (0..r.nrows())
        .map(|i| ra.row(i).iter().zip(r.column(i).iter()).map(|(x, y)| x * y).sum())
        .collect()
}

/// Coefficients of `R_i` in the basis `Σ_1..Σ_q`, with a flag telling
/// whether the subset average was sampled.
#[derive(Debug, Clone, PartialEq)]
pub struct RiCoefficients {
    pub coefficients: Vec<f64>,
    pub sampled: bool,
}

/// Whether [`r_i_matrix`] samples subsets for this configuration.
pub fn r_i_is_sampled(q: usize, d0: usize) -> bool {
    q > R_I_EXACT_MAX_Q && binomial(q - 1, d0) > R_I_SAMPLES as f64
}

/// `R_i` as coefficients on all `q` covariances. `i` is zero-based.
pub fn r_i_coefficients(g: &GramMatrix, d0: usize, i: usize, seed: u64) -> Result<RiCoefficients> {
    let q = g.size();
    if i >= q {
        return Err(Error::Domain(format!("group index {i} outside 0..{q}")));
    }
    if q - 1 < d0 {
        return Err(Error::Domain(format!(
            "R_i needs {d0} other groups, only {} available",
            q - 1
        )));
    }
    let others: Vec<usize> = (0..q).filter(|&j| j != i).collect();
    let mut coef = vec![0.0; q];
    let mut rows = DMatrix::zeros(d0, d0 + 1);
    let mut cols = vec![0usize; d0 + 1];
    cols[0] = i;
    let mut add_subset = |sub: &[usize], coef: &mut [f64]| -> Result<()> {
        for (t, &s) in sub.iter().enumerate() {
            cols[t + 1] = others[s];
        }
        for r in 0..d0 {
            for (c, &col) in cols.iter().enumerate() {
                rows[(r, c)] = g.get(cols[r + 1], col);
            }
        }
        let cof = row_det_coefficients(&rows)?;
        for (c, &col) in cols.iter().enumerate() {
            coef[col] += cof[c];
        }
        Ok(())
    };

    let sampled = r_i_is_sampled(q, d0);
    let count = if sampled {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sub = vec![0usize; d0];
        for _ in 0..R_I_SAMPLES {
            let mut idx = sample(&mut rng, q - 1, d0).into_vec();
            idx.sort_unstable();
            sub.copy_from_slice(&idx);
            add_subset(&sub, &mut coef)?;
        }
        R_I_SAMPLES as f64
    } else {
        let mut comb = Combinations::new(q - 1, d0);
        while let Some(sub) = comb.current() {
            let sub = sub.to_vec();
            add_subset(&sub, &mut coef)?;
            comb.advance();
        }
        binomial(q - 1, d0)
    };
    for v in &mut coef {
        *v /= count;
    }
    Ok(RiCoefficients {
        coefficients: coef,
        sampled,
    })
}

/// The matrix `R_i` (zero-based `i`), averaged over `d0`-subsets of the
/// other groups. It vanishes when all covariances span `d0` dimensions.
pub fn r_i_matrix(spec: &AlternativeSpec, i: usize) -> Result<SymMatrix> {
    let all = spec.all();
    let g = gram(&all)?;
    r_i_from_gram(&all, &g, spec.d0, i)
}

fn r_i_from_gram(all: &[SymMatrix], g: &GramMatrix, d0: usize, i: usize) -> Result<SymMatrix> {
    let coef = r_i_coefficients(g, d0, i, i as u64)?;
    let refs: Vec<&SymMatrix> = all.iter().collect();
    SymMatrix::linear_combination(&coef.coefficients, &refs)
}

/// `r = q⁻¹ Σ_i c_i·μ(R_i, R_i | Σ_i)`, the extra variance term that
/// vanishes under the null.
pub fn r_pop(spec: &AlternativeSpec) -> Result<f64> {
    let all = spec.all();
    let g = gram(&all)?;
    let mut total = 0.0;
    for (i, sigma) in all.iter().enumerate() {
        let r = r_i_from_gram(&all, &g, spec.d0, i)?;
        total += spec.c_list[i] * mu_functional(&r, &r, sigma, spec.nu4)?;
    }
    Ok(total / all.len() as f64)
}

/// `Σ_j tr(Σ⊥_j²)` over the outliers, each projected against the majority.
pub fn outlier_perp_mass(spec: &AlternativeSpec) -> Result<f64> {
    let p = spec.dim_p() as f64;
    let mut total = 0.0;
    for o in &spec.outliers {
        total += orth_decompose(o, &spec.majority)?.perp_norm_sq * p;
    }
    Ok(total)
}

/// `γ = Σ_j tr(Σ⊥_j²) / (2·√q·√β)`.
pub fn gamma_outlier(spec: &AlternativeSpec) -> Result<f64> {
    let beta = beta_pop(&spec.all(), &spec.c_list)?;
    if !(beta > 0.0) {
        return Err(Error::DegenerateVariance(format!("β = {beta:e}")));
    }
    let mass = outlier_perp_mass(spec)?;
    Ok(mass / (2.0 * (spec.q() as f64).sqrt() * beta.sqrt()))
}

/// `γ` from the population Gram matrix of all `q` groups, treating the last
/// `k_outliers` as outliers. `⟨Σ⊥,Σ⊥⟩ = G_tt − g_tᵀ G_B⁺ g_t` with the same
/// pseudo-inverse cutoff as [`orth_decompose`].
pub fn gamma_from_gram(g: &GramMatrix, k_outliers: usize, c_list: &[f64]) -> Result<f64> {
    let q = g.size();
    if k_outliers == 0 || k_outliers >= q {
        return Err(Error::Domain(format!(
            "{k_outliers} outliers among {q} groups"
        )));
    }
    if c_list.len() != q {
        return Err(Error::Dimension(format!("{} ratios for {q} groups", c_list.len())));
    }
    let beta = (0..q)
        .map(|i| c_list[i] * c_list[i] * g.get(i, i) * g.get(i, i))
        .sum::<f64>()
        / q as f64;
    if !(beta > 0.0) {
        return Err(Error::DegenerateVariance(format!("β = {beta:e}")));
    }
    let m = q - k_outliers;
    let basis = DMatrix::from_fn(m, m, |r, c| g.get(r, c));
    let (vals, vecs) = crate::linalg::sym_eigen(&basis)?;
    let cutoff = crate::space::PSD_TOL * vals.last().copied().unwrap_or(0.0).max(0.0);
    let mut mass = 0.0;
    for t in m..q {
        let rhs = nalgebra::DVector::from_fn(m, |r, _| g.get(r, t));
        let proj = vecs.transpose() * rhs;
        let mut explained = 0.0;
        for (i, &lam) in vals.iter().enumerate() {
            if lam > cutoff && lam > 0.0 {
                explained += proj[i] * proj[i] / lam;
            }
        }
        mass += (g.get(t, t) - explained).max(0.0);
    }
    let p = g.dim_p() as f64;
    Ok(p * mass / (2.0 * (q as f64).sqrt() * beta.sqrt()))
}

/// Asymptotic lower bound `Φ(γ − z_α)` on the power.
pub fn theoretical_power(spec: &AlternativeSpec, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    Ok(power_from_gamma(gamma_outlier(spec)?, alpha))
}

/// `Φ(γ − z_α)`.
pub fn power_from_gamma(gamma: f64, alpha: f64) -> f64 {
    normal_cdf(gamma - z_alpha(alpha))
}

/// Large-`p` form of the Example-2 type band family: the outlier carries
/// `w·A₀·Λ₃`, giving `γ ≈ (p/√q)·w²A₀²/√β`.
pub fn band_family_gamma(w: f64, a0: f64, p: usize, q: usize, beta: f64) -> f64 {
    p as f64 / (q as f64).sqrt() * w * w * a0 * a0 / beta.sqrt()
}

/// Large-`p` value of `β` for band covariances with MA coefficients
/// `(a_j, b_j)`: `mean c_j²{(1+a²+b²)² + 2a²(1+b)² + 2b²}²`.
pub fn band_family_beta(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    let n = a.len() as f64;
    a.iter()
        .zip(b)
        .zip(c)
        .map(|((a, b), c)| {
            let g = (1.0 + a * a + b * b).powi(2) + 2.0 * a * a * (1.0 + b).powi(2) + 2.0 * b * b;
            c * c * g * g
        })
        .sum::<f64>()
        / n
}

/// Two-cluster family with one outlier `(1−w)Λ_I + wΛ₃`:
/// `γ = (p/√q)·w²/(2√β)·tr(Λ⊥²)/p`, where `perp_norm_sq = tr(Λ⊥²)/p`.
pub fn two_cluster_gamma(w: f64, perp_norm_sq: f64, p: usize, q: usize, beta: f64) -> f64 {
    p as f64 / (q as f64).sqrt() * w * w / (2.0 * beta.sqrt()) * perp_norm_sq
}
