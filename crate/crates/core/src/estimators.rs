//! Per-group sample statistics and the bias-corrected sample Gram matrix.
//!
//! For group `i` with `p×n_i` data `X_i`, `S_i = X_i X_iᵀ / n_i`. Off-diagonal
//! entries `tr(S_i S_j)/p` of the sample Gram matrix are unbiased because the
//! groups are independent. The diagonal `tr(S_i²)/p` is biased upward by terms
//! in `(tr S_i / p)²` and the fourth-moment quantity `η₄`, which are removed
//! using the estimator [`eta4_hat`].

use std::collections::HashSet;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg;
use crate::power::mu_functional;
use crate::space::{GramKind, GramMatrix, SymMatrix};

/// One population's sample, stored with observations as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSample {
    group_id: usize,
    data: DMatrix<f64>,
}

impl GroupSample {
    /// Smallest sample size for which `η̂₄` and the diagonal correction are defined.
    pub const MIN_OBSERVATIONS: usize = 5;

    /// `data` is `p×n` with one observation per column.
    pub fn new(group_id: usize, data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "group {group_id} has zero variables"
            )));
        }
        if data.ncols() < Self::MIN_OBSERVATIONS {
            return Err(Error::SampleTooSmall {
                group_id,
                n: data.ncols(),
                min: Self::MIN_OBSERVATIONS,
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos % data.nrows(), pos / data.nrows());
            return Err(Error::Data(format!(
                "group {group_id}: non-finite value at variable {r}, observation {c}"
            )));
        }
        Ok(GroupSample { group_id, data })
    }

    /// Skips validation; statistics that need `n ≥ 5` still check it.
    pub fn new_unchecked(group_id: usize, data: DMatrix<f64>) -> Self {
        GroupSample { group_id, data }
    }

    /// Builds a sample from observation rows (each of length `p`).
    pub fn from_observations(group_id: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != p) {
            return Err(Error::Data(format!(
                "group {group_id}: observation {i} has {} values, expected {p}",
                r.len()
            )));
        }
        let data = DMatrix::from_fn(p, n, |r, c| rows[c][r]);
        Self::new(group_id, data)
    }

    pub fn group_id(&self) -> usize {
        self.group_id
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn n(&self) -> usize {
        self.data.ncols()
    }

    pub fn dim_p(&self) -> usize {
        self.data.nrows()
    }

    /// `c_{i,p} = p / n_i`.
    pub fn c_ip(&self) -> f64 {
        self.dim_p() as f64 / self.n() as f64
    }

    /// Copy with the per-variable sample mean removed from every observation.
    pub fn centered(&self) -> GroupSample {
        let mean = self.data.column_mean();
        let mut data = self.data.clone();
        for mut col in data.column_iter_mut() {
            col -= &mean;
        }
        GroupSample {
            group_id: self.group_id,
            data,
        }
    }

    /// Copy with every value multiplied by `w`.
    pub fn scaled(&self, w: f64) -> GroupSample {
        GroupSample {
            group_id: self.group_id,
            data: &self.data * w,
        }
    }
}

/// `S = X Xᵀ / n` (no mean subtraction).
pub fn sample_cov(g: &GroupSample) -> SymMatrix {
    let s = (&g.data * g.data.transpose()) / g.n() as f64;
    SymMatrix::from_computed(s)
}

/// Fourth-moment estimator
///
/// ```text
/// η̂₄ = (n−4)!/(4p·n!) Σ_{j₁≠j₂≠j₃≠j₄} (‖x_{j₁}−x_{j₂}‖² − ‖x_{j₃}−x_{j₄}‖²)²
/// ```
///
/// evaluated in `O(n²p)`. With `d_jk = ‖x_j − x_k‖²`, `T₁ = Σ_{j≠k} d_jk`,
/// `T₂ = Σ_{j≠k} d_jk²` and `r_j = Σ_k d_jk`, the ordered quadruple sum equals
/// `2(n−2)(n−3)T₂ − 2(T₁² + 2T₂ − 4Σ_j r_j²)`. The sum only depends on
/// differences of the `d_jk`, so they are shifted by their mean first.
pub fn eta4_hat(g: &GroupSample) -> Result<f64> {
    let n = g.n();
    if n < GroupSample::MIN_OBSERVATIONS {
        return Err(Error::SampleTooSmall {
            group_id: g.group_id,
            n,
            min: GroupSample::MIN_OBSERVATIONS,
        });
    }
    let centered = g.centered();
    let y = &centered.data;
    let k = y.transpose() * y;

    let mut d = DMatrix::zeros(n, n);
    let mut t1 = 0.0;
    for j in 0..n {
        for l in (j + 1)..n {
            let v = (k[(j, j)] + k[(l, l)] - 2.0 * k[(j, l)]).max(0.0);
            d[(j, l)] = v;
            d[(l, j)] = v;
            t1 += 2.0 * v;
        }
    }
    let nf = n as f64;
    let mean = t1 / (nf * (nf - 1.0));

    let mut t1s = 0.0;
    let mut t2s = 0.0;
    let mut r2 = 0.0;
    for j in 0..n {
        let mut r = 0.0;
        for l in 0..n {
            if l != j {
                let e = d[(j, l)] - mean;
                r += e;
                t2s += e * e;
            }
        }
        t1s += r;
        r2 += r * r;
    }
    let quad = 2.0 * (nf - 2.0) * (nf - 3.0) * t2s - 2.0 * (t1s * t1s + 2.0 * t2s - 4.0 * r2);
    let denom = 4.0 * g.dim_p() as f64 * nf * (nf - 1.0) * (nf - 2.0) * (nf - 3.0);
    Ok(quad / denom)
}

/// Sufficient per-group quantities for the sample Gram matrix.
#[derive(Debug, Clone)]
pub struct GroupStats {
    pub group_id: usize,
    pub cov: SymMatrix,
    /// `tr(S²)/p`
    pub tr_s2: f64,
    /// `tr(S)/p`
    pub tr_s: f64,
    pub eta4: f64,
    /// `p / n`
    pub c: f64,
}

impl GroupStats {
    pub fn compute(g: &GroupSample) -> Result<Self> {
        let cov = sample_cov(g);
        let p = g.dim_p() as f64;
        let tr_s2 = linalg::frob_dot(cov.as_matrix(), cov.as_matrix()) / p;
        let tr_s = cov.trace() / p;
        let eta4 = eta4_hat(g)?;
        Ok(GroupStats {
            group_id: g.group_id,
            cov,
            tr_s2,
            tr_s,
            eta4,
            c: g.c_ip(),
        })
    }

    /// Bias-corrected estimate of `tr(Σ²)/p`.
    pub fn corrected_diagonal(&self) -> f64 {
        let p = self.cov.dim() as f64;
        let c = self.c;
        let num = self.tr_s2 - c * self.tr_s * self.tr_s - (c / p - c * c / (p * p)) * self.eta4;
        num / ((1.0 - 2.0 * c / p) * (1.0 - c / p))
    }
}

/// Per-group statistics, computed in parallel and returned in input order.
pub fn group_stats(groups: &[GroupSample]) -> Result<Vec<GroupStats>> {
    validate_groups(groups)?;
    groups.par_iter().map(GroupStats::compute).collect()
}

fn validate_groups(groups: &[GroupSample]) -> Result<()> {
    if groups.len() < 2 {
        return Err(Error::EmptyInput(format!(
            "at least 2 groups are required, got {}",
            groups.len()
        )));
    }
    let p = groups[0].dim_p();
    let mut ids = HashSet::new();
    for g in groups {
        if g.dim_p() != p {
            return Err(Error::Dimension(format!(
                "group {} has {} variables, group {} has {p}",
                g.group_id,
                g.dim_p(),
                groups[0].group_id
            )));
        }
        if !ids.insert(g.group_id) {
            return Err(Error::Data(format!("duplicate group id {}", g.group_id)));
        }
    }
    Ok(())
}

/// The sample Gram matrix `Ĝ` with bias-corrected diagonal.
pub fn gram_hat(groups: &[GroupSample]) -> Result<GramMatrix> {
    let stats = group_stats(groups)?;
    gram_hat_from_stats(&stats)
}

pub fn gram_hat_from_stats(stats: &[GroupStats]) -> Result<GramMatrix> {
    let q = stats.len();
    if q == 0 {
        return Err(Error::EmptyInput("no groups".into()));
    }
    let p = stats[0].cov.dim();
    let rows: Vec<Vec<f64>> = (0..q)
        .into_par_iter()
        .map(|i| {
            (0..q)
                .map(|j| match j.cmp(&i) {
                    std::cmp::Ordering::Less => 0.0,
                    std::cmp::Ordering::Equal => stats[i].corrected_diagonal(),
                    std::cmp::Ordering::Greater => {
                        linalg::frob_dot(stats[i].cov.as_matrix(), stats[j].cov.as_matrix())
                            / p as f64
                    }
                })
                .collect()
        })
        .collect();
    let mut entries = DMatrix::zeros(q, q);
    for i in 0..q {
        for j in i..q {
            entries[(i, j)] = rows[i][j];
            entries[(j, i)] = rows[i][j];
        }
    }
    GramMatrix::from_entries(entries, GramKind::Estimated, p)
}

/// Closed-form moments of sample-covariance functionals for
/// `x = Σ^{1/2} z` with i.i.d. standardized `z` of fourth moment `ν₄`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentOracle {
    /// `E[tr(S²)/p]`
    pub e_tr_s2: f64,
    /// `E[(tr(SA)/p)(tr(SB)/p)]`
    pub e_cross: f64,
    /// Leading-order `Var(tr(S²) − c·tr(S)²/p)`.
    pub var_corrected: f64,
}

pub fn analytic_moments(
    sigma: &SymMatrix,
    a: &SymMatrix,
    b: &SymMatrix,
    n: usize,
    nu4: f64,
) -> Result<MomentOracle> {
    if n == 0 {
        return Err(Error::Domain("sample size must be positive".into()));
    }
    if a.dim() != sigma.dim() || b.dim() != sigma.dim() {
        return Err(Error::Dimension(format!(
            "Σ is {0}x{0} but A is {1}x{1} and B is {2}x{2}",
            sigma.dim(),
            a.dim(),
            b.dim()
        )));
    }
    let p = sigma.dim() as f64;
    let nf = n as f64;
    let c = p / nf;
    let sm = sigma.as_matrix();
    let tr_s2 = linalg::frob_dot(sm, sm) / p;
    let tr_s = sigma.trace() / p;
    let diag_sq: f64 = sigma.diagonal().iter().map(|v| v * v).sum::<f64>() / p;

    let e_tr_s2 = tr_s2 + c * tr_s * tr_s + (tr_s2 + (nu4 - 3.0) * diag_sq) / nf;

    let tr_sa = linalg::frob_dot(sm, a.as_matrix()) / p;
    let tr_sb = linalg::frob_dot(sm, b.as_matrix()) / p;
    let e_cross = tr_sa * tr_sb + mu_functional(a, b, sigma, nu4)? / (p * nf);

    let mu_ss = mu_functional(sigma, sigma, sigma, nu4)?;
    let var_corrected = 4.0 * c * c * tr_s2 * tr_s2 + 4.0 * c * mu_ss;

    Ok(MomentOracle {
        e_tr_s2,
        e_cross,
        var_corrected,
    })
}
