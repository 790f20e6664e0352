//! Kronecker-sum covariance approximation.
//!
//! A `(pq)×(pq)` covariance is viewed as a `q×q` grid of `p×p` blocks `M_ij`.
//! The rearrangement `R(M)` stacks `vec(M_ij)ᵀ` as row `i·q + j` (zero-based),
//! so that a Kronecker sum `Σ_l A_l⊗B_l` becomes a matrix of rank at most the
//! number of terms. Truncating the SVD of `R(M)` therefore gives the best
//! Kronecker-sum approximation with `d` terms.
//!
//! `vec` is column-major. For a Kronecker product `A⊗B`, block `(i, j)` is
//! `a_ij·B`, so `R(A⊗B) = vec(Aᵀ)·vec(B)ᵀ`; for symmetric `A` this is
//! `vec(A)·vec(B)ᵀ`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulate::derive_seed;

/// Sweep limit of the Jacobi SVD.
pub const MAX_JACOBI_SWEEPS: usize = 80;

/// A `(pq)×(pq)` matrix partitioned into a `q×q` grid of `p×p` blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrix {
    big: DMatrix<f64>,
    p: usize,
    q: usize,
}

impl BlockMatrix {
    pub fn new(big: DMatrix<f64>, p: usize, q: usize) -> Result<Self> {
        if p == 0 || q == 0 || big.nrows() != p * q || big.ncols() != p * q {
            return Err(Error::Dimension(format!(
                "a {}x{} matrix does not split into a {q}x{q} grid of {p}x{p} blocks",
                big.nrows(),
                big.ncols()
            )));
        }
        Ok(BlockMatrix { big, p, q })
    }

    /// `Σ_l A_l⊗B_l` with `A_l` of size `q×q` and `B_l` of size `p×p`.
    pub fn kronecker_sum(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> Result<Self> {
        if a.is_empty() || a.len() != b.len() {
            return Err(Error::Dimension(format!(
                "{} left factors and {} right factors",
                a.len(),
                b.len()
            )));
        }
        let (q, p) = (a[0].nrows(), b[0].nrows());
        let mut big = DMatrix::zeros(p * q, p * q);
        for (al, bl) in a.iter().zip(b) {
            if !al.is_square() || !bl.is_square() || al.nrows() != q || bl.nrows() != p {
                return Err(Error::Dimension("Kronecker factors of mixed sizes".into()));
            }
            big += al.kronecker(bl);
        }
        Self::new(big, p, q)
    }

    pub fn big(&self) -> &DMatrix<f64> {
        &self.big
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// Block `(i, j)`, zero-based.
    pub fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        self.big.view((i * self.p, j * self.p), (self.p, self.p)).into_owned()
    }
}

/// The `q²×p²` rearranged matrix `R(M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RearrangedMatrix {
    mat: DMatrix<f64>,
    p: usize,
    q: usize,
}

impl RearrangedMatrix {
    pub fn new(mat: DMatrix<f64>, p: usize, q: usize) -> Result<Self> {
        if p == 0 || q == 0 || mat.nrows() != q * q || mat.ncols() != p * p {
            return Err(Error::Dimension(format!(
                "expected a {}x{} rearranged matrix, got {}x{}",
                q * q,
                p * p,
                mat.nrows(),
                mat.ncols()
            )));
        }
        Ok(RearrangedMatrix { mat, p, q })
    }

    pub fn mat(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }
}

/// Column-major `vec`.
pub fn vec(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// `R(M)`: row `i·q + j` is `vec(M_ij)ᵀ`.
pub fn reshape(m: &BlockMatrix) -> RearrangedMatrix {
    let (p, q) = (m.p, m.q);
    let mut out = DMatrix::zeros(q * q, p * p);
    for i in 0..q {
        for j in 0..q {
            let row = i * q + j;
            for c in 0..p {
                for r in 0..p {
                    out[(row, c * p + r)] = m.big[(i * p + r, j * p + c)];
                }
            }
        }
    }
    RearrangedMatrix { mat: out, p, q }
}

/// Inverse of [`reshape`].
pub fn inverse_reshape(r: &RearrangedMatrix) -> BlockMatrix {
    let (p, q) = (r.p, r.q);
    let mut big = DMatrix::zeros(p * q, p * q);
    for i in 0..q {
        for j in 0..q {
            let row = i * q + j;
            for c in 0..p {
                for rr in 0..p {
                    big[(i * p + rr, j * p + c)] = r.mat[(row, c * p + rr)];
                }
            }
        }
    }
    BlockMatrix { big, p, q }
}

/// Thin SVD `a = U·diag(σ)·Vᵀ` with `σ` in descending order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v: DMatrix<f64>,
}

/// Thin SVD by Householder QR followed by one-sided Jacobi on the triangle.
pub fn svd(a: &DMatrix<f64>) -> Result<Svd> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    let transpose = a.nrows() < a.ncols();
    let tall = if transpose { a.transpose() } else { a.clone() };
    let qr = tall.qr();
    let (q, r) = (qr.q(), qr.r());
    let (ur, sig, v) = jacobi_svd(r)?;
    let u = q * ur;
    Ok(if transpose {
        Svd { u: v, singular_values: sig, v: u }
    } else {
        Svd { u, singular_values: sig, v }
    })
}

/// One-sided (Hestenes) Jacobi SVD of a square matrix.
fn jacobi_svd(mut w: DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let n = w.ncols();
    let mut v = DMatrix::<f64>::identity(n, n);
    let tol = f64::EPSILON * n as f64;
    let mut converged = n < 2;
    for _ in 0..MAX_JACOBI_SWEEPS {
        let mut rotated = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let alpha = w.column(i).norm_squared();
                let beta = w.column(j).norm_squared();
                let gamma = w.column(i).dot(&w.column(j));
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut w, i, j, c, s);
                rotate_columns(&mut v, i, j, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "Jacobi SVD did not converge in {MAX_JACOBI_SWEEPS} sweeps"
        )));
    }
    let mut sig: Vec<f64> = (0..n).map(|k| w.column(k).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sig[b].total_cmp(&sig[a]));
    let mut u = DMatrix::zeros(w.nrows(), n);
    let mut vs = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        if sig[src] > 0.0 {
            u.set_column(dst, &(w.column(src) / sig[src]));
        }
        vs.set_column(dst, &v.column(src));
    }
    sig = order.iter().map(|&k| sig[k]).collect();
    Ok((u, sig, vs))
}

fn rotate_columns(m: &mut DMatrix<f64>, i: usize, j: usize, c: f64, s: f64) {
    for r in 0..m.nrows() {
        let (x, y) = (m[(r, i)], m[(r, j)]);
        m[(r, i)] = c * x - s * y;
        m[(r, j)] = s * x + c * y;
    }
}

/// Best rank-`d` approximation of `R` in Frobenius norm, with all singular
/// values of `R` in descending order.
pub fn rank_d_approx(r: &RearrangedMatrix, d: usize) -> Result<(RearrangedMatrix, Vec<f64>)> {
    let max = r.mat.nrows().min(r.mat.ncols());
    if d == 0 || d > max {
        return Err(Error::Domain(format!("rank d = {d} outside 1..={max}")));
    }
    let s = svd(&r.mat)?;
    Ok((truncate(&s, d, r.p, r.q), s.singular_values))
}

fn truncate(s: &Svd, d: usize, p: usize, q: usize) -> RearrangedMatrix {
    let mut us = s.u.columns(0, d).into_owned();
    for k in 0..d {
        us.column_mut(k).scale_mut(s.singular_values[k]);
    }
    RearrangedMatrix {
        mat: us * s.v.columns(0, d).transpose(),
        p,
        q,
    }
}

/// Comparison of two ranks across splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankComparison {
    pub lower: usize,
    pub higher: usize,
    /// Mean of `RSS_higher − RSS_lower`.
    pub diff_mean: f64,
    /// Sample standard deviation (divisor `splits − 1`) of the difference.
    pub diff_sd: f64,
    /// Fraction of splits with `RSS_higher < RSS_lower`.
    pub frac_higher_better: f64,
}

/// Train/test residuals of rank-`d` Kronecker approximations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RssSummary {
    pub splits: usize,
    pub ranks: Vec<usize>,
    /// `rss_by_rank[k][s]` is `RSS_{ranks[k]}` on split `s`.
    pub rss_by_rank: Vec<Vec<f64>>,
    /// Difference statistics for the largest against the smallest rank.
    pub diff_mean: f64,
    pub diff_sd: f64,
    pub frac_higher_rank_better: f64,
    /// Every pair of requested ranks.
    pub pairwise: Vec<RankComparison>,
    pub seed: u64,
}

/// Mean-subtracted covariance of `vec(X_t)` with divisor `n`, as a block
/// matrix over the `q` columns of the `p×q` observations.
pub fn vec_covariance(obs: &[&DMatrix<f64>]) -> Result<BlockMatrix> {
    vec_second_moment(obs, true)
}

/// Second-moment matrix of `vec(X_t)` with divisor `n`, optionally centered.
pub fn vec_second_moment(obs: &[&DMatrix<f64>], center: bool) -> Result<BlockMatrix> {
    let first = obs
        .first()
        .ok_or_else(|| Error::EmptyInput("no observations".into()))?;
    let (p, q) = first.shape();
    let dim = p * q;
    let n = obs.len() as f64;
    let mut data = DMatrix::zeros(dim, obs.len());
    for (t, x) in obs.iter().enumerate() {
        if x.shape() != (p, q) {
            return Err(Error::Dimension(format!(
                "observation {t} is {}x{}, expected {p}x{q}",
                x.nrows(),
                x.ncols()
            )));
        }
        data.set_column(t, &vec(x));
    }
    if center {
        let mean = data.column_mean();
        for mut col in data.column_iter_mut() {
            col -= &mean;
        }
    }
    let mut cov = &data * data.transpose() / n;
    crate::linalg::symmetrize(&mut cov);
    BlockMatrix::new(cov, p, q)
}

/// Random half/half splits: fit rank-`d` approximations on one half and
/// measure `RSS_d = ‖R^(d) − R̂_test‖_F` on the other. Both halves use the
/// mean-subtracted covariance with divisor `n/2`.
pub fn rss_experiment(
    observations: &[DMatrix<f64>],
    ranks: &[usize],
    splits: usize,
    seed: u64,
) -> Result<RssSummary> {
    rss_experiment_with(observations, ranks, splits, seed, true)
}

/// [`rss_experiment`] with a choice between the centered covariance and the
/// uncentered second moment.
pub fn rss_experiment_with(
    observations: &[DMatrix<f64>],
    ranks: &[usize],
    splits: usize,
    seed: u64,
    center: bool,
) -> Result<RssSummary> {
    let n = observations.len();
    if n % 2 == 1 {
        return Err(Error::Domain(format!("{n} observations cannot be split in halves")));
    }
    if n < 4 {
        return Err(Error::Domain(format!("need at least 4 observations, got {n}")));
    }
    if ranks.is_empty() {
        return Err(Error::EmptyInput("no ranks requested".into()));
    }
    if splits == 0 {
        return Err(Error::Domain("splits must be at least 1".into()));
    }
    let (p, q) = observations[0].shape();
    let max_rank = (q * q).min(p * p);
    if let Some(d) = ranks.iter().find(|&&d| d == 0 || d > max_rank) {
        return Err(Error::Domain(format!("rank {d} outside 1..={max_rank}")));
    }
    if let Some((t, x)) = observations.iter().enumerate().find(|(_, x)| x.shape() != (p, q)) {
        return Err(Error::Dimension(format!(
            "observation {t} is {}x{}, expected {p}x{q}",
            x.nrows(),
            x.ncols()
        )));
    }

    let per_split: Vec<Vec<f64>> = (0..splits)
        .into_par_iter()
        .map(|s| -> Result<Vec<f64>> {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2, s as u64));
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let (train, test) = idx.split_at(n / 2);
            let pick = |ids: &[usize]| ids.iter().map(|&i| &observations[i]).collect::<Vec<_>>();
            let r_train = reshape(&vec_second_moment(&pick(train), center)?);
            let r_test = reshape(&vec_second_moment(&pick(test), center)?);
            let fit = svd(&r_train.mat)?;
            Ok(ranks
                .iter()
                .map(|&d| (truncate(&fit, d, p, q).mat - &r_test.mat).norm())
                .collect())
        })
        .collect::<Result<_>>()?;

    let rss_by_rank: Vec<Vec<f64>> = (0..ranks.len())
        .map(|k| per_split.iter().map(|row| row[k]).collect())
        .collect();
    let compare = |lo: usize, hi: usize| -> RankComparison {
        let diffs: Vec<f64> = rss_by_rank[hi]
            .iter()
            .zip(&rss_by_rank[lo])
            .map(|(h, l)| h - l)
            .collect();
        let m = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / m;
        let sd = if diffs.len() > 1 {
            (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
        } else {
            0.0
        };
        let better = diffs.iter().filter(|d| **d < 0.0).count() as f64 / m;
        RankComparison {
            lower: ranks[lo],
            higher: ranks[hi],
            diff_mean: mean,
            diff_sd: sd,
            frac_higher_better: better,
        }
    };
    let mut pairwise = Vec::new();
    for a in 0..ranks.len() {
        for b in 0..ranks.len() {
            if ranks[a] < ranks[b] {
                pairwise.push(compare(a, b));
            }
        }
    }
    let lo = (0..ranks.len()).min_by_key(|&k| ranks[k]).unwrap();
    let hi = (0..ranks.len()).max_by_key(|&k| ranks[k]).unwrap();
    let main = compare(lo, hi);
    Ok(RssSummary {
        splits,
        ranks: ranks.to_vec(),
        rss_by_rank,
        diff_mean: main.diff_mean,
        diff_sd: main.diff_sd,
        frac_higher_rank_better: main.frac_higher_better,
        pairwise,
        seed,
    })
}
