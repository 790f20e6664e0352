//! Small dense kernels shared by the statistical modules: symmetric
//! eigendecomposition, determinants of small matrices, subset enumeration and
//! compensated summation.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Symmetric eigendecomposition `m = V diag(λ) Vᵀ` with eigenvalues in
/// ascending order. Only the lower triangle of `m` is read.
pub fn sym_eigen(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    check_square_finite(m)?;
    let n = m.nrows();
    if n == 0 {
        return Ok((Vec::new(), DMatrix::zeros(0, 0)));
    }
    let fm = faer::Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)]);
    let evd = fm.selfadjoint_eigendecomposition(faer::Side::Lower);
    let s = evd.s().column_vector();
    let u = evd.u();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s.read(a).total_cmp(&s.read(b)));
    let values: Vec<f64> = order.iter().map(|&i| s.read(i)).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "symmetric eigensolver returned non-finite eigenvalues".into(),
        ));
    }
    let vectors = DMatrix::from_fn(n, n, |r, c| u.read(r, order[c]));
    Ok((values, vectors))
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_square_finite(m)?;
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let fm = faer::Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)]);
    let mut values = fm.selfadjoint_eigenvalues(faer::Side::Lower);
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "symmetric eigensolver returned non-finite eigenvalues".into(),
        ));
    }
    values.sort_by(f64::total_cmp);
    Ok(values)
}

fn check_square_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    Ok(())
}

/// Replaces `m` by `(m + mᵀ)/2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for c in 0..n {
        for r in (c + 1)..n {
            let v = 0.5 * (m[(r, c)] + m[(c, r)]);
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
    }
}

/// Determinant of a `k×k` row-major matrix stored in `a`. Closed forms for
/// `k ≤ 3`, LU with partial pivoting otherwise. `a` is used as scratch.
pub fn det_in_place(a: &mut [f64], k: usize) -> f64 {
    debug_assert_eq!(a.len(), k * k);
    match k {
        0 => 1.0,
        1 => a[0],
        2 => a[0] * a[3] - a[1] * a[2],
        3 => {
            a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6])
                + a[2] * (a[3] * a[7] - a[4] * a[6])
        }
        _ => lu_det(a, k),
    }
}

fn lu_det(a: &mut [f64], k: usize) -> f64 {
    let mut det = 1.0;
    for col in 0..k {
        let mut piv = col;
        let mut best = a[col * k + col].abs();
        for r in (col + 1)..k {
            let v = a[r * k + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 {
            return 0.0;
        }
        if piv != col {
            for c in 0..k {
                a.swap(col * k + c, piv * k + c);
            }
            det = -det;
        }
        let d = a[col * k + col];
        det *= d;
        for r in (col + 1)..k {
            let f = a[r * k + col] / d;
            if f != 0.0 {
                for c in (col + 1)..k {
                    a[r * k + c] -= f * a[col * k + c];
                }
            }
        }
    }
    det
}

/// Binomial coefficient as `f64` (exact while it fits in 53 bits).
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0_f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

/// Binomial coefficient, saturating at `u128::MAX`.
pub fn binomial_u128(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i + 1) as u128,
            None => return u128::MAX,
        };
    }
    acc
}

/// Lexicographic enumeration of the `k`-subsets of `0..n`.
#[derive(Debug, Clone)]
pub struct Combinations {
    n: usize,
    idx: Vec<usize>,
    done: bool,
}

impl Combinations {
    pub fn new(n: usize, k: usize) -> Self {
        Combinations {
            n,
            idx: (0..k).collect(),
            done: k > n,
        }
    }

    /// Enumerates only subsets whose smallest element is `first`.
    pub fn starting_with(n: usize, k: usize, first: usize) -> Self {
        if k == 0 || first + k > n {
            return Combinations {
                n,
                idx: Vec::new(),
                done: true,
            };
        }
        Combinations {
            n,
            idx: (first..first + k).collect(),
            done: false,
        }
    }

    /// Current subset, or `None` when exhausted.
    pub fn current(&self) -> Option<&[usize]> {
        if self.done {
            None
        } else {
            Some(&self.idx)
        }
    }

    /// Advances to the next subset. Returns `false` once exhausted.
    pub fn advance(&mut self) -> bool {
        let k = self.idx.len();
        if self.done || k == 0 {
            self.done = true;
            return false;
        }
        let mut i = k;
        while i > 0 {
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for j in (i + 1)..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                return true;
            }
        }
        self.done = true;
        false
    }

    /// Like [`advance`](Self::advance) but stops once the smallest element changes.
    pub fn advance_within_first(&mut self) -> bool {
        let first = self.idx.first().copied();
        let more = self.advance();
        if more && self.idx.first().copied() != first {
            self.done = true;
            return false;
        }
        more
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = KahanSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Frobenius inner product `Σ a_rs b_rs` of two equally shaped matrices.
pub fn frob_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x * y)
        .sum()
}
