//! Small dense matrices: LU for the coarsest level, Cholesky for SPD checks,
//! and a one-sided Jacobi SVD for the per-aggregate bases.

use crate::error::{AmgError, Result};
use crate::sparse::CsrMatrix;

/// Column-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self { n_rows, n_cols, values: vec![0.0; n_rows * n_cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_columns(n_rows: usize, columns: &[Vec<f64>]) -> Self {
        let mut values = Vec::with_capacity(n_rows * columns.len());
        for c in columns {
            assert_eq!(c.len(), n_rows, "column length");
            values.extend_from_slice(c);
        }
        Self { n_rows, n_cols: columns.len(), values }
    }

    pub fn from_row_major(n_rows: usize, n_cols: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), n_rows * n_cols);
        let mut m = Self::zeros(n_rows, n_cols);
        for i in 0..n_rows {
            for j in 0..n_cols {
                m.set(i, j, data[i * n_cols + j]);
            }
        }
        m
    }

    pub fn from_csr(a: &CsrMatrix) -> Self {
        let mut m = Self::zeros(a.n_rows(), a.n_cols());
        for i in 0..a.n_rows() {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                m.set(i, j, v);
            }
        }
        m
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.n_rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[j * self.n_rows + i] = v;
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.values[j * self.n_rows..(j + 1) * self.n_rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.values[j * self.n_rows..(j + 1) * self.n_rows]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n_cols, self.n_rows);
        for j in 0..self.n_cols {
            for i in 0..self.n_rows {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Self {
        assert_eq!(self.n_cols, other.n_rows);
        let mut c = Self::zeros(self.n_rows, other.n_cols);
        for j in 0..other.n_cols {
            for k in 0..self.n_cols {
                let b = other.get(k, j);
                if b == 0.0 {
                    continue;
                }
                let a = self.col(k);
                for (ci, ai) in c.col_mut(j).iter_mut().zip(a) {
                    *ci += ai * b;
                }
            }
        }
        c
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// LU factorization with partial pivoting, `PA = LU`.
#[derive(Debug, Clone)]
pub struct LuFactors {
    lu: DenseMatrix,
    pivots: Vec<usize>,
}

impl LuFactors {
    pub fn factor(a: &DenseMatrix) -> Result<Self> {
        let n = a.n_rows();
        if a.n_cols() != n {
            return Err(AmgError::DimensionMismatch { context: "lu (square)", expected: n, found: a.n_cols() });
        }
        let mut lu = a.clone();
        let mut pivots = (0..n).collect::<Vec<_>>();
        let scale = a.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu.get(i, k).abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pmax <= f64::EPSILON * scale * n as f64 || pmax == 0.0 {
                return Err(AmgError::SingularMatrix { pivot: k });
            }
            if p != k {
                pivots.swap(p, k);
                for j in 0..n {
                    let tmp = lu.get(k, j);
                    lu.set(k, j, lu.get(p, j));
                    lu.set(p, j, tmp);
                }
            }
            let d = lu.get(k, k);
            for i in (k + 1)..n {
                let l = lu.get(i, k) / d;
                lu.set(i, k, l);
            }
            for j in (k + 1)..n {
                let ukj = lu.get(k, j);
                if ukj == 0.0 {
                    continue;
                }
                for i in (k + 1)..n {
                    let v = lu.get(i, j) - lu.get(i, k) * ukj;
                    lu.set(i, j, v);
                }
            }
        }
        Ok(Self { lu, pivots })
    }

    pub fn dim(&self) -> usize {
        self.pivots.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.pivots.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.lu.get(i, k) * x[k];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.lu.get(i, k) * x[k];
            }
            x[i] = s / self.lu.get(i, i);
        }
        x
    }
}

/// Lower Cholesky factor of an SPD matrix; fails on a non-positive pivot.
pub fn cholesky(a: &DenseMatrix) -> Result<DenseMatrix> {
    let n = a.n_rows();
    if a.n_cols() != n {
        return Err(AmgError::DimensionMismatch { context: "cholesky (square)", expected: n, found: a.n_cols() });
    }
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(AmgError::NotPositiveDefinite { pivot: j, value: d });
        }
        let d = d.sqrt();
        l.set(j, j, d);
        for i in (j + 1)..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / d);
        }
    }
    Ok(l)
}

/// Thin SVD `A = U·diag(σ)·Vᵀ` with `U` of size m×k, `V` k×k, k = `A.n_cols()`.
///
/// Singular values are sorted in descending order. Columns of `U` whose
/// singular value is exactly zero are left as zero vectors.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub v: DenseMatrix,
}

pub const JACOBI_MAX_SWEEPS: usize = 60;
const JACOBI_OFF_TOL: f64 = 1e-14;

/// One-sided (Hestenes) Jacobi SVD.
///
/// Columns are rotated pairwise until the off-diagonal part of the Gram
/// matrix, measured in Frobenius norm relative to `‖A‖²_F`, drops below
/// 1e-14. Returns `None` if that does not happen within the sweep cap.
///
/// Sign convention: each left singular vector is flipped so that its
/// largest-magnitude entry is positive.
pub fn jacobi_svd(a: &DenseMatrix) -> Option<Svd> {
    let (m, k) = (a.n_rows(), a.n_cols());
    let mut u = a.clone();
    let mut v = DenseMatrix::identity(k);
    let frob2 = a.values().iter().map(|x| x * x).sum::<f64>();

    let mut converged = frob2 == 0.0 || k < 2;
    let mut sweep = 0;
    while !converged && sweep < JACOBI_MAX_SWEEPS {
        sweep += 1;
        let mut off2 = 0.0;
        let mut rotated = false;
        for p in 0..k - 1 {
            for q in (p + 1)..k {
                let (alpha, beta, gamma) = {
                    let (up, uq) = (u.col(p), u.col(q));
                    let mut al = 0.0;
                    let mut be = 0.0;
                    let mut ga = 0.0;
                    for i in 0..m {
                        al += up[i] * up[i];
                        be += uq[i] * uq[i];
                        ga += up[i] * uq[i];
                    }
                    (al, be, ga)
                };
                off2 += gamma * gamma;
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut u, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        converged = !rotated || off2.sqrt() <= JACOBI_OFF_TOL * frob2;
    }
    if !converged {
        return None;
    }

    let mut sigma: Vec<f64> = (0..k).map(|j| crate::vector::norm2(u.col(j))).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| sigma[y].total_cmp(&sigma[x]).then(x.cmp(&y)));

    let mut u_sorted = DenseMatrix::zeros(m, k);
    let mut v_sorted = DenseMatrix::zeros(k, k);
    for (dst, &src) in order.iter().enumerate() {
        let s = sigma[src];
        let mut ucol: Vec<f64> = if s > 0.0 { u.col(src).iter().map(|x| x / s).collect() } else { vec![0.0; m] };
        let mut vcol = v.col(src).to_vec();
        let lead = ucol.iter().copied().fold(0.0_f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if lead < 0.0 {
            ucol.iter_mut().for_each(|x| *x = -*x);
            vcol.iter_mut().for_each(|x| *x = -*x);
        }
        u_sorted.col_mut(dst).copy_from_slice(&ucol);
        v_sorted.col_mut(dst).copy_from_slice(&vcol);
    }
    sigma = order.iter().map(|&i| sigma[i]).collect();
    Some(Svd { u: u_sorted, singular_values: sigma, v: v_sorted })
}

fn rotate_columns(m: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    let rows = m.n_rows();
    for i in 0..rows {
        let xp = m.get(i, p);
        let xq = m.get(i, q);
        m.set(i, p, c * xp - s * xq);
        m.set(i, q, s * xp + c * xq);
    }
}
