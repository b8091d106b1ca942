//! Compressed sparse row storage and the kernels built on it.
//!
//! CSR is the only sparse format in the crate: system matrices, Galerkin
//! coarse matrices and prolongators all use [`CsrMatrix`].

use crate::error::{AmgError, Result};
use crate::vector::dot;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl CsrMatrix {
    /// Validates the CSR arrays. Column indices must be strictly increasing per row.
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != n_rows + 1 {
            return Err(AmgError::InvalidStructure(format!(
                "row_offsets has length {}, expected {}",
                row_offsets.len(),
                n_rows + 1
            )));
        }
        if row_offsets[0] != 0 {
            return Err(AmgError::InvalidStructure("row_offsets[0] != 0".into()));
        }
        if col_indices.len() != values.len() || row_offsets[n_rows] != col_indices.len() {
            return Err(AmgError::InvalidStructure(
                "row_offsets[n_rows], col_indices and values disagree".into(),
            ));
        }
        for row in 0..n_rows {
            let (start, end) = (row_offsets[row], row_offsets[row + 1]);
            if start > end {
                return Err(AmgError::InvalidStructure(format!("row {row} has negative length")));
            }
            let cols = &col_indices[start..end];
            if cols.iter().any(|&c| c >= n_cols) {
                return Err(AmgError::InvalidStructure(format!("row {row} has a column out of range")));
            }
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(AmgError::InvalidStructure(format!(
                    "row {row} columns are not strictly increasing"
                )));
            }
        }
        Ok(Self::from_parts_unchecked(n_rows, n_cols, row_offsets, col_indices, values))
    }

    pub(crate) fn from_parts_unchecked(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        Self { n_rows, n_cols, row_offsets, col_indices, values, symmetric: false }
    }

    /// Builds a matrix from coordinate triplets, summing duplicates.
    ///
    /// Duplicates are summed in ascending value order so the result does not
    /// depend on the order the triplets were produced in.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        if let Some(&(i, j, _)) = triplets.iter().find(|&&(i, j, _)| i >= n_rows || j >= n_cols) {
            return Err(AmgError::InvalidStructure(format!(
                "entry ({i}, {j}) outside a {n_rows}x{n_cols} matrix"
            )));
        }
        let mut sorted = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)).then(a.2.total_cmp(&b.2)));

        let mut row_offsets = vec![0usize; n_rows + 1];
        let mut col_indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for &(i, j, v) in &sorted {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_indices.push(j);
                values.push(v);
                row_offsets[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for r in 0..n_rows {
            row_offsets[r + 1] += row_offsets[r];
        }
        Ok(Self::from_parts_unchecked(n_rows, n_cols, row_offsets, col_indices, values))
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::from_parts_unchecked(n, n, (0..=n).collect(), (0..n).collect(), vec![1.0; n]);
        m.symmetric = true;
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::from_parts_unchecked(n, n, (0..=n).collect(), (0..n).collect(), diag.to_vec());
        m.symmetric = true;
        m
    }

    /// Dense row-major input, dropping exact zeros.
    pub fn from_dense_rows(rows: &[Vec<f64>]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut row_offsets = vec![0];
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        for row in rows {
            assert_eq!(row.len(), n_cols, "ragged dense input");
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    col_indices.push(j);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Self::from_parts_unchecked(n_rows, n_cols, row_offsets, col_indices, values)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_flagged_symmetric(&self) -> bool {
        self.symmetric
    }

    pub(crate) fn set_symmetric_flag(&mut self, flag: bool) {
        self.symmetric = flag;
    }

    /// Columns and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let range = self.row_offsets[i]..self.row_offsets[i + 1];
        (&self.col_indices[range.clone()], &self.values[range])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols)).map(|i| self.get(i, i)).collect()
    }

    /// Exact check of `a_ij == a_ji` over the stored pattern.
    pub fn is_symmetric(&self) -> bool {
        if self.n_rows != self.n_cols {
            return false;
        }
        (0..self.n_rows).all(|i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).all(|(&j, &v)| self.get(j, i) == v)
        })
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (i, row) in out.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                row[j] = v;
            }
        }
        out
    }

    /// `A·x`
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("spmv", self.n_cols, x.len())?;
        let mut y = vec![0.0; self.n_rows];
        self.spmv_into(x, &mut y);
        Ok(y)
    }

    pub(crate) fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
    }

    /// `Aᵀ·x` without forming the transpose.
    pub fn spmv_transpose(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("spmv_transpose", self.n_rows, x.len())?;
        let mut y = vec![0.0; self.n_cols];
        for (i, &xi) in x.iter().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                y[j] += v * xi;
            }
        }
        Ok(y)
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &j in &self.col_indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.n_cols {
            counts[j + 1] += counts[j];
        }
        let row_offsets = counts.clone();
        let mut next = counts;
        let mut col_indices = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        // rows are visited in order, so each output row is filled in increasing column order
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let dst = next[j];
                col_indices[dst] = i;
                values[dst] = v;
                next[j] += 1;
            }
        }
        let mut t = CsrMatrix::from_parts_unchecked(self.n_cols, self.n_rows, row_offsets, col_indices, values);
        t.symmetric = self.symmetric;
        t
    }

    /// Sparse product `self · other` (row-wise Gustavson accumulation).
    pub fn matmul(&self, other: &CsrMatrix) -> Result<CsrMatrix> {
        check_len("matmul", self.n_cols, other.n_rows)?;
        let n = other.n_cols;
        let mut acc = vec![0.0; n];
        let mut marker = vec![usize::MAX; n];
        let mut touched: Vec<usize> = Vec::new();
        let mut row_offsets = Vec::with_capacity(self.n_rows + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        for i in 0..self.n_rows {
            touched.clear();
            let (cols, vals) = self.row(i);
            for (&k, &a_ik) in cols.iter().zip(vals) {
                let (ocols, ovals) = other.row(k);
                for (&j, &b_kj) in ocols.iter().zip(ovals) {
                    if marker[j] != i {
                        marker[j] = i;
                        acc[j] = 0.0;
                        touched.push(j);
                    }
                    acc[j] += a_ik * b_kj;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                col_indices.push(j);
                values.push(acc[j]);
            }
            row_offsets.push(col_indices.len());
        }
        Ok(CsrMatrix::from_parts_unchecked(self.n_rows, n, row_offsets, col_indices, values))
    }

    /// `alpha·self + beta·other` over the union pattern.
    pub fn add_scaled(&self, alpha: f64, other: &CsrMatrix, beta: f64) -> Result<CsrMatrix> {
        check_len("add_scaled rows", self.n_rows, other.n_rows)?;
        check_len("add_scaled cols", self.n_cols, other.n_cols)?;
        let mut row_offsets = vec![0];
        let mut col_indices = Vec::with_capacity(self.nnz().max(other.nnz()));
        let mut values = Vec::with_capacity(self.nnz().max(other.nnz()));
        for i in 0..self.n_rows {
            let (ac, av) = self.row(i);
            let (bc, bv) = other.row(i);
            let (mut p, mut q) = (0, 0);
            while p < ac.len() || q < bc.len() {
                let take_a = q >= bc.len() || (p < ac.len() && ac[p] <= bc[q]);
                let take_b = p >= ac.len() || (q < bc.len() && bc[q] <= ac[p]);
                match (take_a, take_b) {
                    (true, true) => {
                        col_indices.push(ac[p]);
                        values.push(alpha * av[p] + beta * bv[q]);
                        p += 1;
                        q += 1;
                    }
                    (true, false) => {
                        col_indices.push(ac[p]);
                        values.push(alpha * av[p]);
                        p += 1;
                    }
                    _ => {
                        col_indices.push(bc[q]);
                        values.push(beta * bv[q]);
                        q += 1;
                    }
                }
            }
            row_offsets.push(col_indices.len());
        }
        Ok(CsrMatrix::from_parts_unchecked(self.n_rows, self.n_cols, row_offsets, col_indices, values))
    }
}

fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(AmgError::DimensionMismatch { context, expected, found });
    }
    Ok(())
}

/// `A·x`, see [`CsrMatrix::spmv`].
pub fn spmv(a: &CsrMatrix, x: &[f64]) -> Result<Vec<f64>> {
    a.spmv(x)
}

pub fn transpose(a: &CsrMatrix) -> CsrMatrix {
    a.transpose()
}

/// Galerkin triple product `PᵀAP`.
///
/// The result is symmetrized by averaging with its transpose, which makes it
/// exactly symmetric in floating point (addition commutes) and flags it as such.
pub fn galerkin_product(p: &CsrMatrix, a: &CsrMatrix) -> Result<CsrMatrix> {
    check_len("galerkin_product (A square)", a.n_rows, a.n_cols)?;
    check_len("galerkin_product (P rows)", a.n_rows, p.n_rows)?;
    let ap = a.matmul(p)?;
    let c = p.transpose().matmul(&ap)?;
    let mut sym = c.add_scaled(0.5, &c.transpose(), 0.5)?;
    sym.symmetric = true;
    Ok(sym)
}

/// Energy norm `sqrt(xᵀAx)`.
pub fn a_norm(a: &CsrMatrix, x: &[f64]) -> Result<f64> {
    let ax = a.spmv(x)?;
    let q = dot(x, &ax);
    if q < 0.0 {
        return Err(AmgError::NegativeQuadraticForm { value: q });
    }
    Ok(q.sqrt())
}

/// `xᵀAy`
pub fn a_inner(a: &CsrMatrix, x: &[f64], y: &[f64]) -> Result<f64> {
    Ok(dot(x, &a.spmv(y)?))
}

#[cfg(test)]
pub(crate) mod test_util {
    use super::CsrMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn laplacian_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        let mut m = CsrMatrix::from_triplets(n, n, &t).unwrap();
        m.set_symmetric_flag(true);
        m
    }

    /// Sparse random SPD matrix: symmetric random pattern made diagonally dominant.
    pub fn random_spd(n: usize, density: f64, seed: u64) -> CsrMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        let mut rowsum = vec![0.0; n];
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen::<f64>() < density {
                    let v: f64 = -rng.gen_range(0.1..1.0);
                    t.push((i, j, v));
                    t.push((j, i, v));
                    rowsum[i] += v.abs();
                    rowsum[j] += v.abs();
                }
            }
        }
        for (i, s) in rowsum.iter().enumerate() {
            t.push((i, i, s + rng.gen_range(0.1..1.0)));
        }
        let mut m = CsrMatrix::from_triplets(n, n, &t).unwrap();
        m.set_symmetric_flag(true);
        m
    }

    pub fn dense_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let (n, k, m) = (a.len(), b.len(), b[0].len());
        let mut c = vec![vec![0.0; m]; n];
        for i in 0..n {
            for l in 0..k {
                for j in 0..m {
                    c[i][j] += a[i][l] * b[l][j];
                }
            }
        }
        c
    }

    pub fn dense_t(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let (n, m) = (a.len(), a[0].len());
        (0..m).map(|j| (0..n).map(|i| a[i][j]).collect()).collect()
    }
}
