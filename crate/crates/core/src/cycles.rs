//! Smoothers, the coarsest-level solver, and V-/K-cycle application.

use crate::dense::{DenseMatrix, LuFactors};
use crate::error::{AmgError, Result};
use crate::krylov::fcg;
use crate::multivector::MultiVectorHierarchy;
use crate::pairwise::PairwiseHierarchy;
use crate::sparse::CsrMatrix;

/// Largest coarsest level accepted for the dense direct solve.
pub const MAX_DENSE_COARSE: usize = 6000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SmootherKind {
    GaussSeidelForward,
    GaussSeidelBackward,
    WeightedJacobi(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmootherSpec {
    pub kind: SmootherKind,
    pub sweeps: usize,
}

impl SmootherSpec {
    pub fn forward_gs() -> Self {
        Self { kind: SmootherKind::GaussSeidelForward, sweeps: 1 }
    }

    pub fn backward_gs() -> Self {
        Self { kind: SmootherKind::GaussSeidelBackward, sweeps: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycleKind {
    V,
    K,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleSpec {
    pub kind: CycleKind,
    /// Inner flexible CG iterations per coarse solve (K only; 0 behaves as V).
    pub inner_fcg_iters: usize,
    pub pre: SmootherSpec,
    pub post: SmootherSpec,
}

impl CycleSpec {
    pub fn v() -> Self {
        Self { kind: CycleKind::V, inner_fcg_iters: 0, pre: SmootherSpec::forward_gs(), post: SmootherSpec::backward_gs() }
    }

    pub fn k(inner_fcg_iters: usize) -> Self {
        Self { kind: CycleKind::K, inner_fcg_iters, ..Self::v() }
    }
}

impl Default for CycleSpec {
    fn default() -> Self {
        Self::v()
    }
}

/// One in-place Gauss-Seidel sweep on `A x = b`.
pub fn gauss_seidel_sweep(a: &CsrMatrix, b: &[f64], x: &mut [f64], direction: Direction) -> Result<()> {
    let n = a.n_rows();
    if b.len() != n || x.len() != n {
        return Err(AmgError::DimensionMismatch { context: "gauss-seidel", expected: n, found: b.len().min(x.len()) });
    }
    let inv_diag = inverse_diagonal(a)?;
    gs_sweep(a, &inv_diag, b, x, direction);
    Ok(())
}

fn inverse_diagonal(a: &CsrMatrix) -> Result<Vec<f64>> {
    a.diagonal()
        .into_iter()
        .enumerate()
        .map(|(row, d)| if d == 0.0 { Err(AmgError::ZeroDiagonal { row }) } else { Ok(1.0 / d) })
        .collect()
}

fn gs_sweep(a: &CsrMatrix, inv_diag: &[f64], b: &[f64], x: &mut [f64], direction: Direction) {
    let offsets = a.row_offsets();
    let cols = a.col_indices();
    let vals = a.values();
    let mut update = |i: usize| {
        let mut s = b[i];
        for k in offsets[i]..offsets[i + 1] {
            let j = cols[k];
            if j != i {
                s -= vals[k] * x[j];
            }
        }
        x[i] = s * inv_diag[i];
    };
    match direction {
        Direction::Forward => (0..a.n_rows()).for_each(&mut update),
        Direction::Backward => (0..a.n_rows()).rev().for_each(&mut update),
    }
}

#[derive(Debug, Clone)]
pub struct CycleLevel {
    pub matrix: CsrMatrix,
    /// Maps this level to the next finer one (`None` on the finest level).
    pub prolongator: Option<CsrMatrix>,
    restriction: Option<CsrMatrix>,
    inv_diag: Vec<f64>,
}

/// Dense LU of the coarsest matrix.
#[derive(Debug, Clone)]
pub struct CoarseSolver {
    lu: LuFactors,
}

impl CoarseSolver {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        if a.n_rows() > MAX_DENSE_COARSE {
            return Err(AmgError::InvalidParameter(format!(
                "coarsest level has {} dofs, above the dense limit {MAX_DENSE_COARSE}",
                a.n_rows()
            )));
        }
        Ok(Self { lu: LuFactors::factor(&DenseMatrix::from_csr(a))? })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.lu.solve(b)
    }
}

/// An immutable multilevel hierarchy ready for cycling.
#[derive(Debug, Clone)]
pub struct MultilevelHierarchy {
    levels: Vec<CycleLevel>,
    coarse: CoarseSolver,
}

impl MultilevelHierarchy {
    /// `levels[k] = (A_k, P_k)` with `P_k` mapping level k to level k−1.
    pub fn from_levels(levels: Vec<(CsrMatrix, Option<CsrMatrix>)>) -> Result<Self> {
        if levels.is_empty() {
            return Err(AmgError::InvalidParameter("hierarchy has no levels".into()));
        }
        let mut built = Vec::with_capacity(levels.len());
        for (k, (matrix, prolongator)) in levels.into_iter().enumerate() {
            if (k == 0) != prolongator.is_none() {
                return Err(AmgError::InvalidParameter(format!("level {k} prolongator presence is inconsistent")));
            }
            if let Some(p) = &prolongator {
                let prev: &CycleLevel = &built[k - 1];
                if p.n_rows() != prev.matrix.n_rows() || p.n_cols() != matrix.n_rows() {
                    return Err(AmgError::DimensionMismatch {
                        context: "hierarchy prolongator",
                        expected: prev.matrix.n_rows(),
                        found: p.n_rows(),
                    });
                }
            }
            let inv_diag = inverse_diagonal(&matrix)?;
            let restriction = prolongator.as_ref().map(CsrMatrix::transpose);
            built.push(CycleLevel { matrix, prolongator, restriction, inv_diag });
        }
        let coarse = CoarseSolver::new(&built.last().unwrap().matrix)?;
        Ok(Self { levels: built, coarse })
    }

    pub fn from_pairwise(h: &PairwiseHierarchy) -> Result<Self> {
        Self::from_levels(h.levels.iter().map(|l| (l.matrix.clone(), l.prolongator.clone())).collect())
    }

    pub fn from_multivector(h: &MultiVectorHierarchy) -> Result<Self> {
        Self::from_levels(
            h.levels
                .iter()
                .map(|l| (l.matrix.clone(), l.prolongator.as_ref().map(|bp| bp.p.clone())))
                .collect(),
        )
    }

    pub fn levels(&self) -> &[CycleLevel] {
        &self.levels
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.levels[0].matrix
    }

    fn smooth(&self, level: usize, spec: SmootherSpec, b: &[f64], x: &mut [f64]) {
        let lvl = &self.levels[level];
        for _ in 0..spec.sweeps {
            match spec.kind {
                SmootherKind::GaussSeidelForward => gs_sweep(&lvl.matrix, &lvl.inv_diag, b, x, Direction::Forward),
                SmootherKind::GaussSeidelBackward => gs_sweep(&lvl.matrix, &lvl.inv_diag, b, x, Direction::Backward),
                SmootherKind::WeightedJacobi(omega) => {
                    let ax = lvl.matrix.spmv(x).expect("level dimensions are consistent");
                    for i in 0..x.len() {
                        x[i] += omega * lvl.inv_diag[i] * (b[i] - ax[i]);
                    }
                }
            }
        }
    }

    fn cycle(&self, level: usize, spec: &CycleSpec, r: &[f64]) -> Result<Vec<f64>> {
        let last = self.levels.len() - 1;
        if level == last {
            return Ok(self.coarse.solve(r));
        }
        let lvl = &self.levels[level];
        let next = &self.levels[level + 1];
        let mut z = vec![0.0; r.len()];
        self.smooth(level, spec.pre, r, &mut z);

        let mut res = vec![0.0; r.len()];
        lvl.matrix.spmv_into(&z, &mut res);
        res.iter_mut().zip(r).for_each(|(ri, bi)| *ri = bi - *ri);
        let restriction = next.restriction.as_ref().expect("coarse levels carry a restriction");
        let rc = restriction.spmv(&res)?;

        let ec = if spec.kind == CycleKind::K && spec.inner_fcg_iters > 0 && level + 1 < last {
            let inner = |v: &[f64]| self.cycle(level + 1, spec, v);
            fcg(&next.matrix, &rc, &inner, spec.inner_fcg_iters)?
        } else {
            self.cycle(level + 1, spec, &rc)?
        };
        let correction = next.prolongator.as_ref().expect("coarse levels carry a prolongator").spmv(&ec)?;
        z.iter_mut().zip(&correction).for_each(|(zi, ci)| *zi += ci);
        self.smooth(level, spec.post, r, &mut z);
        Ok(z)
    }
}

/// `z ≈ B⁻¹r` for one cycle of `spec`.
pub fn apply_cycle(h: &MultilevelHierarchy, spec: &CycleSpec, r: &[f64]) -> Result<Vec<f64>> {
    let n = h.matrix().n_rows();
    if r.len() != n {
        return Err(AmgError::DimensionMismatch { context: "apply cycle", expected: n, found: r.len() });
    }
    h.cycle(0, spec, r)
}

/// `(I − B⁻¹A)x`.
pub fn error_propagation_apply(h: &MultilevelHierarchy, spec: &CycleSpec, x: &[f64]) -> Result<Vec<f64>> {
    let ax = h.matrix().spmv(x)?;
    let z = apply_cycle(h, spec, &ax)?;
    Ok(x.iter().zip(&z).map(|(xi, zi)| xi - zi).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairwise::{build_pairwise_hierarchy, CoarseningParams};
    use crate::sparse::a_norm;
    use crate::sparse::test_util::{laplacian_1d, random_spd};
    use crate::vector::{dot, random_vector};

    fn hierarchy(a: &CsrMatrix, min: usize) -> MultilevelHierarchy {
        let w = vec![1.0; a.n_rows()];
        let params = CoarseningParams { min_coarse_size: min, ..Default::default() };
        MultilevelHierarchy::from_pairwise(&build_pairwise_hierarchy(a, &w, params).unwrap()).unwrap()
    }

    #[test]
    fn gauss_seidel_examples() {
        let a = laplacian_1d(3);
        let mut x = vec![1.0; 3];
        gauss_seidel_sweep(&a, &[0.0; 3], &mut x, Direction::Forward).unwrap();
        assert_eq!(x, vec![0.5, 0.75, 0.375]);

        let d = CsrMatrix::from_diagonal(&[2.0, 4.0]);
        let mut x = vec![9.0, 9.0];
        gauss_seidel_sweep(&d, &[1.0, 1.0], &mut x, Direction::Backward).unwrap();
        assert_eq!(x, vec![0.5, 0.25]);

        let z = CsrMatrix::from_dense_rows(&[vec![0.0, 1.0], vec![1.0, 1.0]]);
        assert!(matches!(
            gauss_seidel_sweep(&z, &[1.0, 1.0], &mut [0.0, 0.0], Direction::Forward),
            Err(AmgError::ZeroDiagonal { row: 0 })
        ));
    }

    #[test]
    fn single_level_is_direct_solve() {
        let a = random_spd(30, 0.2, 3);
        let h = MultilevelHierarchy::from_levels(vec![(a.clone(), None)]).unwrap();
        let b = random_vector(30, 1);
        let x = apply_cycle(&h, &CycleSpec::v(), &b).unwrap();
        let res: Vec<f64> = a.spmv(&x).unwrap().iter().zip(&b).map(|(u, v)| u - v).collect();
        assert!(crate::vector::norm2(&res) < 1e-12 * crate::vector::norm2(&b));
        let e = error_propagation_apply(&h, &CycleSpec::v(), &b).unwrap();
        assert!(crate::vector::norm_inf(&e) < 1e-12);
    }

    #[test]
    fn zero_in_zero_out() {
        let h = hierarchy(&laplacian_1d(200), 10);
        assert!(h.num_levels() > 2);
        for spec in [CycleSpec::v(), CycleSpec::k(2)] {
            assert_eq!(apply_cycle(&h, &spec, &[0.0; 200]).unwrap(), vec![0.0; 200]);
            assert_eq!(error_propagation_apply(&h, &spec, &[0.0; 200]).unwrap(), vec![0.0; 200]);
        }
    }

    #[test]
    fn v_cycle_is_symmetric_and_positive() {
        let a = random_spd(400, 0.01, 17);
        let h = hierarchy(&a, 20);
        let spec = CycleSpec::v();
        for seed in 0..5 {
            let u = random_vector(400, seed);
            let v = random_vector(400, seed + 100);
            let bu = apply_cycle(&h, &spec, &u).unwrap();
            let bv = apply_cycle(&h, &spec, &v).unwrap();
            let (l, r) = (dot(&bu, &v), dot(&u, &bv));
            assert!((l - r).abs() <= 1e-10 * l.abs().max(r.abs()).max(1.0));
            assert!(dot(&bu, &u) > 0.0);
        }
    }

    #[test]
    fn k_with_zero_inner_is_v() {
        let h = hierarchy(&laplacian_1d(300), 10);
        let r = random_vector(300, 2);
        let v = apply_cycle(&h, &CycleSpec::v(), &r).unwrap();
        let k0 = apply_cycle(&h, &CycleSpec::k(0), &r).unwrap();
        for (x, y) in v.iter().zip(&k0) {
            assert!((x - y).abs() <= 1e-14 * x.abs().max(1.0));
        }
        let k2 = apply_cycle(&h, &CycleSpec::k(2), &r).unwrap();
        assert_ne!(v, k2);
    }

    #[test]
    fn cycles_contract_in_a_norm() {
        let a = random_spd(300, 0.02, 8);
        let h = hierarchy(&a, 20);
        for spec in [CycleSpec::v(), CycleSpec::k(2)] {
            let mut x = random_vector(300, 4);
            for _ in 0..10 {
                let before = a_norm(&a, &x).unwrap();
                x = error_propagation_apply(&h, &spec, &x).unwrap();
                assert!(a_norm(&a, &x).unwrap() < before);
            }
        }
        // two-level with exact coarse solve
        let h2 = MultilevelHierarchy::from_levels(vec![
            (a.clone(), None),
            {
                let ph = build_pairwise_hierarchy(&a, &[1.0; 300], CoarseningParams { max_levels: 2, ..Default::default() }).unwrap();
                (ph.levels[1].matrix.clone(), ph.levels[1].prolongator.clone())
            },
        ])
        .unwrap();
        let x0 = random_vector(300, 6);
        let mut x = x0.clone();
        for _ in 0..10 {
            x = error_propagation_apply(&h2, &CycleSpec::v(), &x).unwrap();
        }
        assert!(a_norm(&a, &x).unwrap() < a_norm(&a, &x0).unwrap());
    }

    #[test]
    fn jacobi_smoother_cycle_is_symmetric() {
        let a = random_spd(200, 0.02, 21);
        let h = hierarchy(&a, 20);
        let jac = SmootherSpec { kind: SmootherKind::WeightedJacobi(0.6), sweeps: 2 };
        let spec = CycleSpec { pre: jac, post: jac, ..CycleSpec::v() };
        let u = random_vector(200, 1);
        let v = random_vector(200, 2);
        let l = dot(&apply_cycle(&h, &spec, &u).unwrap(), &v);
        let r = dot(&u, &apply_cycle(&h, &spec, &v).unwrap());
        assert!((l - r).abs() <= 1e-10 * l.abs().max(1.0));
    }

    #[test]
    fn bad_hierarchies_rejected() {
        assert!(MultilevelHierarchy::from_levels(vec![]).is_err());
        let a = laplacian_1d(4);
        assert!(MultilevelHierarchy::from_levels(vec![(a.clone(), Some(CsrMatrix::identity(4)))]).is_err());
        let h = MultilevelHierarchy::from_levels(vec![(a, None)]).unwrap();
        assert!(apply_cycle(&h, &CycleSpec::v(), &[1.0; 3]).is_err());
    }
}
