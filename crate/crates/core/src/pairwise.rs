//! Coarsening based on compatible weighted matching.
//!
//! A matching of the edge-weight graph splits the dofs into pairs and
//! singletons. Each pair `e = (i, j)` contributes the unit vector `w_e` (the
//! smooth vector restricted to the pair) as a column of `P_c` and the
//! `D`-normalized complement `w_e⊥` as a column of `P_f`; a singleton `k`
//! contributes `sign(w_k)` to `P_c`. With `D = diag(A)`, `P_cᵀ D P_f = 0`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{AmgError, Result};
use crate::matching::{build_edge_weights, greedy_max_product_matching, Matching};
use crate::sparse::{galerkin_product, CsrMatrix};
use crate::vector::norm_inf;

/// Relative size of the replacement for a zero smooth-vector entry at an unmatched vertex.
pub const ZERO_ENTRY_PERTURBATION: f64 = 1e-8;

/// A coarse dof of one pairwise step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoarseBlock {
    Pair(usize, usize),
    Singleton(usize),
}

#[derive(Debug, Clone)]
pub struct PairProlongators {
    /// `P_c`, n × (n_p + n_s)
    pub coarse: CsrMatrix,
    /// `P_f`, n × n_p
    pub fine: CsrMatrix,
    /// Coarse column `c` is built from `blocks[c]`: matched pairs first, then singletons.
    pub blocks: Vec<CoarseBlock>,
}

impl PairProlongators {
    pub fn n_pairs(&self) -> usize {
        self.fine.n_cols()
    }
}

/// Builds `P_c` and `P_f` from a matching.
///
/// Fails with [`AmgError::ZeroSmoothEntry`] if an unmatched vertex has
/// `w_k == 0`; use [`perturb_unmatched_zeros`] first.
pub fn build_pair_prolongators(a: &CsrMatrix, w: &[f64], m: &Matching) -> Result<PairProlongators> {
    let n = a.n_rows();
    if w.len() != n {
        return Err(AmgError::DimensionMismatch { context: "pair prolongators", expected: n, found: w.len() });
    }
    let diag = a.diagonal();
    let n_p = m.pairs.len();
    let mut coarse_trip = Vec::with_capacity(n);
    let mut fine_trip = Vec::with_capacity(2 * n_p);
    let mut blocks = Vec::with_capacity(n_p + m.unmatched.len());

    for (c, &(i, j)) in m.pairs.iter().enumerate() {
        let (wi, wj) = (w[i], w[j]);
        let norm = (wi * wi + wj * wj).sqrt();
        if norm == 0.0 {
            return Err(AmgError::ZeroSmoothEntry { vertex: i });
        }
        let (aii, ajj) = (diag[i], diag[j]);
        if aii <= 0.0 {
            return Err(AmgError::ZeroDiagonal { row: i });
        }
        if ajj <= 0.0 {
            return Err(AmgError::ZeroDiagonal { row: j });
        }
        coarse_trip.push((i, c, wi / norm));
        coarse_trip.push((j, c, wj / norm));
        let perp = (wj * wj / aii + wi * wi / ajj).sqrt();
        fine_trip.push((i, c, -wj / aii / perp));
        fine_trip.push((j, c, wi / ajj / perp));
        blocks.push(CoarseBlock::Pair(i, j));
    }
    let mut singles = m.unmatched.clone();
    singles.sort_unstable();
    for (s, &k) in singles.iter().enumerate() {
        if w[k] == 0.0 {
            return Err(AmgError::ZeroSmoothEntry { vertex: k });
        }
        coarse_trip.push((k, n_p + s, w[k].signum()));
        blocks.push(CoarseBlock::Singleton(k));
    }
    Ok(PairProlongators {
        coarse: CsrMatrix::from_triplets(n, blocks.len(), &coarse_trip)?,
        fine: CsrMatrix::from_triplets(n, n_p, &fine_trip)?,
        blocks,
    })
}

/// Replaces `w_k = 0` at unmatched vertices by `1e-8·‖w‖_∞`; returns how many were changed.
pub fn perturb_unmatched_zeros(w: &mut [f64], m: &Matching) -> Result<usize> {
    let zeros: Vec<usize> = m.unmatched.iter().copied().filter(|&k| w[k] == 0.0).collect();
    if zeros.is_empty() {
        return Ok(0);
    }
    let scale = norm_inf(w);
    if scale == 0.0 {
        return Err(AmgError::ZeroSmoothVector);
    }
    for &k in &zeros {
        w[k] = ZERO_ENTRY_PERTURBATION * scale;
    }
    Ok(zeros.len())
}

/// Result of composing several pairwise steps.
#[derive(Debug, Clone)]
pub struct ComposedCoarsening {
    /// Product of the `P_c` factors, fine × coarse.
    pub prolongator: CsrMatrix,
    pub coarse_matrix: CsrMatrix,
    pub coarse_vector: Vec<f64>,
    /// Fine indices (sorted) grouped by coarse dof.
    pub aggregates: Vec<Vec<usize>>,
    pub steps_taken: usize,
    /// A step produced an empty matching and coarsening stopped early.
    pub stagnated: bool,
    pub perturbed_entries: usize,
}

/// Runs `steps` rounds of weights → matching → `P_c` → Galerkin.
pub fn compose_pairwise_steps(a: &CsrMatrix, w: &[f64], steps: usize) -> Result<ComposedCoarsening> {
    if steps == 0 {
        return Err(AmgError::InvalidParameter("pairwise steps must be >= 1".into()));
    }
    let n = a.n_rows();
    if w.len() != n {
        return Err(AmgError::DimensionMismatch { context: "compose pairwise steps", expected: n, found: w.len() });
    }
    let mut current_a = a.clone();
    let mut current_w = w.to_vec();
    let mut prolongator: Option<CsrMatrix> = None;
    let mut aggregates: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut steps_taken = 0;
    let mut stagnated = false;
    let mut perturbed_entries = 0;

    for _ in 0..steps {
        let graph = build_edge_weights(&current_a, &current_w)?;
        let matching = greedy_max_product_matching(&graph);
        if matching.pairs.is_empty() {
            stagnated = true;
            break;
        }
        perturbed_entries += perturb_unmatched_zeros(&mut current_w, &matching)?;
        let pp = build_pair_prolongators(&current_a, &current_w, &matching)?;
        current_a = galerkin_product(&pp.coarse, &current_a)?;
        current_w = pp.coarse.spmv_transpose(&current_w)?;
        aggregates = pp
            .blocks
            .iter()
            .map(|b| {
                let mut agg = match *b {
                    CoarseBlock::Pair(i, j) => {
                        let mut v = aggregates[i].clone();
                        v.extend_from_slice(&aggregates[j]);
                        v
                    }
                    CoarseBlock::Singleton(k) => aggregates[k].clone(),
                };
                agg.sort_unstable();
                agg
            })
            .collect();
        prolongator = Some(match prolongator {
            None => pp.coarse,
            Some(p) => p.matmul(&pp.coarse)?,
        });
        steps_taken += 1;
    }

    Ok(ComposedCoarsening {
        prolongator: prolongator.unwrap_or_else(|| CsrMatrix::identity(n)),
        coarse_matrix: current_a,
        coarse_vector: current_w,
        aggregates,
        steps_taken,
        stagnated,
        perturbed_entries,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoarseningParams {
    /// Pairwise steps composed per hierarchy level (2 = double pairwise).
    pub pairwise_steps: usize,
    pub max_levels: usize,
    pub min_coarse_size: usize,
}

impl Default for CoarseningParams {
    fn default() -> Self {
        Self { pairwise_steps: 2, max_levels: 20, min_coarse_size: 40 }
    }
}

/// Minimum relative size reduction per level; smaller reductions end coarsening.
pub const MIN_LEVEL_REDUCTION: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct PairwiseLevel {
    pub matrix: CsrMatrix,
    /// Prolongator from this level to the next finer one (`None` on level 0).
    pub prolongator: Option<CsrMatrix>,
    /// Aggregates of the next finer level's dofs, one per dof of this level.
    pub aggregates: Vec<Vec<usize>>,
    pub smooth_vector: Vec<f64>,
}

impl PairwiseLevel {
    pub fn size(&self) -> usize {
        self.matrix.n_rows()
    }
}

#[derive(Debug, Clone)]
pub struct PairwiseHierarchy {
    pub levels: Vec<PairwiseLevel>,
    pub params: CoarseningParams,
    pub perturbed_entries: usize,
}

impl PairwiseHierarchy {
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.levels.iter().map(PairwiseLevel::size).collect()
    }
}

/// Repeated [`compose_pairwise_steps`] until the coarse size or level cap is reached.
///
/// A level that shrinks by less than 10% is kept as the coarsest level.
/// An empty matching on the finest level is an error.
pub fn build_pairwise_hierarchy(a: &CsrMatrix, w: &[f64], params: CoarseningParams) -> Result<PairwiseHierarchy> {
    let n = a.n_rows();
    if a.n_cols() != n {
        return Err(AmgError::DimensionMismatch { context: "pairwise hierarchy (square)", expected: n, found: a.n_cols() });
    }
    if w.len() != n {
        return Err(AmgError::DimensionMismatch { context: "pairwise hierarchy", expected: n, found: w.len() });
    }
    if params.max_levels == 0 {
        return Err(AmgError::InvalidParameter("max_levels must be >= 1".into()));
    }
    let mut levels = vec![PairwiseLevel {
        matrix: a.clone(),
        prolongator: None,
        aggregates: Vec::new(),
        smooth_vector: w.to_vec(),
    }];
    let mut perturbed_entries = 0;

    while levels.len() < params.max_levels {
        let last = levels.last().unwrap();
        let size = last.size();
        if size <= params.min_coarse_size {
            break;
        }
        let composed = compose_pairwise_steps(&last.matrix, &last.smooth_vector, params.pairwise_steps)?;
        let coarse_size = composed.coarse_matrix.n_rows();
        if coarse_size >= size {
            if levels.len() == 1 {
                return Err(AmgError::Stagnation { level: 0 });
            }
            break;
        }
        perturbed_entries += composed.perturbed_entries;
        let weak = (coarse_size as f64) > (1.0 - MIN_LEVEL_REDUCTION) * size as f64;
        levels.push(PairwiseLevel {
            matrix: composed.coarse_matrix,
            prolongator: Some(composed.prolongator),
            aggregates: composed.aggregates,
            smooth_vector: composed.coarse_vector,
        });
        if weak {
            log::debug!("coarsening stalled at level {} ({} -> {})", levels.len() - 1, size, coarse_size);
            break;
        }
    }
    Ok(PairwiseHierarchy { levels, params, perturbed_entries })
}

/// Estimated convergence factor of Jacobi relaxation on `A_f = P_fᵀAP_f`.
///
/// Power iteration of `I − D_f⁻¹A_f` from a seeded random vector, measuring
/// growth in the `D_f` norm (in which the iteration matrix is self-adjoint).
pub fn compatible_relaxation_quality(a: &CsrMatrix, pp: &PairProlongators, sweeps: usize, seed: u64) -> Result<f64> {
    if pp.fine.n_rows() != a.n_rows() {
        return Err(AmgError::DimensionMismatch {
            context: "compatible relaxation",
            expected: a.n_rows(),
            found: pp.fine.n_rows(),
        });
    }
    let af = galerkin_product(&pp.fine, a)?;
    let nf = af.n_rows();
    if nf == 0 || sweeps == 0 {
        return Ok(0.0);
    }
    let d = af.diagonal();
    if let Some(row) = d.iter().position(|&v| v <= 0.0) {
        return Err(AmgError::ZeroDiagonal { row });
    }
    let d_norm = |x: &[f64]| x.iter().zip(&d).map(|(xi, di)| di * xi * xi).sum::<f64>().sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..nf).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut factor = 0.0;
    for _ in 0..sweeps {
        let before = d_norm(&x);
        if before == 0.0 {
            return Ok(0.0);
        }
        let ax = af.spmv(&x)?;
        for i in 0..nf {
            x[i] -= ax[i] / d[i];
        }
        let after = d_norm(&x);
        factor = after / before;
        // renormalize to keep the iterate in range
        x.iter_mut().for_each(|v| *v /= before);
    }
    Ok(factor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::{cholesky, DenseMatrix};
    use crate::sparse::test_util::{laplacian_1d, random_spd};
    use proptest::prelude::*;

    #[test]
    fn two_node_example() {
        let a = CsrMatrix::from_diagonal(&[2.0, 2.0]);
        let m = Matching { pairs: vec![(0, 1)], unmatched: vec![] };
        let pp = build_pair_prolongators(&a, &[1.0, 1.0], &m).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert_eq!(pp.coarse.to_dense(), vec![vec![s], vec![s]]);
        assert_eq!(pp.fine.to_dense(), vec![vec![-0.5], vec![0.5]]);
        let dot = s * 2.0 * -0.5 + s * 2.0 * 0.5;
        assert_eq!(dot, 0.0);
    }

    #[test]
    fn singleton_takes_sign() {
        let a = CsrMatrix::from_diagonal(&[1.0]);
        let m = Matching { pairs: vec![], unmatched: vec![0] };
        let pp = build_pair_prolongators(&a, &[-3.0], &m).unwrap();
        assert_eq!(pp.coarse.to_dense(), vec![vec![-1.0]]);
        assert_eq!(pp.fine.n_cols(), 0);
    }

    #[test]
    fn zero_entry_errors_then_perturbs() {
        let a = laplacian_1d(3);
        let m = Matching { pairs: vec![(0, 1)], unmatched: vec![2] };
        let mut w = vec![1.0, -2.0, 0.0];
        assert!(matches!(build_pair_prolongators(&a, &w, &m), Err(AmgError::ZeroSmoothEntry { vertex: 2 })));
        assert_eq!(perturb_unmatched_zeros(&mut w, &m).unwrap(), 1);
        assert_eq!(w[2], 2e-8);
        let pp = build_pair_prolongators(&a, &w, &m).unwrap();
        assert_eq!(pp.coarse.get(2, 1), 1.0);
    }

    #[test]
    fn constant_vector_gives_symmetric_pairs() {
        let a = laplacian_1d(6);
        let w = vec![1.0; 6];
        let m = greedy_max_product_matching(&build_edge_weights(&a, &w).unwrap());
        let pp = build_pair_prolongators(&a, &w, &m).unwrap();
        let s = 1.0 / 2f64.sqrt();
        for c in 0..pp.coarse.n_cols() {
            let col: Vec<f64> = (0..6).map(|i| pp.coarse.get(i, c)).filter(|&v| v != 0.0).collect();
            assert_eq!(col, vec![s, s]);
        }
    }

    #[test]
    fn coarse_ordering_pairs_then_singletons() {
        let a = laplacian_1d(5);
        let m = Matching { pairs: vec![(3, 4), (0, 1)], unmatched: vec![2] };
        let pp = build_pair_prolongators(&a, &[1.0; 5], &m).unwrap();
        assert_eq!(pp.blocks, vec![CoarseBlock::Pair(3, 4), CoarseBlock::Pair(0, 1), CoarseBlock::Singleton(2)]);
    }

    #[test]
    fn one_step_on_path() {
        let c = compose_pairwise_steps(&laplacian_1d(4), &[1.0; 4], 1).unwrap();
        assert_eq!(c.aggregates, vec![vec![0, 1], vec![2, 3]]);
        assert!(!c.stagnated);
    }

    #[test]
    fn two_steps_bound_and_unit_columns() {
        let a = laplacian_1d(13);
        let w = crate::vector::random_vector(13, 4).iter().map(|v| v + 2.0).collect::<Vec<_>>();
        let c = compose_pairwise_steps(&a, &w, 2).unwrap();
        assert!(c.aggregates.iter().all(|g| g.len() <= 4));
        let pt = c.prolongator.transpose();
        for j in 0..pt.n_rows() {
            let norm = crate::vector::norm2(pt.row(j).1);
            assert!((norm - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn steps_zero_rejected_and_diagonal_stagnates() {
        assert!(compose_pairwise_steps(&laplacian_1d(4), &[1.0; 4], 0).is_err());
        let d = CsrMatrix::from_diagonal(&[1.0; 50]);
        let c = compose_pairwise_steps(&d, &[1.0; 50], 2).unwrap();
        assert!(c.stagnated);
        assert_eq!(c.steps_taken, 0);
        assert!(matches!(
            build_pairwise_hierarchy(&d, &[1.0; 50], CoarseningParams::default()),
            Err(AmgError::Stagnation { level: 0 })
        ));
    }

    #[test]
    fn hierarchy_on_path_64() {
        let params = CoarseningParams { min_coarse_size: 4, ..Default::default() };
        let h = build_pairwise_hierarchy(&laplacian_1d(64), &[1.0; 64], params).unwrap();
        assert_eq!(h.sizes(), vec![64, 16, 4]);
        let h = build_pairwise_hierarchy(&laplacian_1d(30), &[1.0; 30], CoarseningParams::default()).unwrap();
        assert_eq!(h.num_levels(), 1);
    }

    #[test]
    fn relaxation_quality_examples() {
        let d = CsrMatrix::from_diagonal(&[1.0, 2.0, 3.0, 4.0]);
        let m = Matching { pairs: vec![(0, 1), (2, 3)], unmatched: vec![] };
        let pp = build_pair_prolongators(&d, &[1.0; 4], &m).unwrap();
        assert!(compatible_relaxation_quality(&d, &pp, 5, 1).unwrap() < 1e-14);

        let a = laplacian_1d(4);
        let w = [1.0; 4];
        let m = greedy_max_product_matching(&build_edge_weights(&a, &w).unwrap());
        let pp = build_pair_prolongators(&a, &w, &m).unwrap();
        let q = compatible_relaxation_quality(&a, &pp, 200, 7).unwrap();
        assert_eq!(q, compatible_relaxation_quality(&a, &pp, 200, 7).unwrap());
        // dense oracle: spectral radius of I - D_f^{-1} A_f
        let af = nalgebra::DMatrix::from_fn(2, 2, |i, j| {
            galerkin_product(&pp.fine, &a).unwrap().get(i, j)
        });
        let dinv_sqrt = nalgebra::DMatrix::from_fn(2, 2, |i, j| if i == j { 1.0 / af[(i, i)].sqrt() } else { 0.0 });
        let sym = nalgebra::DMatrix::<f64>::identity(2, 2) - &dinv_sqrt * &af * &dinv_sqrt;
        let radius = sym.symmetric_eigenvalues().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!((q - radius).abs() < 0.05, "estimate {q} vs oracle {radius}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn d_orthogonality_and_range(n in 2usize..60, seed in any::<u64>()) {
            let a = random_spd(n, 0.2, seed);
            let w = crate::vector::random_vector(n, seed ^ 2);
            let m = greedy_max_product_matching(&build_edge_weights(&a, &w).unwrap());
            let pp = build_pair_prolongators(&a, &w, &m).unwrap();
            let dpf = {
                let d = a.diagonal();
                let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..pp.fine.n_cols()).map(|j| d[i] * pp.fine.get(i, j)).collect()).collect();
                CsrMatrix::from_dense_rows(&rows)
            };
            let cross = pp.coarse.transpose().matmul(&dpf).unwrap();
            prop_assert!(crate::vector::norm_inf(cross.values()) <= 1e-12);

            let c: Vec<f64> = pp.blocks.iter().map(|b| match *b {
                CoarseBlock::Pair(i, j) => (w[i] * w[i] + w[j] * w[j]).sqrt(),
                CoarseBlock::Singleton(k) => w[k].abs(),
            }).collect();
            let pc = pp.coarse.spmv(&c).unwrap();
            let err = pc.iter().zip(&w).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            prop_assert!(err <= 1e-12);
        }

        #[test]
        fn hierarchy_levels_are_spd_partitions(n in 41usize..200, seed in any::<u64>()) {
            let a = random_spd(n, 0.05, seed);
            let w = crate::vector::random_vector(n, seed ^ 3);
            let h = match build_pairwise_hierarchy(&a, &w, CoarseningParams::default()) {
                Ok(h) => h,
                Err(AmgError::Stagnation { .. }) => return Ok(()),
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            };
            let sizes = h.sizes();
            prop_assert!(sizes.windows(2).all(|s| s[1] < s[0]));
            for k in 1..h.num_levels() {
                let lvl = &h.levels[k];
                prop_assert!(lvl.matrix.is_symmetric());
                prop_assert!(lvl.matrix.diagonal().iter().all(|&d| d > 0.0));
                prop_assert!(cholesky(&DenseMatrix::from_csr(&lvl.matrix)).is_ok());
                let mut seen = vec![false; sizes[k - 1]];
                for g in &lvl.aggregates {
                    for &i in g {
                        prop_assert!(!seen[i]);
                        seen[i] = true;
                    }
                }
                prop_assert!(seen.iter().all(|&s| s));
            }
        }
    }
}
