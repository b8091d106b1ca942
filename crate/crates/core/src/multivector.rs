//! Multi-vector block prolongators.
//!
//! Pairwise aggregates from several hierarchy levels are merged into large
//! aggregates. On each aggregate the smooth vectors are restricted, and a
//! truncated SVD of the resulting small matrix gives an orthonormal basis
//! that becomes one diagonal block of the prolongator.

use rayon::prelude::*;

use crate::dense::{jacobi_svd, DenseMatrix, JACOBI_MAX_SWEEPS};
use crate::error::{AmgError, Result};
use crate::pairwise::PairwiseHierarchy;
use crate::sparse::{galerkin_product, CsrMatrix};

/// A partition of the previous level's dofs into aggregates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregateSet {
    pub level: usize,
    aggregates: Vec<Vec<usize>>,
    n_prev: usize,
}

impl AggregateSet {
    /// Validates that `aggregates` partition `0..n_prev` with no empty aggregate.
    pub fn new(level: usize, n_prev: usize, aggregates: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; n_prev];
        for (j, agg) in aggregates.iter().enumerate() {
            if agg.is_empty() {
                return Err(AmgError::InvalidStructure(format!("aggregate {j} is empty")));
            }
            for &i in agg {
                if i >= n_prev {
                    return Err(AmgError::InvalidStructure(format!("aggregate {j} has index {i} >= {n_prev}")));
                }
                if seen[i] {
                    return Err(AmgError::InvalidStructure(format!("index {i} appears in two aggregates")));
                }
                seen[i] = true;
            }
        }
        if let Some(i) = seen.iter().position(|&s| !s) {
            return Err(AmgError::InvalidStructure(format!("index {i} is in no aggregate")));
        }
        Ok(Self { level, aggregates, n_prev })
    }

    pub fn aggregates(&self) -> &[Vec<usize>] {
        &self.aggregates
    }

    pub fn n_prev(&self) -> usize {
        self.n_prev
    }

    pub fn n_agg(&self) -> usize {
        self.aggregates.len()
    }

    pub fn max_size(&self) -> usize {
        self.aggregates.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Binary `n_prev × n_agg` matrix with `π_ij = 1` iff `i ∈ a_j`.
    pub fn pi_matrix(&self) -> CsrMatrix {
        let trip: Vec<_> = self
            .aggregates
            .iter()
            .enumerate()
            .flat_map(|(j, agg)| agg.iter().map(move |&i| (i, j, 1.0)))
            .collect();
        CsrMatrix::from_triplets(self.n_prev, self.n_agg(), &trip).expect("partition indices are in range")
    }

    /// Aggregates of `outer` expressed over the dofs that `self` aggregates.
    fn compose(&self, outer: &AggregateSet) -> AggregateSet {
        let aggregates = outer
            .aggregates
            .iter()
            .map(|group| {
                let mut merged: Vec<usize> = group.iter().flat_map(|&j| self.aggregates[j].iter().copied()).collect();
                merged.sort_unstable();
                merged
            })
            .collect();
        AggregateSet { level: self.level, aggregates, n_prev: self.n_prev }
    }
}

#[derive(Debug, Clone)]
pub struct MergedAggregates {
    /// First set over the finest dofs, then one set per remaining hierarchy level.
    pub sets: Vec<AggregateSet>,
    /// The hierarchy had fewer than `merge_levels` coarsening levels.
    pub shallow: bool,
}

/// Composes the first `merge_levels` aggregate maps of `h` into one fine-level set.
pub fn merge_aggregate_levels(h: &PairwiseHierarchy, merge_levels: usize) -> Result<MergedAggregates> {
    if merge_levels == 0 {
        return Err(AmgError::InvalidParameter("merge_levels must be >= 1".into()));
    }
    let mut per_level = Vec::with_capacity(h.num_levels().saturating_sub(1));
    for k in 1..h.num_levels() {
        let n_prev = h.levels[k - 1].size();
        per_level.push(AggregateSet::new(k, n_prev, h.levels[k].aggregates.clone())?);
    }
    let shallow = per_level.len() < merge_levels;
    let mut rest = per_level.into_iter();
    let Some(mut first) = rest.next() else {
        return Ok(MergedAggregates { sets: Vec::new(), shallow });
    };
    for _ in 1..merge_levels {
        match rest.next() {
            Some(next) => first = first.compose(&next),
            None => break,
        }
    }
    let mut sets = vec![first];
    for (k, mut s) in rest.enumerate() {
        s.level = k + 2;
        sets.push(s);
    }
    Ok(MergedAggregates { sets, shallow })
}

/// Column `r` is `vectors[r]` restricted to `agg`, rows in aggregate order.
pub fn assemble_local_matrix(agg: &[usize], vectors: &[Vec<f64>]) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(agg.len(), vectors.len());
    for (r, w) in vectors.iter().enumerate() {
        let col = m.col_mut(r);
        for (row, &i) in agg.iter().enumerate() {
            col[row] = w[i];
        }
    }
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalSvdRecord {
    pub aggregate_id: usize,
    pub singular_values: Vec<f64>,
    pub kept_count: usize,
    pub tol_used: f64,
}

/// `TOL · agg_size / n_fine`.
pub fn aggregate_tolerance(agg_size: usize, n_fine: usize, tol: f64) -> f64 {
    debug_assert!(n_fine > 0);
    tol * agg_size as f64 / n_fine as f64
}

/// SVD of a local matrix, keeping left singular vectors with `σ > tol` (at least one).
///
/// Singular values below the numerical rank threshold `ε·max(m, k)·σ_max`
/// are treated as zero even when `tol` is smaller.
pub fn truncated_local_svd(pa: &DenseMatrix, tol: f64, aggregate_id: usize) -> Result<(LocalSvdRecord, DenseMatrix)> {
    let m = pa.n_rows();
    if m == 0 {
        return Err(AmgError::InvalidParameter(format!("aggregate {aggregate_id} has no rows")));
    }
    let svd = jacobi_svd(pa).ok_or(AmgError::SvdNoConvergence { aggregate: aggregate_id, sweeps: JACOBI_MAX_SWEEPS })?;
    let sigma = svd.singular_values;
    let sigma_max = sigma.first().copied().unwrap_or(0.0);
    let rank_floor = f64::EPSILON * m.max(pa.n_cols()) as f64 * sigma_max;
    let threshold = tol.max(rank_floor);
    let kept = sigma.iter().take_while(|&&s| s > threshold).count().max(1);

    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(kept);
    if sigma_max == 0.0 {
        let mut e0 = vec![0.0; m];
        e0[0] = 1.0;
        columns.push(e0);
    } else {
        for j in 0..kept {
            let mut col = svd.u.col(j).to_vec();
            // two passes of Gram-Schmidt keep UᵀU = I at roundoff level
            for _ in 0..2 {
                for prev in &columns {
                    let proj = crate::vector::dot(prev, &col);
                    crate::vector::axpy(-proj, prev, &mut col);
                }
            }
            let norm = crate::vector::norm2(&col);
            col.iter_mut().for_each(|x| *x /= norm);
            columns.push(col);
        }
    }
    let record = LocalSvdRecord { aggregate_id, singular_values: sigma, kept_count: kept, tol_used: tol };
    Ok((record, DenseMatrix::from_columns(m, &columns)))
}

/// Block-diagonal prolongator with orthonormal columns.
#[derive(Debug, Clone)]
pub struct BlockProlongator {
    pub p: CsrMatrix,
    pub records: Vec<LocalSvdRecord>,
    /// Aggregate `j` owns columns `col_offsets[j]..col_offsets[j + 1]`.
    pub col_offsets: Vec<usize>,
}

impl BlockProlongator {
    pub fn n_coarse(&self) -> usize {
        self.p.n_cols()
    }

    pub fn kept_counts(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.kept_count).collect()
    }

    pub fn transfer(&self) -> TransferOperator {
        let mut owner = Vec::with_capacity(self.n_coarse());
        for (j, w) in self.col_offsets.windows(2).enumerate() {
            owner.extend(std::iter::repeat(j).take(w[1] - w[0]));
        }
        TransferOperator { owner }
    }
}

/// Maps each multi-vector coarse dof to the aggregate it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferOperator {
    pub owner: Vec<usize>,
}

impl TransferOperator {
    /// Groups coarse dofs by the parent aggregate (in `next`) of their owner.
    pub fn regroup(&self, next: &AggregateSet) -> Result<AggregateSet> {
        let n_owners = next.n_prev();
        let mut by_owner: Vec<Vec<usize>> = vec![Vec::new(); n_owners];
        for (dof, &o) in self.owner.iter().enumerate() {
            if o >= n_owners {
                return Err(AmgError::DimensionMismatch {
                    context: "regroup multi-vector dofs",
                    expected: n_owners,
                    found: o + 1,
                });
            }
            by_owner[o].push(dof);
        }
        let aggregates = next
            .aggregates()
            .iter()
            .map(|group| group.iter().flat_map(|&o| by_owner[o].iter().copied()).collect())
            .collect();
        AggregateSet::new(next.level, self.owner.len(), aggregates)
    }
}

/// One truncated SVD per aggregate, placed block by block.
pub fn build_block_prolongator(
    aggset: &AggregateSet,
    vectors: &[Vec<f64>],
    n_fine: usize,
    tol: f64,
    parallel: bool,
) -> Result<BlockProlongator> {
    if vectors.is_empty() {
        return Err(AmgError::InvalidParameter("at least one smooth vector is required".into()));
    }
    for w in vectors {
        if w.len() != aggset.n_prev() {
            return Err(AmgError::DimensionMismatch {
                context: "block prolongator vectors",
                expected: aggset.n_prev(),
                found: w.len(),
            });
        }
    }
    let local = |(j, agg): (usize, &Vec<usize>)| {
        let pa = assemble_local_matrix(agg, vectors);
        truncated_local_svd(&pa, aggregate_tolerance(agg.len(), n_fine, tol), j)
    };
    let blocks: Vec<(LocalSvdRecord, DenseMatrix)> = if parallel {
        aggset.aggregates().par_iter().enumerate().map(local).collect::<Result<_>>()?
    } else {
        aggset.aggregates().iter().enumerate().map(local).collect::<Result<_>>()?
    };

    let mut col_offsets = Vec::with_capacity(blocks.len() + 1);
    col_offsets.push(0);
    let mut trip = Vec::new();
    for ((_, u), agg) in blocks.iter().zip(aggset.aggregates()) {
        let base = *col_offsets.last().unwrap();
        for c in 0..u.n_cols() {
            for (row, &i) in agg.iter().enumerate() {
                let v = u.get(row, c);
                if v != 0.0 {
                    trip.push((i, base + c, v));
                }
            }
        }
        col_offsets.push(base + u.n_cols());
    }
    let n_c = *col_offsets.last().unwrap();
    let p = CsrMatrix::from_triplets(aggset.n_prev(), n_c, &trip)?;
    let records = blocks.into_iter().map(|(r, _)| r).collect();
    Ok(BlockProlongator { p, records, col_offsets })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiVectorParams {
    pub merge_levels: usize,
    pub tol: f64,
    pub min_coarse_size: usize,
    /// Optional cap on the total number of levels, finest included.
    pub max_levels: Option<usize>,
    /// Run the per-aggregate SVDs on the rayon pool.
    pub parallel: bool,
}

impl Default for MultiVectorParams {
    fn default() -> Self {
        Self { merge_levels: 3, tol: 0.1, min_coarse_size: 40, max_levels: None, parallel: false }
    }
}

#[derive(Debug, Clone)]
pub struct MultiVectorLevel {
    pub matrix: CsrMatrix,
    /// Prolongator from this level to the next finer one (`None` on level 0).
    pub prolongator: Option<BlockProlongator>,
    pub smooth_vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct MultiVectorHierarchy {
    pub levels: Vec<MultiVectorLevel>,
    pub params: MultiVectorParams,
    /// Fewer pairwise levels were available than `merge_levels`.
    pub shallow_merge: bool,
    /// Coarsening stopped because a level failed to shrink.
    pub stalled: bool,
}

impl MultiVectorHierarchy {
    pub fn nl(&self) -> usize {
        self.levels.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.matrix.n_rows()).collect()
    }

    pub fn nnzs(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.matrix.nnz()).collect()
    }
}

/// Builds the multi-vector hierarchy from the finest-level smooth vectors.
///
/// Level 1 uses the merged fine aggregates; each deeper level regroups the
/// previous level's coarse dofs by the parent of their owning aggregate.
pub fn build_multivector_hierarchy(
    a: &CsrMatrix,
    pairwise: &PairwiseHierarchy,
    vectors: &[Vec<f64>],
    params: MultiVectorParams,
) -> Result<MultiVectorHierarchy> {
    let n = a.n_rows();
    if vectors.is_empty() {
        return Err(AmgError::InvalidParameter("at least one smooth vector is required".into()));
    }
    if let Some(w) = vectors.iter().find(|w| w.len() != n) {
        return Err(AmgError::DimensionMismatch { context: "multi-vector hierarchy", expected: n, found: w.len() });
    }
    if pairwise.levels.first().map(|l| l.size()) != Some(n) {
        return Err(AmgError::DimensionMismatch {
            context: "pairwise hierarchy vs matrix",
            expected: n,
            found: pairwise.levels.first().map_or(0, |l| l.size()),
        });
    }
    let merged = merge_aggregate_levels(pairwise, params.merge_levels)?;
    let mut levels = vec![MultiVectorLevel { matrix: a.clone(), prolongator: None, smooth_vectors: vectors.to_vec() }];
    let mut stalled = false;
    let mut transfer: Option<TransferOperator> = None;

    for set in &merged.sets {
        let current = levels.last().unwrap();
        let size = current.matrix.n_rows();
        if size <= params.min_coarse_size || params.max_levels.is_some_and(|m| levels.len() >= m) {
            break;
        }
        let aggset = match &transfer {
            None => set.clone(),
            Some(t) => t.regroup(set)?,
        };
        let bp = build_block_prolongator(&aggset, &current.smooth_vectors, n, params.tol, params.parallel)?;
        if bp.n_coarse() >= size {
            log::debug!("multi-vector level {} does not shrink ({} -> {})", levels.len(), size, bp.n_coarse());
            stalled = true;
            break;
        }
        let coarse = galerkin_product(&bp.p, &current.matrix)?;
        let coarse_vectors = current
            .smooth_vectors
            .iter()
            .map(|w| bp.p.spmv_transpose(w))
            .collect::<Result<Vec<_>>>()?;
        transfer = Some(bp.transfer());
        levels.push(MultiVectorLevel { matrix: coarse, prolongator: Some(bp), smooth_vectors: coarse_vectors });
    }
    Ok(MultiVectorHierarchy { levels, params, shallow_merge: merged.shallow, stalled })
}
