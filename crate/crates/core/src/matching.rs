//! Edge weights from `(A, w)` and approximate maximum-product matching.
//!
//! The weight of edge `(i, j)` is the diagonal entry of `A_f` that the pair
//! would produce, `(w_e⊥)ᵀ A_e w_e⊥`, which simplifies to
//!
//! ```text
//! c_ij = 1 − 2·a_ij·w_i·w_j / (a_ii·w_i² + a_jj·w_j²)
//! ```
//!
//! Maximizing the product of the matched weights therefore maximizes the
//! product of the diagonal entries of `A_f`.

use crate::error::{AmgError, Result};
use crate::sparse::CsrMatrix;

/// Edges with weight at or below this value are never matched.
pub const WEIGHT_FLOOR: f64 = 1e-12;

/// Largest graph the exhaustive solver accepts.
pub const EXACT_MAX_VERTICES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedEdge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Undirected graph with edges stored once as `i < j`.
///
/// A weight of `-inf` marks an edge whose weight is undefined (both smooth
/// vector entries zero); such edges are kept for structure but never matched.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWeightGraph {
    n_vertices: usize,
    edges: Vec<WeightedEdge>,
}

impl EdgeWeightGraph {
    pub fn new(n_vertices: usize, mut edges: Vec<WeightedEdge>) -> Result<Self> {
        for e in &edges {
            if e.i >= e.j || e.j >= n_vertices {
                return Err(AmgError::InvalidParameter(format!(
                    "edge ({}, {}) must satisfy i < j < {n_vertices}",
                    e.i, e.j
                )));
            }
            if e.weight.is_nan() || e.weight == f64::INFINITY {
                return Err(AmgError::InvalidParameter(format!("edge ({}, {}) has weight {}", e.i, e.j, e.weight)));
            }
        }
        edges.sort_by_key(|e| (e.i, e.j));
        if edges.windows(2).any(|w| (w[0].i, w[0].j) == (w[1].i, w[1].j)) {
            return Err(AmgError::InvalidParameter("duplicate edge".into()));
        }
        Ok(Self { n_vertices, edges })
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn edges(&self) -> &[WeightedEdge] {
        &self.edges
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        let key = (i.min(j), i.max(j));
        self.edges
            .binary_search_by_key(&key, |e| (e.i, e.j))
            .ok()
            .map(|k| self.edges[k].weight)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Matching {
    pub pairs: Vec<(usize, usize)>,
    pub unmatched: Vec<usize>,
}

impl Matching {
    fn from_pairs(n: usize, pairs: Vec<(usize, usize)>) -> Self {
        let mut used = vec![false; n];
        for &(i, j) in &pairs {
            used[i] = true;
            used[j] = true;
        }
        let unmatched = (0..n).filter(|&v| !used[v]).collect();
        Self { pairs, unmatched }
    }

    /// Every vertex appears exactly once and every pair is an edge of `g`.
    pub fn is_valid_for(&self, g: &EdgeWeightGraph) -> bool {
        let mut seen = vec![0u8; g.n_vertices()];
        for &(i, j) in &self.pairs {
            if i >= g.n_vertices() || j >= g.n_vertices() || g.weight(i, j).is_none() {
                return false;
            }
            seen[i] += 1;
            seen[j] += 1;
        }
        for &v in &self.unmatched {
            if v >= g.n_vertices() {
                return false;
            }
            seen[v] += 1;
        }
        seen.iter().all(|&c| c == 1)
    }

    /// Sum of `ln c_ij` over matched edges.
    pub fn log_weight(&self, g: &EdgeWeightGraph) -> f64 {
        self.pairs.iter().map(|&(i, j)| g.weight(i, j).unwrap_or(f64::NEG_INFINITY).ln()).sum()
    }
}

/// Edge weights for every stored off-diagonal pair of the symmetric matrix `a`.
pub fn build_edge_weights(a: &CsrMatrix, w: &[f64]) -> Result<EdgeWeightGraph> {
    let n = a.n_rows();
    if a.n_cols() != n {
        return Err(AmgError::DimensionMismatch { context: "edge weights (square)", expected: n, found: a.n_cols() });
    }
    if w.len() != n {
        return Err(AmgError::DimensionMismatch { context: "edge weights (vector)", expected: n, found: w.len() });
    }
    let diag = a.diagonal();
    if let Some(row) = diag.iter().position(|&d| d == 0.0) {
        return Err(AmgError::ZeroDiagonal { row });
    }
    let mut edges = Vec::with_capacity(a.nnz().saturating_sub(n) / 2);
    for i in 0..n {
        let (cols, vals) = a.row(i);
        for (&j, &aij) in cols.iter().zip(vals) {
            if j <= i {
                continue;
            }
            edges.push(WeightedEdge { i, j, weight: edge_weight(diag[i], diag[j], aij, w[i], w[j]) });
        }
    }
    Ok(EdgeWeightGraph { n_vertices: n, edges })
}

fn edge_weight(aii: f64, ajj: f64, aij: f64, wi: f64, wj: f64) -> f64 {
    let denom = aii * wi * wi + ajj * wj * wj;
    if denom == 0.0 {
        return f64::NEG_INFINITY;
    }
    1.0 - 2.0 * aij * wi * wj / denom
}

/// Greedy ½-approximation: scan edges by descending weight (ties by `(i, j)`)
/// and keep an edge when both endpoints are still free.
pub fn greedy_max_product_matching(g: &EdgeWeightGraph) -> Matching {
    let mut order: Vec<&WeightedEdge> = g.edges.iter().filter(|e| e.weight > WEIGHT_FLOOR).collect();
    order.sort_by(|a, b| b.weight.total_cmp(&a.weight).then((a.i, a.j).cmp(&(b.i, b.j))));
    let mut matched = vec![false; g.n_vertices];
    let mut pairs = Vec::new();
    for e in order {
        if !matched[e.i] && !matched[e.j] {
            matched[e.i] = true;
            matched[e.j] = true;
            pairs.push((e.i, e.j));
        }
    }
    Matching::from_pairs(g.n_vertices, pairs)
}

/// Exhaustive maximum-product matching for small graphs (test oracle).
///
/// Ties (log-products equal to 1e-12 relative) go to the lexicographically
/// smallest sorted pair list.
pub fn exact_max_product_matching(g: &EdgeWeightGraph) -> Result<Matching> {
    let n = g.n_vertices;
    if n > EXACT_MAX_VERTICES {
        return Err(AmgError::GraphTooLarge { n, max: EXACT_MAX_VERTICES });
    }
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for e in g.edges.iter().filter(|e| e.weight > WEIGHT_FLOOR) {
        adj[e.i].push((e.j, e.weight.ln()));
    }

    struct Search<'a> {
        adj: &'a [Vec<(usize, f64)>],
        used: Vec<bool>,
        current: Vec<(usize, usize)>,
        best: Vec<(usize, usize)>,
        best_score: f64,
    }

    impl Search<'_> {
        fn run(&mut self, start: usize, score: f64) {
            let n = self.used.len();
            let v = (start..n).find(|&v| !self.used[v]);
            let Some(v) = v else {
                self.offer(score);
                return;
            };
            self.used[v] = true;
            self.run(v + 1, score);
            for k in 0..self.adj[v].len() {
                let (u, lw) = self.adj[v][k];
                if self.used[u] {
                    continue;
                }
                self.used[u] = true;
                self.current.push((v, u));
                self.run(v + 1, score + lw);
                self.current.pop();
                self.used[u] = false;
            }
            self.used[v] = false;
        }

        fn offer(&mut self, score: f64) {
            let tol = 1e-12 * (1.0 + self.best_score.abs().max(score.abs()));
            let mut candidate = self.current.clone();
            candidate.sort_unstable();
            let better = if self.best_score == f64::NEG_INFINITY || score > self.best_score + tol {
                true
            } else if score >= self.best_score - tol {
                candidate < self.best
            } else {
                false
            };
            if better {
                self.best_score = score;
                self.best = candidate;
            }
        }
    }

    let mut search = Search {
        adj: &adj,
        used: vec![false; n],
        current: Vec::new(),
        best: Vec::new(),
        best_score: f64::NEG_INFINITY,
    };
    search.run(0, 0.0);
    Ok(Matching::from_pairs(n, search.best))
}
