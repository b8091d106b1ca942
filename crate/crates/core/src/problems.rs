//! Anisotropic diffusion test matrices.
//!
//! `−div(K∇u) = f` on the unit square with homogeneous Dirichlet boundary,
//! discretized by P1 finite elements on a structured triangulation. Each
//! grid cell is split along a diagonal whose direction alternates with the
//! cell parity, so the mesh is symmetric under reflection of either axis
//! when the number of cells per side is even.

use crate::error::{AmgError, Result};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnisotropySpec {
    pub epsilon: f64,
    pub theta: f64,
    /// Interior grid points per side; the matrix has `grid_n²` rows.
    pub grid_n: usize,
}

impl AnisotropySpec {
    /// `(a, b, c)` of `K = [[a, c], [c, b]]`.
    pub fn tensor(&self) -> (f64, f64, f64) {
        let (s, c) = self.theta.sin_cos();
        (self.epsilon + c * c, self.epsilon + s * s, c * s)
    }
}

pub const ANI_EPSILON: f64 = 0.001;
pub const DEFAULT_GRIDS: [usize; 3] = [64, 128, 256];

pub fn ani1(grid_n: usize) -> AnisotropySpec {
    AnisotropySpec { epsilon: ANI_EPSILON, theta: 0.0, grid_n }
}

pub fn ani2(grid_n: usize) -> AnisotropySpec {
    AnisotropySpec { epsilon: ANI_EPSILON, theta: std::f64::consts::PI / 8.0, grid_n }
}

pub fn generate_anisotropic_2d(spec: &AnisotropySpec) -> Result<CsrMatrix> {
    if !(spec.epsilon > 0.0) {
        return Err(AmgError::InvalidParameter(format!("epsilon must be positive, got {}", spec.epsilon)));
    }
    let (a, b, c) = spec.tensor();
    generate_tensor_2d(a, b, c, spec.grid_n)
}

/// Assembles the stiffness matrix for a constant tensor `[[a, c], [c, b]]`.
pub fn generate_tensor_2d(a: f64, b: f64, c: f64, grid_n: usize) -> Result<CsrMatrix> {
    if grid_n < 2 {
        return Err(AmgError::InvalidParameter(format!("grid_n must be >= 2, got {grid_n}")));
    }
    let cells = grid_n + 1;
    let dof = |ix: usize, iy: usize| -> Option<usize> {
        (ix >= 1 && ix < cells && iy >= 1 && iy < cells).then(|| (iy - 1) * grid_n + (ix - 1))
    };
    let mut trip = Vec::with_capacity(cells * cells * 2 * 9);
    for cy in 0..cells {
        for cx in 0..cells {
            let triangles: [[(usize, usize); 3]; 2] = if (cx + cy) % 2 == 0 {
                [[(0, 0), (1, 0), (1, 1)], [(0, 0), (1, 1), (0, 1)]]
            } else {
                [[(0, 0), (1, 0), (0, 1)], [(1, 0), (1, 1), (0, 1)]]
            };
            for tri in &triangles {
                let local = local_stiffness(tri, a, b, c);
                let ids: Vec<Option<usize>> = tri.iter().map(|&(ox, oy)| dof(cx + ox, cy + oy)).collect();
                for p in 0..3 {
                    for q in p..3 {
                        if let (Some(i), Some(j)) = (ids[p], ids[q]) {
                            trip.push((i, j, local[p][q]));
                            if p != q {
                                trip.push((j, i, local[p][q]));
                            }
                        }
                    }
                }
            }
        }
    }
    let n = grid_n * grid_n;
    let summed = CsrMatrix::from_triplets(n, n, &trip)?;
    let nonzero: Vec<_> = (0..n)
        .flat_map(|i| {
            let (cols, vals) = summed.row(i);
            cols.iter().zip(vals).filter(|(_, &v)| v != 0.0).map(move |(&j, &v)| (i, j, v)).collect::<Vec<_>>()
        })
        .collect();
    let mut m = CsrMatrix::from_triplets(n, n, &nonzero)?;
    m.set_symmetric_flag(true);
    Ok(m)
}

/// P1 stiffness of a triangle given in unit-cell coordinates (independent of h).
fn local_stiffness(tri: &[(usize, usize); 3], a: f64, b: f64, c: f64) -> [[f64; 3]; 3] {
    let p: Vec<(f64, f64)> = tri.iter().map(|&(x, y)| (x as f64, y as f64)).collect();
    let det = (p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[2].0 - p[0].0) * (p[1].1 - p[0].1);
    // gradient of barycentric coordinate k is (y_{k+1} - y_{k+2}, x_{k+2} - x_{k+1}) / det
    let grad: Vec<(f64, f64)> = (0..3)
        .map(|k| {
            let (j, l) = ((k + 1) % 3, (k + 2) % 3);
            ((p[j].1 - p[l].1) / det, (p[l].0 - p[j].0) / det)
        })
        .collect();
    let area = det.abs() / 2.0;
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for s in 0..3 {
            let (gx, gy) = grad[s];
            out[r][s] = area * (grad[r].0 * (a * gx + c * gy) + grad[r].1 * (c * gx + b * gy));
        }
    }
    out
}

/// Named ANI1 and ANI2 matrices for each grid size.
pub fn ani_fixtures(grids: &[usize]) -> Result<Vec<(String, CsrMatrix)>> {
    let mut out = Vec::with_capacity(2 * grids.len());
    for &g in grids {
        out.push((format!("ani1-{g}"), generate_anisotropic_2d(&ani1(g))?));
        out.push((format!("ani2-{g}"), generate_anisotropic_2d(&ani2(g))?));
    }
    Ok(out)
}
