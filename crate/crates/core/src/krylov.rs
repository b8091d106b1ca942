//! Preconditioned and flexible conjugate gradient.

use crate::error::{AmgError, Result};
use crate::sparse::CsrMatrix;
use crate::vector::{axpy, dot, norm2};

/// An operator `r ↦ B⁻¹r`. Closures work directly.
pub trait Preconditioner {
    fn apply(&self, r: &[f64]) -> Result<Vec<f64>>;
}

impl<F> Preconditioner for F
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    fn apply(&self, r: &[f64]) -> Result<Vec<f64>> {
        self(r)
    }
}

/// The identity preconditioner (plain CG).
pub struct Identity;

impl Preconditioner for Identity {
    fn apply(&self, r: &[f64]) -> Result<Vec<f64>> {
        Ok(r.to_vec())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_relative_residual: f64,
    pub converged: bool,
    /// `‖r_k‖₂` for k = 0..=iterations.
    pub residual_history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcgOptions {
    pub rtol: f64,
    pub itmax: usize,
}

impl Default for PcgOptions {
    fn default() -> Self {
        Self { rtol: 1e-6, itmax: 1000 }
    }
}

fn check_dims(a: &CsrMatrix, b: &[f64]) -> Result<()> {
    if a.n_rows() != a.n_cols() || b.len() != a.n_rows() {
        return Err(AmgError::DimensionMismatch { context: "krylov solve", expected: a.n_rows(), found: b.len() });
    }
    Ok(())
}

/// PCG from a zero initial guess; stops when `‖r_k‖ ≤ rtol·‖b‖` or after `itmax` iterations.
pub fn pcg<P: Preconditioner + ?Sized>(a: &CsrMatrix, b: &[f64], precond: &P, opts: PcgOptions) -> Result<(Vec<f64>, SolveReport)> {
    pcg_monitored(a, b, precond, opts, |_, _| {})
}

/// [`pcg`] calling `monitor(k, x_k)` after every iteration.
pub fn pcg_monitored<P, F>(a: &CsrMatrix, b: &[f64], precond: &P, opts: PcgOptions, mut monitor: F) -> Result<(Vec<f64>, SolveReport)>
where
    P: Preconditioner + ?Sized,
    F: FnMut(usize, &[f64]),
{
    check_dims(a, b)?;
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let r0 = norm2(&r);
    let mut history = vec![r0];
    if r0 == 0.0 {
        let report = SolveReport { iterations: 0, final_relative_residual: 0.0, converged: true, residual_history: history };
        return Ok((x, report));
    }
    let mut z = precond.apply(&r)?;
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.itmax {
        a.spmv_into(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if curvature <= 0.0 || !curvature.is_finite() {
            return Err(AmgError::Breakdown { iteration: iterations, curvature });
        }
        let alpha = rz / curvature;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        iterations += 1;
        let rnorm = norm2(&r);
        history.push(rnorm);
        monitor(iterations, &x);
        if rnorm <= opts.rtol * r0 {
            converged = true;
            break;
        }
        z = precond.apply(&r)?;
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    let report = SolveReport {
        iterations,
        final_relative_residual: history.last().unwrap() / r0,
        converged,
        residual_history: history,
    };
    Ok((x, report))
}

/// Exactly `iters` steps of flexible CG from `x = 0`, each new direction
/// A-orthogonalized against the previous one only.
///
/// Stops early if the residual vanishes.
pub fn fcg<P: Preconditioner + ?Sized>(a: &CsrMatrix, b: &[f64], precond: &P, iters: usize) -> Result<Vec<f64>> {
    check_dims(a, b)?;
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut prev: Option<(Vec<f64>, Vec<f64>, f64)> = None;

    for k in 0..iters {
        if r.iter().all(|&v| v == 0.0) {
            break;
        }
        let mut d = precond.apply(&r)?;
        if let Some((dp, adp, dp_curv)) = &prev {
            let beta = dot(&d, adp) / dp_curv;
            axpy(-beta, dp, &mut d);
        }
        let ad = a.spmv(&d)?;
        let curvature = dot(&d, &ad);
        if curvature <= 0.0 || !curvature.is_finite() {
            return Err(AmgError::Breakdown { iteration: k, curvature });
        }
        let alpha = dot(&d, &r) / curvature;
        axpy(alpha, &d, &mut x);
        axpy(-alpha, &ad, &mut r);
        prev = Some((d, ad, curvature));
    }
    Ok(x)
}
