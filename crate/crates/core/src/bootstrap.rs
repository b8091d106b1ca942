//! Bootstrap construction of a composite AMG.
//!
//! Each stage coarsens `A` against the latest smooth vector, appends the new
//! hierarchy to the composite, and iterates the symmetrized composite on
//! `A x = 0` from a random start. The slowest surviving error becomes the
//! next smooth vector; the stage loop ends once the estimated convergence
//! factor drops below `rho_des`.

use std::time::Instant;

use crate::bench::compute_opc_from_nnz;
use crate::cycles::{apply_cycle, CycleSpec, MultilevelHierarchy};
use crate::error::{AmgError, Result};
use crate::pairwise::{build_pairwise_hierarchy, CoarseningParams, PairwiseHierarchy};
use crate::sparse::{a_norm, CsrMatrix};
use crate::vector::random_vector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapParams {
    pub rho_des: f64,
    pub maxstage: usize,
    pub nu: usize,
    pub rng_seed: u64,
    /// Keep adding stages until at least this many components exist, even after `rho_des` is met.
    pub min_stages: usize,
    pub cycle: CycleSpec,
    pub coarsening: CoarseningParams,
}

impl Default for BootstrapParams {
    fn default() -> Self {
        Self {
            rho_des: 0.8,
            maxstage: 15,
            nu: 15,
            rng_seed: 0,
            min_stages: 0,
            cycle: CycleSpec::k(2),
            coarsening: CoarseningParams::default(),
        }
    }
}

impl BootstrapParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho_des > 0.0 && self.rho_des < 1.0) {
            return Err(AmgError::InvalidParameter(format!("rho_des must be in (0, 1), got {}", self.rho_des)));
        }
        if self.nu < 2 {
            return Err(AmgError::InvalidParameter(format!("nu must be >= 2, got {}", self.nu)));
        }
        if self.maxstage == 0 {
            return Err(AmgError::InvalidParameter("maxstage must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AmgComponent {
    pub pairwise: PairwiseHierarchy,
    pub hierarchy: MultilevelHierarchy,
    pub cycle: CycleSpec,
}

impl AmgComponent {
    pub fn new(pairwise: PairwiseHierarchy, cycle: CycleSpec) -> Result<Self> {
        let hierarchy = MultilevelHierarchy::from_pairwise(&pairwise)?;
        Ok(Self { pairwise, hierarchy, cycle })
    }

    /// `(I − B⁻¹A)x`.
    pub fn error_propagation(&self, a: &CsrMatrix, x: &[f64]) -> Result<Vec<f64>> {
        let ax = a.spmv(x)?;
        let z = apply_cycle(&self.hierarchy, &self.cycle, &ax)?;
        Ok(x.iter().zip(&z).map(|(xi, zi)| xi - zi).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    /// Last-ratio estimate `‖x^ν‖_A / ‖x^{ν−1}‖_A`.
    pub rho_estimate: f64,
    /// `(‖x^ν‖_A / ‖x^0‖_A)^{1/ν}`.
    pub geometric_mean: f64,
    pub stage: usize,
    /// `‖x^j‖_A` for j = 0..=ν (shorter if the iterate vanished).
    pub per_iteration_anorms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageReport {
    pub stage: usize,
    pub rho: f64,
    pub nl: usize,
    pub opc: f64,
    pub build_seconds: f64,
}

impl StageReport {
    pub const CSV_HEADER: &'static str = "stage,rho,nl,opc,build_seconds";

    pub fn csv_line(&self) -> String {
        format!("{},{:.6},{},{:.4},{:.3}", self.stage, self.rho, self.nl, self.opc, self.build_seconds)
    }
}

#[derive(Debug, Clone)]
pub struct CompositeAmg {
    pub components: Vec<AmgComponent>,
    /// `w_0` (unscaled) followed by one A-normalized vector per completed test phase.
    pub smooth_vectors: Vec<Vec<f64>>,
    pub reports: Vec<StageReport>,
    pub tests: Vec<TestReport>,
    /// Stages whose coarsening stagnated and were retried with a fresh test vector.
    pub skipped_stages: Vec<usize>,
}

impl CompositeAmg {
    pub fn last_rho(&self) -> Option<f64> {
        self.tests.last().map(|t| t.rho_estimate)
    }
}

/// `(I−B₁⁻¹A)…(I−B_r⁻¹A)(I−B_r⁻¹A)…(I−B₁⁻¹A)x`, applied right to left.
pub fn apply_composite_symmetrized(components: &[AmgComponent], a: &CsrMatrix, x: &[f64]) -> Result<Vec<f64>> {
    if components.is_empty() {
        return Err(AmgError::EmptyComposite);
    }
    let mut y = x.to_vec();
    for c in components.iter().chain(components.iter().rev()) {
        y = c.error_propagation(a, &y)?;
    }
    Ok(y)
}

/// Iterates the symmetrized composite `nu` times on a seeded random start.
///
/// Returns the A-normalized last iterate, or `None` if the iterate vanished
/// (the composite is exact on the start vector, reported as `ρ = 0`).
pub fn test_phase(
    components: &[AmgComponent],
    a: &CsrMatrix,
    nu: usize,
    seed: u64,
    stage: usize,
) -> Result<(TestReport, Option<Vec<f64>>)> {
    if nu < 2 {
        return Err(AmgError::InvalidParameter(format!("nu must be >= 2, got {nu}")));
    }
    let mut x = random_vector(a.n_rows(), seed);
    let mut norms = vec![a_norm(a, &x)?];
    for _ in 0..nu {
        x = apply_composite_symmetrized(components, a, &x)?;
        let norm = a_norm(a, &x)?;
        norms.push(norm);
        if norm == 0.0 {
            break;
        }
    }
    let last = *norms.last().unwrap();
    if last == 0.0 || norms.len() < nu + 1 {
        let report = TestReport { rho_estimate: 0.0, geometric_mean: 0.0, stage, per_iteration_anorms: norms };
        return Ok((report, None));
    }
    let rho = last / norms[nu - 1];
    let geometric_mean = (last / norms[0]).powf(1.0 / nu as f64);
    x.iter_mut().for_each(|v| *v /= last);
    Ok((TestReport { rho_estimate: rho, geometric_mean, stage, per_iteration_anorms: norms }, Some(x)))
}

fn stage_seed(base: u64, stage: usize, attempt: u64) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add((stage as u64) << 8 | attempt)
}

/// Runs bootstrap stages until `ρ < rho_des` (and `min_stages` are done) or `maxstage` is reached.
///
/// `w0` defaults to the all-ones vector.
pub fn bootstrap_run(a: &CsrMatrix, w0: Option<&[f64]>, params: &BootstrapParams) -> Result<CompositeAmg> {
    params.validate()?;
    let n = a.n_rows();
    let w0 = w0.map_or_else(|| vec![1.0; n], <[f64]>::to_vec);
    if w0.len() != n {
        return Err(AmgError::DimensionMismatch { context: "bootstrap w0", expected: n, found: w0.len() });
    }
    let mut composite = CompositeAmg {
        components: Vec::new(),
        smooth_vectors: vec![w0],
        reports: Vec::new(),
        tests: Vec::new(),
        skipped_stages: Vec::new(),
    };
    let mut rho = f64::INFINITY;
    let mut stage = 1;

    while stage <= params.maxstage && (rho >= params.rho_des || stage <= params.min_stages) {
        let started = Instant::now();
        let w_prev = composite.smooth_vectors.last().unwrap();
        let pairwise = match build_pairwise_hierarchy(a, w_prev, params.coarsening) {
            Ok(h) => h,
            Err(AmgError::Stagnation { .. }) if !composite.components.is_empty() && !composite.skipped_stages.contains(&stage) => {
                log::warn!("stage {stage}: coarsening stagnated, retrying with a fresh test vector");
                composite.skipped_stages.push(stage);
                let seed = stage_seed(params.rng_seed, stage, 1);
                let (report, w) = test_phase(&composite.components, a, params.nu, seed, stage)?;
                let w = w.ok_or_else(|| AmgError::BootstrapAborted { stage, reason: "test vector vanished on retry".into() })?;
                *composite.smooth_vectors.last_mut().unwrap() = w;
                *composite.tests.last_mut().unwrap() = report;
                continue;
            }
            Err(AmgError::Stagnation { level }) => {
                return Err(AmgError::BootstrapAborted {
                    stage,
                    reason: format!("coarsening stagnated at level {level}"),
                })
            }
            Err(e) => return Err(e),
        };
        let component = AmgComponent::new(pairwise, params.cycle)?;
        let nl = component.pairwise.num_levels();
        let nnz: Vec<usize> = component.pairwise.levels.iter().map(|l| l.matrix.nnz()).collect();
        composite.components.push(component);

        let (report, w) = test_phase(&composite.components, a, params.nu, stage_seed(params.rng_seed, stage, 0), stage)?;
        rho = report.rho_estimate;
        log::info!("stage {stage}: rho {rho:.4} (geometric mean {:.4}), {nl} levels", report.geometric_mean);
        composite.reports.push(StageReport {
            stage,
            rho,
            nl,
            opc: compute_opc_from_nnz(&nnz),
            build_seconds: started.elapsed().as_secs_f64(),
        });
        composite.tests.push(report);
        match w {
            Some(w) => composite.smooth_vectors.push(w),
            None => break,
        }
        stage += 1;
    }
    Ok(composite)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::test_util::{laplacian_1d, random_spd};

    fn component(a: &CsrMatrix, w: &[f64], min: usize) -> AmgComponent {
        let params = CoarseningParams { min_coarse_size: min, ..Default::default() };
        AmgComponent::new(build_pairwise_hierarchy(a, w, params).unwrap(), CycleSpec::k(2)).unwrap()
    }

    #[test]
    fn exact_component_annihilates() {
        let a = random_spd(30, 0.2, 1);
        let c = component(&a, &[1.0; 30], 40);
        assert_eq!(c.pairwise.num_levels(), 1);
        let x = random_vector(30, 2);
        let y = apply_composite_symmetrized(std::slice::from_ref(&c), &a, &x).unwrap();
        assert!(crate::vector::norm_inf(&y) < 1e-12);
        let (rep, w) = test_phase(std::slice::from_ref(&c), &a, 15, 3, 1).unwrap();
        assert!(rep.rho_estimate < 1e-3);
        let _ = w;
    }

    #[test]
    fn diagonal_matrix_exits_after_first_stage() {
        let a = CsrMatrix::from_diagonal(&(1..=20).map(f64::from).collect::<Vec<_>>());
        let composite = bootstrap_run(&a, None, &BootstrapParams::default()).unwrap();
        assert_eq!(composite.components.len(), 1);
        assert!(composite.last_rho().unwrap() < 1e-10);
    }

    #[test]
    fn zero_vector_and_empty_composite() {
        let a = laplacian_1d(200);
        let c = component(&a, &[1.0; 200], 10);
        let y = apply_composite_symmetrized(std::slice::from_ref(&c), &a, &[0.0; 200]).unwrap();
        assert_eq!(y, vec![0.0; 200]);
        assert!(matches!(apply_composite_symmetrized(&[], &a, &[0.0; 200]), Err(AmgError::EmptyComposite)));
        assert!(test_phase(std::slice::from_ref(&c), &a, 1, 0, 1).is_err());
    }

    #[test]
    fn symmetrized_single_component_contracts_more() {
        let a = random_spd(300, 0.02, 5);
        let c = component(&a, &[1.0; 300], 20);
        let x = random_vector(300, 6);
        let once = c.error_propagation(&a, &x).unwrap();
        let twice = c.error_propagation(&a, &once).unwrap();
        let sym = apply_composite_symmetrized(std::slice::from_ref(&c), &a, &x).unwrap();
        assert_eq!(sym, twice);
        assert!(a_norm(&a, &sym).unwrap() <= a_norm(&a, &once).unwrap());
    }

    #[test]
    fn reproducible_and_normalized() {
        let a = laplacian_1d(500);
        let params = BootstrapParams { maxstage: 3, rng_seed: 42, ..Default::default() };
        let first = bootstrap_run(&a, None, &params).unwrap();
        let second = bootstrap_run(&a, None, &params).unwrap();
        assert!(first.components.len() <= 3);
        let rhos = |c: &CompositeAmg| c.tests.iter().map(|t| t.rho_estimate.to_bits()).collect::<Vec<_>>();
        assert_eq!(rhos(&first), rhos(&second));
        for w in &first.smooth_vectors[1..] {
            assert!((a_norm(&a, w).unwrap() - 1.0).abs() <= 1e-10);
        }
        assert_eq!(first.smooth_vectors.len(), first.components.len() + 1);
    }

    #[test]
    fn loose_target_stops_after_one_stage() {
        let a = laplacian_1d(400);
        let params = BootstrapParams { rho_des: 0.999, ..Default::default() };
        assert_eq!(bootstrap_run(&a, None, &params).unwrap().components.len(), 1);
        let params = BootstrapParams { rho_des: 0.999, min_stages: 3, ..Default::default() };
        assert_eq!(bootstrap_run(&a, None, &params).unwrap().components.len(), 3);
    }

    #[test]
    fn params_are_validated() {
        let a = laplacian_1d(10);
        for p in [
            BootstrapParams { rho_des: 1.0, ..Default::default() },
            BootstrapParams { nu: 1, ..Default::default() },
            BootstrapParams { maxstage: 0, ..Default::default() },
        ] {
            assert!(matches!(bootstrap_run(&a, None, &p), Err(AmgError::InvalidParameter(_))));
        }
    }

    #[test]
    fn stage_report_csv() {
        let r = StageReport { stage: 2, rho: 0.5, nl: 4, opc: 1.25, build_seconds: 0.0123 };
        assert_eq!(r.csv_line(), "2,0.500000,4,1.2500,0.012");
        assert_eq!(StageReport::CSV_HEADER.split(',').count(), r.csv_line().split(',').count());
    }
}
