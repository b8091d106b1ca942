//! Benchmark protocol: bootstrap, multi-vector hierarchies for a sweep of
//! vector counts, V-cycle PCG solves, and the metrics table.
//!
//! # Config format
//!
//! Flat `key = value` lines; `#` starts a comment. Keys:
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `problem` | `ani1` | `ani1`, `ani2` or `mtx:<path>` |
//! | `grid` | `64` | interior points per side for generated problems |
//! | `nsv` | `3,4,5,6` | comma-separated smooth-vector counts |
//! | `merge_levels` | `3` | pairwise levels merged into the first aggregates |
//! | `tol` | `0.1` | SVD truncation tolerance |
//! | `rho_des` | `0.8` | bootstrap target convergence factor |
//! | `maxstage` | `15` | bootstrap stage cap |
//! | `nu` | `15` | test iterations per stage |
//! | `seed` | `0` | RNG seed |
//! | `min_coarse_size` | `40` | stop coarsening at this size |
//! | `max_levels` | none | cap on multi-vector hierarchy levels |
//! | `parallel` | `false` | per-aggregate SVDs on a thread pool |
//! | `rtol` | `1e-6` | PCG relative tolerance |
//! | `itmax` | `1000` | PCG iteration cap |
//! | `out` | none | metrics CSV path |
//! | `stage_log` | none | bootstrap stage CSV path |

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::bootstrap::{bootstrap_run, BootstrapParams, CompositeAmg, StageReport};
use crate::cycles::{apply_cycle, error_propagation_apply, CycleSpec, MultilevelHierarchy};
use crate::error::{AmgError, Result};
use crate::krylov::{pcg, PcgOptions, SolveReport};
use crate::mmio::read_matrix_market;
use crate::multivector::{build_multivector_hierarchy, MultiVectorHierarchy, MultiVectorParams};
use crate::pairwise::CoarseningParams;
use crate::problems::{ani1, ani2, generate_anisotropic_2d};
use crate::sparse::{a_norm, CsrMatrix};
use crate::vector::random_vector;

/// Applications of the error propagation used to estimate the final ρ.
pub const RHO_APPLICATIONS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    Ani1,
    Ani2,
    Mtx(PathBuf),
}

impl std::str::FromStr for Problem {
    type Err = AmgError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ani1" => Ok(Problem::Ani1),
            "ani2" => Ok(Problem::Ani2),
            _ => match s.strip_prefix("mtx:") {
                Some(path) if !path.is_empty() => Ok(Problem::Mtx(PathBuf::from(path))),
                _ => Err(AmgError::Config(format!("unknown problem `{s}` (expected ani1, ani2 or mtx:<path>)"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: Problem,
    pub grid_n: usize,
    pub nsv: Vec<usize>,
    pub merge_levels: usize,
    pub tol: f64,
    pub bootstrap: BootstrapParams,
    pub min_coarse_size: usize,
    pub max_levels: Option<usize>,
    pub parallel: bool,
    pub rtol: f64,
    pub itmax: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub stage_log: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: Problem::Ani1,
            grid_n: 64,
            nsv: vec![3, 4, 5, 6],
            merge_levels: 3,
            tol: 0.1,
            bootstrap: BootstrapParams::default(),
            min_coarse_size: 40,
            max_levels: None,
            parallel: false,
            rtol: 1e-6,
            itmax: 1000,
            seed: 0,
            out: None,
            stage_log: None,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| AmgError::Config(format!("invalid value `{value}` for `{key}`")))
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| AmgError::Config(format!("cannot read {}: {e}", path.display())))?;
        text.parse()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "problem" => self.problem = value.parse()?,
            "grid" => self.grid_n = parse_value(key, value)?,
            "nsv" => {
                self.nsv = value
                    .split(',')
                    .map(|s| parse_value::<usize>(key, s.trim()))
                    .collect::<Result<_>>()?;
            }
            "merge_levels" => self.merge_levels = parse_value(key, value)?,
            "tol" => self.tol = parse_value(key, value)?,
            "rho_des" => self.bootstrap.rho_des = parse_value(key, value)?,
            "maxstage" => self.bootstrap.maxstage = parse_value(key, value)?,
            "nu" => self.bootstrap.nu = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "min_coarse_size" => self.min_coarse_size = parse_value(key, value)?,
            "max_levels" => self.max_levels = Some(parse_value(key, value)?),
            "parallel" => self.parallel = parse_value(key, value)?,
            "rtol" => self.rtol = parse_value(key, value)?,
            "itmax" => self.itmax = parse_value(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            "stage_log" => self.stage_log = Some(PathBuf::from(value)),
            _ => return Err(AmgError::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.nsv.is_empty() || self.nsv.contains(&0) {
            return Err(AmgError::Config("nsv must list counts >= 1".into()));
        }
        if self.max_levels == Some(0) {
            return Err(AmgError::Config("max_levels must be >= 1".into()));
        }
        if self.merge_levels == 0 {
            return Err(AmgError::Config("merge_levels must be >= 1".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(AmgError::Config("tol must be >= 0".into()));
        }
        if !(self.rtol > 0.0 && self.rtol < 1.0) {
            return Err(AmgError::Config("rtol must be in (0, 1)".into()));
        }
        if matches!(self.problem, Problem::Ani1 | Problem::Ani2) && self.grid_n < 2 {
            return Err(AmgError::Config("grid must be >= 2".into()));
        }
        self.bootstrap_params().validate().map_err(|e| AmgError::Config(e.to_string()))
    }

    /// Bootstrap parameters with the run seed, coarse size and enough stages for the largest `nsv`.
    pub fn bootstrap_params(&self) -> BootstrapParams {
        let max_nsv = self.nsv.iter().copied().max().unwrap_or(1);
        BootstrapParams {
            rng_seed: self.seed,
            min_stages: max_nsv.saturating_sub(1),
            coarsening: CoarseningParams { min_coarse_size: self.min_coarse_size, ..self.bootstrap.coarsening },
            ..self.bootstrap
        }
    }

    pub fn multivector_params(&self) -> MultiVectorParams {
        MultiVectorParams {
            merge_levels: self.merge_levels,
            tol: self.tol,
            min_coarse_size: self.min_coarse_size,
            max_levels: self.max_levels,
            parallel: self.parallel,
        }
    }

    pub fn pcg_options(&self) -> PcgOptions {
        PcgOptions { rtol: self.rtol, itmax: self.itmax }
    }
}

impl std::str::FromStr for RunConfig {
    type Err = AmgError;

    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| AmgError::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(AmgError::Config(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
            cfg.set(key, value).map_err(|e| AmgError::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub nsv: usize,
    pub nl: usize,
    pub opc: f64,
    pub cr: f64,
    pub rho: f64,
    pub tb_seconds: f64,
    pub mvtb_seconds: f64,
    pub nit: usize,
    pub ts_seconds: f64,
}

impl MetricsRow {
    pub const CSV_HEADER: &'static str = "nsv,nl,opc,cr,rho,tb_seconds,mvtb_seconds,nit,ts_seconds";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{:.4},{:.4},{:.4},{:.3},{:.3},{},{:.3}",
            self.nsv, self.nl, self.opc, self.cr, self.rho, self.tb_seconds, self.mvtb_seconds, self.nit, self.ts_seconds
        )
    }
}

/// `Σ nnz_k / nnz_0`.
pub fn compute_opc_from_nnz(nnz: &[usize]) -> f64 {
    match nnz.first() {
        Some(&n0) if n0 > 0 => nnz.iter().sum::<usize>() as f64 / n0 as f64,
        _ => 1.0,
    }
}

/// Mean of the successive size ratios `n_{k−1}/n_k`; 1 for a single level.
pub fn compute_cr_from_sizes(sizes: &[usize]) -> f64 {
    if sizes.len() < 2 {
        return 1.0;
    }
    let sum: f64 = sizes.windows(2).map(|w| w[0] as f64 / w[1] as f64).sum();
    sum / (sizes.len() - 1) as f64
}

pub fn compute_opc(h: &MultiVectorHierarchy) -> f64 {
    compute_opc_from_nnz(&h.nnzs())
}

pub fn compute_cr(h: &MultiVectorHierarchy) -> f64 {
    compute_cr_from_sizes(&h.sizes())
}

pub fn load_problem(cfg: &RunConfig) -> Result<CsrMatrix> {
    match &cfg.problem {
        Problem::Ani1 => generate_anisotropic_2d(&ani1(cfg.grid_n)),
        Problem::Ani2 => generate_anisotropic_2d(&ani2(cfg.grid_n)),
        Problem::Mtx(path) => read_matrix_market(path),
    }
}

/// Last-ratio A-norm estimate over `applications` steps of `(I − B⁻¹A)`.
pub fn estimate_rho(h: &MultilevelHierarchy, spec: &CycleSpec, seed: u64, applications: usize) -> Result<f64> {
    let a = h.matrix();
    let mut x = random_vector(a.n_rows(), seed);
    let mut prev = a_norm(a, &x)?;
    let mut rho = 0.0;
    for _ in 0..applications {
        if prev == 0.0 {
            return Ok(0.0);
        }
        x = error_propagation_apply(h, spec, &x)?;
        let norm = a_norm(a, &x)?;
        rho = norm / prev;
        // rescale so long runs stay in floating-point range
        x.iter_mut().for_each(|v| *v /= norm.max(f64::MIN_POSITIVE));
        prev = if norm == 0.0 { 0.0 } else { 1.0 };
    }
    Ok(rho)
}

/// A multi-vector hierarchy ready to precondition.
pub struct FinalMethod {
    pub multivector: MultiVectorHierarchy,
    pub hierarchy: MultilevelHierarchy,
    pub build_seconds: f64,
}

/// Builds the multi-vector V-cycle from the first `nsv` smooth vectors and the last bootstrap stage.
pub fn build_final_method(a: &CsrMatrix, composite: &CompositeAmg, nsv: usize, params: MultiVectorParams) -> Result<FinalMethod> {
    let started = Instant::now();
    let last = composite.components.last().ok_or(AmgError::EmptyComposite)?;
    let used = nsv.min(composite.smooth_vectors.len());
    if used < nsv {
        log::warn!("only {used} smooth vectors available, {nsv} requested");
    }
    let multivector = build_multivector_hierarchy(a, &last.pairwise, &composite.smooth_vectors[..used], params)?;
    let hierarchy = MultilevelHierarchy::from_multivector(&multivector)?;
    Ok(FinalMethod { multivector, hierarchy, build_seconds: started.elapsed().as_secs_f64() })
}

/// Solves `A x = 1` from zero with V-cycle PCG.
pub fn solve_ones(a: &CsrMatrix, h: &MultilevelHierarchy, opts: PcgOptions) -> Result<(Vec<f64>, SolveReport, f64)> {
    let started = Instant::now();
    let spec = CycleSpec::v();
    let precond = |r: &[f64]| apply_cycle(h, &spec, r);
    let b = vec![1.0; a.n_rows()];
    let (x, report) = pcg(a, &b, &precond, opts)?;
    Ok((x, report, started.elapsed().as_secs_f64()))
}

#[derive(Debug, Clone)]
pub struct BenchmarkOutput {
    pub rows: Vec<MetricsRow>,
    pub stages: Vec<StageReport>,
}

fn write_stage_log(path: &Path, stages: &[StageReport]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}", StageReport::CSV_HEADER)?;
    for s in stages {
        writeln!(out, "{}", s.csv_line())?;
    }
    out.flush()?;
    Ok(())
}

/// Runs the full protocol for every `nsv` in the config.
///
/// With `out` set, the CSV header is written first and each row is flushed
/// as soon as it is computed, so a failure leaves the completed rows on disk.
pub fn run_benchmark(cfg: &RunConfig) -> Result<BenchmarkOutput> {
    cfg.validate()?;
    let a = load_problem(cfg)?;
    run_benchmark_on(&a, cfg)
}

pub fn run_benchmark_on(a: &CsrMatrix, cfg: &RunConfig) -> Result<BenchmarkOutput> {
    cfg.validate()?;
    let mut csv = match &cfg.out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            writeln!(w, "{}", MetricsRow::CSV_HEADER)?;
            w.flush()?;
            Some(w)
        }
        None => None,
    };

    let started = Instant::now();
    let composite = bootstrap_run(a, None, &cfg.bootstrap_params())?;
    let bootstrap_seconds = started.elapsed().as_secs_f64();
    if let Some(path) = &cfg.stage_log {
        write_stage_log(path, &composite.reports)?;
    }

    let mut rows = Vec::with_capacity(cfg.nsv.len());
    for &nsv in &cfg.nsv {
        let method = build_final_method(a, &composite, nsv, cfg.multivector_params())?;
        let (_, report, ts) = solve_ones(a, &method.hierarchy, cfg.pcg_options())?;
        if !report.converged {
            log::warn!("nsv {nsv}: PCG stopped at itmax with relative residual {:.3e}", report.final_relative_residual);
        }
        let rho = estimate_rho(&method.hierarchy, &CycleSpec::v(), cfg.seed ^ 0x5EED, RHO_APPLICATIONS)?;
        let row = MetricsRow {
            nsv: method.multivector.levels[0].smooth_vectors.len(),
            nl: method.multivector.nl(),
            opc: compute_opc(&method.multivector),
            cr: compute_cr(&method.multivector),
            rho,
            tb_seconds: bootstrap_seconds + method.build_seconds,
            mvtb_seconds: method.build_seconds,
            nit: report.iterations,
            ts_seconds: ts,
        };
        if let Some(w) = csv.as_mut() {
            writeln!(w, "{}", row.csv_line())?;
            w.flush()?;
        }
        rows.push(row);
    }
    Ok(BenchmarkOutput { rows, stages: composite.reports })
}

/// Text dump of a multi-vector hierarchy.
///
/// ```text
/// levels <nl>
/// level <k> size <n_k> nnz <nnz_k>
/// level <k> ... aggregates <count> kept <k_1> <k_2> ...
/// opc <opc> cr <cr>
/// ```
///
/// The `aggregates`/`kept` fields appear on every level but the finest.
pub fn format_hierarchy(h: &MultiVectorHierarchy) -> String {
    let mut s = format!("levels {}\n", h.nl());
    for (k, lvl) in h.levels.iter().enumerate() {
        s.push_str(&format!("level {k} size {} nnz {}", lvl.matrix.n_rows(), lvl.matrix.nnz()));
        if let Some(bp) = &lvl.prolongator {
            s.push_str(&format!(" aggregates {} kept", bp.records.len()));
            for c in bp.kept_counts() {
                s.push_str(&format!(" {c}"));
            }
        }
        s.push('\n');
    }
    s.push_str(&format!("opc {:.4} cr {:.4}\n", compute_opc(h), compute_cr(h)));
    s
}
