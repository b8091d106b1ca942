use bootamg::bench::{build_final_method, compute_opc, run_benchmark, solve_ones, RunConfig};
use bootamg::bootstrap::{apply_composite_symmetrized, bootstrap_run, BootstrapParams};
use bootamg::cycles::{error_propagation_apply, CycleSpec};
use bootamg::dense::{cholesky, DenseMatrix};
use bootamg::krylov::{pcg, Identity, PcgOptions};
use bootamg::matching::{exact_max_product_matching, greedy_max_product_matching, EdgeWeightGraph, WeightedEdge};
use bootamg::mmio::{read_matrix_market, write_matrix_market};
use bootamg::multivector::MultiVectorParams;
use bootamg::problems::{ani1, ani2, generate_anisotropic_2d};
use bootamg::sparse::{a_inner, a_norm, CsrMatrix};
use bootamg::vector::random_vector;
use proptest::prelude::*;

fn ani_small() -> Vec<CsrMatrix> {
    vec![generate_anisotropic_2d(&ani1(64)).unwrap(), generate_anisotropic_2d(&ani2(64)).unwrap()]
}

fn bootstrap_for(a: &CsrMatrix, stages: usize) -> bootamg::CompositeAmg {
    let params = BootstrapParams { min_stages: stages, ..Default::default() };
    bootstrap_run(a, None, &params).unwrap()
}

#[test]
fn smooth_vectors_are_independent_in_a_inner_product() {
    for a in ani_small() {
        let composite = bootstrap_for(&a, 5);
        let ws = &composite.smooth_vectors;
        let k = ws.len();
        let gram = nalgebra::DMatrix::from_fn(k, k, |i, j| a_inner(&a, &ws[i], &ws[j]).unwrap());
        let min_eig = gram.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
        assert!(min_eig > 1e-10, "min eigenvalue {min_eig}");
    }
}

#[test]
fn multivector_levels_are_spd_on_ani_fixtures() {
    for spec in [ani1(32), ani2(32)] {
        let a = generate_anisotropic_2d(&spec).unwrap();
        let composite = bootstrap_for(&a, 3);
        let params = MultiVectorParams { min_coarse_size: 10, ..Default::default() };
        let method = build_final_method(&a, &composite, 4, params).unwrap();
        assert!(method.multivector.nl() >= 2);
        for (k, lvl) in method.multivector.levels.iter().enumerate().skip(1) {
            assert!(lvl.matrix.is_symmetric(), "level {k}");
            assert!(cholesky(&DenseMatrix::from_csr(&lvl.matrix)).is_ok(), "level {k}");
            let prev = &method.multivector.levels[k - 1];
            let bp = lvl.prolongator.as_ref().unwrap();
            for (w_prev, w) in prev.smooth_vectors.iter().zip(&lvl.smooth_vectors) {
                assert_eq!(&bp.p.spmv_transpose(w_prev).unwrap(), w);
            }
        }
    }
}

#[test]
fn level_cap_limits_depth() {
    let a = generate_anisotropic_2d(&ani1(256)).unwrap();
    let composite = bootstrap_for(&a, 2);
    let params = MultiVectorParams { max_levels: Some(3), ..Default::default() };
    let method = build_final_method(&a, &composite, 3, params).unwrap();
    assert_eq!(method.multivector.nl(), 3);
    let uncapped = build_final_method(&a, &composite, 3, MultiVectorParams::default()).unwrap();
    assert!(uncapped.multivector.nl() > 3);
    assert!(uncapped.multivector.sizes().windows(2).all(|w| w[1] < w[0]));
    assert_eq!(uncapped.multivector.sizes()[..3], method.multivector.sizes()[..]);
}

#[test]
fn opc_grows_with_nsv() {
    for a in ani_small() {
        let composite = bootstrap_for(&a, 5);
        let opcs: Vec<f64> = (1..=6)
            .map(|nsv| compute_opc(&build_final_method(&a, &composite, nsv, MultiVectorParams::default()).unwrap().multivector))
            .collect();
        assert!(opcs.windows(2).all(|w| w[1] > w[0]), "{opcs:?}");
    }
}

#[test]
fn preconditioned_beats_plain_cg() {
    for a in ani_small() {
        let composite = bootstrap_for(&a, 4);
        let method = build_final_method(&a, &composite, 5, MultiVectorParams::default()).unwrap();
        let (_, with, _) = solve_ones(&a, &method.hierarchy, PcgOptions::default()).unwrap();
        let (_, plain) = pcg(&a, &vec![1.0; a.n_rows()], &Identity, PcgOptions::default()).unwrap();
        assert!(with.converged);
        assert!(with.iterations < plain.iterations, "{} vs {}", with.iterations, plain.iterations);
    }
}

#[test]
fn v_cycle_contracts_error_on_ani() {
    let a = generate_anisotropic_2d(&ani2(48)).unwrap();
    let composite = bootstrap_for(&a, 3);
    let method = build_final_method(&a, &composite, 4, MultiVectorParams::default()).unwrap();
    let mut x = random_vector(a.n_rows(), 3);
    for _ in 0..10 {
        let before = a_norm(&a, &x).unwrap();
        x = error_propagation_apply(&method.hierarchy, &CycleSpec::v(), &x).unwrap();
        assert!(a_norm(&a, &x).unwrap() <= before);
    }
}

#[test]
fn bootstrap_rho_does_not_increase_on_ani1() {
    let a = generate_anisotropic_2d(&ani1(48)).unwrap();
    let composite = bootstrap_for(&a, 5);
    let rhos: Vec<f64> = composite.tests.iter().map(|t| t.rho_estimate).collect();
    assert!(rhos.windows(2).all(|w| w[1] <= 1.05 * w[0]), "{rhos:?}");
    assert!(composite.tests.iter().all(|t| t.per_iteration_anorms.len() == 16));
}

#[test]
fn composite_of_one_matches_plain_propagation() {
    let a = generate_anisotropic_2d(&ani1(24)).unwrap();
    let composite = bootstrap_run(&a, None, &BootstrapParams { maxstage: 1, ..Default::default() }).unwrap();
    let c = &composite.components[0];
    let x = random_vector(a.n_rows(), 8);
    let twice = c.error_propagation(&a, &c.error_propagation(&a, &x).unwrap()).unwrap();
    assert_eq!(apply_composite_symmetrized(&composite.components, &a, &x).unwrap(), twice);
}

#[test]
fn maxstage_caps_components() {
    let a = generate_anisotropic_2d(&ani1(32)).unwrap();
    let params = BootstrapParams { maxstage: 3, rho_des: 0.01, ..Default::default() };
    assert_eq!(bootstrap_run(&a, None, &params).unwrap().components.len(), 3);
}

#[test]
fn benchmark_is_deterministic_except_times() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let cfg = RunConfig { grid_n: 32, nsv: vec![1, 3], seed: 11, out: Some(out.clone()), ..Default::default() };
        run_benchmark(&cfg).unwrap();
        std::fs::read_to_string(out).unwrap()
    };
    let strip = |text: String| -> Vec<String> {
        text.lines()
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                [f[0], f[1], f[2], f[3], f[4], f[7]].join(",")
            })
            .collect()
    };
    assert_eq!(strip(run("a.csv")), strip(run("b.csv")));
}

#[test]
fn single_vector_pipeline_converges() {
    let cfg = RunConfig { grid_n: 64, nsv: vec![1], ..Default::default() };
    let out = run_benchmark(&cfg).unwrap();
    assert_eq!(out.rows[0].nsv, 1);
    assert!(out.rows[0].nit < 1000);
}

#[test]
fn fixture_round_trips_through_matrix_market() {
    let dir = tempfile::tempdir().unwrap();
    let a = generate_anisotropic_2d(&ani2(16)).unwrap();
    let path = dir.path().join("ani2.mtx");
    write_matrix_market(&a, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("%%MatrixMarket matrix coordinate real symmetric"));
    assert_eq!(read_matrix_market(&path).unwrap(), a);
}

fn random_graph(n: usize, seed: u64, lo: f64, hi: f64) -> EdgeWeightGraph {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen::<f64>() < 0.4 {
                edges.push(WeightedEdge { i, j, weight: rng.gen_range(lo..hi) });
            }
        }
    }
    EdgeWeightGraph::new(n, edges).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn greedy_is_half_approximate(n in 2usize..12, seed in any::<u64>()) {
        let g = random_graph(n, seed, 1.0, 50.0);
        let greedy = greedy_max_product_matching(&g);
        let exact = exact_max_product_matching(&g).unwrap();
        prop_assert!(greedy.is_valid_for(&g));
        prop_assert!(greedy.log_weight(&g) >= 0.5 * exact.log_weight(&g) - 1e-12);
        prop_assert!(greedy.log_weight(&g) <= exact.log_weight(&g) + 1e-12);
    }

    #[test]
    fn assembly_is_order_independent(seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let a = generate_anisotropic_2d(&ani2(6)).unwrap();
        let mut trip: Vec<(usize, usize, f64)> = Vec::new();
        for i in 0..a.n_rows() {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                // split each entry into uneven parts to exercise summation order
                trip.push((i, j, v * 0.3));
                trip.push((i, j, v * 0.7));
            }
        }
        let reference = CsrMatrix::from_triplets(a.n_rows(), a.n_cols(), &trip).unwrap();
        trip.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let shuffled = CsrMatrix::from_triplets(a.n_rows(), a.n_cols(), &trip).unwrap();
        prop_assert_eq!(reference.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                        shuffled.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(generate_anisotropic_2d(&ani2(6)).unwrap(), a);
    }
}
