//! Randomized property tests for the structural invariants: closure of
//! double stochasticity, spectral identities, projection contraction,
//! and run determinism.

use ddanet::graph::{build_cycle, build_path, normalized_laplacian, sorted_symmetric_eigenvalues};
use ddanet::mixing::{
    lazy, max_degree_chain, sample_protocol_matrix, tv_to_uniform, MatrixChain, MixingMatrix,
    ProtocolKind, ProtocolSpec,
};
use ddanet::proximal::{lipschitz_audit, ConstraintSet, ProximalSetup};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn arb_graph() -> impl Strategy<Value = ddanet::graph::Graph> {
    prop_oneof![
        (4usize..20, 1usize..3).prop_filter_map("cycle needs 2k < n", |(n, k)| {
            build_cycle(n, k).ok()
        }),
        (3usize..20, 1usize..3).prop_filter_map("path needs k < n", |(n, k)| {
            build_path(n, k).ok()
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chains_stay_doubly_stochastic_under_products_and_lazy(
        g in arb_graph(),
        seed in 0u64..1000,
        rounds in 1usize..30,
    ) {
        let base = max_degree_chain(&g);
        // lazy() re-validates stochasticity on construction.
        let lazy_chain = lazy(&base);
        prop_assert!(lazy_chain.sigma2() <= 1.0);
        // Convex combination of the two.
        let mix = MixingMatrix::new(base.entries() * 0.3 + lazy_chain.entries() * 0.7);
        prop_assert!(mix.is_ok());
        // Random-protocol product chain.
        let spec = ProtocolSpec::new(ProtocolKind::Gossip, g.clone(), 0.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut chain = MatrixChain::identity(g.n());
        for _ in 0..rounds {
            // extend() re-validates the running product.
            chain.extend(&sample_protocol_matrix(&spec, &mut rng)).unwrap();
        }
        prop_assert_eq!(chain.len(), rounds);
    }

    #[test]
    fn sigma2_matches_svd(g in arb_graph()) {
        let p = max_degree_chain(&g);
        let svd = p.entries().clone().svd(false, false);
        let mut singular: Vec<f64> = svd.singular_values.iter().copied().collect();
        singular.sort_by(|a, b| b.partial_cmp(a).unwrap());
        prop_assert!((p.sigma2() - singular[1]).abs() < 1e-8,
            "eigen {} vs svd {}", p.sigma2(), singular[1]);
    }

    #[test]
    fn laplacian_eigenvalues_in_range(g in arb_graph()) {
        let lap = normalized_laplacian(&g);
        let n = g.n();
        prop_assert!(lap.eigenvalues[n - 1].abs() <= 1e-9);
        for &l in &lap.eigenvalues {
            prop_assert!(l >= -1e-9 && l <= 2.0 + 1e-9);
        }
        // Chain bound from the Laplacian spectrum.
        let p = max_degree_chain(&g);
        let dmin = g.min_degree() as f64;
        let dmax = g.max_degree() as f64;
        let bound = (1.0 - dmin / (dmax + 1.0) * lap.lambda_second_smallest())
            .max(dmax / (dmax + 1.0) * lap.lambda_max() - 1.0);
        prop_assert!(p.sigma2() <= bound + 1e-9);
    }

    #[test]
    fn tv_distance_well_behaved(g in arb_graph(), column in 0usize..100) {
        let p = max_degree_chain(&g);
        let j = column % g.n();
        let mut chain = MatrixChain::identity(g.n());
        chain.extend(&p).unwrap();
        chain.extend(&p).unwrap();
        let tv = tv_to_uniform(&chain.column(j)).unwrap();
        prop_assert!((0.0..=1.0).contains(&tv));
        let uniform = DVector::from_element(g.n(), 1.0 / g.n() as f64);
        prop_assert!(tv_to_uniform(&uniform).unwrap() < 1e-12);
    }

    #[test]
    fn projection_contraction_random_setups(
        coords in proptest::collection::vec(-10.0f64..10.0, 8),
        alpha in 0.01f64..5.0,
        which in 0usize..5,
    ) {
        let setup = match which {
            0 => ProximalSetup::quadratic(ConstraintSet::Unconstrained { dim: 4 }),
            1 => ProximalSetup::quadratic(ConstraintSet::EuclideanBall { dim: 4, radius: 3.0 }),
            2 => ProximalSetup::quadratic(ConstraintSet::Box { lo: vec![-1.0; 4], hi: vec![1.0; 4] }),
            3 => ProximalSetup::quadratic(ConstraintSet::Simplex { dim: 4 }),
            _ => ProximalSetup::entropic(4),
        };
        let u = DVector::from_row_slice(&coords[..4]);
        let v = DVector::from_row_slice(&coords[4..]);
        let (pass, ratio) = lipschitz_audit(&setup, alpha, &u, &v).unwrap();
        prop_assert!(pass, "contraction ratio {ratio}");
    }

    #[test]
    fn symmetric_eigenvalues_sorted(g in arb_graph()) {
        let vals = sorted_symmetric_eigenvalues(max_degree_chain(&g).entries());
        for w in vals.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
        prop_assert!((vals[0] - 1.0).abs() < 1e-9); // top eigenvalue of a stochastic matrix
    }
}

#[test]
fn run_records_are_deterministic() {
    use ddanet::harness::{measure_t_epsilon, ExperimentConfig};
    let mut cfg = ExperimentConfig::default();
    cfg.objective = "median".into();
    cfg.protocol = "gossip".into();
    cfg.family = "cycle".into();
    cfg.epsilon = 0.25;
    cfg.t_max = 3000;
    cfg.ref_iters = 50_000;
    let (a, _) = measure_t_epsilon(&cfg, 6, 0).unwrap();
    let (b, _) = measure_t_epsilon(&cfg, 6, 0).unwrap();
    assert_eq!(a.csv_line(), b.csv_line());
    // A different trial uses a different stream.
    let (c, _) = measure_t_epsilon(&cfg, 6, 1).unwrap();
    assert_ne!(a.seed, c.seed);
}
