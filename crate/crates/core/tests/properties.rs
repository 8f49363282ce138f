use gaplab::cap::{verify_gap_chain, CapProblem};
use gaplab::harness::logconcavity_case;
use gaplab::numerics::Grid1D;
use gaplab::prufer::{solve_c_of_eps, tilde_psi_k0};
use gaplab::riccati::modulus::IDENTICAL_TOL;
use gaplab::riccati::{dichotomy, supersolution};
use gaplab::spectrum::{model_gap, ModelContext, ModelProblem, ModelSpectrum};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn model_gap_beats_three_pi_squared(n in 3u32..=5, d in 0.5..3.0f64) {
        let g = model_gap(&ModelProblem::new(n, d, 2000).unwrap()).unwrap();
        prop_assert!(g.mu1 > g.mu0);
        prop_assert!(g.margin >= -g.tolerance.max(1e-10), "n={n} D={d}: {} vs {}", g.margin, g.tolerance);
    }

    #[test]
    fn robin_constant_grows_with_eps(n in 2u32..=3, d in 1.0..2.5f64, eps in 0.1..2.0f64) {
        let ctx = ModelContext::solve(n, d, 800).unwrap();
        let a = solve_c_of_eps(&ctx, eps).unwrap().c;
        let b = solve_c_of_eps(&ctx, eps / 2.0).unwrap().c;
        prop_assert!(b > 0.0 && a > b, "{a} {b}");
    }

    #[test]
    fn supersolution_dominates_stationary_profile(k in 1u32..=4, s in 0.0..10.0f64, d in 1.0..2.5f64) {
        let ctx = ModelContext::solve(2, d, 800).unwrap();
        let z = Grid1D::half_interval(d, 801).unwrap().nodes().to_vec();
        let sup = supersolution(&ctx, k, s, &z).unwrap();
        let tilde = tilde_psi_k0(&ctx, k, &z).unwrap();
        prop_assert!(dichotomy(&sup.samples, &tilde.psi, IDENTICAL_TOL).holds());
    }

    #[test]
    fn ball_gap_chain_holds(n in 2u32..=4, radius in 0.3..1.5f64) {
        let prob = CapProblem::new(n, radius).unwrap();
        let model = ModelSpectrum::compute(&ModelProblem::new(n, prob.diameter, 2000).unwrap()).unwrap();
        let r = verify_gap_chain(&prob, &model).unwrap();
        prop_assert!(r.passed && r.l1_is_first_excited, "{r:?}");
    }

    #[test]
    fn two_point_inequality_for_any_seed(seed in any::<u64>(), n in 2u32..=3, d in 1.0..2.8f64) {
        let (summary, _) = logconcavity_case(n, d, 50, seed, 1000).unwrap();
        prop_assert!(summary.min_margin >= -1e-6, "{summary:?}");
        prop_assert!(summary.max_geometry_defect < 1e-10);
    }
}
