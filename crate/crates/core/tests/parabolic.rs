use gaplab::parabolic::*;
use gaplab::riccati::InitialModulus;
use gaplab::spectrum::ModelContext;

fn case(n: u32, nodes: usize) -> (FlowProblem, InitialModulus) {
    let ctx = ModelContext::solve(n, 2.0, 800).unwrap();
    build_flow(&ctx, &[1.0, 1.0], nodes).unwrap()
}

#[test]
fn stationary_data_is_a_fixed_point() {
    let (prob, _) = case(2, 200);
    let mut s = EvolutionState::from_u(&prob, vec![0.0; prob.len()], 0.0, 0);
    for _ in 0..20 {
        s = step(&prob, &s, 1e-4).unwrap();
        for (a, b) in s.psi.iter().zip(&prob.tilde) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
    assert_eq!(s.step_count, 20);
}

#[test]
fn first_step_lowers_kink_neighbourhoods() {
    let (prob, _) = case(2, 200);
    let s0 = EvolutionState::initial(&prob);
    let s1 = step(&prob, &s0, prob.dt_cap(0.25)).unwrap();
    assert_eq!(s1.psi[0], 0.0);
    assert_eq!(*s1.psi.last().unwrap(), -2.0);
    for kink in &prob.initial.kinks {
        let i = prob.grid.locate(kink.z);
        assert!(s1.psi[i] < s0.psi[i] && s1.psi[i + 1] < s0.psi[i + 1]);
    }
}

#[test]
fn step_halving_is_second_order_locally() {
    let (prob, _) = case(2, 100);
    let z = prob.stencil.z.clone();
    let u: Vec<f64> = z.iter().map(|x| 0.3 * (std::f64::consts::PI * x).sin().powi(3)).collect();
    let s = EvolutionState::from_u(&prob, u, 0.0, 0);
    let mut diffs = Vec::new();
    for dt in [1e-4, 5e-5, 2.5e-5] {
        let full = step(&prob, &s, dt).unwrap();
        let half = step(&prob, &step(&prob, &s, dt / 2.0).unwrap(), dt / 2.0).unwrap();
        diffs.push(full.u.iter().zip(&half.u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    for w in diffs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order > 1.8, "{diffs:?}");
    }
}

#[test]
fn flow_converges_with_barrier_checks() {
    let (prob, _) = case(2, 200);
    let cfg = FlowConfig { tol: 1e-6, ..Default::default() };
    let r = evolve(&prob, &cfg).unwrap().report;
    assert!(r.converged);
    assert_eq!(r.monotonicity_violations.count, 0);
    assert_eq!(r.sandwich_violations.count, 0);
    assert!(r.final_sup_error < 1e-6);
    assert!(r.stationary_residual_final < 1e-4);
    assert!(r.strictness_delta.unwrap() > 0.0);
    assert!(r.sup_errors_monotone(1e-12));
    assert!(r.lipschitz_max <= r.lipschitz_initial * (1.0 + 1e-9));
    let rate = r.decay_rate.unwrap();
    assert!(rate > 5.0 && rate < 20.0, "{rate}");
}

#[test]
fn trivial_initial_data_stay_put() {
    let (prob, _) = case(2, 100);
    let stat = gaplab::prufer::tilde_psi_k0(&prob.ctx, 2, prob.grid.nodes()).unwrap();
    let flat = FlowProblem::new(prob.grid.clone(), &stat, stat.to_modulus()).unwrap();
    let r = evolve(&flat, &FlowConfig { t_end: 0.05, tol: 1e-12, consecutive: 1000000, ..Default::default() }).unwrap().report;
    assert!(r.sup_errors.iter().all(|e| *e <= 1e-12));
    let r = evolve(&flat, &FlowConfig { t_end: 0.05, tol: 1e-10, ..Default::default() }).unwrap().report;
    assert_eq!(r.converged_at, Some(0.0));
}

#[test]
fn comparison_pairs_keep_their_order() {
    let (prob, _) = case(3, 150);
    let cfg = FlowConfig::default();
    let n = prob.len();
    let u0 = prob.u0();
    let zero = vec![0.0; n];
    let v = comparison_test(&prob, &zero, &u0, 0.2, &cfg).unwrap();
    assert!(v.passed && v.worst_excess <= 0.0, "{v:?}");

    let same = comparison_test(&prob, &u0, &u0, 0.05, &cfg).unwrap();
    assert!(same.final_sup_difference <= 1e-12);

    let z = &prob.stencil.z;
    let bump: Vec<f64> = z
        .iter()
        .zip(&u0)
        .map(|(x, u)| u + 0.2 * (-((x - 0.5) / 0.1).powi(2)).exp() * (std::f64::consts::PI * x).sin())
        .collect();
    let b = comparison_test(&prob, &u0, &bump, 1.0, &cfg).unwrap();
    assert!(b.passed, "{b:?}");
    assert!(matches!(comparison_test(&prob, &bump, &u0, 0.1, &cfg), Err(gaplab::Error::InvalidProblem(_))));
}

#[test]
fn erf_barrier_contains_the_flow() {
    let (prob, _) = case(2, 200);
    let v = erf_barrier_check(&prob, prob.ctx.half() / 2.0, 0.1, &FlowConfig::default()).unwrap();
    assert!(v.initial_gap >= 0.1 - 1e-12);
    assert!(v.states_checked > 0);
    assert!(v.passed, "{v:?}");
}

#[test]
fn boundary_barrier_over_first_steps() {
    let (prob, _) = case(2, 400);
    let v = boundary_barrier_run(&prob, 100, &FlowConfig::default()).unwrap();
    assert_eq!(v.states_checked, 101);
    assert!(v.passed, "{v:?}");
    let flat = boundary_barrier_check(&prob, 0.0, &[EvolutionState::initial(&prob)]);
    assert!(flat.passed);
}

#[test]
fn mollified_data_are_admissible_and_ordered() {
    let (prob, init) = case(2, 200);
    for eps in [1e-2, 1e-3] {
        let m = mollified_run(&prob, &init, eps, 0.05, &FlowConfig::default()).unwrap();
        assert!(m.admissible, "{:?}", (m.data.min_value, m.data.sup_difference, m.data.lipschitz, m.data.lipschitz_u0));
        assert!(m.data.sup_difference > 0.0);
        assert!(m.comparison.passed);
        assert!(m.comparison.final_sup_difference <= eps);
    }
}

#[test]
fn manufactured_orders() {
    let ctx = ModelContext::solve(2, 2.0, 400).unwrap();
    let s = spatial_order(&ctx, 2, 20, 3, 0.1).unwrap();
    assert!(s.observed >= 1.9, "{s:?}");
    let t = temporal_order(&ctx, 2, 101, 0.02, 4, 0.4).unwrap();
    assert!(t.observed >= 0.9, "{t:?}");
}
