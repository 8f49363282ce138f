use gaplab::numerics::Grid1D;
use gaplab::prufer::tilde_psi_k0;
use gaplab::riccati::*;
use gaplab::spectrum::ModelContext;

fn setup(n: u32, d: f64) -> (ModelContext, Vec<f64>) {
    let ctx = ModelContext::solve(n, d, 800).unwrap();
    let z = Grid1D::half_interval(d, 2001).unwrap().nodes().to_vec();
    (ctx, z)
}

fn sample_points(ctx: &ModelContext) -> Vec<f64> {
    (1..=50).map(|i| ctx.half() * i as f64 / 50.0).collect()
}

#[test]
fn branches_coincide_with_stationary_profile() {
    let (ctx, z) = setup(2, 2.0);
    for k in [1, 2, 4] {
        let c = c_of_k(&ctx, k).unwrap();
        let tilde = tilde_psi_k0(&ctx, k, &z).unwrap();
        let l = solve_branch_l(&ctx, c, &z).unwrap();
        let r = solve_branch_r(&ctx, k, c, &z).unwrap();
        assert!(r.blowup_z.is_none());
        let dl = l.samples.iter().zip(&tilde.psi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let dr = r.samples.iter().zip(&tilde.psi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dl < 1e-6 && dr < 1e-6, "k = {k}: {dl:e} {dr:e}");
    }
}

#[test]
fn branch_ordering_in_c() {
    let (ctx, z) = setup(3, 2.0);
    let pts = sample_points(&ctx);
    let cs = [0.5, 1.0, 2.0, 4.0];
    let ls: Vec<_> = cs.iter().map(|c| solve_branch_l(&ctx, *c, &z).unwrap()).collect();
    let rs: Vec<_> = cs.iter().map(|c| solve_branch_r(&ctx, 2, *c, &z).unwrap()).collect();
    for w in 0..cs.len() - 1 {
        for &x in &pts {
            assert!(ls[w].eval(x) < ls[w + 1].eval(x), "L at {x}");
            if x < ctx.half() {
                let (a, b) = (rs[w].eval(x), rs[w + 1].eval(x));
                assert!(a > b || (a.is_infinite() && b.is_infinite()), "R at {x}: {a} {b}");
            }
        }
    }
}

#[test]
fn envelopes_contain_branches() {
    let (ctx, z) = setup(2, 2.0);
    let k = 2;
    let c = c_of_k(&ctx, k).unwrap();
    let pts = sample_points(&ctx);
    let s = 60.0;
    let env = explicit_bounds(&ctx, k, c, s).unwrap();
    let l = solve_branch_l(&ctx, c + s, &z).unwrap();
    let r = solve_branch_r(&ctx, k, c - s, &z).unwrap();
    for &x in &pts {
        let v = l.eval(x);
        assert!(env.upper.left.eval(&ctx, x) - v >= -1e-6);
        assert!(v - env.lower.left.eval(&ctx, x) >= -1e-6);
        let v = r.eval(x);
        if x > env.upper.right.valid_from() {
            assert!(env.upper.right.eval(&ctx, x) - v >= -1e-6, "upper R at {x}");
        }
        if x > env.lower.right.valid_from() && v.is_finite() {
            assert!(v - env.lower.right.eval(&ctx, x) >= -1e-6, "lower R at {x}");
        }
    }
    let zb = r.blowup_z.expect("large deficit blows up");
    assert!(env.lower.right.valid_from() <= zb + 1e-9);
    assert!(zb <= env.upper.right.valid_from().max(0.0) + 1e-9 || env.upper.right.valid_from() < 0.0);
}

#[test]
fn p_substitution_residual() {
    let (ctx, z) = setup(3, 2.0);
    let c = c_of_k(&ctx, 2).unwrap();
    let l = solve_branch_l(&ctx, c, &z).unwrap();
    let p = p_substitute(&l);
    assert!(p.residual < 1e-6, "{}", p.residual);
    for ((zi, psi), pi) in z.iter().zip(&l.samples).zip(&p.p_samples) {
        assert!((psi - ctx.m() * zi.tan() - pi).abs() < 1e-12);
    }
    let r = solve_branch_r(&ctx, 2, c - 30.0, &z).unwrap();
    // Past a pole the stencil itself limits the check.
    let pr = p_substitute(&r);
    assert!(r.blowup_z.is_some() && pr.residual < 1e-3, "{}", pr.residual);
}

#[test]
fn supersolution_endpoints_and_kink() {
    let (ctx, z) = setup(2, 2.0);
    let sp = supersolution(&ctx, 2, 1.0, &z).unwrap();
    let zc = sp.crossing_z.expect("interior crossing");
    assert!(zc > 0.0 && zc < 1.0);
    assert_eq!(sp.samples[0], 0.0);
    assert_eq!(*sp.samples.last().unwrap(), -2.0);
    let jump = sp.crossing_jump().unwrap();
    assert!((jump + 2.0 / zc.cos().powi(2)).abs() < 1e-6, "{jump}");

    let s0 = supersolution(&ctx, 2, 0.0, &z).unwrap();
    let t = tilde_psi_k0(&ctx, 2, &z).unwrap();
    let d = s0.samples.iter().zip(&t.psi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(d < 1e-9);
}

#[test]
fn initial_modulus_structure() {
    let (ctx, z) = setup(2, 2.0);
    let s = [1.0, 1.0, 1.0, 1.0];
    let mut prev: Option<InitialModulus> = None;
    for k in 1..=4 {
        let m = initial_modulus(&ctx, &s[..k], &z).unwrap();
        let p = &m.profile;
        assert_eq!(p.samples[0], 0.0);
        assert_eq!(*p.samples.last().unwrap(), -(k as f64));
        assert!(!p.kinks.is_empty());
        assert!(p.kinks.iter().all(|kk| kk.jump <= 0.0), "{:?}", p.kinks);
        assert!(m.stationary_residual < 1e-6, "{}", m.stationary_residual);
        let t = tilde_psi_k0(&ctx, k as u32, &z).unwrap();
        let n = z.len();
        assert!(matches!(dichotomy(&p.samples, &t.psi, 1e-12), Dichotomy::StrictlyAbove { min_gap } if min_gap > 0.0));
        assert_eq!(dichotomy(&t.psi, &t.psi, 0.0), Dichotomy::Identical);
        if let Some(q) = &prev {
            assert!((1..n - 1).all(|i| p.samples[i] <= q.profile.samples[i]));
        }
        prev = Some(m);
    }
}

#[test]
fn s_search_paths() {
    assert_eq!(find_s_of_k(2, 10.0, |_| Ok(true)).unwrap().s, 0.0);
    assert!(matches!(find_s_of_k(2, 10.0, |_| Ok(false)), Err(gaplab::Error::SCapExceeded { .. })));
    let r = find_s_of_k(2, 10.0, |s| Ok(s >= 0.7314)).unwrap();
    assert!((r.s - 0.7314).abs() <= 1e-3 && r.s >= 0.7314);
    assert!(r.monotonicity_violations.is_empty());
}
