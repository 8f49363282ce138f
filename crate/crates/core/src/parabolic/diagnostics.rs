//! Comparison runs, barrier checks, mollified initial data and order studies.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numerics::fd::second_derivative;
use crate::numerics::Grid1D;
use crate::profile::{discrete_lipschitz, ModulusProfile};
use crate::prufer::tilde_psi_k0;
use crate::riccati::InitialModulus;
use crate::spectrum::ModelContext;

use super::scheme::{
    advance_into, evolve_observed, smooth_nodes, EvolutionState, FlowConfig, FlowProblem, ImplicitFactor, Source,
};

fn factor_for(prob: &FlowProblem, dt: f64) -> Result<ImplicitFactor> {
    ImplicitFactor::new(&prob.stencil, dt)
        .ok_or_else(|| Error::Stage { stage: "flow".into(), message: "singular implicit matrix".into() })
}

fn stage_err(message: String) -> Error {
    Error::Stage { stage: "flow".into(), message }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonVerdict {
    pub passed: bool,
    pub t_end: f64,
    pub steps: usize,
    pub tolerance: f64,
    /// Largest `u − v` seen (negative when the ordering is strict).
    pub worst_excess: f64,
    /// `(z, t)` of the worst excess.
    pub worst_at: (f64, f64),
    pub violations: usize,
    pub final_sup_difference: f64,
}

/// Co-evolves `u_init ≤ v_init` with the same scheme and checks `u ≤ v + tol`
/// after every step, `tol = tolerance_factor · dt · truncation_rate`.
pub fn comparison_test(prob: &FlowProblem, u_init: &[f64], v_init: &[f64], t_end: f64, cfg: &FlowConfig) -> Result<ComparisonVerdict> {
    let n = prob.len();
    if u_init.len() != n || v_init.len() != n {
        return Err(Error::InvalidProblem("comparison fields must live on the flow grid".into()));
    }
    if u_init.iter().zip(v_init).any(|(a, b)| a > b) {
        return Err(Error::InvalidProblem("comparison needs u_init ≤ v_init".into()));
    }
    let dt = cfg.dt.unwrap_or_else(|| prob.dt_cap(cfg.cap_factor));
    let factor = factor_for(prob, dt)?;
    let tolerance = cfg.tolerance_factor * prob.truncation_rate().max(1e-13) * dt;
    let mut u = u_init.to_vec();
    let mut v = v_init.to_vec();
    u[0] = 0.0;
    v[0] = 0.0;
    u[n - 1] = 0.0;
    v[n - 1] = 0.0;
    let mut bu = vec![0.0; n];
    let mut bv = vec![0.0; n];
    let steps = (t_end / dt).ceil().max(1.0) as usize;
    let h = t_end / steps as f64;
    let factor = if h == dt { factor } else { factor_for(prob, h)? };
    let mut worst = f64::NEG_INFINITY;
    let mut worst_at = (0.0, 0.0);
    let mut violations = 0;
    for s in 0..steps {
        let t = s as f64 * h;
        if !advance_into(prob, &factor, &u, t, h, None, &mut bu) || !advance_into(prob, &factor, &v, t, h, None, &mut bv) {
            return Err(stage_err(format!("comparison step failed at t = {t}")));
        }
        std::mem::swap(&mut u, &mut bu);
        std::mem::swap(&mut v, &mut bv);
        for i in 1..n - 1 {
            let e = u[i] - v[i];
            if e > worst {
                worst = e;
                worst_at = (prob.stencil.z[i], t + h);
            }
            if e > tolerance {
                violations += 1;
            }
        }
    }
    let final_sup_difference = u.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(ComparisonVerdict {
        passed: violations == 0,
        t_end,
        steps,
        tolerance,
        worst_excess: worst,
        worst_at,
        violations,
        final_sup_difference,
    })
}

/// `φ(x) = 2/√π e^{−x²/4} + x erf(x/2)`.
pub fn erf_profile(x: f64) -> f64 {
    2.0 / PI.sqrt() * (-0.25 * x * x).exp() + x * libm::erf(0.5 * x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErfBarrierVerdict {
    pub z0: f64,
    pub tau: f64,
    pub l0: f64,
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub c1: f64,
    pub mu_tau: f64,
    pub t_max: f64,
    /// `min_z (w(z, 0⁺) − u₀(z))`; at least `τ`.
    pub initial_gap: f64,
    pub states_checked: usize,
    pub upper_violations: usize,
    pub lower_violations: usize,
    /// Smallest `min(w − u, u − w⁻)` over checked points.
    pub worst_margin: f64,
    pub passed: bool,
}

/// `w = u₀(z₀) + τ + μ_τ t + 2L₀√t φ(|z−z₀|/√t)` and its mirror `w⁻` against the
/// numerical `u` for `0 < t ≤ 1/μ_τ`.
pub fn erf_barrier_check(prob: &FlowProblem, z0: f64, tau: f64, cfg: &FlowConfig) -> Result<ErfBarrierVerdict> {
    if !(tau > 0.0 && z0 >= 0.0 && z0 <= prob.ctx.half()) {
        return Err(Error::InvalidProblem("need τ > 0 and z₀ in [0, D/2]".into()));
    }
    let z = prob.stencil.z.clone();
    let u0 = prob.u0();
    let l0 = discrete_lipschitz(&z, &u0);
    let far = z0.max(prob.ctx.half() - z0);
    let a0 = erf_profile(far);
    let a1 = prob.coeffs.sup_a1();
    let a2 = prob.coeffs.sup_a2();
    let c1 = u0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let bound = 2.0 * l0 * a1 + (a2 + 4.0 * l0) * (c1 + tau + 1.0 + 2.0 * l0 * a0);
    let mu_tau = 1.01 * bound + 1e-12;
    let t_max = 1.0 / mu_tau;
    let uz0 = crate::profile::linear_interp(&z, &u0, z0);
    let initial_gap = z
        .iter()
        .zip(&u0)
        .map(|(x, v)| uz0 + tau + 2.0 * l0 * (x - z0).abs() - v)
        .fold(f64::INFINITY, f64::min);

    let run_cfg = FlowConfig { t_end: t_max, stop_on_convergence: false, ..*cfg };
    let mut checked = 0;
    let (mut up, mut lo) = (0, 0);
    let mut worst = f64::INFINITY;
    evolve_observed(prob, &run_cfg, |s: &EvolutionState| {
        if s.t <= 0.0 {
            return;
        }
        checked += 1;
        let rt = s.t.sqrt();
        for (i, x) in z.iter().enumerate() {
            let spread = 2.0 * l0 * rt * erf_profile((x - z0).abs() / rt);
            let w = uz0 + tau + mu_tau * s.t + spread;
            let wm = uz0 - tau - mu_tau * s.t - spread;
            let (mu, ml) = (w - s.u[i], s.u[i] - wm);
            worst = worst.min(mu.min(ml));
            up += (mu < 0.0) as usize;
            lo += (ml < 0.0) as usize;
        }
    })?;
    Ok(ErfBarrierVerdict {
        z0,
        tau,
        l0,
        a0,
        a1,
        a2,
        c1,
        mu_tau,
        t_max,
        initial_gap,
        states_checked: checked,
        upper_violations: up,
        lower_violations: lo,
        worst_margin: worst,
        passed: up == 0 && lo == 0 && initial_gap >= tau * (1.0 - 1e-12),
    })
}

/// Constants of the logarithmic boundary barrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryBarrier {
    pub m: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta0: f64,
    /// `ln k₁` (`k₁` itself underflows for large `Mβ₀`).
    pub ln_k1: f64,
    pub sigma: f64,
}

impl BoundaryBarrier {
    /// `f(x) = (1/β₀) ln(1 + β₀x/k₁)`.
    pub fn f(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if self.beta0 <= 0.0 {
            return f64::INFINITY;
        }
        let lx = (self.beta0 * x).ln();
        let (hi, lo) = if lx > self.ln_k1 { (lx, self.ln_k1) } else { (self.ln_k1, lx) };
        (hi + (lo - hi).exp().ln_1p() - self.ln_k1) / self.beta0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryBarrierVerdict {
    pub barrier: BoundaryBarrier,
    /// Barrier widths at each end, capped at the distance to the nearest kink.
    pub sigma_left: f64,
    pub sigma_right: f64,
    pub nodes_checked: usize,
    pub states_checked: usize,
    pub violations: usize,
    pub worst_margin: f64,
    pub passed: bool,
}

/// Barrier constants for a run whose states deviate from `u₀` by at most `m`.
pub fn boundary_barrier(prob: &FlowProblem, m: f64) -> BoundaryBarrier {
    let z = &prob.stencil.z;
    let u0 = prob.u0();
    let c1 = u0.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let alpha1 = 2.0 * c1 + prob.coeffs.sup_a1();
    let alpha2 = 2.0 * c1 * c1 * prob.ctx.tan_half() + c1 * prob.coeffs.sup_a2();
    let d2 = second_derivative(z, &u0);
    let sup_d2 = smooth_nodes(z, &prob.initial.kinks).into_iter().map(|i| d2[i].abs()).fold(0.0, f64::max);
    let beta0 = 4.0 * alpha1.max(alpha2) + sup_d2;
    let lip = discrete_lipschitz(z, &u0);
    let c0 = if lip > 0.0 { 0.25f64.min(0.5 / lip) } else { 0.25 };
    let ln_k1 = c0.ln() - m * beta0;
    // σ = (k₁/β₀)(e^{Mβ₀} − 1) = (c₀ − k₁)/β₀.
    let sigma = ((c0 - ln_k1.exp()) / beta0).min(prob.ctx.half());
    BoundaryBarrier { m, alpha1, alpha2, beta0, ln_k1, sigma }
}

/// `u₀ − f ≤ u ≤ u₀ + f` on `[0, σ]` and on the mirrored interval at `D/2`.
pub fn boundary_barrier_check<'a, I>(prob: &FlowProblem, max_deviation: f64, states: I) -> BoundaryBarrierVerdict
where
    I: IntoIterator<Item = &'a EvolutionState>,
{
    let barrier = boundary_barrier(prob, max_deviation);
    let z = &prob.stencil.z;
    let half = prob.ctx.half();
    let u0 = prob.u0();
    let first_kink = prob.initial.kinks.iter().map(|k| k.z).fold(half, f64::min);
    let last_kink = prob.initial.kinks.iter().map(|k| k.z).fold(0.0, f64::max);
    let sigma_left = barrier.sigma.min(first_kink);
    let sigma_right = barrier.sigma.min(half - last_kink);
    let nodes: Vec<(usize, f64)> = z
        .iter()
        .enumerate()
        .filter_map(|(i, x)| {
            if *x > 0.0 && *x <= sigma_left {
                Some((i, *x))
            } else if *x < half && half - x <= sigma_right {
                Some((i, half - x))
            } else {
                None
            }
        })
        .collect();
    let mut states_checked = 0;
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for s in states {
        states_checked += 1;
        for &(i, x) in &nodes {
            let f = barrier.f(x);
            let margin = f - (s.u[i] - u0[i]).abs();
            worst = worst.min(margin);
            violations += (margin < 0.0) as usize;
        }
    }
    BoundaryBarrierVerdict {
        barrier,
        sigma_left,
        sigma_right,
        nodes_checked: nodes.len(),
        states_checked,
        violations,
        worst_margin: worst,
        passed: violations == 0,
    }
}

/// Runs the flow and checks the boundary barrier on the first `steps` states.
pub fn boundary_barrier_run(prob: &FlowProblem, steps: usize, cfg: &FlowConfig) -> Result<BoundaryBarrierVerdict> {
    let dt = cfg.dt.unwrap_or_else(|| prob.dt_cap(cfg.cap_factor));
    let run_cfg = FlowConfig { t_end: dt * steps as f64, stop_on_convergence: false, ..*cfg };
    let mut states = Vec::with_capacity(steps + 1);
    let run = evolve_observed(prob, &run_cfg, |s| states.push(s.clone()))?;
    Ok(boundary_barrier_check(prob, run.report.max_deviation, &states))
}

/// `C^∞` step: 0 for `x ≤ 0`, 1 for `x ≥ 1`.
fn smooth_step(x: f64) -> f64 {
    let g = |y: f64| if y > 0.0 { (-1.0 / y).exp() } else { 0.0 };
    let (a, b) = (g(x), g(1.0 - x));
    if a + b == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mollified {
    pub eps: f64,
    /// Data agree with `u₀` on `[0, κ] ∪ [D/2 − κ, D/2]`.
    pub kappa: f64,
    pub temperature: f64,
    pub u0_eps: Vec<f64>,
    pub sup_difference: f64,
    pub lipschitz: f64,
    pub lipschitz_u0: f64,
    pub min_value: f64,
}

impl Mollified {
    /// `0 ≤ u₀^ε ≤ u₀`, `sup|u₀^ε − u₀| ≤ ε` and `Lip ≤ 2L₀`.
    pub fn admissible(&self, u0: &[f64]) -> bool {
        self.min_value >= 0.0
            && self.u0_eps.iter().zip(u0).all(|(a, b)| *a <= *b)
            && self.sup_difference <= self.eps
            && self.lipschitz <= 2.0 * self.lipschitz_u0
    }
}

/// Smooths the kinks of `u₀` with a soft minimum over the active pieces of
/// `ψ_{k,0}`, blended to the exact data near both ends.
pub fn mollify(prob: &FlowProblem, init: &InitialModulus, eps: f64) -> Result<Mollified> {
    if !(eps > 0.0) {
        return Err(Error::InvalidProblem("ε must be positive".into()));
    }
    let z = &prob.stencil.z;
    let half = prob.ctx.half();
    let u0 = prob.u0();
    let curves = init.curves();
    let mut active: Vec<usize> = Vec::new();
    let values: Vec<Vec<f64>> = z.iter().map(|x| curves.iter().map(|c| c.eval(*x)).collect()).collect();
    for row in values.iter().skip(1).take(z.len() - 2) {
        let p = row.iter().enumerate().fold((0, f64::INFINITY), |b, (j, v)| if *v < b.1 { (j, *v) } else { b }).0;
        if !active.contains(&p) {
            active.push(p);
        }
    }
    let first = prob.initial.kinks.iter().map(|k| k.z).fold(half, f64::min);
    let last = prob.initial.kinks.iter().map(|k| k.z).fold(0.0, f64::max);
    let kappa = 0.4 * first.min(half - last);
    let temperature = if active.len() > 1 { eps / (active.len() as f64).ln() } else { eps };
    let mut u0_eps = u0.clone();
    if active.len() > 1 && kappa > 0.0 {
        for (i, x) in z.iter().enumerate() {
            let chi = smooth_step((x - kappa) / kappa) * smooth_step((half - kappa - x) / kappa);
            if chi == 0.0 {
                continue;
            }
            let m = active.iter().map(|&p| values[i][p]).fold(f64::INFINITY, f64::min);
            let sum: f64 = active.iter().map(|&p| (-(values[i][p] - m) / temperature).exp()).sum();
            u0_eps[i] = u0[i] - chi * temperature * sum.ln();
        }
    }
    let sup_difference = u0.iter().zip(&u0_eps).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(Mollified {
        eps,
        kappa,
        temperature,
        lipschitz: discrete_lipschitz(z, &u0_eps),
        lipschitz_u0: discrete_lipschitz(z, &u0),
        min_value: u0_eps.iter().copied().fold(f64::INFINITY, f64::min),
        sup_difference,
        u0_eps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MollifiedRun {
    pub data: Mollified,
    pub admissible: bool,
    /// Co-evolution of `u₀^ε ≤ u₀`.
    pub comparison: ComparisonVerdict,
}

pub fn mollified_run(prob: &FlowProblem, init: &InitialModulus, eps: f64, t_end: f64, cfg: &FlowConfig) -> Result<MollifiedRun> {
    let data = mollify(prob, init, eps)?;
    let u0 = prob.u0();
    let admissible = data.admissible(&u0);
    let comparison = comparison_test(prob, &data.u0_eps, &u0, t_end, cfg)?;
    Ok(MollifiedRun { data, admissible, comparison })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderStudy {
    /// Grid spacings or time steps, coarse to fine.
    pub steps: Vec<f64>,
    pub errors: Vec<f64>,
    /// `log₂` of successive error ratios.
    pub orders: Vec<f64>,
    /// Order from the finest pair.
    pub observed: f64,
}

impl OrderStudy {
    fn from_errors(steps: Vec<f64>, errors: Vec<f64>) -> Self {
        let orders: Vec<f64> = errors.windows(2).zip(steps.windows(2)).map(|(e, h)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln()).collect();
        let observed = *orders.last().unwrap_or(&f64::NAN);
        Self { steps, errors, orders, observed }
    }
}

/// Smooth manufactured solution `A e^{−t} sin(2πz/D)` with its forcing.
struct Manufactured {
    amp: f64,
    w: f64,
}

impl Manufactured {
    fn new(ctx: &ModelContext) -> Self {
        Self { amp: 0.5, w: 2.0 * PI / ctx.diameter }
    }

    fn u(&self, z: f64, t: f64) -> f64 {
        self.amp * (-t).exp() * (self.w * z).sin()
    }

    fn forcing(&self, prob: &FlowProblem, i: usize, t: f64) -> f64 {
        let z = prob.stencil.z[i];
        let e = self.amp * (-t).exp();
        let u = e * (self.w * z).sin();
        let du = e * self.w * (self.w * z).cos();
        let ddu = -self.w * self.w * u;
        let tz = prob.stencil.tan[i];
        let n = (2.0 * u + prob.coeffs.a1[i]) * du - 2.0 * tz * u * u + prob.coeffs.a2[i] * u;
        -u - ddu - n
    }
}

fn manufactured_problem(ctx: &ModelContext, k: u32, nodes: usize) -> Result<FlowProblem> {
    let grid = Grid1D::build(0.0, ctx.half(), nodes, crate::numerics::SpacingKind::Uniform)?;
    let stationary = tilde_psi_k0(ctx, k, grid.nodes())?;
    let initial = ModulusProfile::new(k, stationary.z.clone(), stationary.psi.clone(), Vec::new());
    FlowProblem::new(grid, &stationary, initial)
}

fn run_manufactured(prob: &FlowProblem, mf: &Manufactured, dt: f64, t_end: f64) -> Result<Vec<f64>> {
    let steps = (t_end / dt).round().max(1.0) as usize;
    let h = t_end / steps as f64;
    let factor = factor_for(prob, h)?;
    let mut u: Vec<f64> = prob.stencil.z.iter().map(|z| mf.u(*z, 0.0)).collect();
    let mut buf = vec![0.0; u.len()];
    let src = |i: usize, t: f64| mf.forcing(prob, i, t);
    let source: Source = &src;
    for s in 0..steps {
        if !advance_into(prob, &factor, &u, s as f64 * h, h, Some(source), &mut buf) {
            return Err(stage_err("manufactured run failed".into()));
        }
        std::mem::swap(&mut u, &mut buf);
    }
    Ok(u)
}

/// Grid halving with `dt ∝ h²`, error against the manufactured solution at `t_end`.
pub fn spatial_order(ctx: &ModelContext, k: u32, coarse_intervals: usize, levels: usize, t_end: f64) -> Result<OrderStudy> {
    let mf = Manufactured::new(ctx);
    let mut hs = Vec::new();
    let mut errs = Vec::new();
    for l in 0..levels {
        let intervals = coarse_intervals << l;
        let prob = manufactured_problem(ctx, k, intervals + 1)?;
        let h = ctx.half() / intervals as f64;
        let u = run_manufactured(&prob, &mf, 0.1 * h * h, t_end)?;
        let err = prob.stencil.z.iter().zip(&u).map(|(z, v)| (v - mf.u(*z, t_end)).abs()).fold(0.0, f64::max);
        hs.push(h);
        errs.push(err);
    }
    Ok(OrderStudy::from_errors(hs, errs))
}

/// Step halving on a fixed grid; errors are differences of successive runs.
pub fn temporal_order(ctx: &ModelContext, k: u32, nodes: usize, coarse_dt: f64, levels: usize, t_end: f64) -> Result<OrderStudy> {
    let mf = Manufactured::new(ctx);
    let prob = manufactured_problem(ctx, k, nodes)?;
    let runs: Vec<Vec<f64>> =
        (0..=levels).map(|l| run_manufactured(&prob, &mf, coarse_dt / (1u64 << l) as f64, t_end)).collect::<Result<_>>()?;
    let dts: Vec<f64> = (0..levels).map(|l| coarse_dt / (1u64 << l) as f64).collect();
    let errs: Vec<f64> =
        runs.windows(2).map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)).collect();
    Ok(OrderStudy::from_errors(dts, errs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erf_profile_shape() {
        assert!((erf_profile(0.0) - 2.0 / PI.sqrt()).abs() < 1e-15);
        // φ'' = (φ − zφ')/2 by central differences.
        let h = 1e-3;
        for x in [0.3, 1.0, 2.5] {
            let d1 = (erf_profile(x + h) - erf_profile(x - h)) / (2.0 * h);
            let d2 = (erf_profile(x + h) - 2.0 * erf_profile(x) + erf_profile(x - h)) / (h * h);
            assert!((d2 - 0.5 * (erf_profile(x) - x * d1)).abs() < 1e-6);
        }
        assert!((erf_profile(40.0) - 40.0).abs() < 1e-12);
    }

    #[test]
    fn log_barrier_shape() {
        let b = BoundaryBarrier { m: 1.0, alpha1: 1.0, alpha2: 1.0, beta0: 5.0, ln_k1: (0.25f64).ln() - 5.0, sigma: 0.05 };
        assert_eq!(b.f(0.0), 0.0);
        let xs: Vec<f64> = (1..50).map(|i| i as f64 * 1e-3).collect();
        for w in xs.windows(3) {
            let (a, c, d) = (b.f(w[0]), b.f(w[1]), b.f(w[2]));
            assert!(a < c && c < d);
            assert!(c - a >= d - c);
        }
        let direct = (1.0 + 5.0 * 0.01 / b.ln_k1.exp()).ln() / 5.0;
        assert!((b.f(0.01) - direct).abs() < 1e-12);
        // f(σ) = M for σ = (k₁/β₀)(e^{Mβ₀} − 1).
        let sigma = b.ln_k1.exp() / 5.0 * (5f64.exp() - 1.0);
        assert!((b.f(sigma) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn smooth_step_limits() {
        assert_eq!(smooth_step(-0.5), 0.0);
        assert_eq!(smooth_step(1.5), 1.0);
        assert!((smooth_step(0.5) - 0.5).abs() < 1e-15);
    }
}
