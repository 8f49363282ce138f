//! Semi-implicit time stepping of the modulus flow in the shifted variable
//! `u = ψ − ψ̃_{k,0}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::fd::three_point_weights;
use crate::numerics::Grid1D;
use crate::profile::{discrete_lipschitz, Kink, ModulusProfile};
use crate::prufer::{riccati_rate, StationaryProfile};
use crate::riccati::InitialModulus;
use crate::spectrum::ModelContext;

/// Nodal finite-difference data shared by the operators.
#[derive(Debug, Clone)]
pub struct Stencil {
    pub z: Vec<f64>,
    pub tan: Vec<f64>,
    d1: Vec<[f64; 3]>,
    d2: Vec<[f64; 3]>,
}

impl Stencil {
    pub fn new(z: &[f64]) -> Self {
        let n = z.len();
        let mut d1 = vec![[0.0; 3]; n];
        let mut d2 = vec![[0.0; 3]; n];
        for i in 1..n - 1 {
            let (a, b) = three_point_weights(z[i] - z[i - 1], z[i + 1] - z[i]);
            d1[i] = a;
            d2[i] = b;
        }
        Self { z: z.to_vec(), tan: z.iter().map(|x| x.tan()).collect(), d1, d2 }
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    #[inline]
    pub fn first(&self, v: &[f64], i: usize) -> f64 {
        let w = &self.d1[i];
        w[0] * v[i - 1] + w[1] * v[i] + w[2] * v[i + 1]
    }

    #[inline]
    pub fn second(&self, v: &[f64], i: usize) -> f64 {
        let w = &self.d2[i];
        w[0] * v[i - 1] + w[1] * v[i] + w[2] * v[i + 1]
    }

    pub fn min_spacing(&self) -> f64 {
        self.z.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }
}

/// Full right-hand side of the `ψ` flow at interior nodes; end entries are zero.
pub fn rhs_psi(ctx: &ModelContext, st: &Stencil, psi: &[f64]) -> Vec<f64> {
    let n = st.len();
    let nm1 = ctx.n as f64 - 1.0;
    let np1 = ctx.n as f64 + 1.0;
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        let (p, t) = (psi[i], st.tan[i]);
        let dp = st.first(psi, i);
        out[i] = st.second(psi, i) + 2.0 * dp * p - np1 * t * dp - 2.0 * t * p * p - nm1 * (1.0 - t * t) * p
            - 2.0 * ctx.mu0 * t;
    }
    out
}

/// `a₁ = 2ψ̃ − (n+1) tan z`, `a₂ = 2ψ̃' − 4 tan(z) ψ̃ − (n−1)(1 − tan²z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSet {
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
    pub mu0: f64,
}

impl CoefficientSet {
    pub fn new(ctx: &ModelContext, z: &[f64], tilde: &[f64], dtilde: &[f64]) -> Self {
        let nm1 = ctx.n as f64 - 1.0;
        let np1 = ctx.n as f64 + 1.0;
        let mut a1 = Vec::with_capacity(z.len());
        let mut a2 = Vec::with_capacity(z.len());
        for i in 0..z.len() {
            let t = z[i].tan();
            a1.push(2.0 * tilde[i] - np1 * t);
            a2.push(2.0 * dtilde[i] - 4.0 * t * tilde[i] - nm1 * (1.0 - t * t));
        }
        Self { a1, a2, mu0: ctx.mu0 }
    }

    pub fn sup_a1(&self) -> f64 {
        self.a1.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn sup_a2(&self) -> f64 {
        self.a2.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Everything fixed during one evolution.
#[derive(Debug, Clone)]
pub struct FlowProblem {
    pub ctx: ModelContext,
    pub k: u32,
    pub grid: Grid1D,
    pub stencil: Stencil,
    /// `c(1/k)`.
    pub c_k: f64,
    pub tilde: Vec<f64>,
    pub dtilde: Vec<f64>,
    pub coeffs: CoefficientSet,
    pub initial: ModulusProfile,
}

impl FlowProblem {
    /// `stationary` and `initial` must be sampled on the nodes of `grid`.
    pub fn new(grid: Grid1D, stationary: &StationaryProfile, initial: ModulusProfile) -> Result<Self> {
        let z = grid.nodes();
        let same = |w: &[f64]| w.len() == z.len() && w.iter().zip(z).all(|(a, b)| (a - b).abs() < 1e-14);
        if !same(&stationary.z) || !same(&initial.z) {
            return Err(Error::InvalidProblem("flow data must share the flow grid".into()));
        }
        if initial.k != stationary.k {
            return Err(Error::InvalidProblem("initial profile and ψ̃ have different k".into()));
        }
        let ctx = stationary.ctx;
        let coeffs = CoefficientSet::new(&ctx, z, &stationary.psi, &stationary.dpsi);
        Ok(Self {
            ctx,
            k: stationary.k,
            stencil: Stencil::new(z),
            grid,
            c_k: stationary.c,
            tilde: stationary.psi.clone(),
            dtilde: stationary.dpsi.clone(),
            coeffs,
            initial,
        })
    }

    /// Samples `ψ_{k,0}` exactly (from its branch curves) on `grid`.
    pub fn from_initial_modulus(grid: Grid1D, stationary: &StationaryProfile, init: &InitialModulus) -> Result<Self> {
        let z = grid.nodes().to_vec();
        let k = init.profile.k;
        let mut samples: Vec<f64> = z.iter().map(|x| init.eval(*x)).collect();
        let last = samples.len() - 1;
        samples[0] = 0.0;
        samples[last] = -(k as f64);
        let profile = ModulusProfile::new(k, z, samples, init.profile.kinks.clone());
        Self::new(grid, stationary, profile)
    }

    pub fn len(&self) -> usize {
        self.stencil.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stencil.is_empty()
    }

    pub fn u0(&self) -> Vec<f64> {
        self.initial.samples.iter().zip(&self.tilde).map(|(a, b)| a - b).collect()
    }

    /// Interior nodes whose stencil does not straddle a kink.
    pub fn smooth_nodes(&self) -> Vec<usize> {
        smooth_nodes(&self.stencil.z, &self.initial.kinks)
    }

    /// `max |rhs_h(ψ_{k,0})|` over smooth nodes: the rate at which spatial
    /// truncation alone moves the (piecewise stationary) initial data.
    pub fn truncation_rate(&self) -> f64 {
        let r = rhs_psi(&self.ctx, &self.stencil, &self.initial.samples);
        self.smooth_nodes().into_iter().map(|i| r[i].abs()).fold(0.0, f64::max)
    }

    /// Step bound `cap·h²/(1 + (2C₁ + A₁)h)`; since `|u| ≤ C₁` along the flow
    /// this dominates `cap·h²/(1 + max|2u + a₁|h)` at every step.
    pub fn dt_cap(&self, cap_factor: f64) -> f64 {
        let h = self.stencil.min_spacing();
        let c1 = self.u0().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        cap_factor * h * h / (1.0 + (2.0 * c1 + self.coeffs.sup_a1()) * h)
    }

    /// Explicit part `2uu' + a₁u' − 2 tan(z) u² + a₂u` at interior nodes.
    pub fn explicit_terms(&self, u: &[f64]) -> Vec<f64> {
        let st = &self.stencil;
        let n = st.len();
        let mut out = vec![0.0; n];
        for i in 1..n - 1 {
            let du = st.first(u, i);
            let ui = u[i];
            out[i] = (2.0 * ui + self.coeffs.a1[i]) * du - 2.0 * st.tan[i] * ui * ui + self.coeffs.a2[i] * ui;
        }
        out
    }

    /// Full right-hand side of the `u` flow (diffusion included).
    pub fn rhs_u(&self, u: &[f64]) -> Vec<f64> {
        let mut out = self.explicit_terms(u);
        for (i, o) in out.iter_mut().enumerate().take(u.len() - 1).skip(1) {
            *o += self.stencil.second(u, i);
        }
        out
    }

    /// `max |ψ' + ψ² − (n−1) tan ψ + μ₀ − c/cos²|` over interior nodes for
    /// `ψ = ψ̃ + u`, with `ψ' = ψ̃' + u'_h`.
    pub fn stationary_residual(&self, psi: &[f64]) -> f64 {
        let st = &self.stencil;
        let u: Vec<f64> = psi.iter().zip(&self.tilde).map(|(a, b)| a - b).collect();
        (1..st.len() - 1)
            .map(|i| {
                let slope = self.dtilde[i] + st.first(&u, i);
                (slope - riccati_rate(&self.ctx, self.c_k, st.z[i], psi[i])).abs()
            })
            .fold(0.0, f64::max)
    }
}

pub(crate) fn smooth_nodes(z: &[f64], kinks: &[Kink]) -> Vec<usize> {
    (1..z.len() - 1).filter(|&i| !kinks.iter().any(|k| k.z >= z[i - 1] && k.z <= z[i + 1])).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionState {
    pub t: f64,
    pub psi: Vec<f64>,
    pub u: Vec<f64>,
    pub k: u32,
    pub step_count: usize,
}

impl EvolutionState {
    pub fn initial(prob: &FlowProblem) -> Self {
        Self::from_u(prob, prob.u0(), 0.0, 0)
    }

    pub fn from_u(prob: &FlowProblem, mut u: Vec<f64>, t: f64, step_count: usize) -> Self {
        let last = u.len() - 1;
        u[0] = 0.0;
        u[last] = 0.0;
        let mut psi: Vec<f64> = u.iter().zip(&prob.tilde).map(|(a, b)| a + b).collect();
        psi[0] = 0.0;
        psi[last] = -(prob.k as f64);
        Self { t, psi, u, k: prob.k, step_count }
    }

    pub fn sup_u(&self) -> f64 {
        self.u.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Maximum number of step halvings before a step is declared failed.
pub const MAX_REJECTIONS: usize = 20;

/// Forcing `f(i, t)` at node `i` added to the `u` equation.
pub type Source<'a> = &'a dyn Fn(usize, f64) -> f64;

/// LU factors of `I − dt·D₂` on interior nodes (zero end values).
#[derive(Debug, Clone)]
pub(crate) struct ImplicitFactor {
    lower: Vec<f64>,
    upper: Vec<f64>,
    inv_pivot: Vec<f64>,
}

impl ImplicitFactor {
    pub(crate) fn new(st: &Stencil, dt: f64) -> Option<Self> {
        let m = st.len() - 2;
        let mut lower = vec![0.0; m];
        let mut upper = vec![0.0; m];
        let mut inv_pivot = vec![0.0; m];
        let mut prev = 0.0;
        for j in 0..m {
            let w = &st.d2[j + 1];
            let (a, b, c) = (-dt * w[0], 1.0 - dt * w[1], -dt * w[2]);
            let pivot = if j == 0 { b } else { b - a * prev };
            if pivot.abs() < 1e-300 || !pivot.is_finite() {
                return None;
            }
            lower[j] = a;
            upper[j] = c / pivot;
            inv_pivot[j] = 1.0 / pivot;
            prev = upper[j];
        }
        Some(Self { lower, upper, inv_pivot })
    }

    /// Overwrites the interior of `x` (which holds the right-hand side) with the solution.
    pub(crate) fn solve_in_place(&self, x: &mut [f64]) -> bool {
        let m = self.upper.len();
        let mut prev = 0.0;
        for j in 0..m {
            prev = (x[j + 1] - self.lower[j] * prev) * self.inv_pivot[j];
            x[j + 1] = prev;
        }
        for j in (0..m.saturating_sub(1)).rev() {
            x[j + 1] -= self.upper[j] * x[j + 2];
        }
        x[0] = 0.0;
        x[m + 1] = 0.0;
        x.iter().all(|v| v.is_finite())
    }
}

fn implicit_solve(st: &Stencil, dt: f64, r: &[f64]) -> Option<Vec<f64>> {
    let f = ImplicitFactor::new(st, dt)?;
    let mut x = r.to_vec();
    f.solve_in_place(&mut x).then_some(x)
}

/// One step `u ↦ (I − dt D₂)⁻¹(u + dt(N(u) + f))` without rejection logic.
pub fn try_step_u(prob: &FlowProblem, u: &[f64], t: f64, dt: f64, source: Option<Source>) -> Option<Vec<f64>> {
    let ex = prob.explicit_terms(u);
    let n = u.len();
    let mut r = vec![0.0; n];
    for i in 1..n - 1 {
        let f = source.map_or(0.0, |s| s(i, t));
        r[i] = u[i] + dt * (ex[i] + f);
    }
    implicit_solve(&prob.stencil, dt, &r)
}

/// Writes `u + dt(N(u) + f)` into `out` and applies the factored implicit solve.
pub(crate) fn advance_into(
    prob: &FlowProblem,
    factor: &ImplicitFactor,
    u: &[f64],
    t: f64,
    dt: f64,
    source: Option<Source>,
    out: &mut [f64],
) -> bool {
    let st = &prob.stencil;
    let n = u.len();
    for i in 1..n - 1 {
        let du = st.first(u, i);
        let ui = u[i];
        let mut ex = (2.0 * ui + prob.coeffs.a1[i]) * du - 2.0 * st.tan[i] * ui * ui + prob.coeffs.a2[i] * ui;
        if let Some(s) = source {
            ex += s(i, t);
        }
        out[i] = ui + dt * ex;
    }
    factor.solve_in_place(out)
}

/// One accepted step; `dt` is halved on failure up to [`MAX_REJECTIONS`] times.
/// Returns the new state, whose `t` records the step actually taken.
pub fn step(prob: &FlowProblem, state: &EvolutionState, dt: f64) -> Result<EvolutionState> {
    step_with(prob, state, dt, None, f64::INFINITY)
}

pub(crate) fn step_with(
    prob: &FlowProblem,
    state: &EvolutionState,
    dt: f64,
    source: Option<Source>,
    bound: f64,
) -> Result<EvolutionState> {
    let mut h = dt;
    for _ in 0..=MAX_REJECTIONS {
        if let Some(u) = try_step_u(prob, &state.u, state.t, h, source) {
            if u.iter().all(|v| v.abs() <= bound) {
                return Ok(EvolutionState::from_u(prob, u, state.t + h, state.step_count + 1));
            }
        }
        h *= 0.5;
    }
    Err(Error::Stage {
        stage: "flow".into(),
        message: format!("step rejected {MAX_REJECTIONS} times at t = {}", state.t),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub t_end: f64,
    pub tol: f64,
    /// Fixed step; `None` uses [`FlowProblem::dt_cap`].
    pub dt: Option<f64>,
    pub cap_factor: f64,
    /// Accepted steps with `sup|u| < tol` required to declare convergence.
    pub consecutive: usize,
    pub stop_on_convergence: bool,
    /// Number of samples kept in the report time series.
    pub records: usize,
    /// Violation tolerances are this multiple of the truncation tolerance.
    pub tolerance_factor: f64,
    /// Time after which strict decrease is measured.
    pub strict_after: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            t_end: 5.0,
            tol: 1e-5,
            dt: None,
            cap_factor: 0.25,
            consecutive: 50,
            stop_on_convergence: true,
            records: 200,
            tolerance_factor: 10.0,
            strict_after: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Violations {
    pub count: usize,
    pub worst: f64,
}

impl Violations {
    fn record(&mut self, excess: f64) {
        if excess > 0.0 {
            self.count += 1;
            self.worst = self.worst.max(excess);
        }
    }
}

/// One row of the report time series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowSample {
    pub t: f64,
    pub sup_error: f64,
    /// Largest interior `(ψⁿ⁺¹ − ψⁿ)/dt`.
    pub max_time_derivative: f64,
    /// `min (ψ − ψ̃)`.
    pub lower_margin: f64,
    /// `min (ψ_{k,0} − ψ)`.
    pub upper_margin: f64,
    pub lipschitz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub k: u32,
    pub n: u32,
    pub diameter: f64,
    pub nodes: usize,
    pub dt: f64,
    pub steps: usize,
    pub t_final: f64,
    pub times: Vec<f64>,
    pub sup_errors: Vec<f64>,
    pub samples: Vec<FlowSample>,
    /// Spatial truncation rate of the initial data, see [`FlowProblem::truncation_rate`].
    pub truncation_rate: f64,
    /// Per-step truncation tolerance `dt · truncation_rate`.
    pub truncation_tol: f64,
    /// Tolerance used for the sandwich: `tolerance_factor · truncation_rate · t`.
    pub sandwich_tol_final: f64,
    pub monotonicity_violations: Violations,
    pub sandwich_violations: Violations,
    /// `sup_t sup_z |u − u₀|`.
    pub max_deviation: f64,
    /// `δ` with `max ∂ₜψ < −δ` on interior nodes for `strict_after ≤ t` before convergence.
    pub strictness_delta: Option<f64>,
    pub lipschitz_initial: f64,
    pub lipschitz_max: f64,
    /// Rate `r` of a least-squares fit `sup_error ≈ C e^{−rt}` over the second half of the records.
    pub decay_rate: Option<f64>,
    pub final_sup_error: f64,
    pub stationary_residual_final: f64,
    pub converged: bool,
    /// Start of the first run of `consecutive` steps below `tol`.
    pub converged_at: Option<f64>,
}

impl ConvergenceReport {
    /// `sup_errors` non-increasing up to `slack` between records.
    pub fn sup_errors_monotone(&self, slack: f64) -> bool {
        self.sup_errors.windows(2).all(|w| w[1] <= w[0] + slack)
    }
}

/// Result of [`evolve_observed`].
#[derive(Debug, Clone)]
pub struct FlowRun {
    pub report: ConvergenceReport,
    pub final_state: EvolutionState,
}

pub fn evolve(prob: &FlowProblem, cfg: &FlowConfig) -> Result<FlowRun> {
    evolve_observed(prob, cfg, |_| {})
}

/// Evolves `ψ_{k,0}` and checks monotonicity and the sandwich after every
/// accepted step. `observer` sees every accepted state, the initial one included.
pub fn evolve_observed<F>(prob: &FlowProblem, cfg: &FlowConfig, mut observer: F) -> Result<FlowRun>
where
    F: FnMut(&EvolutionState),
{
    if !(cfg.t_end > 0.0 && cfg.tol > 0.0) {
        return Err(Error::Config { field: "t_end/tol".into(), message: "must be positive".into() });
    }
    let n = prob.len();
    let dt = cfg.dt.unwrap_or_else(|| prob.dt_cap(cfg.cap_factor));
    let rate = prob.truncation_rate().max(1e-13);
    let mono_tol = cfg.tolerance_factor * rate * dt;
    let u0 = prob.u0();
    let c1 = u0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let bound = 2.0 * c1 + 1.0;
    let total = (cfg.t_end / dt).ceil() as usize;
    let every = (total / cfg.records.max(1)).max(1);

    let mut state = EvolutionState::initial(prob);
    observer(&state);
    let lipschitz_initial = discrete_lipschitz(&prob.stencil.z, &state.psi);
    let mut samples = Vec::new();
    let mut mono = Violations::default();
    let mut sand = Violations::default();
    let mut max_dev: f64 = 0.0;
    let mut strict_max: Option<f64> = None;
    let mut lip_max = lipschitz_initial;
    let mut streak = 0usize;
    let mut converged_at = None;
    let mut entered = (state.sup_u() < cfg.tol).then_some(0.0);
    samples.push(FlowSample {
        t: 0.0,
        sup_error: state.sup_u(),
        max_time_derivative: f64::NAN,
        lower_margin: u0.iter().copied().fold(f64::INFINITY, f64::min),
        upper_margin: 0.0,
        lipschitz: lipschitz_initial,
    });

    let factor = ImplicitFactor::new(&prob.stencil, dt)
        .ok_or_else(|| Error::Stage { stage: "flow".into(), message: "singular implicit matrix".into() })?;
    let mut next = state.clone();
    while state.t < cfg.t_end * (1.0 - 1e-12) {
        let h = dt.min(cfg.t_end - state.t);
        let fast = h == dt
            && advance_into(prob, &factor, &state.u, state.t, dt, None, &mut next.u)
            && next.u.iter().all(|v| v.abs() <= bound);
        if fast {
            for i in 1..n - 1 {
                next.psi[i] = next.u[i] + prob.tilde[i];
            }
            next.t = state.t + dt;
            next.step_count = state.step_count + 1;
        } else {
            next = step_with(prob, &state, h, None, bound)?;
        }
        let taken = next.t - state.t;
        let sand_tol = cfg.tolerance_factor * rate * next.t;

        let mut max_inc = f64::NEG_INFINITY;
        let mut lower = f64::INFINITY;
        let mut upper = f64::INFINITY;
        let mut dev: f64 = 0.0;
        for i in 1..n - 1 {
            let inc = next.psi[i] - state.psi[i];
            max_inc = max_inc.max(inc);
            lower = lower.min(next.u[i]);
            upper = upper.min(u0[i] - next.u[i]);
            dev = dev.max((next.u[i] - u0[i]).abs());
        }
        mono.record(max_inc - mono_tol * taken / dt);
        sand.record((-lower - sand_tol).max(-upper - sand_tol));
        max_dev = max_dev.max(dev);

        let sup = next.sup_u();
        if converged_at.is_none() && next.t >= cfg.strict_after {
            let d = max_inc / taken;
            strict_max = Some(strict_max.map_or(d, |m: f64| m.max(d)));
        }
        if sup < cfg.tol {
            entered.get_or_insert(next.t);
            streak += 1;
            if streak >= cfg.consecutive && converged_at.is_none() {
                converged_at = entered;
            }
        } else {
            streak = 0;
            entered = None;
        }

        let record = next.step_count % every == 0 || (converged_at.is_some() && cfg.stop_on_convergence);
        if record {
            let lip = discrete_lipschitz(&prob.stencil.z, &next.psi);
            lip_max = lip_max.max(lip);
            samples.push(FlowSample {
                t: next.t,
                sup_error: sup,
                max_time_derivative: max_inc / taken,
                lower_margin: lower,
                upper_margin: upper,
                lipschitz: lip,
            });
        }
        observer(&next);
        std::mem::swap(&mut state, &mut next);
        if converged_at.is_some() && cfg.stop_on_convergence {
            break;
        }
    }

    let lip = discrete_lipschitz(&prob.stencil.z, &state.psi);
    lip_max = lip_max.max(lip);
    let final_sup_error = state.sup_u();
    let times: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let sup_errors: Vec<f64> = samples.iter().map(|s| s.sup_error).collect();
    let decay_rate = fit_decay(&times, &sup_errors);
    let report = ConvergenceReport {
        k: prob.k,
        n: prob.ctx.n,
        diameter: prob.ctx.diameter,
        nodes: n,
        dt,
        steps: state.step_count,
        t_final: state.t,
        times,
        sup_errors,
        samples,
        truncation_rate: rate,
        truncation_tol: rate * dt,
        sandwich_tol_final: cfg.tolerance_factor * rate * state.t,
        monotonicity_violations: mono,
        sandwich_violations: sand,
        max_deviation: max_dev,
        strictness_delta: strict_max.filter(|m| *m < 0.0).map(|m| -m),
        lipschitz_initial,
        lipschitz_max: lip_max,
        decay_rate,
        final_sup_error,
        stationary_residual_final: prob.stationary_residual(&state.psi),
        converged: converged_at.is_some(),
        converged_at,
    };
    Ok(FlowRun { report, final_state: state })
}

fn fit_decay(t: &[f64], e: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        t.iter().zip(e).skip(t.len() / 2).filter(|(_, v)| **v > 0.0).map(|(a, v)| (*a, v.ln())).collect();
    if pts.len() < 3 {
        return None;
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let (mut num, mut den) = (0.0, 0.0);
    for (x, y) in &pts {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    (den > 0.0).then(|| -num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn flat_zero_field_rhs() {
        let ctx = ModelContext::new(1, 1.0, PI * PI).unwrap();
        let g = Grid1D::half_interval(1.0, 41).unwrap();
        let st = Stencil::new(g.nodes());
        let r = rhs_psi(&ctx, &st, &vec![0.0; 41]);
        for i in 1..40 {
            assert!((r[i] + 2.0 * PI * PI * st.tan[i]).abs() < 1e-12);
            assert!(r[i] <= 0.0);
        }
    }

    #[test]
    fn linear_field_rhs_matches_hand_expression() {
        let (n, d, k) = (2u32, 2.0, 2.0);
        let ctx = ModelContext::new(n, d, 3.5).unwrap();
        let g = Grid1D::half_interval(d, 101).unwrap();
        let st = Stencil::new(g.nodes());
        let psi: Vec<f64> = g.nodes().iter().map(|z| -2.0 * k * z / d).collect();
        let r = rhs_psi(&ctx, &st, &psi);
        for i in [7, 23, 50, 71, 99] {
            let (z, t) = (st.z[i], st.tan[i]);
            let (p, dp) = (-2.0 * k * z / d, -2.0 * k / d);
            let hand = 2.0 * dp * p - 3.0 * t * dp - 2.0 * t * p * p - (1.0 - t * t) * p - 7.0 * t;
            assert!((r[i] - hand).abs() < 1e-10, "node {i}");
        }
    }

    #[test]
    fn thomas_matches_direct_product() {
        let g = Grid1D::half_interval(2.0, 12).unwrap();
        let st = Stencil::new(g.nodes());
        let x: Vec<f64> = (0..12).map(|i| if i == 0 || i == 11 { 0.0 } else { (i as f64).sin() }).collect();
        let dt = 0.3;
        let mut r = vec![0.0; 12];
        for i in 1..11 {
            r[i] = x[i] - dt * st.second(&x, i);
        }
        let y = implicit_solve(&st, dt, &r).unwrap();
        for i in 0..12 {
            assert!((x[i] - y[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn decay_fit_recovers_rate() {
        let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let e: Vec<f64> = t.iter().map(|x| 3.0 * (-2.5 * x).exp()).collect();
        assert!((fit_decay(&t, &e).unwrap() - 2.5).abs() < 1e-10);
    }
}
