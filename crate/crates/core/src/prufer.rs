//! Prüfer-angle shooting for the Robin eigenfunction with data
//! `φ(D/2) = ε`, `φ'(D/2) = −1`, and the stationary modulus `(log φ)'`.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::numerics::fd::gradient;
use crate::numerics::{find_root_fallible, integrate_ivp, HermiteTable, IntegratorConfig, IvpOutcome, Trajectory};
use crate::profile::ModulusProfile;
use crate::spectrum::ModelContext;

/// Upper end of the `c(ε)` search.
pub const C_SEARCH_CAP: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruferProblem {
    pub ctx: ModelContext,
    pub c: f64,
    pub q0: f64,
}

impl PruferProblem {
    pub fn new(ctx: ModelContext, c: f64, q0: f64) -> Result<Self> {
        if !(q0 > -FRAC_PI_2 && q0 <= FRAC_PI_2) {
            return Err(Error::InvalidProblem(format!("q0 = {q0} outside (-pi/2, pi/2]")));
        }
        Ok(Self { ctx, c, q0 })
    }

    pub fn m(&self) -> f64 {
        self.ctx.m()
    }
}

/// `Ṽ(z) = ¼[(n−1)(n−3)/cos²z − (n−1)² − 4μ₀]`.
pub fn v_tilde(ctx: &ModelContext, z: f64) -> f64 {
    let a = ctx.n as f64 - 1.0;
    let c2 = z.cos().powi(2);
    0.25 * (a * (a - 2.0) / c2 - a * a - 4.0 * ctx.mu0)
}

fn angle_rate(ctx: &ModelContext, c: f64, z: f64, q: f64) -> f64 {
    let cq = q.cos();
    let sq = q.sin();
    (v_tilde(ctx, z) + c / z.cos().powi(2)) * cq * cq - sq * sq
}

pub(crate) fn prufer_config() -> IntegratorConfig {
    IntegratorConfig { rel_tol: 1e-12, abs_tol: 1e-13, max_step: 0.01, ..IntegratorConfig::default() }
}

fn unwrap_completed<const N: usize>(out: IvpOutcome<N>) -> Result<Trajectory<N>> {
    match out {
        IvpOutcome::Completed(t) => Ok(t),
        IvpOutcome::BlowUp(b) => Err(Error::IntegrationFailure { z: b.z }),
        IvpOutcome::Stopped(s) => Err(Error::IntegrationFailure { z: s.last.0 }),
    }
}

/// Angle trajectory `q(·, q0, c)` on `[0, D/2]` sampled at `samples`
/// (every accepted step when empty).
pub fn integrate_prufer(prob: &PruferProblem, samples: &[f64]) -> Result<Trajectory<1>> {
    let ctx = prob.ctx;
    let c = prob.c;
    let out = integrate_ivp(
        |z, y: &[f64; 1]| [angle_rate(&ctx, c, z, y[0])],
        0.0,
        ctx.half(),
        [prob.q0],
        &prufer_config(),
        samples,
    )?;
    unwrap_completed(out)
}

/// `q(D/2, 0, c)`.
pub fn shooting_angle(ctx: &ModelContext, c: f64) -> Result<f64> {
    let t = integrate_prufer(&PruferProblem { ctx: *ctx, c, q0: 0.0 }, &[ctx.half()])?;
    Ok(t.y[0][0])
}

/// `σ = ε/(1 + ε m tan(D/2))`.
pub fn sigma(ctx: &ModelContext, eps: f64) -> f64 {
    eps / (1.0 + eps * ctx.m() * ctx.tan_half())
}

/// `arctan σ − π/2`.
pub fn target_angle(ctx: &ModelContext, eps: f64) -> f64 {
    sigma(ctx, eps).atan() - FRAC_PI_2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CSolve {
    pub eps: f64,
    pub c: f64,
    pub angle_residual: f64,
    /// Shooting angles at the bracket points visited, in visiting order.
    pub scanned: Vec<(f64, f64)>,
    /// False if the scanned angles were not strictly increasing in `c`.
    pub monotone: bool,
}

/// Solve `q(D/2, 0, c) = arctan σ − π/2` for `c > 0`.
pub fn solve_c_of_eps(ctx: &ModelContext, eps: f64) -> Result<CSolve> {
    solve_c_of_eps_capped(ctx, eps, C_SEARCH_CAP)
}

pub fn solve_c_of_eps_capped(ctx: &ModelContext, eps: f64, cap: f64) -> Result<CSolve> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidProblem(format!("epsilon must be positive, got {eps}")));
    }
    let target = target_angle(ctx, eps);
    let f = |c: f64| -> Result<f64> { Ok(shooting_angle(ctx, c)? - target) };
    let mut scanned = vec![(0.0, f(0.0)? + target)];
    if scanned[0].1 - target >= 0.0 {
        return Err(Error::InvalidProblem(format!(
            "shooting angle at c = 0 already reaches the target for eps = {eps}; mu0 inaccurate?"
        )));
    }
    let mut hi = 1.0;
    loop {
        let fh = f(hi)?;
        scanned.push((hi, fh + target));
        if fh > 0.0 {
            break;
        }
        if hi >= cap {
            return Err(Error::CSearchCapExceeded { cap });
        }
        hi = (2.0 * hi).min(cap);
    }
    let monotone = scanned.windows(2).all(|w| w[1].1 > w[0].1);
    let lo = if scanned.len() > 2 { scanned[scanned.len() - 2].0 } else { 0.0 };
    let c = find_root_fallible(f, lo, hi, 1e-14 * hi.max(1.0))?;
    let angle_residual = (shooting_angle(ctx, c)? - target).abs();
    Ok(CSolve { eps, c, angle_residual, scanned, monotone })
}

/// Robin eigenfunction sampled on `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobinSolution {
    pub eps: f64,
    pub c_of_eps: f64,
    pub sigma: f64,
    pub z: Vec<f64>,
    pub phi_samples: Vec<f64>,
    pub dphi_samples: Vec<f64>,
    pub q_samples: Vec<f64>,
}

/// Angle and running integral of `tan q` at the nodes `z` (which must start at 0
/// and end at D/2).
fn angle_with_integral(ctx: &ModelContext, c: f64, z: &[f64]) -> Result<Trajectory<2>> {
    let ctx = *ctx;
    let out = integrate_ivp(
        |s, y: &[f64; 2]| [angle_rate(&ctx, c, s, y[0]), y[0].tan()],
        0.0,
        ctx.half(),
        [0.0, 0.0],
        &prufer_config(),
        z,
    )?;
    unwrap_completed(out)
}

fn check_nodes(ctx: &ModelContext, z: &[f64]) -> Result<()> {
    let ok = z.len() >= 3 && z[0] == 0.0 && (z[z.len() - 1] - ctx.half()).abs() < 1e-14;
    if !ok {
        return Err(Error::InvalidProblem("sample nodes must run from 0 to D/2".into()));
    }
    Ok(())
}

/// Reconstruct the Robin eigenfunction for a solved `c(ε)`.
pub fn reconstruct_robin(ctx: &ModelContext, solve: &CSolve, z: &[f64]) -> Result<RobinSolution> {
    check_nodes(ctx, z)?;
    let traj = angle_with_integral(ctx, solve.c, z)?;
    let m = ctx.m();
    let total = traj.y.last().map(|y| y[1]).unwrap_or(0.0);
    let cos_end = ctx.half().cos();
    let mut phi = Vec::with_capacity(z.len());
    let mut dphi = Vec::with_capacity(z.len());
    let mut q = Vec::with_capacity(z.len());
    for (zi, y) in traj.z.iter().zip(&traj.y) {
        let p = solve.eps * (cos_end / zi.cos()).powf(m) * (-(total - y[1])).exp();
        phi.push(p);
        dphi.push((m * zi.tan() + y[0].tan()) * p);
        q.push(y[0]);
    }
    Ok(RobinSolution {
        eps: solve.eps,
        c_of_eps: solve.c,
        sigma: sigma(ctx, solve.eps),
        z: traj.z,
        phi_samples: phi,
        dphi_samples: dphi,
        q_samples: q,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobinDefects {
    /// `|φ(D/2) − ε|`, `|φ'(D/2) + 1|`, `|φ'(0)|`.
    pub boundary: [f64; 3],
    /// Sup over interior nodes of `|φ'' − (n−1) tan φ' + μ₀ φ − c φ/cos²|`,
    /// with `φ''` differenced from the sampled `φ'`.
    pub ode_residual: f64,
    pub min_phi: f64,
    pub angle_confined: bool,
}

impl RobinSolution {
    pub fn defects(&self, ctx: &ModelContext) -> RobinDefects {
        let (z, phi, dphi) = (&self.z, &self.phi_samples, &self.dphi_samples);
        let last = z.len() - 1;
        let h = (z[last] - z[0]) / last as f64;
        let uniform = z.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h);
        let d2 = if uniform && z.len() >= 5 {
            let mut d2 = vec![f64::NAN; z.len()];
            for i in 2..last - 1 {
                d2[i] = (dphi[i - 2] - 8.0 * dphi[i - 1] + 8.0 * dphi[i + 1] - dphi[i + 2]) / (12.0 * h);
            }
            d2
        } else {
            gradient(z, dphi)
        };
        let nm1 = ctx.n as f64 - 1.0;
        let ode_residual = (1..last)
            .filter(|i| d2[*i].is_finite())
            .map(|i| {
                let c2 = z[i].cos().powi(2);
                (d2[i] - nm1 * z[i].tan() * dphi[i] + ctx.mu0 * phi[i] - self.c_of_eps / c2 * phi[i]).abs()
            })
            .fold(0.0, f64::max);
        RobinDefects {
            boundary: [(phi[last] - self.eps).abs(), (dphi[last] + 1.0).abs(), dphi[0].abs()],
            ode_residual,
            min_phi: phi.iter().copied().fold(f64::INFINITY, f64::min),
            angle_confined: self.q_samples[1..last].iter().all(|q| q.abs() < FRAC_PI_2),
        }
    }
}

/// Solve for `c(ε)` and reconstruct.
pub fn robin(ctx: &ModelContext, eps: f64, z: &[f64]) -> Result<RobinSolution> {
    let solve = solve_c_of_eps(ctx, eps)?;
    reconstruct_robin(ctx, &solve, z)
}

/// Right-hand side of the stationary Riccati equation
/// `ψ' = c/cos²z − μ₀ − ψ² + (n−1) tan(z) ψ`.
pub fn riccati_rate(ctx: &ModelContext, c: f64, z: f64, psi: f64) -> f64 {
    c / z.cos().powi(2) - ctx.mu0 - psi * psi + (ctx.n as f64 - 1.0) * z.tan() * psi
}

/// `ψ̃_{k,0} = (log φ̃_{0,1/k})'` sampled on nodes, with slopes from the ODE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryProfile {
    pub ctx: ModelContext,
    pub k: u32,
    pub c: f64,
    pub z: Vec<f64>,
    pub psi: Vec<f64>,
    pub dpsi: Vec<f64>,
    /// Deviation of the computed end values from `(0, −k)` before clamping.
    pub boundary_defect: [f64; 2],
}

impl StationaryProfile {
    pub fn interpolant(&self) -> Result<HermiteTable> {
        Ok(HermiteTable::new(self.z.clone(), self.psi.clone(), self.dpsi.clone())?)
    }

    pub fn to_modulus(&self) -> ModulusProfile {
        ModulusProfile::new(self.k, self.z.clone(), self.psi.clone(), Vec::new())
    }
}

/// `ψ̃_{k,0}` from the Prüfer solution at `ε = 1/k`: `ψ̃ = m tan z + tan q`.
pub fn tilde_psi_k0(ctx: &ModelContext, k: u32, z: &[f64]) -> Result<StationaryProfile> {
    if k < 1 {
        return Err(Error::InvalidProblem("k must be at least 1".into()));
    }
    check_nodes(ctx, z)?;
    let solve = solve_c_of_eps(ctx, 1.0 / k as f64)?;
    stationary_from_c(ctx, k, solve.c, z)
}

pub(crate) fn stationary_from_c(ctx: &ModelContext, k: u32, c: f64, z: &[f64]) -> Result<StationaryProfile> {
    let traj = integrate_prufer(&PruferProblem { ctx: *ctx, c, q0: 0.0 }, z)?;
    let m = ctx.m();
    let mut psi: Vec<f64> = traj.z.iter().zip(&traj.y).map(|(zi, y)| m * zi.tan() + y[0].tan()).collect();
    let last = psi.len() - 1;
    let boundary_defect = [psi[0], psi[last] + k as f64];
    psi[0] = 0.0;
    psi[last] = -(k as f64);
    let dpsi = traj.z.iter().zip(&psi).map(|(zi, p)| riccati_rate(ctx, c, *zi, *p)).collect();
    Ok(StationaryProfile { ctx: *ctx, k, c, z: traj.z, psi, dpsi, boundary_defect })
}
