//! Solution branches of `ψ' + ψ² − (n−1) tan(z) ψ + μ₀ = c/cos²z`.
//!
//! Branches are stored in the angle chart `θ = arctan p`, `p = ψ − m tan z`,
//! where the equation reads `θ' = V cos²θ − sin²θ` and stays bounded through
//! the blow-up of `ψ`.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::numerics::{
    find_root, integrate_ivp, integrate_ivp_until, HermiteTable, IntegratorConfig, IvpOutcome,
};
use crate::prufer::riccati_rate;
use crate::spectrum::ModelContext;

use super::bounds::potential;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    L,
    R,
}

#[derive(Debug, Clone)]
pub struct RiccatiCurve {
    pub ctx: ModelContext,
    pub side: Side,
    pub c: f64,
    pub k: Option<u32>,
    /// Sample nodes on `[0, D/2]`.
    pub z: Vec<f64>,
    /// `ψ` at the nodes; `+∞` at or left of the blow-up point.
    pub samples: Vec<f64>,
    pub blowup_z: Option<f64>,
    /// Node at which the integration switched from `ψ` to the angle chart.
    pub chart_switch_z: Option<f64>,
    theta: HermiteTable,
}

fn branch_config() -> IntegratorConfig {
    IntegratorConfig { rel_tol: 1e-12, abs_tol: 1e-13, max_step: 0.01, ..IntegratorConfig::default() }
}

fn theta_rate(ctx: &ModelContext, c: f64, z: f64, theta: f64) -> f64 {
    let (s, co) = theta.sin_cos();
    potential(ctx, c, z) * co * co - s * s
}

fn psi_from_theta(ctx: &ModelContext, z: f64, theta: f64) -> f64 {
    ctx.m() * z.tan() + theta.tan()
}

fn check_nodes(ctx: &ModelContext, z: &[f64]) -> Result<()> {
    let ok = z.len() >= 3
        && z[0] == 0.0
        && (z[z.len() - 1] - ctx.half()).abs() < 1e-14
        && z.windows(2).all(|w| w[1] > w[0]);
    if !ok {
        return Err(Error::InvalidProblem("branch nodes must increase from 0 to D/2".into()));
    }
    Ok(())
}

impl RiccatiCurve {
    /// `ψ(z)`; `+∞` at or beyond the blow-up point.
    pub fn eval(&self, z: f64) -> f64 {
        if let Some(zb) = self.blowup_z {
            if z <= zb {
                return f64::INFINITY;
            }
        }
        psi_from_theta(&self.ctx, z, self.theta.eval(z))
    }

    /// `ψ'(z)` from the equation at the interpolated value.
    pub fn slope(&self, z: f64) -> f64 {
        riccati_rate(&self.ctx, self.c, z, self.eval(z))
    }

    /// `p(z) = ψ(z) − m tan z`.
    pub fn eval_p(&self, z: f64) -> f64 {
        if let Some(zb) = self.blowup_z {
            if z <= zb {
                return f64::INFINITY;
            }
        }
        self.theta.eval(z).tan()
    }

    /// Angle `θ = arctan p`; finite through the blow-up point.
    pub fn eval_theta(&self, z: f64) -> f64 {
        self.theta.eval(z)
    }

    /// Left end of the domain of definition.
    pub fn domain_start(&self) -> f64 {
        self.blowup_z.unwrap_or(0.0)
    }
}

/// Forward branch with `ψ(0) = 0`.
pub fn solve_branch_l(ctx: &ModelContext, c: f64, z: &[f64]) -> Result<RiccatiCurve> {
    check_nodes(ctx, z)?;
    let cx = *ctx;
    let out = integrate_ivp_until(
        |s, y: &[f64; 1]| [theta_rate(&cx, c, s, y[0])],
        0.0,
        ctx.half(),
        [0.0],
        &branch_config(),
        z,
        |_, y| y[0] <= -FRAC_PI_2,
    )?;
    let traj = match out {
        IvpOutcome::Completed(t) => t,
        IvpOutcome::Stopped(s) => {
            return Err(Error::BoundViolation(format!("left branch with c = {c} reached -inf near z = {}", s.last.0)))
        }
        IvpOutcome::BlowUp(b) => return Err(Error::BoundViolation(format!("left branch blew up near z = {}", b.z))),
    };
    let theta: Vec<f64> = traj.y.iter().map(|y| y[0]).collect();
    let dtheta: Vec<f64> = traj.z.iter().zip(&theta).map(|(s, t)| theta_rate(ctx, c, *s, *t)).collect();
    let samples = traj.z.iter().zip(&theta).map(|(s, t)| psi_from_theta(ctx, *s, *t)).collect();
    let table = HermiteTable::new(traj.z.clone(), theta, dtheta)?;
    Ok(RiccatiCurve {
        ctx: *ctx,
        side: Side::L,
        c,
        k: None,
        z: traj.z,
        samples,
        blowup_z: None,
        chart_switch_z: None,
        theta: table,
    })
}

/// Backward branch with `ψ(D/2) = −k`.
///
/// The first leg integrates `ψ` directly; once `|ψ|` exceeds `10(1 + k̃)` the
/// integration continues in the angle chart, and the blow-up point is the
/// abscissa where `θ` reaches `π/2`.
pub fn solve_branch_r(ctx: &ModelContext, k: u32, c: f64, z: &[f64]) -> Result<RiccatiCurve> {
    check_nodes(ctx, z)?;
    if k < 1 {
        return Err(Error::InvalidProblem("k must be at least 1".into()));
    }
    let cx = *ctx;
    let kf = k as f64;
    let k_tilde = kf + ctx.m() * ctx.tan_half();
    let threshold = 10.0 * (1.0 + k_tilde);
    let descending: Vec<f64> = z.iter().rev().copied().collect();

    let first = integrate_ivp(
        |s, y: &[f64; 1]| [riccati_rate(&cx, c, s, y[0])],
        ctx.half(),
        0.0,
        [-kf],
        &branch_config().with_blowup_threshold(threshold),
        &descending,
    )?;

    // (z, θ) pairs in descending z.
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(z.len());
    let mut chart_switch_z = None;
    let mut blowup_z = None;
    match first {
        IvpOutcome::Completed(t) => {
            pts.extend(t.z.iter().zip(&t.y).map(|(s, y)| (*s, (y[0] - ctx.m() * s.tan()).atan())));
        }
        IvpOutcome::Stopped(s) => return Err(Error::IntegrationFailure { z: s.last.0 }),
        IvpOutcome::BlowUp(b) => {
            let zs = b.z;
            pts.extend(
                b.trajectory
                    .z
                    .iter()
                    .zip(&b.trajectory.y)
                    .filter(|(s, _)| **s >= zs)
                    .map(|(s, y)| (*s, (y[0] - ctx.m() * s.tan()).atan())),
            );
            chart_switch_z = Some(zs);
            let theta0 = (b.state[0] - ctx.m() * zs.tan()).atan();
            let rest: Vec<f64> = descending.iter().copied().filter(|s| *s < zs).collect();
            let second = if zs > 0.0 {
                Some(integrate_ivp_until(
                    |s, y: &[f64; 1]| [theta_rate(&cx, c, s, y[0])],
                    zs,
                    0.0,
                    [theta0],
                    &branch_config(),
                    &rest,
                    |_, y| y[0] >= FRAC_PI_2,
                )?)
            } else {
                None
            };
            match second {
                None => {}
                Some(IvpOutcome::Completed(t)) => {
                    pts.extend(t.z.iter().zip(&t.y).map(|(s, y)| (*s, y[0])));
                }
                Some(IvpOutcome::BlowUp(b)) => return Err(Error::IntegrationFailure { z: b.z }),
                Some(IvpOutcome::Stopped(s)) => {
                    let (za, ta) = (s.prev.0, s.prev.1[0]);
                    let (zb, tb) = (s.last.0, s.last.1[0]);
                    let (da, db) = (theta_rate(ctx, c, za, ta), theta_rate(ctx, c, zb, tb));
                    // Hermite cubic across the last step (za > zb).
                    let seg = HermiteTable::new(vec![zb, za], vec![tb, ta], vec![db, da])?;
                    let pole = if tb == FRAC_PI_2 {
                        zb
                    } else {
                        find_root(|x| seg.eval(x) - FRAC_PI_2, zb, za, 1e-14).unwrap_or(zb)
                    };
                    pts.extend(s.trajectory.z.iter().zip(&s.trajectory.y).filter(|(x, _)| **x > pole).map(|(x, y)| (*x, y[0])));
                    blowup_z = Some(pole);
                }
            }
        }
    }

    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.dedup_by(|a, b| a.0 == b.0);
    let mut tz: Vec<f64> = Vec::with_capacity(pts.len() + 1);
    let mut tt: Vec<f64> = Vec::with_capacity(pts.len() + 1);
    if let Some(pole) = blowup_z {
        if pts.first().map(|p| p.0 > pole).unwrap_or(false) {
            tz.push(pole);
            tt.push(FRAC_PI_2);
        }
    }
    for (s, t) in &pts {
        tz.push(*s);
        tt.push(*t);
    }
    let dtheta: Vec<f64> = tz.iter().zip(&tt).map(|(s, t)| theta_rate(ctx, c, *s, *t)).collect();
    let table = HermiteTable::new(tz, tt, dtheta)?;

    let mut samples = Vec::with_capacity(z.len());
    for &s in z {
        match blowup_z {
            Some(p) if s <= p => samples.push(f64::INFINITY),
            _ => samples.push(psi_from_theta(ctx, s, table.eval(s))),
        }
    }
    if let Some(last) = samples.last_mut() {
        *last = -kf;
    }
    Ok(RiccatiCurve { ctx: *ctx, side: Side::R, c, k: Some(k), z: z.to_vec(), samples, blowup_z, chart_switch_z, theta: table })
}
