//! Dirichlet eigenvalues of geodesic balls in `Sⁿ` and checks of the gap chain
//! and the two-point inequality on them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::numerics::{
    eig_sym_tridiag, find_root_fallible, integrate_ivp, HermiteTable, IntegratorConfig, IvpOutcome, NumericsError,
    TridiagonalSystem,
};
use crate::riccati::{find_s_of_k, supersolution, SSearch};
use crate::spectrum::{LogDerivative, ModelContext, ModelSpectrum};

/// Radial shooting starts at this offset from the centre.
pub const FROBENIUS_START: f64 = 1e-6;
/// Intervals of the coarse dense radial discretization.
pub const DENSE_INTERVALS: usize = 2000;
/// Nodes of the stored radial profile.
pub const PROFILE_NODES: usize = 4001;
/// Reports on balls carry this restriction.
pub const BALL_NOTE: &str = "verified for geodesic balls only";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapProblem {
    pub n: u32,
    pub radius: f64,
    pub diameter: f64,
}

impl CapProblem {
    /// `R = π/2` is accepted for limit studies; gap-chain claims need `R < π/2`.
    pub fn new(n: u32, radius: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidProblem(format!("balls need n >= 2, got {n}")));
        }
        if !(radius > 0.0 && radius <= FRAC_PI_2) {
            return Err(Error::InvalidProblem(format!("geodesic radius must lie in (0, π/2], got {radius}")));
        }
        Ok(Self { n, radius, diameter: 2.0 * radius })
    }

    pub fn from_diameter(n: u32, diameter: f64) -> Result<Self> {
        Self::new(n, 0.5 * diameter)
    }

    fn nu(&self, l: u32) -> f64 {
        let l = l as f64;
        l * (l + self.n as f64 - 2.0)
    }
}

/// Two-term Frobenius start `φ = rˡ(1 + a r²)`.
fn frobenius(prob: &CapProblem, l: u32, lambda: f64, r: f64) -> [f64; 2] {
    let (n, lf) = (prob.n as f64, l as f64);
    let a = ((n - 1.0) * lf / 3.0 + prob.nu(l) / 3.0 - lambda) / (4.0 * lf + 2.0 * n);
    let rl = r.powi(l as i32);
    let phi = rl * (1.0 + a * r * r);
    let dphi = if l == 0 { 2.0 * a * r } else { lf * rl / r + (lf + 2.0) * a * rl * r };
    [phi, dphi]
}

fn radial_rate(prob: &CapProblem, l: u32, lambda: f64, r: f64, y: &[f64; 2]) -> [f64; 2] {
    let (s, c) = r.sin_cos();
    let nm1 = prob.n as f64 - 1.0;
    [y[1], -nm1 * c / s * y[1] - (lambda - prob.nu(l) / (s * s)) * y[0]]
}

fn radial_config(r0: f64, l: u32) -> IntegratorConfig {
    IntegratorConfig {
        rel_tol: 1e-12,
        abs_tol: 1e-14 * r0.powi(l as i32),
        max_step: 0.01,
        ..IntegratorConfig::default()
    }
}

/// Integrates from the Frobenius start to `R`; `samples` must lie in `[r0, R]`.
fn shoot(prob: &CapProblem, l: u32, lambda: f64, r0: f64, samples: &[f64]) -> Result<IvpOutcome<2>> {
    Ok(integrate_ivp(
        |r, y: &[f64; 2]| radial_rate(prob, l, lambda, r, y),
        r0,
        prob.radius,
        frobenius(prob, l, lambda, r0),
        &radial_config(r0, l),
        samples,
    )?)
}

/// `φ(R)` scaled by `r0^{−l}`; a start offset that fails is refined tenfold.
fn radial_mismatch(prob: &CapProblem, l: u32, lambda: f64) -> Result<f64> {
    let mut r0 = FROBENIUS_START;
    for _ in 0..4 {
        if let Ok(IvpOutcome::Completed(t)) = shoot(prob, l, lambda, r0, &[prob.radius]) {
            if let Some((_, y)) = t.last() {
                return Ok(y[0] / r0.powi(l as i32));
            }
        }
        r0 *= 0.1;
    }
    Err(Error::IntegrationFailure { z: 0.0 })
}

/// Lowest eigenvalues of the finite-volume radial operator with weight
/// `sinⁿ⁻¹ r` (potential `l(l+n−2) sinⁿ⁻³ r`) on `intervals` cells.
pub fn dense_radial(prob: &CapProblem, l: u32, intervals: usize, count: usize) -> Result<Vec<f64>> {
    let h = prob.radius / intervals as f64;
    let e = prob.n as i32 - 1;
    let nu = prob.nu(l);
    // l = 0 keeps the centre node (natural condition); l ≥ 1 imposes φ(0) = 0.
    let first = if l == 0 { 0 } else { 1 };
    let flux = |i: usize| ((i as f64 + 0.5) * h).sin().powi(e) / h;
    let mut diag = Vec::new();
    let mut off = Vec::new();
    let mut weight = Vec::new();
    for i in first..intervals {
        let r = i as f64 * h;
        let (mass, left) = if i == 0 {
            // Half cell [0, h/2]: ∫ sinⁿ⁻¹ ≈ (h/2)ⁿ/n.
            ((0.5 * h).powi(e + 1) / prob.n as f64, 0.0)
        } else {
            (r.sin().powi(e) * h, flux(i - 1))
        };
        let pot = if i == 0 { 0.0 } else { nu * r.sin().powi(e - 2) * h };
        diag.push(left + flux(i) + pot);
        weight.push(mass);
        if i + 1 < intervals {
            off.push(-flux(i));
        }
    }
    let sys = TridiagonalSystem::new(diag, off, weight)?;
    Ok(eig_sym_tridiag(&sys, count)?.into_iter().map(|p| p.value).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseRadial {
    pub coarse: f64,
    pub fine: f64,
    pub extrapolated: f64,
    pub certified_tolerance: f64,
}

pub fn dense_radial_extrapolated(prob: &CapProblem, l: u32, intervals: usize) -> Result<DenseRadial> {
    let coarse = dense_radial(prob, l, intervals, 1)?[0];
    let fine = dense_radial(prob, l, 2 * intervals, 1)?[0];
    Ok(DenseRadial {
        coarse,
        fine,
        extrapolated: (4.0 * fine - coarse) / 3.0,
        certified_tolerance: 4.0 / 3.0 * (coarse - fine).abs(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialEigen {
    pub l: u32,
    pub lambda: f64,
    pub r: Vec<f64>,
    /// `φ` normalised to `max |φ| = 1`, positive.
    pub samples: Vec<f64>,
    pub dsamples: Vec<f64>,
    pub dense: DenseRadial,
    pub relative_mismatch: f64,
}

impl RadialEigen {
    /// Certified tolerance: dense extrapolation bound plus the oracle mismatch.
    pub fn tolerance(&self) -> f64 {
        self.dense.certified_tolerance + (self.lambda - self.dense.extrapolated).abs()
    }
}

/// Fundamental radial eigenvalue of angular mode `l ∈ {0, 1}` by shooting, with
/// the dense discretization as oracle and bracket source.
pub fn cap_eigenvalue(prob: &CapProblem, l: u32) -> Result<RadialEigen> {
    if l > 1 {
        return Err(Error::InvalidProblem(format!("angular mode must be 0 or 1, got {l}")));
    }
    let dense = dense_radial_extrapolated(prob, l, DENSE_INTERVALS)?;
    let est = dense.extrapolated;
    let f = |lam: f64| radial_mismatch(prob, l, lam);
    let mut width = 0.02;
    let lambda = loop {
        let (lo, hi) = (est * (1.0 - width), est * (1.0 + width));
        if f(lo)?.signum() != f(hi)?.signum() {
            break find_root_fallible(f, lo, hi, 1e-14 * est)?;
        }
        width *= 2.0;
        if width > 0.5 {
            return Err(Error::Numerics(NumericsError::BracketFailure { lo, hi, f_lo: f(lo)?, f_hi: f(hi)? }));
        }
    };

    let r0 = FROBENIUS_START;
    let r: Vec<f64> = (0..PROFILE_NODES)
        .map(|i| r0 + (prob.radius - r0) * i as f64 / (PROFILE_NODES - 1) as f64)
        .collect();
    let traj = match shoot(prob, l, lambda, r0, &r)? {
        IvpOutcome::Completed(t) => t,
        _ => return Err(Error::IntegrationFailure { z: r0 }),
    };
    let mut samples: Vec<f64> = traj.y.iter().map(|y| y[0]).collect();
    let mut dsamples: Vec<f64> = traj.y.iter().map(|y| y[1]).collect();
    let mut rr = traj.z.clone();
    // Put the profile on [0, R] using the series values at the centre.
    rr[0] = 0.0;
    samples[0] = if l == 0 { 1.0 } else { 0.0 };
    dsamples[0] = if l == 0 { 0.0 } else { 1.0 };
    let scale = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    samples.iter_mut().chain(dsamples.iter_mut()).for_each(|v| *v /= scale);
    let last = samples.len() - 1;
    samples[last] = 0.0;
    let relative_mismatch = (lambda - dense.extrapolated).abs() / lambda;
    Ok(RadialEigen { l, lambda, r: rr, samples, dsamples, dense, relative_mismatch })
}

/// `(log φ₀)'` of the radial ground state.
#[derive(Debug, Clone)]
pub struct RadialLogDerivative {
    phi: HermiteTable,
    dphi: HermiteTable,
    radius: f64,
}

impl RadialLogDerivative {
    pub fn new(prob: &CapProblem, eig: &RadialEigen) -> Result<Self> {
        if eig.l != 0 {
            return Err(Error::InvalidProblem("log-derivative needs the l = 0 profile".into()));
        }
        let dd: Vec<f64> = eig
            .r
            .iter()
            .zip(eig.samples.iter().zip(&eig.dsamples))
            .map(|(r, (p, d))| {
                if *r == 0.0 {
                    -eig.lambda / prob.n as f64 * p
                } else {
                    radial_rate(prob, 0, eig.lambda, *r, &[*p, *d])[1]
                }
            })
            .collect();
        Ok(Self {
            phi: HermiteTable::new(eig.r.clone(), eig.samples.clone(), eig.dsamples.clone())?,
            dphi: HermiteTable::new(eig.r.clone(), eig.dsamples.clone(), dd)?,
            radius: prob.radius,
        })
    }

    pub fn eval(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        debug_assert!(r < self.radius);
        self.dphi.eval(r) / self.phi.eval(r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapChainReport {
    pub n: u32,
    pub radius: f64,
    pub diameter: f64,
    pub lambda0: f64,
    pub lambda1: f64,
    pub lambda_tolerance: [f64; 2],
    /// Second `l = 0` radial eigenvalue, checked to exceed `λ₁`.
    pub lambda0_second_mode: f64,
    pub l1_is_first_excited: bool,
    pub mu0: f64,
    pub mu1: f64,
    pub mu_tolerance: [f64; 2],
    /// `(λ₁ − λ₀) − (μ₁ − μ₀)`.
    pub gap_margin: f64,
    /// `(μ₁ − μ₀) − 3π²/D²`, asserted only for `n ≥ 3`.
    pub model_bound_margin: Option<f64>,
    /// `λ₀ − μ₀`.
    pub ground_margin: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub note: String,
}

pub fn verify_gap_chain(prob: &CapProblem, model: &ModelSpectrum) -> Result<GapChainReport> {
    if (model.diameter - prob.diameter).abs() > 1e-12 {
        return Err(Error::InvalidProblem(format!(
            "model diameter {} does not match ball diameter {}",
            model.diameter, prob.diameter
        )));
    }
    let e0 = cap_eigenvalue(prob, 0)?;
    let e1 = cap_eigenvalue(prob, 1)?;
    let second = dense_radial(prob, 0, 2 * DENSE_INTERVALS, 2)?[1];
    let (lambda0, lambda1) = (e0.lambda, e1.lambda);
    let (mu0, mu1) = (model.mu0(), model.mu1());
    let mt = model.certified_tolerance();
    let mu_tolerance = [mt[0] + model.oracle_relative_mismatch[0] * mu0, mt[1] + model.oracle_relative_mismatch[1] * mu1];
    let lambda_tolerance = [e0.tolerance(), e1.tolerance()];
    let tolerance = (lambda_tolerance.iter().sum::<f64>() + mu_tolerance.iter().sum::<f64>()).max(1e-9);
    let gap_margin = (lambda1 - lambda0) - (mu1 - mu0);
    let ground_margin = lambda0 - mu0;
    let model_bound_margin = (prob.n >= 3).then(|| (mu1 - mu0) - 3.0 * PI * PI / (prob.diameter * prob.diameter));
    let l1_is_first_excited = lambda1 < second && lambda0 < lambda1;
    let passed = gap_margin >= -tolerance
        && ground_margin >= -tolerance
        && model_bound_margin.is_none_or(|m| m >= -tolerance)
        && l1_is_first_excited;
    Ok(GapChainReport {
        n: prob.n,
        radius: prob.radius,
        diameter: prob.diameter,
        lambda0,
        lambda1,
        lambda_tolerance,
        lambda0_second_mode: second,
        l1_is_first_excited,
        mu0,
        mu1,
        mu_tolerance,
        gap_margin,
        model_bound_margin,
        ground_margin,
        tolerance,
        passed,
        note: BALL_NOTE.into(),
    })
}

/// A pair of points of the ball in the embedding `Sⁿ ⊂ ℝⁿ⁺¹`, centre `e₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoPointSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub d: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    /// `max(|γ(−d/2) − x|, |γ(d/2) − y|, ||γ'| − 1|)` at both ends.
    pub geometry_defect: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Point at geodesic distance `r` from `e₀` in the unit tangent direction `w ⊥ e₀`.
pub fn ball_point(r: f64, w: &[f64]) -> Vec<f64> {
    let mut p: Vec<f64> = w.iter().map(|v| r.sin() * v).collect();
    p[0] = r.cos();
    p
}

/// Geodesic distance from the centre and the outward radial unit tangent
/// (zero vector at the centre).
fn radial_frame(x: &[f64]) -> (f64, Vec<f64>) {
    let r = x[0].clamp(-1.0, 1.0).acos();
    let mut w: Vec<f64> = x.to_vec();
    w[0] = 0.0;
    let s = norm(&w);
    if s == 0.0 {
        return (0.0, vec![0.0; x.len()]);
    }
    let mut t: Vec<f64> = w.iter().map(|v| r.cos() * v / s).collect();
    t[0] = -r.sin();
    (r, t)
}

/// Unit-speed great circle `γ` with `γ(−d/2) = x`, `γ(d/2) = y`.
pub struct Geodesic {
    x: Vec<f64>,
    u: Vec<f64>,
    pub d: f64,
}

impl Geodesic {
    pub fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        let c = dot(x, y).clamp(-1.0, 1.0);
        let d = c.acos();
        let mut u: Vec<f64> = y.iter().zip(x).map(|(b, a)| b - c * a).collect();
        let s = norm(&u);
        if !(s > 1e-14) || d <= 0.0 {
            return Err(Error::InvalidProblem("pair points must be distinct and not antipodal".into()));
        }
        u.iter_mut().for_each(|v| *v /= s);
        Ok(Self { x: x.to_vec(), u, d })
    }

    pub fn point(&self, s: f64) -> Vec<f64> {
        let a = s + 0.5 * self.d;
        self.x.iter().zip(&self.u).map(|(p, q)| a.cos() * p + a.sin() * q).collect()
    }

    pub fn tangent(&self, s: f64) -> Vec<f64> {
        let a = s + 0.5 * self.d;
        self.x.iter().zip(&self.u).map(|(p, q)| -a.sin() * p + a.cos() * q).collect()
    }
}

/// Two-point quantity `⟨∇log φ₀(y), γ'(d/2)⟩ − ⟨∇log φ₀(x), γ'(−d/2)⟩` against `2ψ(d/2)`.
pub fn two_point(ball: &RadialLogDerivative, x: &[f64], y: &[f64], rhs_half: impl Fn(f64) -> f64) -> Result<TwoPointSample> {
    let g = Geodesic::new(x, y)?;
    let (rx, tx) = radial_frame(x);
    let (ry, ty) = radial_frame(y);
    let gx: Vec<f64> = tx.iter().map(|v| ball.eval(rx) * v).collect();
    let gy: Vec<f64> = ty.iter().map(|v| ball.eval(ry) * v).collect();
    let (ta, tb) = (g.tangent(-0.5 * g.d), g.tangent(0.5 * g.d));
    let lhs = dot(&gy, &tb) - dot(&gx, &ta);
    let rhs = 2.0 * rhs_half(0.5 * g.d);
    let dist = |a: &[f64], b: &[f64]| norm(&a.iter().zip(b).map(|(p, q)| p - q).collect::<Vec<_>>());
    let geometry_defect = dist(&g.point(-0.5 * g.d), x)
        .max(dist(&g.point(0.5 * g.d), y))
        .max((norm(&ta) - 1.0).abs())
        .max((norm(&tb) - 1.0).abs());
    Ok(TwoPointSample { x: x.to_vec(), y: y.to_vec(), d: g.d, lhs, rhs, margin: rhs - lhs, geometry_defect })
}

/// Pairs with radii uniform in `[0, R)` and relative angle uniform in `[0, π]`.
pub fn sample_pairs(prob: &CapProblem, count: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let dim = prob.n as usize + 1;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let rx = rng.random::<f64>() * prob.radius;
        let ry = rng.random::<f64>() * prob.radius;
        let a = rng.random::<f64>() * PI;
        let mut wx = vec![0.0; dim];
        let mut wy = vec![0.0; dim];
        wx[1] = 1.0;
        wy[1] = a.cos();
        wy[2] = a.sin();
        let x = ball_point(rx, &wx);
        let y = ball_point(ry, &wy);
        if dot(&x, &y) < 1.0 - 1e-14 {
            out.push((x, y));
        }
    }
    out
}

/// Symmetric pairs on a common diameter with `d ∈ {0.1R, 0.2R, …, 1.8R}`.
pub fn symmetric_pairs(prob: &CapProblem) -> Vec<(Vec<f64>, Vec<f64>)> {
    let dim = prob.n as usize + 1;
    let mut w = vec![0.0; dim];
    w[1] = 1.0;
    let wm: Vec<f64> = w.iter().map(|v| -v).collect();
    (1..=18)
        .map(|j| {
            let r = 0.05 * j as f64 * prob.radius;
            (ball_point(r, &wm), ball_point(r, &w))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogConcavitySummary {
    pub n: u32,
    pub diameter: f64,
    pub seed: u64,
    pub count: usize,
    pub min_margin: f64,
    pub max_geometry_defect: f64,
    pub note: String,
}

/// Evaluates the two-point inequality with right side `2(log φ̃₀)'(d/2)`.
pub fn sample_logconcavity(
    prob: &CapProblem,
    ball: &RadialLogDerivative,
    model: &LogDerivative,
    pairs: &[(Vec<f64>, Vec<f64>)],
) -> Result<Vec<TwoPointSample>> {
    pairs.par_iter().map(|(x, y)| two_point(ball, x, y, |z| model.eval(z))).collect::<Result<Vec<_>>>().and_then(|v| {
        if v.iter().any(|s| s.d >= prob.diameter) {
            Err(Error::InvalidProblem("pair leaves the ball".into()))
        } else {
            Ok(v)
        }
    })
}

pub fn summarize(prob: &CapProblem, seed: u64, samples: &[TwoPointSample]) -> LogConcavitySummary {
    LogConcavitySummary {
        n: prob.n,
        diameter: prob.diameter,
        seed,
        count: samples.len(),
        min_margin: samples.iter().map(|s| s.margin).fold(f64::INFINITY, f64::min),
        max_geometry_defect: samples.iter().map(|s| s.geometry_defect).fold(0.0, f64::max),
        note: BALL_NOTE.into(),
    }
}

/// Ball data for deciding whether `ψ⁺_{k,s}` is a modulus of log-concavity.
pub struct BallOracle {
    pub ctx: ModelContext,
    pub ball: RadialLogDerivative,
    pub pairs: Vec<(Vec<f64>, Vec<f64>)>,
    pub z: Vec<f64>,
    pub slack: f64,
}

impl BallOracle {
    pub fn new(ctx: &ModelContext, pair_count: usize, seed: u64, z: &[f64]) -> Result<Self> {
        let prob = CapProblem::from_diameter(ctx.n, ctx.diameter)?;
        let eig = cap_eigenvalue(&prob, 0)?;
        let ball = RadialLogDerivative::new(&prob, &eig)?;
        let mut pairs = symmetric_pairs(&prob);
        pairs.extend(sample_pairs(&prob, pair_count, seed));
        Ok(Self { ctx: *ctx, ball, pairs, z: z.to_vec(), slack: 1e-9 })
    }

    pub fn passes(&self, k: u32, s: f64) -> Result<bool> {
        let sp = supersolution(&self.ctx, k, s, &self.z)?;
        for (x, y) in &self.pairs {
            let t = two_point(&self.ball, x, y, |z| sp.eval(z))?;
            if t.margin < -self.slack {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SResolution {
    pub k: u32,
    pub search: SSearch,
    pub s_oracle: f64,
    /// `max(s_oracle, s_floor)`.
    pub s_used: f64,
    pub note: String,
}

/// `s(k)` from the ball oracle, raised to `s_floor` so that `ψ_{k,0} ≠ ψ̃_{k,0}`.
pub fn resolve_s_of_k(oracle: &BallOracle, k: u32, s_max: f64, s_floor: f64) -> Result<SResolution> {
    let search = find_s_of_k(k, s_max, |s| oracle.passes(k, s))?;
    let s_oracle = search.s;
    Ok(SResolution { k, s_oracle, s_used: s_oracle.max(s_floor), search, note: BALL_NOTE.into() })
}
