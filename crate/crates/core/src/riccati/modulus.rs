//! Supersolutions `ψ⁺_{k,s}`, the `s(k)` search and the initial modulus `ψ_{k,0}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::find_root;
use crate::profile::{Kink, ModulusProfile};
use crate::prufer::{riccati_rate, solve_c_of_eps};
use crate::spectrum::ModelContext;

use super::bounds::{five_point_slope, RESIDUAL_STENCIL};
use super::branch::{solve_branch_l, solve_branch_r, RiccatiCurve};

/// Minimum node count for the shared modulus grid.
pub const MIN_MODULUS_NODES: usize = 2000;

/// `c(1/k)`.
pub fn c_of_k(ctx: &ModelContext, k: u32) -> Result<f64> {
    Ok(solve_c_of_eps(ctx, 1.0 / k as f64)?.c)
}

#[derive(Debug, Clone)]
pub struct SupersolutionProfile {
    pub k: u32,
    pub s: f64,
    pub c_k: f64,
    pub z: Vec<f64>,
    pub samples: Vec<f64>,
    /// First interior intersection of the two branches (absent for `s = 0`).
    pub crossing_z: Option<f64>,
    /// All sign changes of `ψᴸ − ψᴿ` found on the grid.
    pub crossings: Vec<f64>,
    pub left: RiccatiCurve,
    /// `None` when `s = 0`.
    pub right: Option<RiccatiCurve>,
}

impl SupersolutionProfile {
    pub fn eval(&self, z: f64) -> f64 {
        match &self.right {
            Some(r) => self.left.eval(z).min(r.eval(z)),
            None => self.left.eval(z),
        }
    }

    /// Derivative jump at the first crossing (right minus left).
    pub fn crossing_jump(&self) -> Option<f64> {
        let (zc, r) = (self.crossing_z?, self.right.as_ref()?);
        Some(r.slope(zc) - self.left.slope(zc))
    }
}

fn crossings_of(a: &RiccatiCurve, b: &RiccatiCurve, z: &[f64]) -> Vec<f64> {
    let d: Vec<f64> = z.iter().map(|x| a.eval(*x) - b.eval(*x)).collect();
    let mut out = Vec::new();
    for i in 0..z.len() - 1 {
        let (d0, d1) = (d[i], d[i + 1]);
        if d0 == 0.0 && i > 0 && i < z.len() - 1 {
            out.push(z[i]);
            continue;
        }
        if d0.signum() != d1.signum() && d0 != 0.0 && d1 != 0.0 {
            let root = if d0.is_finite() && d1.is_finite() {
                find_root(|x| a.eval(x) - b.eval(x), z[i], z[i + 1], 1e-14).unwrap_or(0.5 * (z[i] + z[i + 1]))
            } else {
                // One side is at a blow-up point; the crossing lies at the finite end.
                if d0.is_finite() {
                    z[i]
                } else {
                    z[i + 1]
                }
            };
            out.push(root);
        }
    }
    out
}

/// `ψ⁺_{k,s} = min{ψᴸ_{c(1/k)+s}, ψᴿ_{k,c(1/k)−s}}` on the nodes `z`.
pub fn supersolution(ctx: &ModelContext, k: u32, s: f64, z: &[f64]) -> Result<SupersolutionProfile> {
    let c_k = c_of_k(ctx, k)?;
    supersolution_with_c(ctx, k, s, c_k, z)
}

pub fn supersolution_with_c(ctx: &ModelContext, k: u32, s: f64, c_k: f64, z: &[f64]) -> Result<SupersolutionProfile> {
    if !(s >= 0.0 && s.is_finite()) {
        return Err(Error::InvalidProblem(format!("s must be non-negative, got {s}")));
    }
    let left = solve_branch_l(ctx, c_k + s, z)?;
    if s == 0.0 {
        let mut samples = left.samples.clone();
        let last = samples.len() - 1;
        samples[last] = -(k as f64);
        return Ok(SupersolutionProfile {
            k,
            s,
            c_k,
            z: z.to_vec(),
            samples,
            crossing_z: None,
            crossings: Vec::new(),
            left,
            right: None,
        });
    }
    let right = solve_branch_r(ctx, k, c_k - s, z)?;
    let samples: Vec<f64> = left.samples.iter().zip(&right.samples).map(|(a, b)| a.min(*b)).collect();
    let crossings = crossings_of(&left, &right, z);
    let crossing_z = crossings.iter().copied().find(|x| *x > 0.0 && *x < ctx.half());
    Ok(SupersolutionProfile { k, s, c_k, z: z.to_vec(), samples, crossing_z, crossings, left, right: Some(right) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SSearch {
    pub k: u32,
    pub s: f64,
    /// `(s, passed)` in evaluation order.
    pub evaluations: Vec<(f64, bool)>,
    /// Spot checks above `s` that failed although `s` passed.
    pub monotonicity_violations: Vec<f64>,
}

/// Round-off allowance for the identical branch of [`dichotomy`].
pub const IDENTICAL_TOL: f64 = 1e-12;

/// Bisection resolution for `s(k)`.
pub const S_RESOLUTION: f64 = 1e-3;

/// Smallest `s ≥ 0` (to within [`S_RESOLUTION`]) for which `passes(s)` holds,
/// assuming pass/fail is monotone in `s`; the assumption is spot-checked.
pub fn find_s_of_k<F>(k: u32, s_max: f64, mut passes: F) -> Result<SSearch>
where
    F: FnMut(f64) -> Result<bool>,
{
    if !(s_max > 0.0 && s_max.is_finite()) {
        return Err(Error::InvalidProblem(format!("s_max must be positive, got {s_max}")));
    }
    let mut evaluations = Vec::new();
    let mut eval = |s: f64, ev: &mut Vec<(f64, bool)>| -> Result<bool> {
        let p = passes(s)?;
        ev.push((s, p));
        Ok(p)
    };
    if eval(0.0, &mut evaluations)? {
        return Ok(SSearch { k, s: 0.0, evaluations, monotonicity_violations: Vec::new() });
    }
    let mut lo = 0.0;
    let mut hi = (S_RESOLUTION * 64.0).min(s_max);
    loop {
        if eval(hi, &mut evaluations)? {
            break;
        }
        if hi >= s_max {
            return Err(Error::SCapExceeded { s_max });
        }
        lo = hi;
        hi = (2.0 * hi).min(s_max);
    }
    while hi - lo > S_RESOLUTION {
        let mid = 0.5 * (lo + hi);
        if eval(mid, &mut evaluations)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut monotonicity_violations = Vec::new();
    for f in [1.25, 1.5, 2.0] {
        let probe = (hi * f).min(s_max);
        if !eval(probe, &mut evaluations)? {
            monotonicity_violations.push(probe);
        }
    }
    Ok(SSearch { k, s: hi, evaluations, monotonicity_violations })
}

/// One smooth piece of `ψ_{k,0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PieceInfo {
    pub j: u32,
    pub c: f64,
    pub right_branch: bool,
}

#[derive(Debug, Clone)]
pub struct InitialModulus {
    pub profile: ModulusProfile,
    pub s_used: Vec<f64>,
    pub pieces: Vec<PieceInfo>,
    /// Index into `pieces` of the active piece at each node.
    pub active: Vec<usize>,
    /// `max |ψ' + ψ² − (n−1) tan ψ + μ₀ − c/cos²|` on nodes away from kinks.
    pub stationary_residual: f64,
    curves: Vec<RiccatiCurve>,
}

impl InitialModulus {
    pub fn eval(&self, z: f64) -> f64 {
        self.curves.iter().map(|c| c.eval(z)).fold(f64::INFINITY, f64::min)
    }

    pub fn curves(&self) -> &[RiccatiCurve] {
        &self.curves
    }
}

/// `ψ_{k,0} = min{ψ⁺_{j,s(j)} : 1 ≤ j ≤ k}` with `s(j) = s_of_j[j−1]`.
pub fn initial_modulus(ctx: &ModelContext, s_of_j: &[f64], z: &[f64]) -> Result<InitialModulus> {
    let k = s_of_j.len() as u32;
    if k == 0 {
        return Err(Error::InvalidProblem("need s(j) for at least j = 1".into()));
    }
    if z.len() < MIN_MODULUS_NODES {
        return Err(Error::InvalidProblem(format!("modulus grid needs at least {MIN_MODULUS_NODES} nodes")));
    }
    let sups: Vec<SupersolutionProfile> = (1..=k)
        .into_par_iter()
        .map(|j| supersolution(ctx, j, s_of_j[j as usize - 1], z))
        .collect::<Result<_>>()?;

    let mut curves = Vec::new();
    let mut pieces = Vec::new();
    for sp in sups {
        pieces.push(PieceInfo { j: sp.k, c: sp.left.c, right_branch: false });
        curves.push(sp.left);
        if let Some(r) = sp.right {
            pieces.push(PieceInfo { j: sp.k, c: r.c, right_branch: true });
            curves.push(r);
        }
    }

    let n = z.len();
    let argmin = |i: usize| -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (p, c) in curves.iter().enumerate() {
            let v = c.samples[i];
            if v < best.1 {
                best = (p, v);
            }
        }
        best
    };
    let mut active = Vec::with_capacity(n);
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let (p, v) = argmin(i);
        active.push(p);
        samples.push(v);
    }
    active[0] = active[1];
    samples[0] = 0.0;
    samples[n - 1] = -(k as f64);

    let mut kinks = Vec::new();
    for i in 1..n - 1 {
        let (a, b) = (active[i], active[i + 1]);
        if a == b {
            continue;
        }
        let (ca, cb) = (&curves[a], &curves[b]);
        let zk = find_root(|x| ca.eval(x) - cb.eval(x), z[i], z[i + 1], 1e-14).unwrap_or(0.5 * (z[i] + z[i + 1]));
        kinks.push(Kink { z: zk, jump: cb.slope(zk) - ca.slope(zk) });
    }

    let h = RESIDUAL_STENCIL;
    let near_kink = |x: f64| kinks.iter().any(|kk| (kk.z - x).abs() < 3.0 * h);
    let mut stationary_residual: f64 = 0.0;
    for i in 0..n {
        let x = z[i];
        if x < 2.0 * h || x > ctx.half() - 2.0 * h || near_kink(x) {
            continue;
        }
        let c = &curves[active[i]];
        if c.domain_start() > x - 3.0 * h {
            continue;
        }
        let psi = c.eval(x);
        let slope = five_point_slope(|y| c.eval(y), x, h);
        stationary_residual = stationary_residual.max((slope - riccati_rate(ctx, c.c, x, psi)).abs());
    }

    let profile = ModulusProfile::new(k, z.to_vec(), samples, kinks);
    Ok(InitialModulus { profile, s_used: s_of_j.to_vec(), pieces, active, stationary_residual, curves })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Dichotomy {
    Identical,
    StrictlyAbove { min_gap: f64 },
    Violated { sup_gap: f64, min_gap: f64 },
}

impl Dichotomy {
    pub fn holds(&self) -> bool {
        !matches!(self, Dichotomy::Violated { .. })
    }
}

/// Either `ψ_{k,0} ≡ ψ̃_{k,0}` (to within `identical_tol`) or strictly above it
/// at every interior node.
pub fn dichotomy(samples: &[f64], tilde: &[f64], identical_tol: f64) -> Dichotomy {
    let diff: Vec<f64> = samples.iter().zip(tilde).map(|(a, b)| a - b).collect();
    let sup_gap = diff.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    if sup_gap <= identical_tol {
        return Dichotomy::Identical;
    }
    let min_gap = diff[1..diff.len() - 1].iter().copied().fold(f64::INFINITY, f64::min);
    if min_gap > 0.0 {
        Dichotomy::StrictlyAbove { min_gap }
    } else {
        Dichotomy::Violated { sup_gap, min_gap }
    }
}
