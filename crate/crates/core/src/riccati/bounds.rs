//! The `p`-substitution and closed-form tanh/tan envelopes of the branches.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::spectrum::ModelContext;

use super::branch::RiccatiCurve;

/// `V(z) = ((n−1)(n−3) + 4c)/(4cos²z) − (n−1)²/4 − μ₀`.
pub fn potential(ctx: &ModelContext, c: f64, z: f64) -> f64 {
    let a = ctx.n as f64 - 1.0;
    (a * (a - 2.0) + 4.0 * c) / (4.0 * z.cos().powi(2)) - 0.25 * a * a - ctx.mu0
}

/// `(inf V, sup V)` on `[0, D/2]`; `V` is monotone so both sit at endpoints.
pub fn potential_extrema(ctx: &ModelContext, c: f64) -> (f64, f64) {
    let a = ctx.n as f64 - 1.0;
    let at_zero = c - 0.5 * a - ctx.mu0;
    let at_end = potential(ctx, c, ctx.half());
    if a * (a - 2.0) + 4.0 * c >= 0.0 {
        (at_zero, at_end)
    } else {
        (at_end, at_zero)
    }
}

/// `k̃ = k + m tan(D/2)`.
pub fn k_tilde(ctx: &ModelContext, k: u32) -> f64 {
    k as f64 + ctx.m() * ctx.tan_half()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PSubstitution {
    pub z: Vec<f64>,
    pub p_samples: Vec<f64>,
    pub v_samples: Vec<f64>,
    pub k_tilde: Option<f64>,
    /// `max |p' + p² − V|` over nodes where a centred stencil fits in the domain
    /// (and which are at least 0.05 away from a blow-up point).
    pub residual: f64,
}

/// Step of the five-point derivative stencils used for residual checks.
pub const RESIDUAL_STENCIL: f64 = 1e-3;

/// Fourth-order centred first derivative of `f` at `x`.
pub fn five_point_slope(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
}

pub fn p_substitute(curve: &RiccatiCurve) -> PSubstitution {
    let ctx = &curve.ctx;
    let m = ctx.m();
    let p_samples: Vec<f64> = curve.z.iter().zip(&curve.samples).map(|(z, s)| s - m * z.tan()).collect();
    let v_samples: Vec<f64> = curve.z.iter().map(|z| potential(ctx, curve.c, *z)).collect();
    let h = RESIDUAL_STENCIL;
    let lo = curve.domain_start() + 2.0 * h + if curve.blowup_z.is_some() { 0.05 } else { 0.0 };
    let hi = ctx.half() - 2.0 * h;
    let residual = curve
        .z
        .iter()
        .filter(|z| **z >= lo && **z <= hi)
        .map(|&z| {
            let p = curve.eval_p(z);
            let dp = five_point_slope(|x| curve.eval_p(x), z, h);
            (dp + p * p - potential(ctx, curve.c, z)).abs()
        })
        .fold(0.0, f64::max);
    PSubstitution { z: curve.z.clone(), p_samples, v_samples, k_tilde: curve.k.map(|k| k_tilde(ctx, k)), residual }
}

/// `λ tanh(λ z)`, with `λ = 0` giving 0.
fn tanh_envelope(lambda: f64, z: f64) -> f64 {
    lambda * (lambda * z).tanh()
}

/// `(λ tan(λw) − k̃)/(1 + (k̃/λ) tan(λw))` with `w = D/2 − z`, and its `λ → 0` limit.
fn tan_envelope(lambda: f64, k_tilde: f64, w: f64) -> f64 {
    if lambda < 1e-8 {
        return -k_tilde / (1.0 + k_tilde * w);
    }
    let t = (lambda * w).tan();
    (lambda * t - k_tilde) / (1.0 + k_tilde / lambda * t)
}

/// Distance from `D/2` to the pole of the tan envelope:
/// `(π/2 + arctan(k̃/λ))/λ`.
fn tan_pole_distance(lambda: f64, k_tilde: f64) -> f64 {
    if lambda < 1e-8 {
        return f64::INFINITY;
    }
    (FRAC_PI_2 + (k_tilde / lambda).atan()) / lambda
}

/// Closed-form envelope for `ψ` (the `m tan z` term added back).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Envelope {
    /// `λ tanh(λz) + m tan z` on all of `[0, D/2]`.
    Tanh { lambda: f64 },
    /// Right-anchored tan formula, valid for `z > valid_from`.
    Tan { lambda: f64, k_tilde: f64, valid_from: f64 },
}

impl Envelope {
    pub fn eval(&self, ctx: &ModelContext, z: f64) -> f64 {
        let m_tan = ctx.m() * z.tan();
        match *self {
            Envelope::Tanh { lambda } => tanh_envelope(lambda, z) + m_tan,
            Envelope::Tan { lambda, k_tilde, valid_from } => {
                if z <= valid_from {
                    f64::INFINITY
                } else {
                    tan_envelope(lambda, k_tilde, ctx.half() - z) + m_tan
                }
            }
        }
    }

    pub fn valid_from(&self) -> f64 {
        match *self {
            Envelope::Tanh { .. } => 0.0,
            Envelope::Tan { valid_from, .. } => valid_from,
        }
    }
}

fn tan_env(ctx: &ModelContext, lambda: f64, k_tilde: f64) -> Envelope {
    Envelope::Tan { lambda, k_tilde, valid_from: ctx.half() - tan_pole_distance(lambda, k_tilde) }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpperBounds {
    /// For `ψᴸ_{c+s}`.
    pub left: Envelope,
    /// For `ψᴿ_{k,c−s}`.
    pub right: Envelope,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBounds {
    pub left: Envelope,
    pub right: Envelope,
    /// `max(−inf V_k, sup V_k)`.
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelopes {
    pub upper: UpperBounds,
    pub lower: LowerBounds,
}

/// Upper envelopes for `ψᴸ_{c+s}` and `ψᴿ_{k,c−s}` with the smallest admissible `λ±`.
pub fn upper_bounds(ctx: &ModelContext, k: u32, c: f64, s: f64) -> UpperBounds {
    let (_, sup_l) = potential_extrema(ctx, c + s);
    let (inf_r, _) = potential_extrema(ctx, c - s);
    let lambda_plus = sup_l.max(0.0).sqrt();
    let lambda_minus = (-inf_r).max(0.0).sqrt();
    UpperBounds { left: Envelope::Tanh { lambda: lambda_plus }, right: tan_env(ctx, lambda_minus, k_tilde(ctx, k)) }
}

/// Lower envelopes from `λ̃₊ = √(s + inf V_k)`, `λ̃₋ = √(s − sup V_k)` with `V_k` at `c`.
pub fn lower_bounds(ctx: &ModelContext, k: u32, c: f64, s: f64) -> Result<LowerBounds> {
    let (inf_v, sup_v) = potential_extrema(ctx, c);
    let threshold = (-inf_v).max(sup_v);
    if !(s > threshold) {
        return Err(Error::STooSmall { s, threshold });
    }
    let lt_plus = (s + inf_v).sqrt();
    let lt_minus = (s - sup_v).sqrt();
    Ok(LowerBounds {
        left: Envelope::Tanh { lambda: lt_plus },
        right: tan_env(ctx, lt_minus, k_tilde(ctx, k)),
        threshold,
    })
}

pub fn explicit_bounds(ctx: &ModelContext, k: u32, c: f64, s: f64) -> Result<Envelopes> {
    Ok(Envelopes { upper: upper_bounds(ctx, k, c, s), lower: lower_bounds(ctx, k, c, s)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn flat_potential() {
        let ctx = ModelContext::new(1, 1.0, 3.0).unwrap();
        assert!((potential(&ctx, 2.0, 0.4) - (2.0 / 0.4f64.cos().powi(2) - 3.0)).abs() < 1e-14);
    }

    #[test]
    fn extrema_cases() {
        let ctx = ModelContext::new(3, 2.0, 4.0).unwrap();
        let (lo, hi) = potential_extrema(&ctx, 1.0);
        assert!((lo - (1.0 - 1.0 - 4.0)).abs() < 1e-14);
        assert!((hi - potential(&ctx, 1.0, 1.0)).abs() < 1e-14);
        let ctx2 = ModelContext::new(2, 2.0, 4.0).unwrap();
        // (n−1)(n−3) + 4c = −1 + 4c < 0 for c = 0.1.
        let (lo, hi) = potential_extrema(&ctx2, 0.1);
        assert!((hi - (0.1 - 0.5 - 4.0)).abs() < 1e-14);
        assert!(lo < hi);
    }

    #[test]
    fn tan_envelope_pole_at_validity_end() {
        let ctx = ModelContext::new(2, 2.0, 3.0).unwrap();
        let env = tan_env(&ctx, 2.0, 1.5);
        let v = env.valid_from();
        assert!(env.eval(&ctx, v + 1e-9) > 1e6);
        assert_eq!(env.eval(&ctx, v - 1e-9), f64::INFINITY);
    }

    #[test]
    fn tan_envelope_small_lambda_limit() {
        let a = tan_envelope(1e-9, 2.0, 0.3);
        let b = tan_envelope(1e-5, 2.0, 0.3);
        assert!((a - b).abs() < 1e-8);
        assert!(tan_pole_distance(0.0, 1.0).is_infinite());
    }

    #[test]
    fn lower_bounds_need_large_s() {
        let ctx = ModelContext::new(2, 2.0, PI).unwrap();
        assert!(matches!(lower_bounds(&ctx, 2, 1.0, 0.5), Err(Error::STooSmall { .. })));
        assert!(lower_bounds(&ctx, 2, 1.0, 100.0).is_ok());
    }
}
