//! Adaptive Dormand–Prince 5(4) integration for small fixed-size systems.
//!
//! Steps are clipped so that every requested sample abscissa is hit exactly,
//! which keeps sampled values at the integrator's own error level instead of an
//! interpolant's.

use serde::{Deserialize, Serialize};

use super::NumericsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    /// Magnitude at which a solution is declared blown up.
    pub blowup_threshold: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-11, abs_tol: 1e-13, max_step: 0.05, blowup_threshold: 1e8 }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), NumericsError> {
        let fields = [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("max_step", self.max_step),
            ("blowup_threshold", self.blowup_threshold),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(NumericsError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn with_blowup_threshold(mut self, threshold: f64) -> Self {
        self.blowup_threshold = threshold;
        self
    }
}

/// States recorded at the requested sample points (or at every accepted step
/// when no samples were requested), in integration order.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<const N: usize> {
    pub z: Vec<f64>,
    pub y: Vec<[f64; N]>,
}

impl<const N: usize> Trajectory<N> {
    fn new() -> Self {
        Self { z: Vec::new(), y: Vec::new() }
    }

    fn push(&mut self, z: f64, y: [f64; N]) {
        self.z.push(z);
        self.y.push(y);
    }

    pub fn last(&self) -> Option<(f64, [f64; N])> {
        self.z.last().copied().zip(self.y.last().copied())
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlowUp<const N: usize> {
    /// Last accepted abscissa where every component was below the threshold.
    pub z: f64,
    pub state: [f64; N],
    /// Sign of the dominant component when the threshold was crossed.
    pub sign: f64,
    pub trajectory: Trajectory<N>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stopped<const N: usize> {
    pub prev: (f64, [f64; N]),
    pub last: (f64, [f64; N]),
    pub trajectory: Trajectory<N>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum IvpOutcome<const N: usize> {
    Completed(Trajectory<N>),
    BlowUp(BlowUp<N>),
    Stopped(Stopped<N>),
}

impl<const N: usize> IvpOutcome<N> {
    pub fn trajectory(&self) -> &Trajectory<N> {
        match self {
            Self::Completed(t) => t,
            Self::BlowUp(b) => &b.trajectory,
            Self::Stopped(s) => &s.trajectory,
        }
    }

    pub fn completed(self) -> Option<Trajectory<N>> {
        match self {
            Self::Completed(t) => Some(t),
            _ => None,
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn combo<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

fn max_abs<const N: usize>(y: &[f64; N]) -> (f64, f64) {
    let mut best = 0.0;
    let mut sign = 1.0;
    for v in y {
        if v.abs() > best {
            best = v.abs();
            sign = v.signum();
        }
    }
    (best, sign)
}

fn checked_eval<const N: usize, F>(rhs: &mut F, z: f64, y: &[f64; N]) -> Result<[f64; N], NumericsError>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let f = rhs(z, y);
    if y.iter().all(|v| v.is_finite()) && f.iter().any(|v| v.is_nan()) {
        return Err(NumericsError::InvalidEvaluation { z });
    }
    Ok(f)
}

/// Integrate `y' = rhs(z, y)` from `z0` to `z1` (either direction).
///
/// `samples` must lie in the closed integration interval and be ordered along
/// the direction of integration.
pub fn integrate_ivp<const N: usize, F>(
    rhs: F,
    z0: f64,
    z1: f64,
    y0: [f64; N],
    cfg: &IntegratorConfig,
    samples: &[f64],
) -> Result<IvpOutcome<N>, NumericsError>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    integrate_ivp_until(rhs, z0, z1, y0, cfg, samples, |_, _| false)
}

/// As [`integrate_ivp`], stopping after the first accepted step for which
/// `stop(z, y)` returns true.
pub fn integrate_ivp_until<const N: usize, F, S>(
    mut rhs: F,
    z0: f64,
    z1: f64,
    y0: [f64; N],
    cfg: &IntegratorConfig,
    samples: &[f64],
    mut stop: S,
) -> Result<IvpOutcome<N>, NumericsError>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
    S: FnMut(f64, &[f64; N]) -> bool,
{
    cfg.validate()?;
    if z0 == z1 || !z0.is_finite() || !z1.is_finite() {
        return Err(NumericsError::InvalidConfig(format!("degenerate interval [{z0}, {z1}]")));
    }
    let dir = (z1 - z0).signum();
    let span = (z1 - z0).abs();
    let dense = samples.is_empty();
    let along = |z: f64| (z - z0) * dir;
    if samples.windows(2).any(|w| along(w[1]) < along(w[0]))
        || samples.iter().any(|&s| along(s) < -1e-14 * span || along(s) > span * (1.0 + 1e-14))
    {
        return Err(NumericsError::InvalidConfig("samples must be ordered inside the interval".into()));
    }

    let mut traj = Trajectory::new();
    let mut next_sample = 0;
    while next_sample < samples.len() && along(samples[next_sample]) <= 0.0 {
        traj.push(samples[next_sample], y0);
        next_sample += 1;
    }
    if dense {
        traj.push(z0, y0);
    }

    let scale = |y: &[f64; N], i: usize| cfg.abs_tol + cfg.rel_tol * y[i].abs();
    let norm = |v: &[f64; N], y: &[f64; N]| {
        let s: f64 = (0..N).map(|i| (v[i] / scale(y, i)).powi(2)).sum();
        (s / N as f64).sqrt()
    };

    let mut z = z0;
    let mut y = y0;
    let mut k1 = checked_eval(&mut rhs, z, &y)?;

    // Starting step (Hairer, Nørsett & Wanner II.4).
    let mut h = {
        let d0 = norm(&y, &y);
        let d1 = norm(&k1, &y);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(cfg.max_step).min(span);
        let y1 = combo(&y, dir * h0, &[(1.0, &k1)]);
        let f1 = rhs(z + dir * h0, &y1);
        let diff: [f64; N] = std::array::from_fn(|i| f1[i] - k1[i]);
        let d2 = norm(&diff, &y) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(cfg.max_step).min(span)
    };
    if !h.is_finite() || h <= 0.0 {
        h = (1e-6 * span).min(cfg.max_step);
    }

    let mut rejected_last = false;
    loop {
        let remaining = (z1 - z) * dir;
        if remaining <= 0.0 {
            break;
        }
        let target = if next_sample < samples.len() { (samples[next_sample] - z) * dir } else { remaining };
        let clip = target.min(remaining);
        // Snap onto the sample when the step would land within rounding of it.
        let (h_try, clipped) = if h * (1.0 + 1e-10) >= clip { (clip, true) } else { (h, false) };
        let hmin = 16.0 * f64::EPSILON * z.abs().max(1.0);
        if h_try < hmin && !(clipped && clip > 0.0) {
            let (mag, sign) = max_abs(&y);
            if mag > 1e4 {
                return Ok(IvpOutcome::BlowUp(BlowUp { z, state: y, sign, trajectory: traj }));
            }
            return Err(NumericsError::StiffnessFailure { z });
        }
        let hs = dir * h_try;

        let k2 = checked_eval(&mut rhs, z + C2 * hs, &combo(&y, hs, &[(A21, &k1)]))?;
        let k3 = checked_eval(&mut rhs, z + C3 * hs, &combo(&y, hs, &[(A31, &k1), (A32, &k2)]))?;
        let k4 = checked_eval(&mut rhs, z + C4 * hs, &combo(&y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]))?;
        let k5 = checked_eval(
            &mut rhs,
            z + C5 * hs,
            &combo(&y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        )?;
        let k6 = checked_eval(
            &mut rhs,
            z + hs,
            &combo(&y, hs, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        )?;
        let y_new = combo(&y, hs, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
        let lands_on_sample = clipped && next_sample < samples.len() && target <= remaining;
        let z_new = if lands_on_sample {
            samples[next_sample]
        } else if clipped {
            z1
        } else {
            z + hs
        };
        let k7 = checked_eval(&mut rhs, z_new, &y_new)?;

        let err_vec: [f64; N] = std::array::from_fn(|i| {
            hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
        });
        let err = {
            let s: f64 = (0..N)
                .map(|i| {
                    let sc = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(y_new[i].abs());
                    (err_vec[i] / sc).powi(2)
                })
                .sum();
            (s / N as f64).sqrt()
        };

        if !err.is_finite() || err > 1.0 || y_new.iter().any(|v| !v.is_finite()) {
            let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.1 };
            h = h_try * fac;
            rejected_last = true;
            continue;
        }

        let prev = (z, y);
        z = z_new;
        y = y_new;
        k1 = k7;
        if lands_on_sample {
            let s = samples[next_sample];
            while next_sample < samples.len() && (samples[next_sample] - s) * dir <= 0.0 {
                traj.push(samples[next_sample], y);
                next_sample += 1;
            }
        }
        if dense {
            traj.push(z, y);
        }

        let (mag, sign) = max_abs(&y);
        if mag >= cfg.blowup_threshold {
            return Ok(IvpOutcome::BlowUp(BlowUp { z: prev.0, state: prev.1, sign, trajectory: traj }));
        }
        if stop(z, &y) {
            return Ok(IvpOutcome::Stopped(Stopped { prev, last: (z, y), trajectory: traj }));
        }

        let mut fac = if err <= 1e-300 { 10.0 } else { 0.9 * err.powf(-0.2) };
        fac = fac.clamp(0.2, 10.0);
        if rejected_last {
            fac = fac.min(1.0);
        }
        rejected_last = false;
        let h_next = h_try * fac;
        // A clipped step says nothing about the natural step size: keep the larger proposal.
        h = if clipped { h.max(h_next) } else { h_next };
        h = h.min(cfg.max_step);
    }
    while next_sample < samples.len() {
        traj.push(samples[next_sample], y);
        next_sample += 1;
    }
    Ok(IvpOutcome::Completed(traj))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn cfg() -> IntegratorConfig {
        IntegratorConfig::default()
    }

    #[test]
    fn zero_rhs_is_constant() {
        let out = integrate_ivp(|_, _| [0.0], 0.0, 1.0, [1.0], &cfg(), &[0.0, 0.5, 1.0]).unwrap();
        let t = out.completed().unwrap();
        assert_eq!(t.z, vec![0.0, 0.5, 1.0]);
        assert!(t.y.iter().all(|y| y[0] == 1.0));
    }

    #[test]
    fn rounded_sample_grid_is_hit() {
        let z: Vec<f64> = (0..=50).map(|i| i as f64 * 0.01).collect();
        let out = integrate_ivp(|_, _| [1.0], 0.0, 0.5, [0.0], &cfg(), &z).unwrap();
        let t = out.completed().unwrap();
        assert_eq!(t.z, z);
    }

    #[test]
    fn exponential_hits_e() {
        let out = integrate_ivp(|_, y| [y[0]], 0.0, 1.0, [1.0], &cfg(), &[1.0]).unwrap();
        let t = out.completed().unwrap();
        assert!((t.y[0][0] - E).abs() / E < cfg().rel_tol * 10.0);
    }

    #[test]
    fn backward_integration() {
        let out = integrate_ivp(|_, y| [y[0]], 1.0, 0.0, [E], &cfg(), &[0.5, 0.0]).unwrap();
        let t = out.completed().unwrap();
        assert!((t.y[1][0] - 1.0).abs() < 1e-9);
        assert!((t.y[0][0] - 0.5f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn riccati_blows_up_near_half() {
        let out = integrate_ivp(|_, y| [-y[0] * y[0]], 0.0, 1.0, [-2.0], &cfg(), &[]).unwrap();
        match out {
            IvpOutcome::BlowUp(b) => {
                assert!((b.z - 0.5).abs() < 1e-6, "blow-up at {}", b.z);
                assert!(b.z < 0.5);
                assert_eq!(b.sign, -1.0);
                assert!(b.state[0].abs() < 1e8);
            }
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn nan_rhs_is_reported() {
        let err = integrate_ivp(|z, _| [if z > 0.3 { f64::NAN } else { 1.0 }], 0.0, 1.0, [0.0], &cfg(), &[])
            .unwrap_err();
        assert!(matches!(err, NumericsError::InvalidEvaluation { .. }));
    }

    #[test]
    fn stop_predicate_halts() {
        let out =
            integrate_ivp_until(|_, _| [1.0], 0.0, 1.0, [0.0], &cfg(), &[], |_, y| y[0] > 0.25).unwrap();
        match out {
            IvpOutcome::Stopped(s) => {
                assert!(s.prev.1[0] <= 0.25 && s.last.1[0] > 0.25);
            }
            other => panic!("expected stop, got {other:?}"),
        }
    }

    #[test]
    fn fourth_order_or_better_under_step_halving() {
        let loose = |max_step| IntegratorConfig { rel_tol: 1.0, abs_tol: 1.0, max_step, blowup_threshold: 1e8 };
        let err = |h| {
            let t = integrate_ivp(|_, y| [y[0]], 0.0, 1.0, [1.0], &loose(h), &[1.0]).unwrap().completed().unwrap();
            (t.y[0][0] - E).abs()
        };
        let e1 = err(0.1);
        let e2 = err(0.05);
        assert!(e1 / e2 >= 8.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn oscillator_samples_match_closed_form() {
        let zs: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
        let t = integrate_ivp(|_, y| [y[1], -y[0]], 0.0, 10.0, [0.0, 1.0], &cfg(), &zs)
            .unwrap()
            .completed()
            .unwrap();
        for (z, y) in t.z.iter().zip(&t.y) {
            assert!((y[0] - z.sin()).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic() {
        let run = || integrate_ivp(|z, y| [z.cos() * y[0]], 0.0, 3.0, [1.0], &cfg(), &[]).unwrap();
        assert_eq!(run(), run());
    }
}
