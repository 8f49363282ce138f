//! First two eigenvalues of the model operator
//! `φ'' − (n−1) tan(s) φ' = −μ φ` on `[−D/2, D/2]` with Dirichlet ends.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numerics::{
    eig_sym_tridiag, fd, find_root_fallible, integrate_ivp, Grid1D, HermiteTable, IntegratorConfig, IvpOutcome,
    TridiagonalSystem,
};

/// Diameters closer than this to `π` are rejected.
pub const DIAMETER_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProblem {
    pub n: u32,
    pub diameter: f64,
    pub grid: Grid1D,
}

impl ModelProblem {
    pub fn new(n: u32, diameter: f64, nodes: usize) -> Result<Self> {
        check_diameter(diameter)?;
        let grid = Grid1D::half_interval(diameter, nodes)?;
        Self::with_grid(n, diameter, grid)
    }

    pub fn with_grid(n: u32, diameter: f64, grid: Grid1D) -> Result<Self> {
        check_diameter(diameter)?;
        if n < 1 {
            return Err(Error::InvalidProblem("dimension n must be at least 1".into()));
        }
        if grid.a() != 0.0 || (grid.b() - 0.5 * diameter).abs() > 1e-14 {
            return Err(Error::InvalidProblem(format!(
                "grid must cover [0, D/2] = [0, {}], got [{}, {}]",
                0.5 * diameter,
                grid.a(),
                grid.b()
            )));
        }
        Ok(Self { n, diameter, grid })
    }

    pub fn half_length(&self) -> f64 {
        0.5 * self.diameter
    }

    pub fn refined(&self) -> Self {
        Self { n: self.n, diameter: self.diameter, grid: self.grid.refined() }
    }

    /// `3π²/D²`.
    pub fn gap_bound(&self) -> f64 {
        3.0 * PI * PI / (self.diameter * self.diameter)
    }

    fn weight(&self, z: f64) -> f64 {
        z.cos().powi(self.n as i32 - 1)
    }
}

pub fn check_diameter(diameter: f64) -> Result<()> {
    if !(diameter > 0.0 && diameter < PI - DIAMETER_MARGIN) {
        return Err(Error::DiameterOutOfRange(diameter));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Even,
    Odd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Right-endpoint derivative equal to −1.
    DerivativeAtRight,
    SupNorm,
}

/// An eigenvalue with its eigenfunction sampled on `[0, D/2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    pub n: u32,
    pub index: usize,
    pub value: f64,
    pub z: Vec<f64>,
    pub samples: Vec<f64>,
    pub dsamples: Vec<f64>,
    pub parity: Parity,
    pub normalization: Normalization,
}

impl EigenPair {
    pub fn renormalized(&self, normalization: Normalization) -> Self {
        let scale = match normalization {
            Normalization::DerivativeAtRight => -1.0 / self.dsamples.last().copied().unwrap_or(-1.0),
            Normalization::SupNorm => {
                let m = self.samples.iter().fold(0.0f64, |a, b| a.max(b.abs()));
                let i = self.samples.iter().position(|v| v.abs() == m).unwrap_or(0);
                1.0 / self.samples[i]
            }
        };
        let mut out = self.clone();
        out.samples.iter_mut().for_each(|v| *v *= scale);
        out.dsamples.iter_mut().for_each(|v| *v *= scale);
        out.normalization = normalization;
        out
    }

    /// `φ''` from the eigenvalue equation.
    fn second_derivative(&self, z: f64, phi: f64, dphi: f64) -> f64 {
        (self.n as f64 - 1.0) * z.tan() * dphi - self.value * phi
    }

    /// Cubic Hermite interpolants of `φ` and `φ'`.
    pub fn interpolants(&self) -> Result<(HermiteTable, HermiteTable)> {
        let dd: Vec<f64> = (0..self.z.len())
            .map(|i| self.second_derivative(self.z[i], self.samples[i], self.dsamples[i]))
            .collect();
        let phi = HermiteTable::new(self.z.clone(), self.samples.clone(), self.dsamples.clone())?;
        let dphi = HermiteTable::new(self.z.clone(), self.dsamples.clone(), dd)?;
        Ok((phi, dphi))
    }

    /// Number of sign changes of the sampled function on the open half interval.
    pub fn interior_sign_changes(&self) -> usize {
        let m = self.samples.len();
        let scale = self.samples.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let inner: Vec<f64> = self.samples[1..m - 1]
            .iter()
            .copied()
            .filter(|v| v.abs() > 1e-12 * scale)
            .collect();
        inner.windows(2).filter(|w| w[0].signum() != w[1].signum()).count()
    }
}

/// Logarithmic derivative `(log φ)'` of an eigenfunction, evaluated by interpolation.
#[derive(Debug, Clone)]
pub struct LogDerivative {
    phi: HermiteTable,
    dphi: HermiteTable,
}

impl LogDerivative {
    pub fn new(pair: &EigenPair) -> Result<Self> {
        let (phi, dphi) = pair.interpolants()?;
        Ok(Self { phi, dphi })
    }

    pub fn eval(&self, z: f64) -> f64 {
        self.dphi.eval(z) / self.phi.eval(z)
    }
}

/// Raw eigenvalues from a single resolution of the dense discretization.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSolve {
    pub values: Vec<f64>,
    /// Eigenvectors on the full mirrored node set (end nodes included as zeros).
    pub full_z: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

/// Dense weighted-tridiagonal solve of `−(cosⁿ⁻¹ φ')' = μ cosⁿ⁻¹ φ` on the full interval.
pub fn dense_solve(prob: &ModelProblem, count: usize) -> Result<DenseSolve> {
    if !(1..=2).contains(&count) {
        return Err(Error::InvalidProblem(format!("count must be 1 or 2, got {count}")));
    }
    let x = prob.grid.mirrored();
    let m = x.len();
    let mut diag = Vec::with_capacity(m - 2);
    let mut off = Vec::with_capacity(m - 3);
    let mut weight = Vec::with_capacity(m - 2);
    for j in 1..m - 1 {
        let hm = x[j] - x[j - 1];
        let hp = x[j + 1] - x[j];
        let pm = prob.weight(0.5 * (x[j] + x[j - 1])) / hm;
        let pp = prob.weight(0.5 * (x[j] + x[j + 1])) / hp;
        diag.push(pm + pp);
        if j + 1 < m - 1 {
            off.push(-pp);
        }
        weight.push(prob.weight(x[j]) * 0.5 * (hm + hp));
    }
    let sys = TridiagonalSystem::new(diag, off, weight)?;
    let pairs = eig_sym_tridiag(&sys, count)?;
    let values = pairs.iter().map(|p| p.value).collect();
    let vectors = pairs
        .into_iter()
        .map(|p| {
            let mut v = Vec::with_capacity(m);
            v.push(0.0);
            v.extend(p.vector);
            v.push(0.0);
            v
        })
        .collect();
    Ok(DenseSolve { values, full_z: x, vectors })
}

/// Dense spectrum at two resolutions with Richardson extrapolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseSpectrum {
    pub pairs: Vec<EigenPair>,
    pub coarse: Vec<f64>,
    pub fine: Vec<f64>,
    pub extrapolated: Vec<f64>,
    /// `|μ(N) − μ(2N)|·4/3` per eigenvalue.
    pub certified_tolerance: Vec<f64>,
    /// `max |v(z) ∓ v(−z)| / max |v|` for the declared parity.
    pub parity_defect: Vec<f64>,
    /// Sign changes on the open full interval.
    pub full_interval_zeros: Vec<usize>,
}

fn full_sign_changes(v: &[f64]) -> usize {
    let scale = v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let inner: Vec<f64> = v[1..v.len() - 1].iter().copied().filter(|x| x.abs() > 1e-10 * scale).collect();
    inner.windows(2).filter(|w| w[0].signum() != w[1].signum()).count()
}

/// Eigenvalues on the full interval with eigenfunction parity recorded
/// (index 0 even, index 1 odd; checked, not assumed).
pub fn solve_spectrum_dense(prob: &ModelProblem, count: usize) -> Result<DenseSpectrum> {
    let coarse = dense_solve(prob, count)?;
    let fine_prob = prob.refined();
    let fine = dense_solve(&fine_prob, count)?;
    let extrapolated: Vec<f64> =
        coarse.values.iter().zip(&fine.values).map(|(c, f)| (4.0 * f - c) / 3.0).collect();
    let certified_tolerance = coarse.values.iter().zip(&fine.values).map(|(c, f)| (c - f).abs() * 4.0 / 3.0).collect();

    let half = prob.grid.len();
    let centre = half - 1;
    let mut pairs = Vec::with_capacity(count);
    let mut parity_defect = Vec::with_capacity(count);
    let mut full_interval_zeros = Vec::with_capacity(count);
    for (index, v) in coarse.vectors.iter().enumerate() {
        let parity = if index == 0 { Parity::Even } else { Parity::Odd };
        let sgn = if parity == Parity::Even { 1.0 } else { -1.0 };
        let scale = v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let defect =
            (0..half).map(|i| (v[centre + i] - sgn * v[centre - i]).abs()).fold(0.0, f64::max) / scale;
        parity_defect.push(defect);
        full_interval_zeros.push(full_sign_changes(v));

        let z = prob.grid.nodes().to_vec();
        let mut samples: Vec<f64> = v[centre..].to_vec();
        // Orient so that the function is positive just right of the centre.
        let flip = if samples[1] < 0.0 || (parity == Parity::Even && samples[0] < 0.0) { -1.0 } else { 1.0 };
        samples.iter_mut().for_each(|x| *x *= flip);
        let dsamples = fd::gradient(&z, &samples);
        let pair = EigenPair {
            n: prob.n,
            index,
            value: extrapolated[index],
            z,
            samples,
            dsamples,
            parity,
            normalization: Normalization::SupNorm,
        };
        pairs.push(pair.renormalized(Normalization::DerivativeAtRight));
    }
    Ok(DenseSpectrum {
        pairs,
        coarse: coarse.values,
        fine: fine.values,
        extrapolated,
        certified_tolerance,
        parity_defect,
        full_interval_zeros,
    })
}

fn shooting_config() -> IntegratorConfig {
    IntegratorConfig { rel_tol: 1e-12, abs_tol: 1e-14, max_step: 0.01, ..IntegratorConfig::default() }
}

fn shooting_rhs(n: u32, mu: f64) -> impl FnMut(f64, &[f64; 2]) -> [f64; 2] {
    let a = n as f64 - 1.0;
    move |z, y| [y[1], a * z.tan() * y[1] - mu * y[0]]
}

fn launch(index: usize) -> ([f64; 2], Parity) {
    if index == 0 {
        ([1.0, 0.0], Parity::Even)
    } else {
        ([0.0, 1.0], Parity::Odd)
    }
}

/// Endpoint value `φ(D/2; μ)` of the half-interval shooting problem.
pub fn shooting_mismatch(prob: &ModelProblem, index: usize, mu: f64) -> Result<f64> {
    let (y0, _) = launch(index);
    let out = integrate_ivp(shooting_rhs(prob.n, mu), 0.0, prob.half_length(), y0, &shooting_config(), &[])?;
    match out {
        IvpOutcome::Completed(t) => Ok(t.last().map(|(_, y)| y[0]).unwrap_or(f64::NAN)),
        IvpOutcome::BlowUp(b) => Err(Error::IntegrationFailure { z: b.z }),
        IvpOutcome::Stopped(s) => Err(Error::IntegrationFailure { z: s.last.0 }),
    }
}

/// Shooting on `[0, D/2]`: even launch for index 0, odd launch for index 1.
pub fn solve_spectrum_shooting(prob: &ModelProblem, index: usize, bracket: (f64, f64)) -> Result<EigenPair> {
    if index > 1 {
        return Err(Error::InvalidProblem(format!("index must be 0 or 1, got {index}")));
    }
    let (lo, hi) = bracket;
    let tol = 1e-13 * lo.abs().max(hi.abs()).max(1.0);
    let value = find_root_fallible(|mu| shooting_mismatch(prob, index, mu), lo, hi, tol)?;
    shooting_pair(prob, index, value)
}

/// Sample the shooting solution for a known eigenvalue.
pub fn shooting_pair(prob: &ModelProblem, index: usize, value: f64) -> Result<EigenPair> {
    let (y0, parity) = launch(index);
    let nodes = prob.grid.nodes().to_vec();
    let out = integrate_ivp(shooting_rhs(prob.n, value), 0.0, prob.half_length(), y0, &shooting_config(), &nodes)?;
    let traj = match out {
        IvpOutcome::Completed(t) => t,
        IvpOutcome::BlowUp(b) => return Err(Error::IntegrationFailure { z: b.z }),
        IvpOutcome::Stopped(s) => return Err(Error::IntegrationFailure { z: s.last.0 }),
    };
    let mut samples: Vec<f64> = traj.y.iter().map(|y| y[0]).collect();
    let dsamples: Vec<f64> = traj.y.iter().map(|y| y[1]).collect();
    // The Dirichlet end is exact by construction of the eigenvalue.
    if let Some(last) = samples.last_mut() {
        *last = 0.0;
    }
    let pair = EigenPair {
        n: prob.n,
        index,
        value,
        z: traj.z,
        samples,
        dsamples,
        parity,
        normalization: Normalization::SupNorm,
    };
    Ok(pair.renormalized(Normalization::DerivativeAtRight))
}

/// Widen `[μ(1−δ), μ(1+δ)]` around an estimate until the mismatch changes sign.
pub fn bracket_around(prob: &ModelProblem, index: usize, estimate: f64) -> Result<(f64, f64)> {
    let mut delta = 1e-4;
    for _ in 0..12 {
        let lo = estimate * (1.0 - delta);
        let hi = estimate * (1.0 + delta);
        let (flo, fhi) = (shooting_mismatch(prob, index, lo)?, shooting_mismatch(prob, index, hi)?);
        if flo.signum() != fhi.signum() {
            return Ok((lo, hi));
        }
        delta *= 2.0;
    }
    Err(Error::InvalidProblem(format!("could not bracket eigenvalue {index} near {estimate}")))
}

/// Dense oracle plus shooting refinement for μ₀ and μ₁.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpectrum {
    pub n: u32,
    pub diameter: f64,
    pub dense: DenseSpectrum,
    pub shooting: Vec<EigenPair>,
    /// `|shooting − dense extrapolated| / shooting` per eigenvalue.
    pub oracle_relative_mismatch: Vec<f64>,
}

impl ModelSpectrum {
    pub fn compute(prob: &ModelProblem) -> Result<Self> {
        let dense = solve_spectrum_dense(prob, 2)?;
        let mut shooting = Vec::with_capacity(2);
        let mut mismatch = Vec::with_capacity(2);
        for index in 0..2 {
            let bracket = bracket_around(prob, index, dense.extrapolated[index])?;
            let pair = solve_spectrum_shooting(prob, index, bracket)?;
            mismatch.push((pair.value - dense.extrapolated[index]).abs() / pair.value);
            shooting.push(pair);
        }
        Ok(Self { n: prob.n, diameter: prob.diameter, dense, shooting, oracle_relative_mismatch: mismatch })
    }

    pub fn mu0(&self) -> f64 {
        self.shooting[0].value
    }

    pub fn mu1(&self) -> f64 {
        self.shooting[1].value
    }

    pub fn certified_tolerance(&self) -> [f64; 2] {
        [self.dense.certified_tolerance[0], self.dense.certified_tolerance[1]]
    }

    pub fn first_eigenfunction(&self) -> &EigenPair {
        &self.shooting[0]
    }
}

/// Model data shared by the Robin, Riccati and parabolic stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelContext {
    pub n: u32,
    pub diameter: f64,
    pub mu0: f64,
    pub mu0_tolerance: f64,
}

impl ModelContext {
    pub fn new(n: u32, diameter: f64, mu0: f64) -> Result<Self> {
        check_diameter(diameter)?;
        if n < 1 || !(mu0 > 0.0) {
            return Err(Error::InvalidProblem(format!("need n >= 1 and mu0 > 0, got n = {n}, mu0 = {mu0}")));
        }
        Ok(Self { n, diameter, mu0, mu0_tolerance: 0.0 })
    }

    pub fn from_spectrum(spec: &ModelSpectrum) -> Self {
        Self { n: spec.n, diameter: spec.diameter, mu0: spec.mu0(), mu0_tolerance: spec.certified_tolerance()[0] }
    }

    /// Solve the model problem and wrap μ₀.
    pub fn solve(n: u32, diameter: f64, nodes: usize) -> Result<Self> {
        let prob = ModelProblem::new(n, diameter, nodes)?;
        Ok(Self::from_spectrum(&ModelSpectrum::compute(&prob)?))
    }

    /// `m = (n−1)/2`.
    pub fn m(&self) -> f64 {
        0.5 * (self.n as f64 - 1.0)
    }

    pub fn half(&self) -> f64 {
        0.5 * self.diameter
    }

    pub fn tan_half(&self) -> f64 {
        self.half().tan()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelGap {
    pub n: u32,
    pub diameter: f64,
    pub mu0: f64,
    pub mu1: f64,
    pub gap: f64,
    pub bound_3pi2_d2: f64,
    pub margin: f64,
    /// Combined certified tolerance of μ₀ and μ₁.
    pub tolerance: f64,
    /// The `3π²/D²` bound is only claimed for `n ≥ 3`.
    pub bound_asserted: bool,
    pub passed: bool,
}

pub fn model_gap_from(spec: &ModelSpectrum) -> ModelGap {
    let (mu0, mu1) = (spec.mu0(), spec.mu1());
    let [t0, t1] = spec.certified_tolerance();
    let gap = mu1 - mu0;
    let bound = 3.0 * PI * PI / (spec.diameter * spec.diameter);
    let margin = gap - bound;
    let tolerance = t0 + t1;
    let bound_asserted = spec.n >= 3;
    ModelGap {
        n: spec.n,
        diameter: spec.diameter,
        mu0,
        mu1,
        gap,
        bound_3pi2_d2: bound,
        margin,
        tolerance,
        bound_asserted,
        passed: mu0 > 0.0 && (!bound_asserted || margin >= -tolerance),
    }
}

pub fn model_gap(prob: &ModelProblem) -> Result<ModelGap> {
    Ok(model_gap_from(&ModelSpectrum::compute(prob)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_large_diameter() {
        assert!(matches!(ModelProblem::new(2, 4.0, 100), Err(Error::DiameterOutOfRange(_))));
        assert!(matches!(ModelProblem::new(2, PI, 100), Err(Error::DiameterOutOfRange(_))));
    }

    #[test]
    fn flat_case_closed_form() {
        let prob = ModelProblem::new(1, 1.0, 1000).unwrap();
        let d = solve_spectrum_dense(&prob, 2).unwrap();
        assert!((d.extrapolated[0] - PI * PI).abs() < 1e-8 * PI * PI);
        assert!((d.extrapolated[1] - 4.0 * PI * PI).abs() < 1e-7 * PI * PI);
    }

    #[test]
    fn flat_shooting_in_given_bracket() {
        let prob = ModelProblem::new(1, 1.0, 200).unwrap();
        let p = solve_spectrum_shooting(&prob, 0, (5.0, 15.0)).unwrap();
        assert!((p.value - PI * PI).abs() < 1e-10);
        assert!((p.dsamples.last().unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn parity_and_zero_counts() {
        let prob = ModelProblem::new(3, 2.0, 400).unwrap();
        let d = solve_spectrum_dense(&prob, 2).unwrap();
        assert!(d.parity_defect[0] < 1e-8 && d.parity_defect[1] < 1e-8);
        assert_eq!(d.full_interval_zeros, vec![0, 1]);
    }

    #[test]
    fn renormalize_sup() {
        let prob = ModelProblem::new(2, 2.0, 200).unwrap();
        let s = ModelSpectrum::compute(&prob).unwrap();
        let p = s.first_eigenfunction().renormalized(Normalization::SupNorm);
        assert!((p.samples[0] - 1.0).abs() < 1e-14);
        assert!(p.samples.iter().all(|v| *v <= 1.0 + 1e-14));
    }

    #[test]
    fn log_derivative_matches_samples() {
        let prob = ModelProblem::new(2, 2.0, 400).unwrap();
        let s = ModelSpectrum::compute(&prob).unwrap();
        let p = s.first_eigenfunction();
        let ld = LogDerivative::new(p).unwrap();
        let i = 137;
        assert!((ld.eval(p.z[i]) - p.dsamples[i] / p.samples[i]).abs() < 1e-12);
        assert_eq!(ld.eval(0.0), 0.0);
    }
}
