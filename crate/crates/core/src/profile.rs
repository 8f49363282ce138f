//! Sampled candidate moduli on `[0, D/2]`.

use serde::{Deserialize, Serialize};

/// A point where the modulus switches between smooth pieces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kink {
    pub z: f64,
    /// Right derivative minus left derivative.
    pub jump: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusProfile {
    pub k: u32,
    pub z: Vec<f64>,
    pub samples: Vec<f64>,
    pub kinks: Vec<Kink>,
    pub lipschitz_const: f64,
}

impl ModulusProfile {
    pub fn new(k: u32, z: Vec<f64>, samples: Vec<f64>, kinks: Vec<Kink>) -> Self {
        let lipschitz_const = discrete_lipschitz(&z, &samples);
        Self { k, z, samples, kinks, lipschitz_const }
    }

    /// Piecewise-linear evaluation.
    pub fn eval_linear(&self, x: f64) -> f64 {
        linear_interp(&self.z, &self.samples, x)
    }
}

/// `max |Δψ/Δz|` over grid cells.
pub fn discrete_lipschitz(z: &[f64], v: &[f64]) -> f64 {
    z.windows(2)
        .zip(v.windows(2))
        .map(|(zw, vw)| ((vw[1] - vw[0]) / (zw[1] - zw[0])).abs())
        .fold(0.0, f64::max)
}

pub fn linear_interp(z: &[f64], v: &[f64], x: f64) -> f64 {
    let n = z.len();
    let i = match z.binary_search_by(|a| a.total_cmp(&x)) {
        Ok(i) => return v[i],
        Err(0) => 0,
        Err(i) => (i - 1).min(n - 2),
    };
    let t = (x - z[i]) / (z[i + 1] - z[i]);
    v[i] + t * (v[i + 1] - v[i])
}
