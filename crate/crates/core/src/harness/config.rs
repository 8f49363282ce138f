use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative shooting/dense mismatch allowed for eigenvalues.
    pub oracle_relative: f64,
    /// Floor on the margin tolerance of gap-chain comparisons.
    pub gap: f64,
    /// Robin boundary and ODE residuals.
    pub robin_residual: f64,
    /// Sup error at which the flow is declared converged.
    pub flow: f64,
    /// End-of-run stationary residual.
    pub flow_residual: f64,
    /// Two-point inequality margin.
    pub logconcavity: f64,
    /// `|λ₁ − λ₀ − 5|` on the hemisphere row.
    pub hemisphere: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            oracle_relative: 1e-6,
            gap: 1e-4,
            robin_residual: 1e-6,
            flow: 1e-5,
            flow_residual: 1e-4,
            logconcavity: 1e-6,
            hemisphere: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub n_list: Vec<u32>,
    #[serde(rename = "D_list")]
    pub d_list: Vec<f64>,
    /// Pairs `(n, D)` for two-point sampling.
    pub logconcavity_cases: Vec<(u32, f64)>,
    pub pairs: usize,
    pub hemisphere_row: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_list: vec![2, 3, 5],
            d_list: vec![0.5, 1.0, 2.0, 3.0, PI - 0.1],
            logconcavity_cases: vec![(2, 2.0), (3, 2.5)],
            pairs: 2000,
            hemisphere_row: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n: u32,
    #[serde(rename = "D")]
    pub diameter: f64,
    pub k_list: Vec<u32>,
    pub grid_nodes: usize,
    pub tolerances: Tolerances,
    pub t_end: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub eps_list: Vec<f64>,
    /// Upper end of the `s(k)` search.
    pub s_max: f64,
    /// Lower bound on the `s` actually used.
    pub s_floor: f64,
    /// Pairs drawn by the ball oracle for each `s` probe.
    pub oracle_pairs: usize,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: 2,
            diameter: 2.0,
            k_list: vec![2],
            grid_nodes: 1000,
            tolerances: Tolerances::default(),
            t_end: 5.0,
            seed: 42,
            output_dir: PathBuf::from("out"),
            eps_list: vec![1.0, 0.25, 0.0625],
            s_max: 50.0,
            s_floor: 1.0,
            oracle_pairs: 200,
            sweep: SweepConfig::default(),
        }
    }
}

fn field(name: &str, message: impl Into<String>) -> Error {
    Error::Config { field: name.into(), message: message.into() }
}

fn check_diameter(name: &str, d: f64) -> Result<()> {
    crate::spectrum::check_diameter(d).map_err(|e| field(name, e.to_string()))
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(field(name, format!("must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| field("config", format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(field("n", "must be at least 1"));
        }
        check_diameter("D", self.diameter)?;
        if self.k_list.is_empty() || self.k_list.contains(&0) {
            return Err(field("k_list", "needs at least one k, each k >= 1"));
        }
        if self.grid_nodes < 50 {
            return Err(field("grid_nodes", format!("need at least 50 nodes, got {}", self.grid_nodes)));
        }
        positive("t_end", self.t_end)?;
        positive("s_max", self.s_max)?;
        if !(self.s_floor >= 0.0 && self.s_floor <= self.s_max) {
            return Err(field("s_floor", format!("must lie in [0, s_max], got {}", self.s_floor)));
        }
        if self.eps_list.is_empty() || self.eps_list.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(field("eps_list", "needs positive finite entries"));
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("tolerances.oracle_relative", t.oracle_relative),
            ("tolerances.gap", t.gap),
            ("tolerances.robin_residual", t.robin_residual),
            ("tolerances.flow", t.flow),
            ("tolerances.flow_residual", t.flow_residual),
            ("tolerances.logconcavity", t.logconcavity),
            ("tolerances.hemisphere", t.hemisphere),
        ] {
            positive(name, v)?;
        }
        let s = &self.sweep;
        if s.n_list.iter().any(|n| *n < 2) {
            return Err(field("sweep.n_list", "balls need n >= 2"));
        }
        for d in &s.d_list {
            check_diameter("sweep.D_list", *d)?;
        }
        for (n, d) in &s.logconcavity_cases {
            if *n < 2 {
                return Err(field("sweep.logconcavity_cases", "balls need n >= 2"));
            }
            check_diameter("sweep.logconcavity_cases", *d)?;
        }
        Ok(())
    }

    /// Stable key used in file names and for ordering sweep results.
    pub fn case_key(n: u32, d: f64) -> String {
        format!("n{n}_D{d:.6}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_validate() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains("\"D\":2.0"));
        assert_eq!(serde_json::from_str::<RunConfig>(&s).unwrap(), c);
        let partial: RunConfig = serde_json::from_str(r#"{"n": 3, "tolerances": {"flow": 1e-6}}"#).unwrap();
        assert_eq!(partial.n, 3);
        assert_eq!(partial.tolerances.flow, 1e-6);
        assert_eq!(partial.tolerances.gap, 1e-4);
    }

    #[test]
    fn validation_names_the_field() {
        let c = RunConfig { diameter: 4.0, ..Default::default() };
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("`D`") && msg.contains("diameter out of range"), "{msg}");
        let c = RunConfig { k_list: vec![], ..Default::default() };
        assert!(c.validate().unwrap_err().to_string().contains("k_list"));
        assert!(serde_json::from_str::<RunConfig>(r#"{"nodes": 3}"#).is_err());
    }
}
