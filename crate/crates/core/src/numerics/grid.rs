use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::NumericsError;

/// How nodes are distributed along a [`Grid1D`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpacingKind {
    Uniform,
    GradedTowardRight,
}

/// Strength of the sine grading map `x + (a/π) sin(πx)`; cell widths shrink by
/// a factor `(1 - a)/(1 + a)` from left to right.
const GRADING_STRENGTH: f64 = 0.5;

/// Diameter above which half-interval grids are graded toward `z = D/2`.
pub const GRADING_DIAMETER: f64 = 2.8;

/// Minimum interior node count accepted by [`Grid1D`].
pub const MIN_INTERIOR_NODES: usize = 8;

/// A strictly increasing set of nodes covering `[a, b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    a: f64,
    b: f64,
    nodes: Vec<f64>,
    spacing_kind: SpacingKind,
}

impl Grid1D {
    pub fn uniform(a: f64, b: f64, n_nodes: usize) -> Result<Self, NumericsError> {
        Self::build(a, b, n_nodes, SpacingKind::Uniform)
    }

    pub fn graded(a: f64, b: f64, n_nodes: usize) -> Result<Self, NumericsError> {
        Self::build(a, b, n_nodes, SpacingKind::GradedTowardRight)
    }

    /// Grid on `[0, D/2]`, graded toward the right end once `D` exceeds
    /// [`GRADING_DIAMETER`].
    pub fn half_interval(diameter: f64, n_nodes: usize) -> Result<Self, NumericsError> {
        let kind = if diameter > GRADING_DIAMETER {
            SpacingKind::GradedTowardRight
        } else {
            SpacingKind::Uniform
        };
        Self::build(0.0, 0.5 * diameter, n_nodes, kind)
    }

    pub fn build(a: f64, b: f64, n_nodes: usize, kind: SpacingKind) -> Result<Self, NumericsError> {
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(NumericsError::InvalidGrid(format!("need a < b, got [{a}, {b}]")));
        }
        if n_nodes < MIN_INTERIOR_NODES + 2 {
            return Err(NumericsError::InvalidGrid(format!(
                "need at least {} nodes, got {n_nodes}",
                MIN_INTERIOR_NODES + 2
            )));
        }
        let last = n_nodes - 1;
        let len = b - a;
        let nodes = (0..n_nodes)
            .map(|i| {
                if i == 0 {
                    return a;
                }
                if i == last {
                    return b;
                }
                let x = i as f64 / last as f64;
                let g = match kind {
                    SpacingKind::Uniform => x,
                    SpacingKind::GradedTowardRight => x + GRADING_STRENGTH * (PI * x).sin() / PI,
                };
                a + len * g
            })
            .collect();
        Ok(Self { a, b, nodes, spacing_kind: kind })
    }

    /// Same mapping with twice as many cells (every old node is kept).
    pub fn refined(&self) -> Self {
        Self::build(self.a, self.b, 2 * (self.nodes.len() - 1) + 1, self.spacing_kind)
            .expect("refining a valid grid stays valid")
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn spacing_kind(&self) -> SpacingKind {
        self.spacing_kind
    }

    pub fn max_spacing(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    pub fn min_spacing(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }

    /// Index `i` of the cell `[nodes[i], nodes[i+1]]` containing `z` (clamped).
    pub fn locate(&self, z: f64) -> usize {
        let n = self.nodes.len();
        match self.nodes.binary_search_by(|x| x.total_cmp(&z)) {
            Ok(i) => i.min(n - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(n - 2),
        }
    }

    /// Mirror a grid on `[0, L]` onto `[-L, L]`.
    pub fn mirrored(&self) -> Vec<f64> {
        let mut full: Vec<f64> = self.nodes.iter().rev().map(|z| -z).collect();
        full.pop();
        full.extend_from_slice(&self.nodes);
        full
    }
}
