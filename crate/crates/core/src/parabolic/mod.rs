//! The modulus flow toward `ψ̃_{k,0}` and checks of its qualitative behaviour.

mod diagnostics;
mod scheme;

pub use diagnostics::*;
pub use scheme::{
    evolve, evolve_observed, rhs_psi, step, try_step_u, CoefficientSet, ConvergenceReport, EvolutionState,
    FlowConfig, FlowProblem, FlowRun, FlowSample, Source, Stencil, Violations, MAX_REJECTIONS,
};

use crate::error::Result;
use crate::numerics::Grid1D;
use crate::prufer::tilde_psi_k0;
use crate::riccati::{initial_modulus, modulus::MIN_MODULUS_NODES, InitialModulus};
use crate::spectrum::ModelContext;

/// Builds the flow for `ψ_{k,0}` with `s(j) = s_of_j[j−1]` on a `nodes`-point grid.
/// The modulus itself is assembled on a grid of at least [`MIN_MODULUS_NODES`] nodes.
pub fn build_flow(ctx: &ModelContext, s_of_j: &[f64], nodes: usize) -> Result<(FlowProblem, InitialModulus)> {
    let k = s_of_j.len() as u32;
    let fine = Grid1D::half_interval(ctx.diameter, nodes.max(MIN_MODULUS_NODES))?;
    let init = initial_modulus(ctx, s_of_j, fine.nodes())?;
    let grid = Grid1D::half_interval(ctx.diameter, nodes)?;
    let stationary = tilde_psi_k0(ctx, k, grid.nodes())?;
    Ok((FlowProblem::from_initial_modulus(grid, &stationary, &init)?, init))
}
