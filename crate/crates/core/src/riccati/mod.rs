//! Riccati branches, their envelopes, supersolutions and the initial modulus.

pub mod bounds;
pub mod branch;
pub mod modulus;

pub use bounds::{explicit_bounds, k_tilde, p_substitute, potential, potential_extrema, Envelope, Envelopes, PSubstitution};
pub use branch::{solve_branch_l, solve_branch_r, RiccatiCurve, Side};
pub use modulus::{
    c_of_k, dichotomy, find_s_of_k, initial_modulus, supersolution, Dichotomy, InitialModulus, SSearch,
    SupersolutionProfile,
};
