//! Numerical laboratory for the fundamental gap of convex spherical domains.

pub mod cap;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod parabolic;
pub mod profile;
pub mod prufer;
pub mod riccati;
pub mod spectrum;

pub use error::{Error, Result};
