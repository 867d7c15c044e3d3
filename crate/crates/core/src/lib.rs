//! Weighted geodesics on steady gradient Ricci solitons.
//!
//! For a potential `φ > 0` the functional `J(γ) = ∫₀^s̄ (|γ′|² + 2φ(γ)) ds`
//! has critical points `∇_S S = ∇φ` along which `|S|² − 2φ` is constant.
//! The crate evaluates `J`, its first and second variations, the index-form
//! inequalities obtained with `φ = cR`, the resulting curvature-decay
//! witnesses, and the value function `ρ(x, y, s̄) = inf J` on the cigar,
//! cigar×ℝᵏ, a numerically shot Bryant soliton, and flat test spaces.

pub mod decay;
pub mod error;
pub mod geodesic;
pub mod geometry;
pub mod models;
pub mod ode;
pub mod phi;
pub mod report;
pub mod rho;
pub mod series;
pub mod tensor;
pub mod variation;

pub use error::{LabError, Result};
