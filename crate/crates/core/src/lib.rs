//! Finite-volume simulation of the chemotaxis-consumption system
//!
//! ```text
//! u_t = Δu − ∇·(S(u)/v ∇v) + r u − μ u²,    v_t = Δv − u v
//! ```
//!
//! on a rectangle with no-flux boundaries, with S(u) = χ u (u+1)^(β−1),
//! together with the diagnostics used to study its large-μ behaviour:
//! the energy ∫G(u) + ½∫|∇w|² for w = −ln(v/‖v₀‖∞), its dissipation
//! identity, and convergence towards (r/μ, 0).

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod field;
pub mod fit;
pub mod io;
pub mod model;
pub mod ops;
pub mod quadrature;
pub mod sensitivity;
pub mod solver;

pub use error::{Error, Result};
pub use field::{FaceField, Grid2D, ScalarField};
pub use model::{make_initial, steady_state, IcMode, InitialCondition, Parameters, State};
