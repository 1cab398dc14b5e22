//! Numerical laboratory for the weakly coupled n-component |φ|⁴ model on
//! periodic lattices.
//!
//! The crate is organised bottom-up:
//!
//! * [`lattice`]: torus geometry, Fourier conventions, operator symbols;
//! * [`frd`]: finite-range covariance decompositions `C = Σ Γ_j + Γ_N^Λ + t_N Q_N`;
//! * [`rgflow`]: perturbative coupling flows and critical-point shooting;
//! * [`predictor`]: closed-form finite-size-scaling predictions;
//! * [`zeromode`]: reduction of lattice integrals to the constant-field direction;
//! * [`montecarlo`]: direct simulation used to check the predictions.

pub mod error;
pub mod frd;
pub mod lattice;
pub mod montecarlo;
pub mod predictor;
pub mod quad;
pub mod rgflow;
pub mod zeromode;

pub use error::{Error, Result};
