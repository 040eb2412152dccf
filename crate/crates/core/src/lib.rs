//! Numerical toolkit for homogenization of stationary, possibly non-ergodic,
//! random coefficient fields.
//!
//! The crate is organized bottom-up:
//!
//! * [`fields`] grid-sampled symmetric coefficient fields and the pointwise
//!   elliptic maps `a = F(X)`,
//! * [`gaussian`] stationary Gaussian fields with a finite atomic spectrum,
//! * [`resonance`] exact integer relations between atom frequencies,
//! * [`corrector`] periodic cell problems and the homogenized matrix,
//! * [`measure`] ergodic components, spatial averages and the law of `A_h`,
//! * [`convergence`] Dirichlet solves at scale `eps` against the homogenized solve,
//! * [`cli`] configuration, orchestration and result emission.

pub mod cg;
pub mod cli;
pub mod convergence;
pub mod corrector;
pub mod fem;
pub mod fft;
pub mod fields;
pub mod gaussian;
pub mod measure;
pub mod resonance;
pub mod rng;
pub mod table;

pub use corrector::{homogenized_matrix, solve_correctors, voigt_reuss_bounds, CorrectorSolution, HomogenizedMatrix};
pub use fields::{CoefficientField, EllipticMap, EllipticityBounds, GridSpec, SymMatrix};
pub use rng::SeedStream;
