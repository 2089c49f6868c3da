//! Variable-susceptibility renewal epidemic model.
//!
//! Susceptibles are split into finitely many classes with relative
//! susceptibility `η_j` and recruitment `λ_j`; the force of infection obeys a
//! renewal equation with infectivity kernel `A(τ)` of finite support `τ̄`.
//!
//! The crate computes the infection-free and endemic equilibria and `R0`,
//! simulates trajectories by trapezoid convolution quadrature with an
//! integrating-factor predictor-corrector, and evaluates the Lyapunov
//! functionals `U` and `W` along trajectories to check global stability of the
//! infection-free (`R0 <= 1`) and endemic (`R0 > 1`) equilibria numerically.

pub mod batch;
pub mod discretization;
pub mod equilibria;
pub mod error;
pub mod lyapunov;
pub mod model;
pub mod simulator;
pub mod verification;

pub use error::{ModelError, Result};
