//! Dedicated exponential-integrator solvers for semi-linear probability-flow
//! ODEs of the form `dx/dt = f(t) x + g^2(t)/(2 sigma_t) eps(x, t)`, together
//! with classical Runge-Kutta baselines and analytic oracles that verify
//! convergence orders and algebraic identities at desk scale.
//!
//! The crate is organized around the half-logSNR reparameterization: the
//! schedule module supplies `alpha/sigma/lambda` maps and their inverses, the
//! solver module integrates the ODE exactly in its linear part and
//! approximates only the exponentially weighted integral of the noise
//! predictor, and the oracle module supplies closed-form and high-accuracy
//! reference solutions to measure errors against.
//!
//! All numerics are generic over the scalar type via [`Real`] (`f32` or
//! `f64`); the `*64` aliases at the crate root fix the [`f64`] instantiations
//! used by the CLI and the verification suite.

// Validations are written as `!(x > 0)` so NaN fails them too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod error;
mod real;

pub mod baseline;
pub mod oracle;
pub mod predictor;
pub mod rng;
pub mod schedule;
pub mod solver;

pub use error::{Error, Result};
pub use real::Real;

/// Double-precision instantiations of the main types.
pub type NoiseSchedule64 = schedule::NoiseSchedule<f64>;
pub type NoisePredictor64 = predictor::NoisePredictor<f64>;
pub type GaussianProblem64 = predictor::GaussianProblem<f64>;
pub type TimeGrid64 = solver::TimeGrid<f64>;
pub type AdaptiveConfig64 = solver::AdaptiveConfig<f64>;
pub type SolveResult64 = solver::SolveResult<f64>;
