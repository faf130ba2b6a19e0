//! Without-replacement stochastic gradient methods for finite-sum minimax
//! optimization and strongly monotone root finding.
//!
//! The crate provides the problem families ([`problems`]), index-order
//! schedules including adversarial ones ([`shuffling`]), the GDA, PPM and
//! AGDA solvers ([`optimizers`]), convergence metrics and rate bounds
//! ([`metrics`]), exact verification oracles ([`oracles`]) and the experiment
//! harness behind the `wor-minimax` binary ([`harness`]).

pub mod error;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod operator;
pub mod optimizers;
pub mod oracles;
pub mod problems;
pub mod rng;
pub mod shuffling;

pub use error::{Error, Result};
pub use operator::{aggregate, gradient_variance, FiniteSum, PartitionedPoint, Permutation, Point};
